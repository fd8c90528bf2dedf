//! CSV ingestion.
//!
//! The header names the coordinate columns first (`t`, then any of `x`, `y`, `z`), then
//! one column per attribute. Each axis' distinct integer coordinates, sorted, define
//! the grid; every grid point needs exactly one row. An empty or `NA`/`NaN` value field
//! marks that sample as missing.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use mdi_core::{DataTensor, Shape};

use crate::error::{MdiError, Result};

const AXIS_NAMES: [&str; 4] = ["t", "x", "y", "z"];

pub fn load(path: &Path) -> Result<DataTensor> {
    let f = std::fs::File::open(path).map_err(|e| MdiError::io(path, e))?;
    read_csv(f)
}

pub fn read_csv<R: Read>(reader: R) -> Result<DataTensor> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| MdiError::Csv(e.to_string()))?.clone();
    let names: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names.first().map(String::as_str) != Some("t") {
        return Err(MdiError::Csv("the first column must be `t`".into()));
    }
    // axis index of every coordinate column
    let mut axes = vec![0usize];
    for name in &names[1..] {
        match AXIS_NAMES.iter().position(|a| a == name) {
            Some(a) if a > *axes.last().unwrap() => axes.push(a),
            Some(_) => return Err(MdiError::Csv(format!("coordinate column `{name}` is duplicated or out of order"))),
            None => break,
        }
    }
    let d = names.len() - axes.len();
    if d == 0 {
        return Err(MdiError::Csv("no value columns after the coordinate columns".into()));
    }

    let mut rows: Vec<([i64; 4], Vec<Option<f64>>, u64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| MdiError::Csv(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut coord = [0i64; 4];
        for (k, &a) in axes.iter().enumerate() {
            let raw = rec.get(k).unwrap_or("");
            coord[a] = raw
                .parse()
                .map_err(|_| MdiError::Csv(format!("line {line}: coordinate `{raw}` in column `{}` is not an integer", names[k])))?;
        }
        let mut vals = Vec::with_capacity(d);
        for k in axes.len()..names.len() {
            let raw = rec.get(k).unwrap_or("");
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                vals.push(None);
            } else {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| MdiError::Csv(format!("line {line}: value `{raw}` in column `{}` is not a number", names[k])))?;
                if !v.is_finite() {
                    return Err(MdiError::Csv(format!("line {line}: value `{raw}` is not finite")));
                }
                vals.push(Some(v));
            }
        }
        rows.push((coord, vals, line));
    }
    if rows.is_empty() {
        return Err(MdiError::Csv("no data rows".into()));
    }

    let levels: [Vec<i64>; 4] = std::array::from_fn(|a| {
        let set: BTreeSet<i64> = rows.iter().map(|r| r.0[a]).collect();
        set.into_iter().collect()
    });
    let ext: [usize; 4] = std::array::from_fn(|a| levels[a].len());
    let shape = Shape::new(ext[0], ext[1], ext[2], ext[3], d);
    let n = shape.num_samples();
    let mut values = vec![0.0; n * d];
    let mut mask = vec![false; n];
    let mut seen: Vec<Option<u64>> = vec![None; n];
    for (coord, vals, line) in rows {
        let p: [usize; 4] = std::array::from_fn(|a| levels[a].binary_search(&coord[a]).expect("level present"));
        let i = ((p[0] * ext[1] + p[1]) * ext[2] + p[2]) * ext[3] + p[3];
        if let Some(prev) = seen[i] {
            return Err(MdiError::Csv(format!("line {line}: coordinates {coord:?} already given on line {prev}")));
        }
        seen[i] = Some(line);
        for (k, v) in vals.into_iter().enumerate() {
            match v {
                Some(v) => values[i * d + k] = v,
                None => mask[i] = true,
            }
        }
    }
    let missing: Vec<String> = seen
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_none())
        .map(|(i, _)| {
            let z = i % ext[3];
            let y = (i / ext[3]) % ext[2];
            let x = (i / (ext[3] * ext[2])) % ext[1];
            let t = i / (ext[3] * ext[2] * ext[1]);
            let c = [levels[0][t], levels[1][x], levels[2][y], levels[3][z]];
            let shown: Vec<String> = axes.iter().map(|&a| format!("{}={}", AXIS_NAMES[a], c[a])).collect();
            format!("({})", shown.join(", "))
        })
        .collect();
    if !missing.is_empty() {
        let first: Vec<&str> = missing.iter().take(10).map(String::as_str).collect();
        return Err(MdiError::Csv(format!(
            "coordinates do not form a dense grid; {} missing, first: {}",
            missing.len(),
            first.join(" ")
        )));
    }
    Ok(DataTensor::new(shape, values, Some(mask))?)
}
