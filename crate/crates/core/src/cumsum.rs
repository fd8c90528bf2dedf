//! Cumulative-sum tensors for constant-time block statistics.
//!
//! The prefix tensors are padded with a leading zero slab on every axis, so entry
//! `(t+1, x+1, y+1, z+1)` holds the sum over all samples with coordinates `<= (t, x, y, z)`.
//! Any block sum is then a signed combination of the 16 corners of the block.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{packed_len, packed_outer};
use crate::tensor::{DataTensor, SubBlock, AXES};

/// Accumulation strategy used while building the prefix tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Summation {
    #[default]
    Plain,
    /// Kahan-compensated prefix sums for very long series.
    Kahan,
}

/// Sums of sample vectors, packed outer products and unmasked counts over a block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSums {
    pub sum: Vec<f64>,
    /// Packed upper triangle of `Σ x xᵀ`, see [`crate::linalg::unpack_symmetric`].
    pub outer: Vec<f64>,
    pub count: u64,
}

impl BlockSums {
    pub fn zeros(d: usize) -> Self {
        BlockSums { sum: vec![0.0; d], outer: vec![0.0; packed_len(d)], count: 0 }
    }

    fn clear(&mut self) {
        self.sum.iter_mut().for_each(|v| *v = 0.0);
        self.outer.iter_mut().for_each(|v| *v = 0.0);
        self.count = 0;
    }
}

/// Prefix sums of a [`DataTensor`], immutable after construction.
#[derive(Debug, Clone)]
pub struct CumulativeStats {
    extents: [usize; AXES],
    strides: [usize; AXES],
    d: usize,
    p: usize,
    sums: Vec<f64>,
    outer: Vec<f64>,
    counts: Vec<u64>,
}

impl CumulativeStats {
    pub fn build(tensor: &DataTensor) -> Result<Self> {
        CumulativeStats::build_with(tensor, Summation::Plain)
    }

    pub fn build_with(tensor: &DataTensor, summation: Summation) -> Result<Self> {
        if tensor.unmasked_count() == 0 {
            return Err(Error::EmptyData("tensor"));
        }
        let extents = tensor.extents();
        let padded = extents.map(|e| e + 1);
        let strides = [padded[1] * padded[2] * padded[3], padded[2] * padded[3], padded[3], 1];
        let cells = padded.iter().product::<usize>();
        let d = tensor.dims();
        let p = packed_len(d);
        let mut sums = vec![0.0; cells * d];
        let mut outer = vec![0.0; cells * p];
        let mut counts = vec![0u64; cells];

        for i in 0..tensor.num_samples() {
            if tensor.is_masked(i) {
                continue;
            }
            let c = tensor.coords(i);
            let cell = (0..AXES).map(|a| (c[a] + 1) * strides[a]).sum::<usize>();
            let v = tensor.sample(i);
            sums[cell * d..(cell + 1) * d].copy_from_slice(v);
            packed_outer(v, &mut outer[cell * p..(cell + 1) * p]);
            counts[cell] = 1;
        }

        for a in 0..AXES {
            if extents[a] == 0 {
                continue;
            }
            prefix_along(&mut sums, d, &padded, a, strides[a], summation);
            prefix_along(&mut outer, p, &padded, a, strides[a], summation);
            prefix_counts(&mut counts, &padded, a, strides[a]);
        }

        Ok(CumulativeStats { extents, strides, d, p, sums, outer, counts })
    }

    pub fn extents(&self) -> [usize; AXES] {
        self.extents
    }

    pub fn dims(&self) -> usize {
        self.d
    }

    /// Raw prefix entry at padded index `k`, i.e. the sum over all samples `< k`.
    pub fn entry(&self, k: [usize; AXES]) -> (&[f64], &[f64], u64) {
        let cell = self.cell(k);
        (&self.sums[cell * self.d..(cell + 1) * self.d], &self.outer[cell * self.p..(cell + 1) * self.p], self.counts[cell])
    }

    #[inline]
    fn cell(&self, k: [usize; AXES]) -> usize {
        k[0] * self.strides[0] + k[1] * self.strides[1] + k[2] * self.strides[2] + k[3]
    }

    pub fn total_count(&self) -> u64 {
        self.counts[self.cell(self.extents)]
    }

    pub fn totals(&self) -> BlockSums {
        let (s, o, c) = self.entry(self.extents);
        BlockSums { sum: s.to_vec(), outer: o.to_vec(), count: c }
    }

    fn check(&self, block: &SubBlock) -> Result<()> {
        if !block.lies_within(self.extents) {
            return Err(Error::OutOfBounds(format!("{block}")));
        }
        Ok(())
    }

    /// Unmasked samples inside `block`.
    pub fn range_count(&self, block: &SubBlock) -> Result<u64> {
        self.check(block)?;
        let mut acc: i64 = 0;
        self.for_corners(block, |cell, sign| acc += sign as i64 * self.counts[cell] as i64);
        Ok(acc as u64)
    }

    /// Sums over the samples of `block`, written into `out`.
    pub fn range_sum_into(&self, block: &SubBlock, out: &mut BlockSums) -> Result<()> {
        self.check(block)?;
        out.clear();
        let (d, p) = (self.d, self.p);
        let mut count: i64 = 0;
        self.for_corners(block, |cell, sign| {
            let s = sign as f64;
            for (o, v) in out.sum.iter_mut().zip(&self.sums[cell * d..(cell + 1) * d]) {
                *o += s * v;
            }
            for (o, v) in out.outer.iter_mut().zip(&self.outer[cell * p..(cell + 1) * p]) {
                *o += s * v;
            }
            count += sign as i64 * self.counts[cell] as i64;
        });
        out.count = count as u64;
        Ok(())
    }

    pub fn range_sum(&self, block: &SubBlock) -> Result<BlockSums> {
        let mut out = BlockSums::zeros(self.d);
        self.range_sum_into(block, &mut out)?;
        Ok(out)
    }

    /// Complement sums `totals − inner`, given the already extracted block sums.
    pub fn complement_from(&self, inner: &BlockSums, out: &mut BlockSums) -> Result<()> {
        let (s, o, c) = self.entry(self.extents);
        for ((r, t), i) in out.sum.iter_mut().zip(s).zip(&inner.sum) {
            *r = t - i;
        }
        for ((r, t), i) in out.outer.iter_mut().zip(o).zip(&inner.outer) {
            *r = t - i;
        }
        out.count = c - inner.count;
        if out.count == 0 {
            return Err(Error::EmptyComplement);
        }
        Ok(())
    }

    /// Sums over all samples outside `block`.
    pub fn complement_stats(&self, block: &SubBlock) -> Result<BlockSums> {
        let inner = self.range_sum(block)?;
        let mut out = BlockSums::zeros(self.d);
        self.complement_from(&inner, &mut out)?;
        Ok(out)
    }

    /// Calls `f(cell, sign)` for every corner of `block` that is not on the zero padding.
    #[inline]
    fn for_corners(&self, block: &SubBlock, mut f: impl FnMut(usize, i32)) {
        for bits in 0u32..16 {
            let mut cell = 0;
            let mut zero = false;
            for a in 0..AXES {
                let k = if bits >> a & 1 == 1 { block.end[a] } else { block.start[a] };
                if k == 0 {
                    zero = true;
                    break;
                }
                cell += k * self.strides[a];
            }
            if zero {
                continue;
            }
            let sign = if (4 - bits.count_ones()) % 2 == 0 { 1 } else { -1 };
            f(cell, sign);
        }
    }
}

/// Converts `data` (cells of `width` values) into prefix sums along axis `axis`.
fn prefix_along(data: &mut [f64], width: usize, padded: &[usize; AXES], axis: usize, stride: usize, summation: Summation) {
    let n = padded[axis];
    let cells = data.len() / width;
    let mut comp = vec![0.0; width];
    for base in 0..cells {
        // visit each line once, starting from its index-0 cell
        if (base / stride) % n != 0 {
            continue;
        }
        comp.iter_mut().for_each(|c| *c = 0.0);
        for step in 1..n {
            let prev = (base + (step - 1) * stride) * width;
            let cur = (base + step * stride) * width;
            for w in 0..width {
                let add = data[cur + w];
                match summation {
                    Summation::Plain => data[cur + w] = data[prev + w] + add,
                    Summation::Kahan => {
                        let y = add - comp[w];
                        let t = data[prev + w] + y;
                        comp[w] = (t - data[prev + w]) - y;
                        data[cur + w] = t;
                    }
                }
            }
        }
    }
}

fn prefix_counts(counts: &mut [u64], padded: &[usize; AXES], axis: usize, stride: usize) {
    let n = padded[axis];
    for base in 0..counts.len() {
        if (base / stride) % n != 0 {
            continue;
        }
        for step in 1..n {
            counts[base + step * stride] += counts[base + (step - 1) * stride];
        }
    }
}
