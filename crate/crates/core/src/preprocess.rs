//! Context embeddings and attribute normalization.
//!
//! Time-delay embedding appends `κ − 1` earlier samples at lag `τ`. Spatial-neighbor
//! embedding appends, for each spatial axis with `κ_a > 1`, the neighbors at offsets
//! `±j·τ_a` for `j = 1..κ_a`, ordered `−1, +1, −2, +2, …` and axis by axis. A sample of
//! the output is masked whenever any contributing input sample is.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{DataTensor, Shape, AXES};

/// How embeddings treat samples whose context reaches past the tensor border.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BorderPolicy {
    /// Drop samples with incomplete context.
    #[default]
    Shorten,
    /// Clamp context indices into the tensor.
    Replicate,
}

/// Embedding dimensions and lags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingConfig {
    pub td_dim: usize,
    pub td_lag: usize,
    pub spatial_dim: [usize; 3],
    pub spatial_lag: [usize; 3],
    pub border: BorderPolicy,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::none()
    }
}

impl EmbeddingConfig {
    /// No embedding at all.
    pub fn none() -> Self {
        EmbeddingConfig { td_dim: 1, td_lag: 1, spatial_dim: [1; 3], spatial_lag: [1; 3], border: BorderPolicy::Shorten }
    }

    /// Time-delay embedding only.
    pub fn time_delay(dim: usize, lag: usize) -> Self {
        EmbeddingConfig { td_dim: dim, td_lag: lag, ..EmbeddingConfig::none() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.td_dim == 0 || self.td_lag == 0 {
            return Err(Error::Config("time-delay dimension and lag must be at least 1".into()));
        }
        if self.spatial_dim.iter().chain(&self.spatial_lag).any(|&v| v == 0) {
            return Err(Error::Config("spatial embedding dimensions and lags must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.td_dim == 1 && self.spatial_dim == [1; 3]
    }

    /// Attribute count after embedding `d` input attributes.
    pub fn embedded_dims(&self, d: usize) -> usize {
        let ring: usize = self.spatial_dim.iter().map(|k| 2 * (k - 1)).sum();
        self.td_dim * (1 + ring) * d
    }

    /// Samples dropped at the start of each axis under [`BorderPolicy::Shorten`].
    pub fn offset(&self) -> [usize; AXES] {
        match self.border {
            BorderPolicy::Replicate => [0; AXES],
            BorderPolicy::Shorten => [
                (self.td_dim - 1) * self.td_lag,
                (self.spatial_dim[0] - 1) * self.spatial_lag[0],
                (self.spatial_dim[1] - 1) * self.spatial_lag[1],
                (self.spatial_dim[2] - 1) * self.spatial_lag[2],
            ],
        }
    }
}

/// Time-delay embedding with dimension `dim` and lag `lag`.
pub fn time_delay_embed(tensor: &DataTensor, dim: usize, lag: usize, border: BorderPolicy) -> Result<DataTensor> {
    if dim == 0 || lag == 0 {
        return Err(Error::Config("time-delay dimension and lag must be at least 1".into()));
    }
    if dim == 1 {
        return Ok(tensor.clone());
    }
    let s = tensor.shape();
    let reach = (dim - 1) * lag;
    let (t_out, drop) = match border {
        BorderPolicy::Shorten => {
            if reach >= s.t {
                return Err(Error::Config(format!(
                    "time-delay reach (dim-1)*lag = {reach} must be below the series length {}",
                    s.t
                )));
            }
            (s.t - reach, reach)
        }
        BorderPolicy::Replicate => (s.t, 0),
    };
    let out_shape = Shape { t: t_out, d: dim * s.d, ..s };
    let spatial = s.x * s.y * s.z;
    let mut values = Vec::with_capacity(out_shape.num_samples() * out_shape.d);
    let mut mask = Vec::with_capacity(out_shape.num_samples());
    for t in 0..t_out {
        let t_src = t + drop;
        for loc in 0..spatial {
            let mut masked = false;
            for j in 0..dim {
                let tj = t_src.saturating_sub(j * lag);
                let i = tj * spatial + loc;
                values.extend_from_slice(tensor.sample(i));
                masked |= tensor.is_masked(i);
            }
            mask.push(masked);
        }
    }
    DataTensor::new(out_shape, values, Some(mask))
}

/// Spatial-neighbor embedding.
pub fn spatial_neighbor_embed(tensor: &DataTensor, dims: [usize; 3], lags: [usize; 3], border: BorderPolicy) -> Result<DataTensor> {
    if dims.iter().chain(&lags).any(|&v| v == 0) {
        return Err(Error::Config("spatial embedding dimensions and lags must be at least 1".into()));
    }
    if dims == [1; 3] {
        return Ok(tensor.clone());
    }
    let s = tensor.shape();
    let ext = s.extents();
    let mut out_ext = ext;
    let mut drop = [0usize; AXES];
    for a in 0..3 {
        let reach = (dims[a] - 1) * lags[a];
        if border == BorderPolicy::Shorten && reach > 0 {
            if 2 * reach >= ext[a + 1] {
                return Err(Error::Config(format!(
                    "spatial reach {reach} on axis {} does not fit an extent of {}",
                    a + 1,
                    ext[a + 1]
                )));
            }
            out_ext[a + 1] = ext[a + 1] - 2 * reach;
            drop[a + 1] = reach;
        }
    }
    // offsets relative to the centre sample: self, then (-j, +j) per axis
    let mut offsets: Vec<[isize; AXES]> = vec![[0; AXES]];
    for a in 0..3 {
        for j in 1..dims[a] {
            for sign in [-1isize, 1] {
                let mut o = [0isize; AXES];
                o[a + 1] = sign * (j * lags[a]) as isize;
                offsets.push(o);
            }
        }
    }
    let out_shape = Shape { t: out_ext[0], x: out_ext[1], y: out_ext[2], z: out_ext[3], d: offsets.len() * s.d };
    let mut values = Vec::with_capacity(out_shape.num_samples() * out_shape.d);
    let mut mask = Vec::with_capacity(out_shape.num_samples());
    for t in 0..out_ext[0] {
        for x in 0..out_ext[1] {
            for y in 0..out_ext[2] {
                for z in 0..out_ext[3] {
                    let centre = [t, x + drop[1], y + drop[2], z + drop[3]];
                    let mut masked = false;
                    for o in &offsets {
                        let mut p = [0usize; AXES];
                        for a in 0..AXES {
                            let v = centre[a] as isize + o[a];
                            p[a] = v.clamp(0, ext[a] as isize - 1) as usize;
                        }
                        let i = tensor.sample_index(p);
                        values.extend_from_slice(tensor.sample(i));
                        masked |= tensor.is_masked(i);
                    }
                    mask.push(masked);
                }
            }
        }
    }
    DataTensor::new(out_shape, values, Some(mask))
}

/// Applies the time-delay embedding, then the spatial one. Returns the embedded tensor
/// and the per-axis offset that maps embedded coordinates back to input coordinates.
pub fn embed(tensor: &DataTensor, config: &EmbeddingConfig) -> Result<(DataTensor, [usize; AXES])> {
    config.validate()?;
    let td = time_delay_embed(tensor, config.td_dim, config.td_lag, config.border)?;
    let out = spatial_neighbor_embed(&td, config.spatial_dim, config.spatial_lag, config.border)?;
    Ok((out, config.offset()))
}

/// Per-attribute location and scale removed by [`normalize`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Z-scores every attribute over the unmasked samples (population deviation).
/// Constant attributes become zero with a recorded deviation of 1.
pub fn normalize(tensor: &DataTensor) -> Result<(DataTensor, Standardization)> {
    let d = tensor.dims();
    let n = tensor.unmasked_count();
    if n == 0 {
        return Err(Error::EmptyData("tensor"));
    }
    let mut mean = vec![0.0; d];
    for i in (0..tensor.num_samples()).filter(|&i| !tensor.is_masked(i)) {
        for (m, v) in mean.iter_mut().zip(tensor.sample(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for i in (0..tensor.num_samples()).filter(|&i| !tensor.is_masked(i)) {
        for k in 0..d {
            let c = tensor.sample(i)[k] - mean[k];
            var[k] += c * c;
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = math::sqrt(v / n as f64);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let out = tensor.map_samples(|x, o| {
        for k in 0..d {
            o[k] = (x[k] - mean[k]) / std[k];
        }
    });
    Ok((out, Standardization { mean, std }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: &[f64]) -> DataTensor {
        DataTensor::from_series(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn delay_embedding_shorten() {
        let t = time_delay_embed(&series(&[1.0, 2.0, 3.0, 4.0, 5.0]), 2, 1, BorderPolicy::Shorten).unwrap();
        assert_eq!(t.shape(), Shape::series(4, 2));
        assert_eq!(t.values(), &[2.0, 1.0, 3.0, 2.0, 4.0, 3.0, 5.0, 4.0]);
    }

    #[test]
    fn delay_embedding_lags() {
        let v: Vec<f64> = (0..12).map(f64::from).collect();
        let t = time_delay_embed(&series(&v), 3, 4, BorderPolicy::Shorten).unwrap();
        assert_eq!(t.sample(0), &[8.0, 4.0, 0.0]);
        assert_eq!(t.sample(3), &[11.0, 7.0, 3.0]);
        let r = time_delay_embed(&series(&v), 3, 4, BorderPolicy::Replicate).unwrap();
        assert_eq!(r.sample(5), &[5.0, 1.0, 0.0]);
        assert!(time_delay_embed(&series(&v), 4, 4, BorderPolicy::Shorten).unwrap_err().is_config());
    }

    #[test]
    fn delay_embedding_propagates_mask() {
        let t = DataTensor::new(Shape::series(4, 1), vec![1.0, f64::NAN, 3.0, 4.0], Some(vec![false, true, false, false])).unwrap();
        let e = time_delay_embed(&t, 2, 1, BorderPolicy::Shorten).unwrap();
        assert_eq!(e.mask(), &[true, true, false]);
    }

    #[test]
    fn spatial_line_replicate() {
        let t = DataTensor::new(Shape::new(1, 5, 1, 1, 1), vec![1.0, 2.0, 3.0, 4.0, 5.0], None).unwrap();
        let e = spatial_neighbor_embed(&t, [2, 1, 1], [1, 1, 1], BorderPolicy::Replicate).unwrap();
        assert_eq!(e.sample(2), &[3.0, 2.0, 4.0]);
        assert_eq!(e.sample(0), &[1.0, 1.0, 2.0]);
        let s = spatial_neighbor_embed(&t, [2, 1, 1], [1, 1, 1], BorderPolicy::Shorten).unwrap();
        assert_eq!(s.shape().x, 3);
        assert_eq!(s.sample(0), &[2.0, 1.0, 3.0]);
    }

    #[test]
    fn spatial_two_axes_and_width() {
        let t = DataTensor::new(Shape::new(1, 3, 3, 1, 1), (0..9).map(f64::from).collect(), None).unwrap();
        let e = spatial_neighbor_embed(&t, [2, 2, 1], [1, 1, 1], BorderPolicy::Shorten).unwrap();
        // centre (1,1) = 4 with x-neighbours 1,7 and y-neighbours 3,5
        assert_eq!(e.values(), &[4.0, 1.0, 7.0, 3.0, 5.0]);
        let cfg = EmbeddingConfig { spatial_dim: [3, 1, 1], ..EmbeddingConfig::none() };
        assert_eq!(cfg.embedded_dims(1), 5);
    }

    #[test]
    fn normalize_hand_values() {
        let (n, st) = normalize(&series(&[0.0, 2.0])).unwrap();
        assert_eq!(n.values(), &[-1.0, 1.0]);
        assert_eq!((st.mean[0], st.std[0]), (1.0, 1.0));
        let (c, st) = normalize(&series(&[3.0, 3.0, 3.0])).unwrap();
        assert_eq!(c.values(), &[0.0, 0.0, 0.0]);
        assert_eq!(st.std[0], 1.0);
    }
}
