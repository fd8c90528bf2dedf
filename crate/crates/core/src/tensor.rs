//! Order-5 data tensors, sub-block geometry and interval enumeration.
//!
//! A [`DataTensor`] stores `T × X × Y × Z` samples of `D` attributes each. Samples are laid
//! out time-major, so a purely temporal series is the special case `X = Y = Z = 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};

/// Number of contextual axes (time plus three spatial axes).
pub const AXES: usize = 4;

/// Extents of a data tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Shape {
    pub t: usize,
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub d: usize,
}

impl Shape {
    pub fn new(t: usize, x: usize, y: usize, z: usize, d: usize) -> Self {
        Shape { t, x, y, z, d }
    }

    /// Shape of a purely temporal series of `len` samples with `dims` attributes.
    pub fn series(len: usize, dims: usize) -> Self {
        Shape::new(len, 1, 1, 1, dims)
    }

    pub fn extents(&self) -> [usize; AXES] {
        [self.t, self.x, self.y, self.z]
    }

    pub fn num_samples(&self) -> usize {
        self.t * self.x * self.y * self.z
    }

    pub fn is_temporal(&self) -> bool {
        self.x == 1 && self.y == 1 && self.z == 1
    }

    fn validate(&self) -> Result<()> {
        if self.t == 0 || self.x == 0 || self.y == 0 || self.z == 0 || self.d == 0 {
            return Err(Error::Input(format!("all tensor extents must be positive, got {self:?}")));
        }
        Ok(())
    }
}

/// Multivariate spatio-temporal data with a per-sample missing-value mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTensor {
    shape: Shape,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl DataTensor {
    /// Builds a tensor from row-major values `(t, x, y, z, d)`.
    ///
    /// `mask[i]` marks sample `i` as missing. Unmasked samples must be finite; masked ones
    /// may hold anything and are never read by the statistics.
    pub fn new(shape: Shape, values: Vec<f64>, mask: Option<Vec<bool>>) -> Result<Self> {
        shape.validate()?;
        let n = shape.num_samples();
        if values.len() != n * shape.d {
            return Err(Error::Input(format!(
                "expected {} values for shape {:?}, got {}",
                n * shape.d,
                shape,
                values.len()
            )));
        }
        let mask = match mask {
            Some(m) if m.len() != n => {
                return Err(Error::Input(format!("mask has {} entries, expected {n}", m.len())))
            }
            Some(m) => m,
            None => vec![false; n],
        };
        for (i, sample) in values.chunks_exact(shape.d).enumerate() {
            if !mask[i] && sample.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("unmasked sample {i} has a non-finite value")));
            }
        }
        Ok(DataTensor { shape, values, mask })
    }

    /// A temporal series of `len` samples, `dims` attributes per sample, row-major.
    pub fn from_series(len: usize, dims: usize, values: Vec<f64>) -> Result<Self> {
        DataTensor::new(Shape::series(len, dims), values, None)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn extents(&self) -> [usize; AXES] {
        self.shape.extents()
    }

    pub fn dims(&self) -> usize {
        self.shape.d
    }

    pub fn num_samples(&self) -> usize {
        self.shape.num_samples()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn has_mask(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }

    pub fn unmasked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    /// Linear sample index of `(t, x, y, z)`.
    #[inline]
    pub fn sample_index(&self, p: [usize; AXES]) -> usize {
        let s = &self.shape;
        ((p[0] * s.x + p[1]) * s.y + p[2]) * s.z + p[3]
    }

    /// Inverse of [`sample_index`](Self::sample_index).
    pub fn coords(&self, mut i: usize) -> [usize; AXES] {
        let s = &self.shape;
        let z = i % s.z;
        i /= s.z;
        let y = i % s.y;
        i /= s.y;
        let x = i % s.x;
        [i / s.x, x, y, z]
    }

    #[inline]
    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.shape.d;
        &self.values[i * d..(i + 1) * d]
    }

    #[inline]
    pub fn is_masked(&self, i: usize) -> bool {
        self.mask[i]
    }

    /// Applies `f` to every unmasked sample, leaving masked ones untouched.
    pub fn map_samples(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> DataTensor {
        let d = self.shape.d;
        let mut values = self.values.clone();
        for (i, out) in values.chunks_exact_mut(d).enumerate() {
            if !self.mask[i] {
                f(&self.values[i * d..(i + 1) * d], out);
            }
        }
        DataTensor { shape: self.shape, values, mask: self.mask.clone() }
    }
}

/// A half-open sub-block `[start, end)` on each of the four contextual axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubBlock {
    pub start: [usize; AXES],
    pub end: [usize; AXES],
}

impl SubBlock {
    pub fn new(start: [usize; AXES], end: [usize; AXES]) -> Result<Self> {
        if (0..AXES).any(|a| start[a] >= end[a]) {
            return Err(Error::Input(format!("empty block range {start:?}..{end:?}")));
        }
        Ok(SubBlock { start, end })
    }

    /// A temporal interval `[start, end)` with trivial spatial ranges.
    pub fn temporal(start: usize, end: usize) -> Self {
        debug_assert!(start < end);
        SubBlock { start: [start, 0, 0, 0], end: [end, 1, 1, 1] }
    }

    /// The block covering all of `extents`.
    pub fn full(extents: [usize; AXES]) -> Self {
        SubBlock { start: [0; AXES], end: extents }
    }

    #[inline]
    pub fn len(&self, axis: usize) -> usize {
        self.end[axis] - self.start[axis]
    }

    pub fn volume(&self) -> usize {
        (0..AXES).map(|a| self.len(a)).product()
    }

    pub fn lies_within(&self, extents: [usize; AXES]) -> bool {
        (0..AXES).all(|a| self.start[a] < self.end[a] && self.end[a] <= extents[a])
    }

    #[inline]
    pub fn contains(&self, p: [usize; AXES]) -> bool {
        (0..AXES).all(|a| self.start[a] <= p[a] && p[a] < self.end[a])
    }

    /// Number of lattice points shared with `other`.
    pub fn intersection_volume(&self, other: &SubBlock) -> usize {
        let mut v = 1;
        for a in 0..AXES {
            let lo = self.start[a].max(other.start[a]);
            let hi = self.end[a].min(other.end[a]);
            if hi <= lo {
                return 0;
            }
            v *= hi - lo;
        }
        v
    }

    pub fn overlaps(&self, other: &SubBlock) -> bool {
        (0..AXES).all(|a| self.start[a] < other.end[a] && other.start[a] < self.end[a])
    }

    /// Intersection over union on the integer lattice.
    pub fn iou(&self, other: &SubBlock) -> f64 {
        let inter = self.intersection_volume(other);
        if inter == 0 {
            return 0.0;
        }
        let union = self.volume() + other.volume() - inter;
        inter as f64 / union as f64
    }

    /// The block moved by `offset` along each axis.
    pub fn shifted(&self, offset: [usize; AXES]) -> SubBlock {
        let mut b = *self;
        for a in 0..AXES {
            b.start[a] += offset[a];
            b.end[a] += offset[a];
        }
        b
    }

    fn key(&self) -> [usize; 2 * AXES] {
        let mut k = [0; 2 * AXES];
        for a in 0..AXES {
            k[2 * a] = self.start[a];
            k[2 * a + 1] = self.end[a];
        }
        k
    }
}

/// Lexicographic order: axes in `t, x, y, z` order, start before end on each axis.
/// This is the order in which [`Intervals`] yields blocks.
impl Ord for SubBlock {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for SubBlock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SubBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t[{},{}) x[{},{}) y[{},{}) z[{},{})",
            self.start[0], self.end[0], self.start[1], self.end[1], self.start[2], self.end[2],
            self.start[3], self.end[3]
        )
    }
}

/// Minimum and maximum block extents per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SizeConstraints {
    pub min: [usize; AXES],
    pub max: [usize; AXES],
}

impl SizeConstraints {
    pub fn new(min: [usize; AXES], max: [usize; AXES]) -> Result<Self> {
        if (0..AXES).any(|a| min[a] == 0 || min[a] > max[a]) {
            return Err(Error::Config(format!("size constraints need 1 <= min <= max, got {min:?} / {max:?}")));
        }
        Ok(SizeConstraints { min, max })
    }

    /// Temporal length limits; spatial axes are unconstrained.
    pub fn temporal(min_len: usize, max_len: usize) -> Result<Self> {
        SizeConstraints::new([min_len, 1, 1, 1], [max_len, usize::MAX, usize::MAX, usize::MAX])
    }

    /// Clamps the maxima to `extents`. Axes of extent 1 are forced to `min = max = 1`.
    pub fn resolve(&self, extents: [usize; AXES]) -> Result<SizeConstraints> {
        let mut out = *self;
        for a in 0..AXES {
            if extents[a] == 1 {
                out.min[a] = 1;
                out.max[a] = 1;
                continue;
            }
            if self.min[a] > extents[a] {
                return Err(Error::Config(format!(
                    "minimum extent {} on axis {a} exceeds the data extent {}",
                    self.min[a], extents[a]
                )));
            }
            out.max[a] = self.max[a].min(extents[a]);
        }
        Ok(out)
    }

    pub fn admits(&self, block: &SubBlock) -> bool {
        (0..AXES).all(|a| (self.min[a]..=self.max[a]).contains(&block.len(a)))
    }

    /// Maximum number of distinct extents, `prod(max - min + 1)`.
    pub fn max_volume(&self) -> usize {
        (0..AXES).map(|a| self.max[a].saturating_sub(self.min[a]) + 1).product()
    }
}

/// All ranges `[l, r)` within `0..n` with `min_len <= r - l <= max_len`, sorted by start
/// then length.
pub fn axis_intervals(n: usize, min_len: usize, max_len: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for start in 0..n {
        for len in min_len.max(1)..=max_len {
            if start + len > n {
                break;
            }
            out.push((start, start + len));
        }
    }
    out
}

/// Lexicographically ordered stream over every block admitted by the constraints.
///
/// Built from independent per-axis interval lists, so each worker can create its own
/// stream; [`Intervals::with_temporal_starts`] restricts it to a slice of start times.
#[derive(Debug, Clone)]
pub struct Intervals {
    axes: [Vec<(usize, usize)>; AXES],
    cursor: [usize; AXES],
    done: bool,
}

impl Intervals {
    pub fn new(extents: [usize; AXES], constraints: &SizeConstraints) -> Self {
        let axes = core::array::from_fn(|a| {
            axis_intervals(extents[a], constraints.min[a], constraints.max[a].min(extents[a]))
        });
        Intervals::from_axes(axes)
    }

    fn from_axes(axes: [Vec<(usize, usize)>; AXES]) -> Self {
        let done = axes.iter().any(|v| v.is_empty());
        Intervals { axes, cursor: [0; AXES], done }
    }

    /// Keeps only blocks whose temporal start lies in `starts`.
    pub fn with_temporal_starts(mut self, starts: core::ops::Range<usize>) -> Self {
        self.axes[0].retain(|&(s, _)| starts.contains(&s));
        Intervals::from_axes(self.axes)
    }

    /// Exact number of blocks the stream yields in total.
    pub fn total(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }
}

impl Iterator for Intervals {
    type Item = SubBlock;

    fn next(&mut self) -> Option<SubBlock> {
        if self.done {
            return None;
        }
        let mut block = SubBlock { start: [0; AXES], end: [0; AXES] };
        for a in 0..AXES {
            let (s, e) = self.axes[a][self.cursor[a]];
            block.start[a] = s;
            block.end[a] = e;
        }
        // odometer with the z axis fastest
        let mut a = AXES;
        loop {
            if a == 0 {
                self.done = true;
                break;
            }
            a -= 1;
            self.cursor[a] += 1;
            if self.cursor[a] < self.axes[a].len() {
                break;
            }
            self.cursor[a] = 0;
        }
        Some(block)
    }
}

/// Every block in the constraint set, in lexicographic order.
pub fn enumerate_intervals(extents: [usize; AXES], constraints: &SizeConstraints) -> Intervals {
    Intervals::new(extents, constraints)
}
