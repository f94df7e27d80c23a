//! Defect localization from contrastive attention.
//!
//! Raw attention tensors are reduced to per-position fields, the negative
//! ("low quality") prompt is contrasted with the positive one, both the
//! contrast and the original-prompt field are smoothed with a row-stochastic
//! self-attention matrix, the two are blended, and the top `⌈r·S⌉` positions
//! become the resample mask.

mod interchange;

pub use interchange::{AttentionDocument, MaskDocument, QueryDocument, RawTensorDocument};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Spatial grid `(rows, cols)`; serialized as `[rows, cols]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

impl Grid {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("grid {rows}x{cols} is empty")));
        }
        Ok(Self { rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(row, col)` of flat position `j` (row-major).
    pub fn coords(&self, j: usize) -> (usize, usize) {
        (j / self.cols, j % self.cols)
    }

    fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(
                (self.rows, self.cols),
                (other.rows, other.cols),
            ))
        }
    }
}

impl From<[usize; 2]> for Grid {
    fn from(v: [usize; 2]) -> Self {
        Grid {
            rows: v[0],
            cols: v[1],
        }
    }
}

impl From<Grid> for [usize; 2] {
    fn from(g: Grid) -> Self {
        [g.rows, g.cols]
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Anything defined on a grid that the propagation matrix can act on.
pub trait SpatialSignal: Sized {
    fn grid(&self) -> Grid;
    fn values(&self) -> &[f64];
    fn with_values(&self, values: Vec<f64>) -> Self;
}

/// Per-position attention mass for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionField {
    grid: Grid,
    values: Vec<f64>,
}

impl AttentionField {
    /// Raw (pre-difference) field: finite and non-negative.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Error::check_len("attention field", grid.len(), values.len())?;
        check_finite(&values)?;
        if let Some(i) = values.iter().position(|&v| v < 0.0) {
            return Err(Error::invalid(format!(
                "attention field entry {i} is negative"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Propagated fields may come out of arbitrary (non-softmax) matrices;
    /// only finiteness is enforced.
    fn derived(grid: Grid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }
}

impl SpatialSignal for AttentionField {
    fn grid(&self) -> Grid {
        self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn with_values(&self, values: Vec<f64>) -> Self {
        Self::derived(self.grid, values)
    }
}

/// Original, positive-quality and negative-quality attention on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBundle {
    pub orig: AttentionField,
    pub pos: AttentionField,
    pub neg: AttentionField,
}

impl AttentionBundle {
    pub fn new(orig: AttentionField, pos: AttentionField, neg: AttentionField) -> Result<Self> {
        orig.grid.ensure_same(&pos.grid)?;
        orig.grid.ensure_same(&neg.grid)?;
        Ok(Self { orig, pos, neg })
    }

    pub fn grid(&self) -> Grid {
        self.orig.grid
    }
}

/// Signed per-position score; larger means more likely defective.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityMap {
    grid: Grid,
    values: Vec<f64>,
}

impl QualityMap {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Error::check_len("quality map", grid.len(), values.len())?;
        check_finite(&values)?;
        Ok(Self { grid, values })
    }
}

impl SpatialSignal for QualityMap {
    fn grid(&self) -> Grid {
        self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            grid: self.grid,
            values,
        }
    }
}

/// Row-major `S × d` query matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl QueryMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("query dimension must be at least 1"));
        }
        if rows == 0 {
            return Err(Error::invalid("query matrix has no rows"));
        }
        Error::check_len("query matrix", rows * dim, data.len())?;
        check_finite(&data)?;
        Ok(Self { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Row-stochastic `S × S` self-attention matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationMatrix {
    size: usize,
    data: Vec<f64>,
}

impl PropagationMatrix {
    pub fn identity(size: usize) -> Self {
        let mut data = vec![0.0; size * size];
        for i in 0..size {
            data[i * size + i] = 1.0;
        }
        Self { size, data }
    }

    pub fn uniform(size: usize) -> Self {
        Self {
            size,
            data: vec![1.0 / size as f64; size * size],
        }
    }

    /// Build from explicit rows. Rows must be non-negative and sum to one.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        let mut data = Vec::with_capacity(size * size);
        for (i, row) in rows.into_iter().enumerate() {
            Error::check_len("propagation row", size, row.len())?;
            check_finite(&row)?;
            if row.iter().any(|&v| v < 0.0) {
                return Err(Error::invalid(format!("propagation row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("propagation row {i} sums to {sum}")));
            }
            data.extend(row);
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("propagated signal", self.size, f.len())?;
        Ok((0..self.size)
            .map(|i| self.row(i).iter().zip(f).map(|(p, v)| p * v).sum())
            .collect())
    }
}

/// Binary resample mask, one bit per grid position.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectMask {
    grid: Grid,
    ratio: f64,
    bits: Vec<bool>,
}

impl DefectMask {
    /// Mask from explicit bits. `ratio` is recorded as given.
    pub fn from_bits(grid: Grid, ratio: f64, bits: Vec<bool>) -> Result<Self> {
        Error::check_len("mask bits", grid.len(), bits.len())?;
        Ok(Self { grid, ratio, bits })
    }

    /// Mask selecting exactly `indices`.
    pub fn from_indices(grid: Grid, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; grid.len()];
        for &i in indices {
            if i >= bits.len() {
                return Err(Error::invalid(format!("mask index {i} outside grid")));
            }
            bits[i] = true;
        }
        let ratio = indices.len() as f64 / grid.len() as f64;
        Ok(Self { grid, ratio, bits })
    }

    pub fn empty(grid: Grid) -> Self {
        Self {
            grid,
            ratio: 0.0,
            bits: vec![false; grid.len()],
        }
    }

    pub fn full(grid: Grid) -> Self {
        Self {
            grid,
            ratio: 1.0,
            bits: vec![true; grid.len()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_set(&self, j: usize) -> bool {
        self.bits[j]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn selected(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn complement(&self) -> Self {
        Self {
            grid: self.grid,
            ratio: 1.0 - self.ratio,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }
}

/// Raw attention tensor `[layers × heads × tokens × S]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    pub layers: usize,
    pub heads: usize,
    pub tokens: usize,
    pub spatial: usize,
    pub data: Vec<f64>,
}

/// Mean over layers, heads and tokens with equal weights.
pub fn reduce_attention(raw: &AttentionTensor, grid: Grid) -> Result<AttentionField> {
    let AttentionTensor {
        layers,
        heads,
        tokens,
        spatial,
        ref data,
    } = *raw;
    if layers == 0 || heads == 0 || tokens == 0 || spatial == 0 {
        return Err(Error::invalid(format!(
            "attention tensor has an empty axis: [{layers}, {heads}, {tokens}, {spatial}]"
        )));
    }
    Error::check_len("attention spatial axis", grid.len(), spatial)?;
    Error::check_len("attention tensor data", layers * heads * tokens * spatial, data.len())?;
    check_finite(data)?;
    if let Some(i) = data.iter().position(|&v| v < 0.0) {
        return Err(Error::invalid(format!("raw attention entry {i} is negative")));
    }
    let slices = layers * heads * tokens;
    let mut acc = vec![0.0; spatial];
    for chunk in data.chunks_exact(spatial) {
        for (a, v) in acc.iter_mut().zip(chunk) {
            *a += v;
        }
    }
    let n = slices as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    AttentionField::new(grid, acc)
}

/// `neg − pos`, positive where the low-quality prompt attends more.
pub fn contrastive_difference(bundle: &AttentionBundle) -> Result<QualityMap> {
    bundle.pos.grid.ensure_same(&bundle.neg.grid)?;
    let values = bundle
        .neg
        .values
        .iter()
        .zip(&bundle.pos.values)
        .map(|(n, p)| n - p)
        .collect();
    QualityMap::new(bundle.neg.grid, values)
}

/// Row-wise `softmax(Q Qᵀ / √d)`, max-subtracted for stability.
pub fn build_propagation(queries: &QueryMatrix) -> Result<PropagationMatrix> {
    let s = queries.rows;
    let scale = 1.0 / (queries.dim as f64).sqrt();
    let mut data = vec![0.0; s * s];
    for i in 0..s {
        let qi = queries.row(i);
        let row = &mut data[i * s..(i + 1) * s];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = qi.iter().zip(queries.row(j)).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::invalid(format!("propagation logits of row {i} overflow")));
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(PropagationMatrix { size: s, data })
}

/// `out[i] = Σ_j P[i,j] f[j]`.
pub fn propagate<F: SpatialSignal>(p: &PropagationMatrix, f: &F) -> Result<F> {
    Ok(f.with_values(p.apply(f.values())?))
}

/// `diff + λ·orig`.
pub fn reweight(diff: &QualityMap, orig: &AttentionField, lambda: f64) -> Result<QualityMap> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    diff.grid.ensure_same(&orig.grid)?;
    let values = diff
        .values
        .iter()
        .zip(&orig.values)
        .map(|(d, o)| d + lambda * o)
        .collect();
    QualityMap::new(diff.grid, values)
}

/// Number of positions a mask of area ratio `r` selects on `s` positions.
///
/// `⌈r·s⌉`, with a 1e-9 slack so that e.g. `r = 0.3, s = 10` gives 3 despite
/// binary rounding of `r`.
pub fn selection_size(r: f64, s: usize) -> usize {
    let raw = r * s as f64;
    let m = (raw - 1e-9).ceil();
    (m.max(1.0) as usize).min(s)
}

/// Relative resolution below which quality values count as tied. Propagating
/// a constant field through a softmax matrix leaves last-bit noise that would
/// otherwise decide ties.
const TIE_RESOLUTION: f64 = 1.0 / (1u64 << 36) as f64;

fn snap_ties(values: &[f64]) -> Vec<f64> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return values.to_vec();
    }
    let step = scale * TIE_RESOLUTION;
    values.iter().map(|v| (v / step).round() * step).collect()
}

/// Select the `⌈r·S⌉` largest entries, ties going to the lower index.
pub fn threshold_mask(p: &QualityMap, r: f64) -> Result<DefectMask> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid(format!("area ratio must lie in (0, 1), got {r}")));
    }
    check_finite(&p.values)?;
    let s = p.values.len();
    let m = selection_size(r, s);
    let keys = snap_ties(&p.values);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    let mut bits = vec![false; s];
    for &i in &order[..m] {
        bits[i] = true;
    }
    Ok(DefectMask {
        grid: p.grid,
        ratio: r,
        bits,
    })
}

/// Defect-mask generation with a prebuilt propagation matrix.
pub fn mask_gen_with(
    bundle: &AttentionBundle,
    propagation: &PropagationMatrix,
    lambda: f64,
    r: f64,
) -> Result<DefectMask> {
    let diff = contrastive_difference(bundle)?;
    let diff = propagate(propagation, &diff)?;
    let orig = propagate(propagation, &bundle.orig)?;
    let score = reweight(&diff, &orig, lambda)?;
    threshold_mask(&score, r)
}

/// Full mask pipeline: contrast, propagate, reweight, threshold.
pub fn mask_gen(
    bundle: &AttentionBundle,
    queries: &QueryMatrix,
    lambda: f64,
    r: f64,
) -> Result<DefectMask> {
    Error::check_len("query rows", bundle.grid().len(), queries.rows())?;
    let propagation = build_propagation(queries)?;
    mask_gen_with(bundle, &propagation, lambda, r)
}
