//! Defect injection and synthetic attention for the testbed.

use super::sampler::{standard_normal, LatentState};
use super::world::PatchWorld;
use crate::error::{Error, Result};
use crate::mask::{AttentionBundle, AttentionField, Grid, QueryMatrix};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Displace `count` distinct, uniformly chosen patches by `magnitude` along
/// uniformly random unit directions. Returns the displaced latent and the
/// sorted defect set.
pub fn inject_defects<R: Rng + ?Sized>(
    world: &PatchWorld,
    x: &LatentState,
    count: usize,
    magnitude: f64,
    rng: &mut R,
) -> Result<(LatentState, Vec<usize>)> {
    let m = world.num_patches();
    if count == 0 || count > m {
        return Err(Error::invalid(format!("defect count {count} outside [1, {m}]")));
    }
    Error::check_len("latent", world.dim(), x.x.len())?;
    let mut chosen = sample(rng, m, count).into_vec();
    chosen.sort_unstable();
    let mut out = x.clone();
    let d = world.patch_dim();
    for &j in &chosen {
        let dir = unit_vector(rng, d);
        for (xi, u) in out.x[j * d..(j + 1) * d].iter_mut().zip(&dir) {
            *xi += magnitude * u;
        }
    }
    Ok((out, chosen))
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v = standard_normal(rng, d);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// How a generator corrupts its samples: a uniformly drawn number of defects
/// in `[min_count, max_count]`, each displaced by `magnitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSpec {
    pub min_count: usize,
    pub max_count: usize,
    pub magnitude: f64,
}

impl DefectSpec {
    pub fn fixed(count: usize, magnitude: f64) -> Self {
        Self {
            min_count: count,
            max_count: count,
            magnitude,
        }
    }

    pub fn validate(&self, patches: usize) -> Result<()> {
        if self.min_count > self.max_count || self.max_count > patches {
            return Err(Error::invalid(format!(
                "defect count range [{}, {}] invalid for {patches} patches",
                self.min_count, self.max_count
            )));
        }
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(Error::invalid("defect magnitude must be finite and >= 0"));
        }
        Ok(())
    }

    /// Corrupt `x`; a zero draw leaves it untouched with an empty defect set.
    pub fn apply<R: Rng + ?Sized>(
        &self,
        world: &PatchWorld,
        x: LatentState,
        rng: &mut R,
    ) -> Result<(LatentState, Vec<usize>)> {
        self.validate(world.num_patches())?;
        let count = rng.random_range(self.min_count..=self.max_count);
        if count == 0 {
            return Ok((x, Vec::new()));
        }
        inject_defects(world, &x, count, self.magnitude, rng)
    }
}

/// Parameters of the synthetic attention model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthAttention {
    /// Drop of positive-prompt attention on defects.
    pub gain_pos: f64,
    /// Rise of negative-prompt attention on defects.
    pub gain_neg: f64,
    /// Standard deviation of the per-position attention noise. Query noise
    /// uses the same value relative to the logit gap between adjacent
    /// positions.
    pub noise_sd: f64,
    /// Baseline attention level.
    pub base: f64,
    /// Spatial sharpness of the query embedding; larger values concentrate
    /// each propagation row on its own position.
    pub sharpness: f64,
}

impl Default for SynthAttention {
    fn default() -> Self {
        Self {
            gain_pos: 0.3,
            gain_neg: 0.3,
            noise_sd: 0.1,
            base: 1.0,
            sharpness: 24.0,
        }
    }
}

impl SynthAttention {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.gain_pos) && ok(self.gain_neg) && ok(self.noise_sd) && ok(self.base)) {
            return Err(Error::invalid("attention gains, noise and base must be finite and >= 0"));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::invalid("attention sharpness must be > 0"));
        }
        Ok(())
    }
}

/// Query embedding of grid positions: half-period Fourier features of row
/// and column, so `⟨q_i, q_j⟩` peaks at `i = j` and decays with grid
/// distance. `sharpness` is the feature scale of an 8-position axis; longer
/// axes scale proportionally so adjacent positions stay equally separable.
pub fn positional_queries(grid: Grid, sharpness: f64) -> Vec<f64> {
    let (ar, ac) = axis_scales(grid, sharpness);
    let mut data = Vec::with_capacity(grid.len() * 4);
    for j in 0..grid.len() {
        let (r, c) = grid.coords(j);
        let tr = PI * r as f64 / grid.rows.max(2) as f64;
        let tc = PI * c as f64 / grid.cols.max(2) as f64;
        data.extend_from_slice(&[ar * tr.cos(), ar * tr.sin(), ac * tc.cos(), ac * tc.sin()]);
    }
    data
}

fn axis_scales(grid: Grid, sharpness: f64) -> (f64, f64) {
    let f = |n: usize| sharpness * n.max(2) as f64 / 8.0;
    (f(grid.rows), f(grid.cols))
}

/// Synthesize an attention bundle and queries consistent with a known defect
/// set: the negative prompt gains `gain_neg` on defects, the positive prompt
/// loses `gain_pos`, every field gets Gaussian noise and is clamped at zero.
pub fn synth_attention<R: Rng + ?Sized>(
    grid: Grid,
    true_set: &[usize],
    params: &SynthAttention,
    rng: &mut R,
) -> Result<(AttentionBundle, QueryMatrix)> {
    params.validate()?;
    let s = grid.len();
    let mut defect = vec![false; s];
    for &j in true_set {
        if j >= s {
            return Err(Error::invalid(format!("defect index {j} outside grid")));
        }
        defect[j] = true;
    }
    let mut noisy = |shift: f64, flag: &dyn Fn(usize) -> bool| -> Vec<f64> {
        let z = standard_normal(rng, s);
        (0..s)
            .map(|j| {
                let v = params.base + if flag(j) { shift } else { 0.0 } + params.noise_sd * z[j];
                v.max(0.0)
            })
            .collect()
    };
    let orig = noisy(0.0, &|_| false);
    let pos = noisy(-params.gain_pos, &|j| defect[j]);
    let neg = noisy(params.gain_neg, &|j| defect[j]);
    let mut q = positional_queries(grid, params.sharpness);
    let qz = standard_normal(rng, q.len());
    let (ar, ac) = axis_scales(grid, params.sharpness);
    let step = |a: f64, n: usize| a * (PI / n.max(2) as f64).powi(2);
    let (sr, sc) = (step(ar, grid.rows), step(ac, grid.cols));
    for (i, (v, z)) in q.iter_mut().zip(qz).enumerate() {
        let a = if i % 4 < 2 { sr } else { sc };
        *v += params.noise_sd * a * z;
    }
    let bundle = AttentionBundle::new(
        AttentionField::new(grid, orig)?,
        AttentionField::new(grid, pos)?,
        AttentionField::new(grid, neg)?,
    )?;
    Ok((bundle, QueryMatrix::new(s, 4, q)?))
}
