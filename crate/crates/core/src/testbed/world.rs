use crate::error::{Error, Result};
use crate::mask::Grid;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One isotropic Gaussian component `N(mean, variance·I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: f64,
}

/// Isotropic Gaussian mixture over one patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Component>", into = "Vec<Component>")]
pub struct Mixture {
    components: Vec<Component>,
    log_weights: Vec<f64>,
}

impl Mixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture has no components"));
        }
        let dim = components[0].mean.len();
        if dim == 0 {
            return Err(Error::invalid("mixture component mean is empty"));
        }
        let mut total = 0.0;
        for (k, c) in components.iter().enumerate() {
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::invalid(format!("component {k} weight {} is negative", c.weight)));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::invalid(format!("component {k} variance must be > 0")));
            }
            Error::check_len("component mean", dim, c.mean.len())?;
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::invalid(format!("component {k} mean is not finite")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        let log_weights = components.iter().map(|c| c.weight.ln()).collect();
        Ok(Self {
            components,
            log_weights,
        })
    }

    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(vec![Component {
            weight: 1.0,
            mean,
            variance,
        }])
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Log-density, score and posterior mean `E[x0 | x_t = x]` of the
    /// marginal at noise level `(α, σ)`.
    ///
    /// Each component `(μ, s²I)` becomes `(αμ, (α²s² + σ²)I)`; responsibilities
    /// are normalized in log space.
    pub fn evaluate(&self, x: &[f64], alpha: f64, sigma: f64, out: &mut PatchEval) {
        let d = x.len();
        let mut logs = [0.0f64; 16];
        let mut heap;
        let logs: &mut [f64] = if self.components.len() <= logs.len() {
            &mut logs[..self.components.len()]
        } else {
            heap = vec![0.0; self.components.len()];
            &mut heap
        };
        for (k, c) in self.components.iter().enumerate() {
            let v = alpha * alpha * c.variance + sigma * sigma;
            let sq: f64 = x
                .iter()
                .zip(&c.mean)
                .map(|(xi, mi)| (xi - alpha * mi).powi(2))
                .sum();
            logs[k] = self.log_weights[k] - 0.5 * (d as f64 * (2.0 * PI * v).ln() + sq / v);
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        out.log_density = lse;
        out.score.clear();
        out.score.resize(d, 0.0);
        out.x0.clear();
        out.x0.resize(d, 0.0);
        for (k, c) in self.components.iter().enumerate() {
            let r = (logs[k] - lse).exp();
            if r == 0.0 {
                continue;
            }
            let v = alpha * alpha * c.variance + sigma * sigma;
            let shrink = alpha * c.variance / v;
            for i in 0..d {
                let diff = x[i] - alpha * c.mean[i];
                out.score[i] -= r * diff / v;
                out.x0[i] += r * (c.mean[i] + shrink * diff);
            }
        }
    }

    pub fn log_density(&self, x: &[f64], alpha: f64, sigma: f64) -> f64 {
        let mut e = PatchEval::default();
        self.evaluate(x, alpha, sigma, &mut e);
        e.log_density
    }
}

impl TryFrom<Vec<Component>> for Mixture {
    type Error = Error;
    fn try_from(v: Vec<Component>) -> Result<Self> {
        Mixture::new(v)
    }
}

impl From<Mixture> for Vec<Component> {
    fn from(m: Mixture) -> Self {
        m.components
    }
}

/// Scratch output of [`Mixture::evaluate`].
#[derive(Debug, Clone, Default)]
pub struct PatchEval {
    pub log_density: f64,
    pub score: Vec<f64>,
    pub x0: Vec<f64>,
}

/// A grid of statistically independent patches, each with its own mixture
/// target, plus the verifier weights `w_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchWorld {
    grid: Grid,
    patch_dim: usize,
    patches: Vec<Mixture>,
    weights: Vec<f64>,
}

impl PatchWorld {
    pub fn new(grid: Grid, patches: Vec<Mixture>, weights: Option<Vec<f64>>) -> Result<Self> {
        Error::check_len("patch mixtures", grid.len(), patches.len())?;
        let patch_dim = patches[0].dim();
        for p in &patches {
            Error::check_len("patch dimension", patch_dim, p.dim())?;
        }
        let m = grid.len();
        let weights = match weights {
            Some(w) => {
                Error::check_len("verifier weights", m, w.len())?;
                if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                    return Err(Error::invalid("verifier weights must be finite and >= 0"));
                }
                let total: f64 = w.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("verifier weights sum to {total}, not 1")));
                }
                w
            }
            None => vec![1.0 / m as f64; m],
        };
        Ok(Self {
            grid,
            patch_dim,
            patches,
            weights,
        })
    }

    /// Every patch shares `mixture`; verifier weights uniform.
    pub fn homogeneous(grid: Grid, mixture: Mixture) -> Result<Self> {
        Self::new(grid, vec![mixture; grid.len()], None)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_dim
    }

    /// Length of a full latent vector.
    pub fn dim(&self) -> usize {
        self.patches.len() * self.patch_dim
    }

    pub fn mixture(&self, j: usize) -> &Mixture {
        &self.patches[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn patch<'x>(&self, x: &'x [f64], j: usize) -> &'x [f64] {
        &x[j * self.patch_dim..(j + 1) * self.patch_dim]
    }

    /// `∇ log p_t(x)` of the time-`t` marginal, patch by patch.
    pub fn score_at(&self, x: &[f64], alpha: f64, sigma: f64) -> Result<Vec<f64>> {
        Ok(self.evaluate(x, alpha, sigma)?.score)
    }

    /// Log-density of the full latent under the time-`t` marginal.
    pub fn log_density_at(&self, x: &[f64], alpha: f64, sigma: f64) -> Result<f64> {
        Ok(self.evaluate(x, alpha, sigma)?.log_density)
    }

    /// Joint evaluation of log-density, score and posterior mean.
    pub fn evaluate(&self, x: &[f64], alpha: f64, sigma: f64) -> Result<FieldEval> {
        Error::check_len("latent", self.dim(), x.len())?;
        let d = self.patch_dim;
        let mut out = FieldEval {
            log_density: 0.0,
            score: vec![0.0; x.len()],
            x0: vec![0.0; x.len()],
        };
        let mut e = PatchEval::default();
        for (j, mix) in self.patches.iter().enumerate() {
            mix.evaluate(&x[j * d..(j + 1) * d], alpha, sigma, &mut e);
            out.log_density += e.log_density;
            out.score[j * d..(j + 1) * d].copy_from_slice(&e.score);
            out.x0[j * d..(j + 1) * d].copy_from_slice(&e.x0);
        }
        Ok(out)
    }

    /// Per-patch log-density under the clean (`t = 0`) target.
    pub fn patch_log_densities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("latent", self.dim(), x.len())?;
        Ok((0..self.num_patches())
            .map(|j| self.patches[j].log_density(self.patch(x, j), 1.0, 0.0))
            .collect())
    }
}

/// Full-latent evaluation.
#[derive(Debug, Clone)]
pub struct FieldEval {
    pub log_density: f64,
    pub score: Vec<f64>,
    pub x0: Vec<f64>,
}

/// JSON description of a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub grid: Grid,
    pub patch_dim: usize,
    /// Mixture shared by every patch.
    pub mixture: Vec<Component>,
    /// Per-patch replacements of the shared mixture.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<PatchOverride>,
    /// Verifier weights; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchOverride {
    pub patch: usize,
    pub mixture: Vec<Component>,
}

impl Default for WorldSpec {
    /// 8×8 grid of 4-d patches, each a symmetric two-component mixture.
    fn default() -> Self {
        let mean = |s: f64| vec![s * 1.5, 0.0, 0.0, 0.0];
        Self {
            grid: Grid { rows: 8, cols: 8 },
            patch_dim: 4,
            mixture: vec![
                Component {
                    weight: 0.5,
                    mean: mean(1.0),
                    variance: 0.25,
                },
                Component {
                    weight: 0.5,
                    mean: mean(-1.0),
                    variance: 0.25,
                },
            ],
            overrides: Vec::new(),
            verifier_weights: None,
        }
    }
}

impl WorldSpec {
    pub fn build(&self) -> Result<PatchWorld> {
        let grid = Grid::new(self.grid.rows, self.grid.cols)?;
        if self.patch_dim == 0 {
            return Err(Error::invalid("patch_dim must be >= 1"));
        }
        let shared = Mixture::new(self.mixture.clone())?;
        Error::check_len("mixture mean", self.patch_dim, shared.dim())?;
        let mut patches = vec![shared; grid.len()];
        for o in &self.overrides {
            if o.patch >= grid.len() {
                return Err(Error::invalid(format!("override patch {} outside grid", o.patch)));
            }
            patches[o.patch] = Mixture::new(o.mixture.clone())?;
        }
        PatchWorld::new(grid, patches, self.verifier_weights.clone())
    }
}
