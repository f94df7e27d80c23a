//! Localized resampling: renoise the whole latent to `t0`, refine only the
//! masked patches while the rest is re-anchored to the original image at the
//! matching noise level, then run a short free reverse sweep from `t_g` to 0.

use crate::error::{Error, Result};
use crate::mask::DefectMask;
use crate::testbed::{
    reverse_step_to, standard_normal, LatentState, NoisePredictor, NoiseSchedule, PatchWorld,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Renoise time, hand-off time and step counts of one localized refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResampleConfig {
    pub t0: f64,
    pub t_g: f64,
    pub n_refine: usize,
    /// Reverse steps from `t_g` to 0; zero exactly when `t_g = 0`.
    pub n_integrate: usize,
}

impl ResampleConfig {
    pub fn new(t0: f64, t_g: f64, n_refine: usize, n_integrate: usize) -> Result<Self> {
        let c = Self {
            t0,
            t_g,
            n_refine,
            n_integrate,
        };
        c.validate_shape()?;
        Ok(c)
    }

    /// Step counts chosen to match the schedule's base step size.
    pub fn matched(schedule: &NoiseSchedule, t0: f64, t_g: f64) -> Result<Self> {
        let h = schedule.step_size();
        let n_refine = (((t0 - t_g) / h) - 1e-9).ceil().max(1.0) as usize;
        let n_integrate = if t_g > 0.0 {
            ((t_g / h) - 1e-9).ceil().max(1.0) as usize
        } else {
            0
        };
        let c = Self::new(t0, t_g, n_refine, n_integrate)?;
        c.validate(schedule)?;
        Ok(c)
    }

    /// Half-horizon renoise with a hand-off at a tenth of it.
    pub fn default_for(schedule: &NoiseSchedule) -> Result<Self> {
        let t0 = 0.5 * schedule.horizon;
        Self::matched(schedule, t0, 0.1 * t0)
    }

    fn validate_shape(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::invalid(format!("t0 must be > 0, got {}", self.t0)));
        }
        if !(self.t_g >= 0.0 && self.t_g < self.t0) {
            return Err(Error::invalid(format!(
                "t_g must satisfy 0 <= t_g < t0, got t_g = {} with t0 = {}",
                self.t_g, self.t0
            )));
        }
        if self.n_refine == 0 {
            return Err(Error::invalid("n_refine must be >= 1"));
        }
        if (self.t_g > 0.0) != (self.n_integrate > 0) {
            return Err(Error::invalid(
                "n_integrate must be positive exactly when t_g > 0",
            ));
        }
        Ok(())
    }

    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        self.validate_shape()?;
        if self.t0 > schedule.horizon {
            return Err(Error::TimeOutOfRange {
                t: self.t0,
                lo: 0.0,
                hi: schedule.horizon,
            });
        }
        Ok(())
    }

    /// Refinement step `(t0 − t_g) / n_refine`.
    pub fn dt(&self) -> f64 {
        (self.t0 - self.t_g) / self.n_refine as f64
    }

    /// NFEs consumed by one call to [`localized_resample`].
    pub fn nfe(&self) -> u64 {
        (self.n_refine + self.n_integrate) as u64
    }

    fn refine_times(&self) -> Vec<f64> {
        NoiseSchedule::time_grid(self.t0, self.t_g, self.n_refine)
    }

    fn integrate_times(&self) -> Vec<f64> {
        NoiseSchedule::time_grid(self.t_g, 0.0, self.n_integrate)
    }
}

/// Per-coordinate mask: bit `j` covers the `d` coordinates of patch `j`.
fn coordinate_mask(world: &PatchWorld, mask: &DefectMask) -> Result<Vec<bool>> {
    if mask.grid() != world.grid() {
        let (a, b) = (mask.grid(), world.grid());
        return Err(Error::GridMismatch((a.rows, a.cols), (b.rows, b.cols)));
    }
    let d = world.patch_dim();
    Ok(mask
        .bits()
        .iter()
        .flat_map(|&b| std::iter::repeat_n(b, d))
        .collect())
}

/// `x_t0 = α(t0)·anchor + σ(t0)·((1 − M)⊙z_bg + M⊙z_mask)`.
pub fn renoise_with_noise(
    world: &PatchWorld,
    schedule: &NoiseSchedule,
    anchor: &LatentState,
    mask: &DefectMask,
    t0: f64,
    z_bg: &[f64],
    z_mask: &[f64],
) -> Result<LatentState> {
    schedule.check_time(t0)?;
    let bits = coordinate_mask(world, mask)?;
    Error::check_len("anchor", bits.len(), anchor.x.len())?;
    Error::check_len("background noise", bits.len(), z_bg.len())?;
    Error::check_len("mask noise", bits.len(), z_mask.len())?;
    let (a, s) = (schedule.alpha(t0), schedule.sigma(t0));
    let x = (0..bits.len())
        .map(|i| a * anchor.x[i] + s * if bits[i] { z_mask[i] } else { z_bg[i] })
        .collect();
    Ok(LatentState { x, t: t0 })
}

pub fn renoise<R: Rng + ?Sized>(
    world: &PatchWorld,
    schedule: &NoiseSchedule,
    anchor: &LatentState,
    mask: &DefectMask,
    cfg: &ResampleConfig,
    rng: &mut R,
) -> Result<LatentState> {
    let n = anchor.x.len();
    let z_bg = standard_normal(rng, n);
    let z_mask = standard_normal(rng, n);
    renoise_with_noise(world, schedule, anchor, mask, cfg.t0, &z_bg, &z_mask)
}

/// One refinement step from `x_t.t` down to `s` sharing the noise draw `z`:
/// unmasked coordinates become `α(s)·anchor + σ(s)·z`, masked coordinates
/// take an ancestral reverse step. Consumes one NFE.
pub fn masked_refine_step_to(
    predictor: &NoisePredictor<'_>,
    x_t: &LatentState,
    s: f64,
    mask: &DefectMask,
    anchor: &LatentState,
    z: &[f64],
) -> Result<LatentState> {
    let bits = coordinate_mask(predictor.world(), mask)?;
    Error::check_len("anchor", bits.len(), anchor.x.len())?;
    let stepped = reverse_step_to(predictor, x_t, s, z)?;
    let schedule = predictor.schedule();
    let (a, sg) = (schedule.alpha(s), schedule.sigma(s));
    let x = (0..bits.len())
        .map(|i| {
            if bits[i] {
                stepped.x[i]
            } else {
                a * anchor.x[i] + sg * z[i]
            }
        })
        .collect();
    Ok(LatentState { x, t: s })
}

/// [`masked_refine_step_to`] with a step `cfg.dt()`, restricted to the
/// refinement window `(t_g, t0]`.
pub fn masked_refine_step<R: Rng + ?Sized>(
    predictor: &NoisePredictor<'_>,
    x_t: &LatentState,
    mask: &DefectMask,
    anchor: &LatentState,
    cfg: &ResampleConfig,
    rng: &mut R,
) -> Result<LatentState> {
    let tol = 1e-12 * cfg.t0;
    if !(x_t.t > cfg.t_g + tol && x_t.t <= cfg.t0 + tol) {
        return Err(Error::TimeOutOfRange {
            t: x_t.t,
            lo: cfg.t_g,
            hi: cfg.t0,
        });
    }
    let s = (x_t.t - cfg.dt()).max(cfg.t_g);
    let z = standard_normal(rng, x_t.x.len());
    masked_refine_step_to(predictor, x_t, s, mask, anchor, &z)
}

/// Result of one localized refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleOutcome {
    pub state: LatentState,
    pub score: f64,
    pub nfe: u64,
}

/// Scalar quality of a clean latent; higher is better.
pub trait Verifier {
    fn score(&self, x: &[f64]) -> Result<f64>;
}

impl Verifier for PatchWorld {
    fn score(&self, x: &[f64]) -> Result<f64> {
        crate::testbed::verifier_score(self, x)
    }
}

/// Refinement loop only (`t0 → t_g`), returning the state at `t_g`.
pub fn refine_masked<R: Rng + ?Sized>(
    predictor: &NoisePredictor<'_>,
    anchor: &LatentState,
    mask: &DefectMask,
    cfg: &ResampleConfig,
    rng: &mut R,
) -> Result<LatentState> {
    cfg.validate(predictor.schedule())?;
    let mut x = renoise(predictor.world(), predictor.schedule(), anchor, mask, cfg, rng)?;
    for w in cfg.refine_times().windows(2) {
        x.t = w[0];
        let z = standard_normal(rng, x.x.len());
        x = masked_refine_step_to(predictor, &x, w[1], mask, anchor, &z)?;
    }
    Ok(x)
}

/// Renoise, masked refinement `t0 → t_g`, free integration `t_g → 0`, score.
/// Consumes exactly `cfg.nfe()` evaluations.
pub fn localized_resample<R: Rng + ?Sized, V: Verifier + ?Sized>(
    predictor: &NoisePredictor<'_>,
    anchor: &LatentState,
    mask: &DefectMask,
    cfg: &ResampleConfig,
    verifier: &V,
    rng: &mut R,
) -> Result<ResampleOutcome> {
    if anchor.t != 0.0 {
        return Err(Error::invalid(format!("anchor must be at t = 0, got {}", anchor.t)));
    }
    let before = predictor.nfe();
    let mut x = refine_masked(predictor, anchor, mask, cfg, rng)?;
    if cfg.n_integrate > 0 {
        x = crate::testbed::integrate_reverse(predictor, x, &cfg.integrate_times(), rng)?;
    }
    let score = verifier.score(&x.x)?;
    Ok(ResampleOutcome {
        state: x,
        score,
        nfe: predictor.nfe() - before,
    })
}
