use super::schedule::{NoiseSchedule, PathKind};
use super::world::PatchWorld;
use crate::error::Result;
use std::sync::atomic::{AtomicU64, Ordering};

/// Sampler family the predictor serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorMode {
    DiffusionSde,
    FlowSde,
}

/// One evaluation of the oracle network.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// `ε_θ(x, t) = −σ(t)·∇log p_t(x)`.
    pub eps: Vec<f64>,
    /// `∇log p_t(x)`.
    pub score: Vec<f64>,
    /// Posterior mean `E[x0 | x_t = x]`, well defined even where `α(t) = 0`.
    pub x0: Vec<f64>,
}

/// Closed-form noise predictor bound to a world and a schedule.
///
/// Every call to [`predict`](Self::predict) or [`velocity`](Self::velocity)
/// counts as one function evaluation (NFE).
#[derive(Debug)]
pub struct NoisePredictor<'w> {
    world: &'w PatchWorld,
    schedule: NoiseSchedule,
    evals: AtomicU64,
}

impl<'w> NoisePredictor<'w> {
    pub fn new(world: &'w PatchWorld, schedule: NoiseSchedule) -> Self {
        Self {
            world,
            schedule,
            evals: AtomicU64::new(0),
        }
    }

    pub fn world(&self) -> &'w PatchWorld {
        self.world
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn mode(&self) -> PredictorMode {
        match self.schedule.kind {
            PathKind::Cosine => PredictorMode::DiffusionSde,
            PathKind::Linear => PredictorMode::FlowSde,
        }
    }

    pub fn nfe(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn reset_nfe(&self) {
        self.evals.store(0, Ordering::Relaxed);
    }

    pub fn predict(&self, x: &[f64], t: f64) -> Result<Prediction> {
        self.schedule.check_time(t)?;
        let alpha = self.schedule.alpha(t);
        let sigma = self.schedule.sigma(t);
        let e = self.world.evaluate(x, alpha, sigma)?;
        self.evals.fetch_add(1, Ordering::Relaxed);
        let eps = e.score.iter().map(|s| -sigma * s).collect();
        Ok(Prediction {
            eps,
            score: e.score,
            x0: e.x0,
        })
    }

    /// Probability-flow velocity `u_t = α'·E[x0|x] + σ'·E[z|x]` together with
    /// the score, from one evaluation.
    pub fn velocity(&self, x: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.predict(x, t)?;
        let da = self.schedule.alpha_dot(t);
        let ds = self.schedule.sigma_dot(t);
        let u = p
            .x0
            .iter()
            .zip(&p.eps)
            .map(|(x0, eps)| da * x0 + ds * eps)
            .collect();
        Ok((u, p.score))
    }
}
