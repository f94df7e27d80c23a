use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Interpolation path between data (`t = 0`) and noise (`t = T`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// Variance preserving: `α = cos(πt/2T)`, `σ = sin(πt/2T)`.
    #[default]
    Cosine,
    /// Straight-line (rectified flow) path: `α = 1 − t/T`, `σ = t/T`.
    Linear,
}

/// Noise schedule `α(t), σ(t)` on `[0, T]` with a default step count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSchedule {
    pub horizon: f64,
    pub steps: usize,
    #[serde(default)]
    pub kind: PathKind,
}

impl NoiseSchedule {
    pub fn new(kind: PathKind, horizon: f64, steps: usize) -> Result<Self> {
        let s = Self {
            horizon,
            steps,
            kind,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn cosine(horizon: f64, steps: usize) -> Result<Self> {
        Self::new(PathKind::Cosine, horizon, steps)
    }

    pub fn linear(horizon: f64, steps: usize) -> Result<Self> {
        Self::new(PathKind::Linear, horizon, steps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        Ok(())
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange {
                t,
                lo: 0.0,
                hi: self.horizon,
            })
        }
    }

    pub fn alpha(&self, t: f64) -> f64 {
        match self.kind {
            PathKind::Cosine => (FRAC_PI_2 * t / self.horizon).cos(),
            PathKind::Linear => 1.0 - t / self.horizon,
        }
    }

    pub fn sigma(&self, t: f64) -> f64 {
        match self.kind {
            PathKind::Cosine => (FRAC_PI_2 * t / self.horizon).sin(),
            PathKind::Linear => t / self.horizon,
        }
    }

    pub fn alpha_dot(&self, t: f64) -> f64 {
        match self.kind {
            PathKind::Cosine => -(FRAC_PI_2 / self.horizon) * (FRAC_PI_2 * t / self.horizon).sin(),
            PathKind::Linear => -1.0 / self.horizon,
        }
    }

    pub fn sigma_dot(&self, t: f64) -> f64 {
        match self.kind {
            PathKind::Cosine => (FRAC_PI_2 / self.horizon) * (FRAC_PI_2 * t / self.horizon).cos(),
            PathKind::Linear => 1.0 / self.horizon,
        }
    }

    /// Uniform step of a full `T → 0` pass.
    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `n + 1` times from `from` down to `to` with exact endpoints.
    pub fn time_grid(from: f64, to: f64, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|k| {
                if k == n {
                    to
                } else {
                    from - (from - to) * k as f64 / n as f64
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints_and_vp_identity() {
        let s = NoiseSchedule::cosine(2.0, 10).unwrap();
        assert_eq!(s.alpha(0.0), 1.0);
        assert_eq!(s.sigma(0.0), 0.0);
        assert!(s.alpha(2.0).abs() < 1e-15);
        assert!((s.sigma(2.0) - 1.0).abs() < 1e-15);
        for k in 0..1000 {
            let t = 2.0 * k as f64 / 999.0;
            let a = s.alpha(t);
            let g = s.sigma(t);
            assert!((a * a + g * g - 1.0).abs() < 1e-12);
            if k > 0 {
                let tp = 2.0 * (k - 1) as f64 / 999.0;
                assert!(a <= s.alpha(tp));
                assert!(g >= s.sigma(tp));
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for s in [NoiseSchedule::cosine(1.0, 5).unwrap(), NoiseSchedule::linear(1.5, 5).unwrap()] {
            for &t in &[0.1, 0.5, 0.9] {
                let h = 1e-6;
                let da = (s.alpha(t + h) - s.alpha(t - h)) / (2.0 * h);
                let ds = (s.sigma(t + h) - s.sigma(t - h)) / (2.0 * h);
                assert!((da - s.alpha_dot(t)).abs() < 1e-8);
                assert!((ds - s.sigma_dot(t)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn grid_has_exact_endpoints() {
        let g = NoiseSchedule::time_grid(0.7, 0.07, 9);
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.7);
        assert_eq!(g[9], 0.07);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(NoiseSchedule::cosine(0.0, 10).is_err());
        assert!(NoiseSchedule::cosine(1.0, 0).is_err());
        let s = NoiseSchedule::cosine(1.0, 10).unwrap();
        assert!(s.check_time(1.5).is_err());
        assert!(s.check_time(-0.1).is_err());
    }
}
