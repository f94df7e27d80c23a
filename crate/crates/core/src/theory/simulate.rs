//! Monte Carlo patch economy: explicit per-patch mask selection and
//! repair/harm events, sharded into fixed blocks with counter-derived
//! streams so results do not depend on the worker count.

use super::{dominance_check, sparse_dominance_approx, MaskStats, PatchEconomy};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, par_map_indexed, streams, trial_rng};
use crate::stats::Summary;
use rand::Rng;
use serde::{Deserialize, Serialize};

const BLOCK: u64 = 4096;

/// How per-patch gains `δ_j` and harms `γ_j` are drawn around their means.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainProfile {
    #[default]
    Constant,
    /// Uniform on `mean·[1 − spread, 1 + spread]`, `spread ∈ [0, 1]`.
    Uniform { spread: f64 },
}

impl GainProfile {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GainProfile::Constant => Ok(()),
            GainProfile::Uniform { spread } if (0.0..=1.0).contains(&spread) => Ok(()),
            GainProfile::Uniform { spread } => Err(Error::invalid(format!(
                "spread must lie in [0, 1], got {spread}"
            ))),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        match *self {
            GainProfile::Constant => mean,
            GainProfile::Uniform { spread } => mean * (1.0 + spread * (2.0 * rng.random::<f64>() - 1.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub trials: u64,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
    #[serde(default)]
    pub profile: GainProfile,
}

impl SimulationConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            workers: 0,
            profile: GainProfile::Constant,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_profile(mut self, profile: GainProfile) -> Self {
        self.profile = profile;
        self
    }
}

/// Per-trial sample statistics of the simulated selection and gains.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SimulationReport {
    pub true_positives: Summary,
    pub selected: Summary,
    pub false_positives: Summary,
    pub global_gain: Summary,
    pub local_gain: Summary,
    /// Probability with which each clean patch was selected.
    pub clean_selection_probability: f64,
}

impl SimulationReport {
    fn merge(&mut self, o: &SimulationReport) {
        self.true_positives.merge(&o.true_positives);
        self.selected.merge(&o.selected);
        self.false_positives.merge(&o.false_positives);
        self.global_gain.merge(&o.global_gain);
        self.local_gain.merge(&o.local_gain);
    }

    /// Empirical `Δℓ/C_ℓ − Δg/C_g` and its standard error.
    pub fn margin(&self, econ: &PatchEconomy) -> (f64, f64) {
        let m = self.local_gain.mean / econ.cost_l - self.global_gain.mean / econ.cost_g;
        let se = ((self.local_gain.std_err() / econ.cost_l).powi(2)
            + (self.global_gain.std_err() / econ.cost_g).powi(2))
        .sqrt();
        (m, se)
    }
}

/// Per-patch selection probability for clean patches that reproduces the
/// requested precision in ratio-of-expectations form.
pub fn clean_selection_probability(econ: &PatchEconomy, stats: &MaskStats) -> Result<f64> {
    econ.validate()?;
    stats.validate()?;
    let fp = stats.recall * econ.defects as f64 * (1.0 / stats.precision - 1.0);
    if fp == 0.0 {
        return Ok(0.0);
    }
    let clean = (econ.patches - econ.defects) as f64;
    let p = fp / clean;
    if !(p <= 1.0) {
        return Err(Error::Infeasible(format!(
            "recall {} and precision {} need {fp} expected false positives among {clean} clean \
             patches (selection probability {p} > 1)",
            stats.recall, stats.precision
        )));
    }
    Ok(p)
}

/// Runs `cfg.trials` independent trials of both procedures on an economy
/// whose first `s` patches are the defective ones.
pub fn simulate_patch_economy(
    econ: &PatchEconomy,
    stats: &MaskStats,
    cfg: &SimulationConfig,
) -> Result<SimulationReport> {
    if cfg.trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    cfg.profile.validate()?;
    let p_clean = clean_selection_probability(econ, stats)?;
    let blocks = cfg.trials.div_ceil(BLOCK);
    let parts = par_map_indexed(blocks as usize, cfg.workers, |b| {
        let b = b as u64;
        let n = BLOCK.min(cfg.trials - b * BLOCK);
        let mut rng = trial_rng(cfg.seed, streams::SIM_BLOCK, b);
        let mut part = SimulationReport::default();
        for _ in 0..n {
            simulate_trial(econ, stats, p_clean, &cfg.profile, &mut rng, &mut part);
        }
        part
    });
    let mut report = SimulationReport {
        clean_selection_probability: p_clean,
        ..Default::default()
    };
    for p in &parts {
        report.merge(p);
    }
    Ok(report)
}

fn simulate_trial<R: Rng + ?Sized>(
    econ: &PatchEconomy,
    stats: &MaskStats,
    p_clean: f64,
    profile: &GainProfile,
    rng: &mut R,
    out: &mut SimulationReport,
) {
    let (mut tp, mut fp) = (0u32, 0u32);
    let (mut global, mut local) = (0.0, 0.0);
    for _ in 0..econ.defects {
        let delta = profile.draw(econ.delta, rng);
        if rng.random::<f64>() < econ.theta_g {
            global += delta;
        }
        if rng.random::<f64>() < stats.recall {
            tp += 1;
            if rng.random::<f64>() < econ.q {
                local += delta;
            }
        }
    }
    for _ in econ.defects..econ.patches {
        let gamma = profile.draw(econ.gamma, rng);
        if rng.random::<f64>() < econ.h_g {
            global -= gamma;
        }
        if rng.random::<f64>() < p_clean {
            fp += 1;
            if rng.random::<f64>() < econ.h_l {
                local -= gamma;
            }
        }
    }
    out.true_positives.push(tp as f64);
    out.false_positives.push(fp as f64);
    out.selected.push((tp + fp) as f64);
    out.global_gain.push(global);
    out.local_gain.push(local);
}

/// Fraction of trials in which at least one of `n` independent global draws
/// repairs a given defect, each draw succeeding with probability `theta1`.
pub fn simulate_bon_repair(theta1: f64, n: usize, trials: u64, seed: u64, workers: usize) -> Result<Summary> {
    if !(0.0..=1.0).contains(&theta1) || n == 0 || trials == 0 {
        return Err(Error::invalid(format!(
            "need theta1 in [0, 1], n >= 1 and trials >= 1, got {theta1}, {n}, {trials}"
        )));
    }
    let key = derive_seed(seed, streams::BON_BLOCK, n as u64);
    let blocks = trials.div_ceil(BLOCK);
    let parts = par_map_indexed(blocks as usize, workers, |b| {
        let b = b as u64;
        let m = BLOCK.min(trials - b * BLOCK);
        let mut rng = trial_rng(key, streams::BON_BLOCK, b);
        let mut s = Summary::new();
        for _ in 0..m {
            let hit = (0..n).any(|_| rng.random::<f64>() < theta1);
            s.push(if hit { 1.0 } else { 0.0 });
        }
        s
    });
    let mut total = Summary::new();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

/// Agreement between the sparse-regime shortcut and the exact dominance
/// test over random equal-cost economies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepReport {
    pub samples: usize,
    pub agreements: usize,
    pub exact_dominant: usize,
}

impl SweepReport {
    pub fn agreement_rate(&self) -> f64 {
        self.agreements as f64 / self.samples as f64
    }
}

/// Draws `samples` economies with `s/M ≤ 0.02`, `h_ℓ ≤ h_g/10` and equal
/// costs: `M ∈ [500, 5000]`, `θ_g, q, ρ ~ U(0,1)`, `π ~ U(0.05, 1)`,
/// `δ ~ U(0.5, 2)`, `γ ~ U(0.1, 1)`, `h_g` log-uniform on `[1e-5, 1e-1]`.
pub fn equal_cost_sweep(samples: usize, seed: u64) -> Result<SweepReport> {
    let mut rng = trial_rng(seed, streams::SIM_BLOCK, u64::MAX);
    let mut report = SweepReport {
        samples,
        agreements: 0,
        exact_dominant: 0,
    };
    for _ in 0..samples {
        let patches = rng.random_range(500..=5000usize);
        let defects = rng.random_range(1..=patches / 50);
        let h_g = 10f64.powf(rng.random_range(-5.0..-1.0));
        let econ = PatchEconomy {
            patches,
            defects,
            delta: rng.random_range(0.5..2.0),
            gamma: rng.random_range(0.1..1.0),
            theta_g: rng.random(),
            q: rng.random(),
            h_g,
            h_l: h_g * rng.random_range(0.0..0.1),
            cost_g: 1.0,
            cost_l: 1.0,
            budget: 1.0,
        };
        let stats = MaskStats::new(rng.random(), rng.random_range(0.05..=1.0))?;
        let exact = dominance_check(&econ, &stats)?.holds;
        report.exact_dominant += usize::from(exact);
        report.agreements += usize::from(exact == sparse_dominance_approx(&econ, &stats));
    }
    Ok(report)
}

