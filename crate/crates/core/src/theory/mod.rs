//! Closed-form patch economy: selection statistics of an imperfect mask,
//! expected gains of global versus localized resampling, dominance
//! thresholds, Best-of-N saturation and failure regimes. [`simulate`] holds
//! the brute-force Monte Carlo counterpart.

pub mod simulate;

pub use simulate::{
    equal_cost_sweep, simulate_bon_repair, simulate_patch_economy, GainProfile, SimulationConfig,
    SimulationReport, SweepReport,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Recall and precision of a defect mask, in ratio-of-expectations form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskStats {
    pub recall: f64,
    pub precision: f64,
}

impl MaskStats {
    pub fn new(recall: f64, precision: f64) -> Result<Self> {
        let s = Self { recall, precision };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.recall) {
            return Err(Error::invalid(format!("recall must lie in [0, 1], got {}", self.recall)));
        }
        if !(self.precision > 0.0 && self.precision <= 1.0) {
            return Err(Error::invalid(format!(
                "precision must lie in (0, 1], got {}; with zero precision no selected patch \
                 is defective and the selection statistics are undefined",
                self.precision
            )));
        }
        Ok(())
    }
}

impl Default for MaskStats {
    fn default() -> Self {
        Self {
            recall: 0.8,
            precision: 0.8,
        }
    }
}

/// `M` patches of which `s` are defective, with per-trial repair and harm
/// probabilities, mean gains, trial costs and a compute budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchEconomy {
    pub patches: usize,
    pub defects: usize,
    /// Mean weighted gain from repairing one defective patch.
    pub delta: f64,
    /// Mean weighted loss from damaging one clean patch.
    pub gamma: f64,
    pub theta_g: f64,
    pub q: f64,
    pub h_g: f64,
    pub h_l: f64,
    pub cost_g: f64,
    pub cost_l: f64,
    pub budget: f64,
}

impl Default for PatchEconomy {
    fn default() -> Self {
        Self {
            patches: 100,
            defects: 10,
            delta: 1.0,
            gamma: 0.5,
            theta_g: 0.5,
            q: 0.5,
            h_g: 0.1,
            h_l: 0.1,
            cost_g: 1.0,
            cost_l: 1.0,
            budget: 10.0,
        }
    }
}

impl PatchEconomy {
    /// Returns every violated constraint as `(field, message)`.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.patches == 0 {
            v.push(("patches", "must be >= 1".to_string()));
        }
        if self.defects == 0 || self.defects > self.patches {
            v.push(("defects", format!("must lie in [1, {}], got {}", self.patches, self.defects)));
        }
        for (name, x) in [("delta", self.delta), ("gamma", self.gamma)] {
            if !(x >= 0.0 && x.is_finite()) {
                v.push((name, format!("must be finite and >= 0, got {x}")));
            }
        }
        for (name, p) in [
            ("theta_g", self.theta_g),
            ("q", self.q),
            ("h_g", self.h_g),
            ("h_l", self.h_l),
        ] {
            if !(0.0..=1.0).contains(&p) {
                v.push((name, format!("must lie in [0, 1], got {p}")));
            }
        }
        for (name, c) in [
            ("cost_g", self.cost_g),
            ("cost_l", self.cost_l),
            ("budget", self.budget),
        ] {
            if !(c > 0.0 && c.is_finite()) {
                v.push((name, format!("must be finite and > 0, got {c}")));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            None => Ok(()),
            Some((f, m)) => Err(Error::invalid(format!("{f} {m}"))),
        }
    }

    fn m(&self) -> f64 {
        self.patches as f64
    }

    fn s(&self) -> f64 {
        self.defects as f64
    }
}

/// Expected true positives, selected patches and false positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionStats {
    pub true_positives: f64,
    pub selected: f64,
    pub false_positives: f64,
}

pub fn expected_selection_stats(stats: &MaskStats, defects: usize) -> Result<SelectionStats> {
    stats.validate()?;
    if defects == 0 {
        return Err(Error::invalid("defect count must be >= 1"));
    }
    let tp = stats.recall * defects as f64;
    Ok(SelectionStats {
        true_positives: tp,
        selected: tp / stats.precision,
        false_positives: tp * (1.0 / stats.precision - 1.0),
    })
}

/// Expected quality change of one global trial and one localized trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialGains {
    pub global: f64,
    pub local: f64,
}

pub fn per_trial_gains(econ: &PatchEconomy, stats: &MaskStats) -> Result<TrialGains> {
    econ.validate()?;
    let sel = expected_selection_stats(stats, econ.defects)?;
    Ok(TrialGains {
        global: econ.s() * econ.theta_g * econ.delta
            - (econ.m() - econ.s()) * econ.h_g * econ.gamma,
        local: sel.true_positives * econ.q * econ.delta
            - sel.false_positives * econ.h_l * econ.gamma,
    })
}

/// Per-trial gains scaled by the number of affordable trials `B / C`.
pub fn budget_gains(econ: &PatchEconomy, stats: &MaskStats) -> Result<TrialGains> {
    let g = per_trial_gains(econ, stats)?;
    Ok(TrialGains {
        global: econ.budget / econ.cost_g * g.global,
        local: econ.budget / econ.cost_l * g.local,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dominance {
    pub holds: bool,
    /// `Δℓ/C_ℓ − Δg/C_g`.
    pub margin: f64,
}

pub fn dominance_check(econ: &PatchEconomy, stats: &MaskStats) -> Result<Dominance> {
    let g = per_trial_gains(econ, stats)?;
    let margin = g.local / econ.cost_l - g.global / econ.cost_g;
    Ok(Dominance {
        holds: margin > 0.0,
        margin,
    })
}

/// Expected net benefit of selecting one true defect, after charging the
/// false positives that come with it at this precision.
pub fn net_local_benefit(econ: &PatchEconomy, precision: f64) -> f64 {
    econ.q * econ.delta - (1.0 / precision - 1.0) * econ.h_l * econ.gamma
}

/// Smallest recall at which localized refinement wins. The raw value is
/// returned, so a non-positive result means any recall suffices.
pub fn required_recall(econ: &PatchEconomy, precision: f64) -> Result<f64> {
    econ.validate()?;
    MaskStats::new(1.0, precision)?;
    let den = net_local_benefit(econ, precision);
    if den <= 0.0 {
        return Err(Error::Undefined(format!(
            "per-patch net benefit non-positive ({den}): precision {precision} is at or below \
             the precision floor"
        )));
    }
    let num = econ.theta_g * econ.delta - (econ.m() / econ.s() - 1.0) * econ.h_g * econ.gamma;
    Ok(econ.cost_l / econ.cost_g * num / den)
}

/// Precision below which one more selected defect costs more in collateral
/// damage than it repairs.
pub fn precision_floor(q: f64, delta: f64, h_l: f64, gamma: f64) -> Result<f64> {
    let harm = h_l * gamma;
    let gain = q * delta;
    if !(harm >= 0.0 && gain >= 0.0) {
        return Err(Error::invalid(format!(
            "repair and harm terms must be >= 0, got q·δ = {gain}, h·γ = {harm}"
        )));
    }
    if harm == 0.0 {
        if gain == 0.0 {
            return Err(Error::Undefined(
                "precision floor undefined when both repair and harm terms vanish".into(),
            ));
        }
        return Ok(0.0);
    }
    Ok(1.0 / (1.0 + gain / harm))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BonPoint {
    pub n: usize,
    pub repair_probability: f64,
    pub normalized_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BonCurve {
    pub points: Vec<BonPoint>,
    /// First `N` whose normalized gain is below that of `N − 1`.
    pub first_decrease: Option<usize>,
}

impl BonCurve {
    /// `N` with the largest normalized gain (earliest on ties).
    pub fn peak(&self) -> usize {
        let mut best = &self.points[0];
        for p in &self.points[1..] {
            if p.normalized_gain > best.normalized_gain {
                best = p;
            }
        }
        best.n
    }
}

/// `1 − (1 − θ₁)^N`.
pub fn bon_repair_probability(theta1: f64, n: usize) -> f64 {
    -((n as f64) * (-theta1).ln_1p()).exp_m1()
}

/// Repair probability and compute-normalized gain of Best-of-N for
/// `N = 1..=n_max`, one global draw costing `econ.cost_g`.
pub fn bon_curve(theta1: f64, econ: &PatchEconomy, n_max: usize) -> Result<BonCurve> {
    econ.validate()?;
    if !(theta1 > 0.0 && theta1 < 1.0) {
        return Err(Error::invalid(format!("theta_g1 must lie in (0, 1), got {theta1}")));
    }
    if n_max == 0 {
        return Err(Error::invalid("n_max must be >= 1"));
    }
    let harm = (econ.m() - econ.s()) * econ.h_g * econ.gamma;
    let points: Vec<BonPoint> = (1..=n_max)
        .map(|n| {
            let th = bon_repair_probability(theta1, n);
            BonPoint {
                n,
                repair_probability: th,
                normalized_gain: (th * econ.s() * econ.delta - harm) / (n as f64 * econ.cost_g),
            }
        })
        .collect();
    let first_decrease = points
        .windows(2)
        .find(|w| w[1].normalized_gain < w[0].normalized_gain)
        .map(|w| w[1].n);
    Ok(BonCurve {
        points,
        first_decrease,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegimeFlags {
    pub dense_defects: bool,
    pub low_precision: bool,
    pub weak_local_repair: bool,
}

impl RegimeFlags {
    pub fn any(&self) -> bool {
        self.dense_defects || self.low_precision || self.weak_local_repair
    }
}

pub const DEFAULT_DENSE_CUT: f64 = 0.5;

/// Flags the conditions under which localized refinement is expected to
/// lose its advantage. `dense_cut` is the defect fraction `s / M` above
/// which defects count as dense.
pub fn classify_regime(econ: &PatchEconomy, stats: &MaskStats, dense_cut: f64) -> Result<RegimeFlags> {
    econ.validate()?;
    stats.validate()?;
    let low_precision = match precision_floor(econ.q, econ.delta, econ.h_l, econ.gamma) {
        Ok(floor) => stats.precision < floor,
        Err(Error::Undefined(_)) => false,
        Err(e) => return Err(e),
    };
    Ok(RegimeFlags {
        dense_defects: econ.s() / econ.m() > dense_cut,
        low_precision,
        weak_local_repair: stats.recall * econ.q < econ.theta_g,
    })
}

/// Sparse-regime shortcut for equal trial costs: drop the false-positive
/// harm and approximate `M/s − 1` by `M/s`, giving
/// `ρq > θ_g − (M/s)·h_g·γ/δ`. Global harm on clean patches counts in
/// favour of the localized procedure.
pub fn sparse_dominance_approx(econ: &PatchEconomy, stats: &MaskStats) -> bool {
    stats.recall * econ.q > econ.theta_g - econ.m() / econ.s() * econ.h_g * econ.gamma / econ.delta
}

/// Every closed-form quantity for one economy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub selection: SelectionStats,
    pub per_trial: TrialGains,
    pub budget: TrialGains,
    pub dominance: Dominance,
    pub required_recall: Option<f64>,
    pub required_recall_note: Option<String>,
    pub net_local_benefit: f64,
    pub precision_floor: Option<f64>,
    pub regime: RegimeFlags,
}

pub fn analyze(econ: &PatchEconomy, stats: &MaskStats, dense_cut: f64) -> Result<Analysis> {
    let (required_recall, required_recall_note) = match required_recall(econ, stats.precision) {
        Ok(r) => (Some(r), None),
        Err(Error::Undefined(m)) => (None, Some(m)),
        Err(e) => return Err(e),
    };
    let precision_floor = match precision_floor(econ.q, econ.delta, econ.h_l, econ.gamma) {
        Ok(p) => Some(p),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Analysis {
        selection: expected_selection_stats(stats, econ.defects)?,
        per_trial: per_trial_gains(econ, stats)?,
        budget: budget_gains(econ, stats)?,
        dominance: dominance_check(econ, stats)?,
        required_recall,
        required_recall_note,
        net_local_benefit: net_local_benefit(econ, stats.precision),
        precision_floor,
        regime: classify_regime(econ, stats, dense_cut)?,
    })
}
