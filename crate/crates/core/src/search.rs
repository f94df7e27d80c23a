//! Verifier-guided search: the depth-two tree of `S` base samples each
//! expanded into `K` localized refinements, the Best-of-N baseline and the
//! budget sweep comparing the two.

use crate::error::{Error, Result};
use crate::mask::{mask_gen, DefectMask};
use crate::resample::{localized_resample, ResampleConfig, Verifier};
use crate::seed::{derive_seed, par_map_indexed, streams, trial_rng, TrialRng};
use crate::stats::Summary;
use crate::testbed::{
    sample_base, synth_attention, DefectSpec, LatentState, NoisePredictor, NoiseSchedule,
    PatchWorld, SynthAttention,
};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Where a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lineage {
    Base { seed: usize },
    Refined { seed: usize, refinement: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub state: LatentState,
    pub score: f64,
    pub lineage: Lineage,
    /// Evaluations spent producing this candidate from its parent.
    pub nfe_cost: u64,
}

/// A base sample together with the patches the generator corrupted.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseSample {
    pub state: LatentState,
    pub defects: Vec<usize>,
}

/// Base sampler over an analytic world, optionally corrupting each sample
/// with injected defects.
#[derive(Debug, Clone, Copy)]
pub struct Generator<'w> {
    world: &'w PatchWorld,
    schedule: NoiseSchedule,
    defects: Option<DefectSpec>,
}

impl<'w> Generator<'w> {
    pub fn new(world: &'w PatchWorld, schedule: NoiseSchedule, defects: Option<DefectSpec>) -> Result<Self> {
        schedule.validate()?;
        if let Some(d) = &defects {
            d.validate(world.num_patches())?;
        }
        Ok(Self {
            world,
            schedule,
            defects,
        })
    }

    pub fn world(&self) -> &'w PatchWorld {
        self.world
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn predictor(&self) -> NoisePredictor<'w> {
        NoisePredictor::new(self.world, self.schedule)
    }

    pub fn generate(&self, predictor: &NoisePredictor<'_>, rng: &mut TrialRng) -> Result<BaseSample> {
        let clean = sample_base(predictor, rng)?;
        match &self.defects {
            None => Ok(BaseSample {
                state: clean,
                defects: Vec::new(),
            }),
            Some(spec) => {
                let (state, defects) = spec.apply(self.world, clean, rng)?;
                Ok(BaseSample { state, defects })
            }
        }
    }
}

/// Produces the refinement mask for a base sample.
pub trait MaskSource: Sync {
    fn mask(&self, world: &PatchWorld, base: &BaseSample, rng: &mut TrialRng) -> Result<DefectMask>;
}

/// Selects exactly the injected defects.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleMasks;

impl MaskSource for OracleMasks {
    fn mask(&self, world: &PatchWorld, base: &BaseSample, _: &mut TrialRng) -> Result<DefectMask> {
        DefectMask::from_indices(world.grid(), &base.defects)
    }
}

/// Runs the attention pipeline on synthetic attention maps of the base
/// sample's defects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticMasks {
    pub attention: SynthAttention,
    pub lambda: f64,
    pub ratio: f64,
}

impl Default for SyntheticMasks {
    fn default() -> Self {
        Self {
            attention: SynthAttention::default(),
            lambda: 0.5,
            ratio: 0.5,
        }
    }
}

impl MaskSource for SyntheticMasks {
    fn mask(&self, world: &PatchWorld, base: &BaseSample, rng: &mut TrialRng) -> Result<DefectMask> {
        let (bundle, queries) = synth_attention(world.grid(), &base.defects, &self.attention, rng)?;
        mask_gen(&bundle, &queries, self.lambda, self.ratio)
    }
}

impl MaskSource for DefectMask {
    fn mask(&self, world: &PatchWorld, _: &BaseSample, _: &mut TrialRng) -> Result<DefectMask> {
        if self.grid() != world.grid() {
            let (a, b) = (self.grid(), world.grid());
            return Err(Error::GridMismatch((a.rows, a.cols), (b.rows, b.cols)));
        }
        Ok(self.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub seeds: usize,
    pub refinements: usize,
    pub resample: ResampleConfig,
}

impl SearchConfig {
    pub fn new(seeds: usize, refinements: usize, resample: ResampleConfig) -> Result<Self> {
        let c = Self {
            seeds,
            refinements,
            resample,
        };
        if seeds == 0 {
            return Err(Error::invalid("seeds must be >= 1"));
        }
        Ok(c)
    }

    /// Three base samples with two refinements each.
    pub fn default_for(schedule: &NoiseSchedule) -> Result<Self> {
        Self::new(3, 2, ResampleConfig::default_for(schedule)?)
    }

    pub fn candidates(&self) -> usize {
        self.seeds * (self.refinements + 1)
    }

    /// `S·N + S·K·(n_refine + n_integrate)`.
    pub fn nfe(&self, schedule: &NoiseSchedule) -> u64 {
        let s = self.seeds as u64;
        s * schedule.steps as u64 + s * self.refinements as u64 * self.resample.nfe()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: Candidate,
    /// Scores in evaluation order.
    pub evaluated: Vec<(Lineage, f64)>,
    pub nfe: u64,
}

struct Tracker {
    best: Option<Candidate>,
    evaluated: Vec<(Lineage, f64)>,
    nfe: u64,
}

impl Tracker {
    fn new() -> Self {
        Self {
            best: None,
            evaluated: Vec::new(),
            nfe: 0,
        }
    }

    fn offer(&mut self, c: Candidate) {
        self.evaluated.push((c.lineage, c.score));
        self.nfe += c.nfe_cost;
        if self.best.as_ref().is_none_or(|b| c.score > b.score) {
            self.best = Some(c);
        }
    }

    fn finish(self) -> SearchOutcome {
        SearchOutcome {
            best: self.best.expect("at least one candidate"),
            evaluated: self.evaluated,
            nfe: self.nfe,
        }
    }
}

fn base_candidate(
    generator: &Generator<'_>,
    predictor: &NoisePredictor<'_>,
    seed: u64,
    i: usize,
) -> Result<(BaseSample, Candidate)> {
    let before = predictor.nfe();
    let base = generator.generate(predictor, &mut trial_rng(seed, streams::BASE, i as u64))?;
    let cand = Candidate {
        score: generator.world().score(&base.state.x)?,
        state: base.state.clone(),
        lineage: Lineage::Base { seed: i },
        nfe_cost: predictor.nfe() - before,
    };
    Ok((base, cand))
}

/// Depth-two search: every base sample is scored, masked and refined `K`
/// times; the best of all `S·(K+1)` candidates is returned, ties going to the
/// earliest in seed-major, refinement-minor order. Base sample `i` uses the
/// same stream as in [`best_of_n`] under the same `seed`.
pub fn dfs_search<M: MaskSource + ?Sized>(
    generator: &Generator<'_>,
    masks: &M,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<SearchOutcome> {
    if cfg.seeds == 0 {
        return Err(Error::invalid("seeds must be >= 1"));
    }
    cfg.resample.validate(generator.schedule())?;
    let world = generator.world();
    let predictor = generator.predictor();
    let mut tracker = Tracker::new();
    for i in 0..cfg.seeds {
        let (base, cand) = base_candidate(generator, &predictor, seed, i)?;
        tracker.offer(cand);
        if cfg.refinements == 0 {
            continue;
        }
        let mask = masks.mask(world, &base, &mut trial_rng(seed, streams::MASK, i as u64))?;
        let refine_key = derive_seed(seed, streams::REFINE, i as u64);
        for k in 0..cfg.refinements {
            let mut rng = trial_rng(refine_key, streams::REFINE, k as u64);
            let out = localized_resample(&predictor, &base.state, &mask, &cfg.resample, world, &mut rng)?;
            tracker.offer(Candidate {
                state: out.state,
                score: out.score,
                lineage: Lineage::Refined { seed: i, refinement: k },
                nfe_cost: out.nfe,
            });
        }
    }
    Ok(tracker.finish())
}

/// Best of `n` independent base samples.
pub fn best_of_n(generator: &Generator<'_>, n: usize, seed: u64) -> Result<SearchOutcome> {
    if n == 0 {
        return Err(Error::invalid("N must be >= 1"));
    }
    let predictor = generator.predictor();
    let mut tracker = Tracker::new();
    for i in 0..n {
        tracker.offer(base_candidate(generator, &predictor, seed, i)?.1);
    }
    Ok(tracker.finish())
}

/// Splits a total candidate count into `(S, K)`: `N = 1` is a single plain
/// sample, otherwise `N` must be a multiple of `K + 1`.
pub fn lotts_split(n: usize, refinements: usize) -> Result<(usize, usize)> {
    match n {
        0 => Err(Error::invalid("N must be >= 1")),
        1 => Ok((1, 0)),
        _ if n % (refinements + 1) == 0 => Ok((n / (refinements + 1), refinements)),
        _ => Err(Error::invalid(format!(
            "N = {n} is not 1 or a multiple of K + 1 = {}",
            refinements + 1
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub lotts_grid: Vec<usize>,
    pub bon_grid: Vec<usize>,
    pub refinements: usize,
    pub trials: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            lotts_grid: vec![1, 3, 6, 9],
            bon_grid: vec![1, 3, 6, 9, 12, 16, 20, 25, 30, 36],
            refinements: 2,
            trials: 200,
        }
    }
}

impl ScalingConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.trials == 0 {
            v.push(("trials", "must be >= 1".to_string()));
        }
        if self.lotts_grid.is_empty() {
            v.push(("lotts_grid", "must not be empty".to_string()));
        }
        for &n in &self.lotts_grid {
            if let Err(e) = lotts_split(n, self.refinements) {
                v.push(("lotts_grid", e.to_string()));
            }
        }
        if self.bon_grid.is_empty() || self.bon_grid.contains(&0) {
            v.push(("bon_grid", "must be non-empty with entries >= 1".to_string()));
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lotts,
    BestOfN,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Lotts => "lotts",
            Method::BestOfN => "best_of_n",
        }
    }
}

/// One row of the scaling table; `nfe` is the per-trial cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub method: Method,
    pub n: usize,
    pub nfe: u64,
    pub mean_score: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Paired comparison of LoTTS and Best-of-N at the same `N` over shared
/// base seeds, with a one-sided normal test of `LoTTS > BoN`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedComparison {
    pub n: usize,
    pub mean_difference: f64,
    pub stderr: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Smallest Best-of-N whose mean reaches the reference LoTTS mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossover {
    pub lotts_n: usize,
    pub lotts_nfe: u64,
    pub bon_n: usize,
    pub bon_nfe: u64,
    pub nfe_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub comparison: Option<PairedComparison>,
    pub crossover: Option<Crossover>,
}

pub fn one_sided_p(z: f64) -> f64 {
    let n = Normal::standard();
    if z.is_nan() {
        return f64::NAN;
    }
    1.0 - n.cdf(z)
}

/// Runs LoTTS over `cfg.lotts_grid` and Best-of-N over `cfg.bon_grid` on
/// `cfg.trials` trials. Trial `t` draws every base sample from the seed
/// `derive_seed(seed, SCALING, t)`, so both methods see the same bases.
/// The reference `N` is the largest LoTTS grid entry.
pub fn scaling_sweep<M: MaskSource + ?Sized>(
    generator: &Generator<'_>,
    masks: &M,
    resample: &ResampleConfig,
    cfg: &ScalingConfig,
    seed: u64,
    workers: usize,
) -> Result<ScalingReport> {
    if let Some((f, m)) = cfg.violations().into_iter().next() {
        return Err(Error::invalid(format!("{f}: {m}")));
    }
    resample.validate(generator.schedule())?;
    let searches: Vec<SearchConfig> = cfg
        .lotts_grid
        .iter()
        .map(|&n| {
            let (s, k) = lotts_split(n, cfg.refinements)?;
            SearchConfig::new(s, k, *resample)
        })
        .collect::<Result<_>>()?;
    let bon_max = *cfg.bon_grid.iter().max().expect("non-empty");
    let per_trial = par_map_indexed(cfg.trials, workers, |t| -> Result<(Vec<f64>, Vec<f64>)> {
        let trial_seed = derive_seed(seed, streams::SCALING, t as u64);
        let lotts = searches
            .iter()
            .map(|c| dfs_search(generator, masks, c, trial_seed).map(|o| o.best.score))
            .collect::<Result<Vec<_>>>()?;
        let bases = best_of_n(generator, bon_max, trial_seed)?;
        let mut prefix = Vec::with_capacity(bon_max);
        let mut best = f64::NEG_INFINITY;
        for (_, s) in &bases.evaluated {
            best = best.max(*s);
            prefix.push(best);
        }
        let bon = cfg.bon_grid.iter().map(|&n| prefix[n - 1]).collect();
        Ok((lotts, bon))
    });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;

    let steps = generator.schedule().steps as u64;
    let mut rows = Vec::new();
    let mut lotts_means = Vec::new();
    for (j, (&n, c)) in cfg.lotts_grid.iter().zip(&searches).enumerate() {
        let s = Summary::from_iter(per_trial.iter().map(|(l, _)| l[j]));
        lotts_means.push(s.mean);
        rows.push(ScalingRow {
            method: Method::Lotts,
            n,
            nfe: c.nfe(generator.schedule()),
            mean_score: s.mean,
            stderr: s.std_err(),
            trials: cfg.trials,
        });
    }
    let mut bon_means = Vec::new();
    for (j, &n) in cfg.bon_grid.iter().enumerate() {
        let s = Summary::from_iter(per_trial.iter().map(|(_, b)| b[j]));
        bon_means.push(s.mean);
        rows.push(ScalingRow {
            method: Method::BestOfN,
            n,
            nfe: n as u64 * steps,
            mean_score: s.mean,
            stderr: s.std_err(),
            trials: cfg.trials,
        });
    }

    let (ref_j, &ref_n) = cfg
        .lotts_grid
        .iter()
        .enumerate()
        .max_by_key(|(_, &n)| n)
        .expect("non-empty");
    let comparison = cfg.bon_grid.iter().position(|&n| n == ref_n).map(|b| {
        let d = Summary::from_iter(per_trial.iter().map(|(l, bo)| l[ref_j] - bo[b]));
        let se = d.std_err();
        let z = if se > 0.0 {
            d.mean / se
        } else if d.mean > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        PairedComparison {
            n: ref_n,
            mean_difference: d.mean,
            stderr: se,
            z,
            p_value: one_sided_p(z),
        }
    });
    let lotts_nfe = searches[ref_j].nfe(generator.schedule());
    let mut order: Vec<usize> = (0..cfg.bon_grid.len()).collect();
    order.sort_by_key(|&b| cfg.bon_grid[b]);
    let crossover = order
        .into_iter()
        .find(|&b| bon_means[b] >= lotts_means[ref_j])
        .map(|b| Crossover {
            lotts_n: ref_n,
            lotts_nfe,
            bon_n: cfg.bon_grid[b],
            bon_nfe: cfg.bon_grid[b] as u64 * steps,
            nfe_ratio: (cfg.bon_grid[b] as u64 * steps) as f64 / lotts_nfe as f64,
        });
    Ok(ScalingReport {
        rows,
        comparison,
        crossover,
    })
}

#[cfg(test)]
mod tests;
