//! Experiment configuration: defaults, dotted overrides and validation that
//! reports every problem with its JSON path.

use crate::error::{Error, Result};
use crate::resample::ResampleConfig;
use crate::search::{ScalingConfig, SyntheticMasks};
use crate::testbed::{DefectSpec, NoiseSchedule, PathKind, SynthAttention, WorldSpec};
use crate::theory::{GainProfile, MaskStats, PatchEconomy, DEFAULT_DENSE_CUT};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Theory,
    Testbed,
    Scaling,
    Maskgen,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Theory => "theory",
            ExperimentKind::Testbed => "testbed",
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::Maskgen => "maskgen",
        }
    }
}

/// Refinement schedule; absent values are derived from the noise schedule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResampleSection {
    pub t0: Option<f64>,
    pub t_g: Option<f64>,
    pub n_refine: Option<usize>,
    pub n_integrate: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub seeds: usize,
    pub refinements: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            seeds: 3,
            refinements: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Oracle,
    #[default]
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSection {
    pub source: MaskKind,
    pub attention: SynthAttention,
    pub lambda: f64,
    pub ratio: f64,
}

impl Default for MaskSection {
    fn default() -> Self {
        let s = SyntheticMasks::default();
        Self {
            source: MaskKind::default(),
            attention: s.attention,
            lambda: s.lambda,
            ratio: s.ratio,
        }
    }
}

impl MaskSection {
    pub fn synthetic(&self) -> SyntheticMasks {
        SyntheticMasks {
            attention: self.attention,
            lambda: self.lambda,
            ratio: self.ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSection {
    pub lotts_grid: Vec<usize>,
    pub bon_grid: Vec<usize>,
}

impl Default for ScalingSection {
    fn default() -> Self {
        let d = ScalingConfig::default();
        Self {
            lotts_grid: d.lotts_grid,
            bon_grid: d.bon_grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheorySection {
    pub simulate_trials: u64,
    pub profile: GainProfile,
    pub dense_cut: f64,
    pub bon_theta1: f64,
    pub bon_n_max: usize,
    pub bon_mc_n: Vec<usize>,
    pub bon_mc_trials: u64,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            simulate_trials: 100_000,
            profile: GainProfile::Constant,
            dense_cut: DEFAULT_DENSE_CUT,
            bon_theta1: 0.5,
            bon_n_max: 50,
            bon_mc_n: vec![1, 2, 5, 10],
            bon_mc_trials: 100_000,
        }
    }
}

/// Inputs of the standalone mask pipeline. Either `attention` (a pre-reduced
/// bundle) or all of `orig`, `pos`, `neg` (raw tensors) must be given;
/// relative paths resolve against the config file. Without `queries` the
/// quality signals are not propagated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskgenSection {
    pub attention: Option<PathBuf>,
    pub orig: Option<PathBuf>,
    pub pos: Option<PathBuf>,
    pub neg: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub lambda: f64,
    pub ratio: f64,
}

impl Default for MaskgenSection {
    fn default() -> Self {
        Self {
            attention: None,
            orig: None,
            pos: None,
            neg: None,
            queries: None,
            lambda: 0.5,
            ratio: 0.5,
        }
    }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub master_seed: u64,
    pub trials: usize,
    pub world: WorldSpec,
    pub schedule: NoiseSchedule,
    pub resample: ResampleConfig,
    pub search: SearchSection,
    pub defects: DefectSpec,
    pub masks: MaskSection,
    pub scaling: ScalingSection,
    pub economy: PatchEconomy,
    pub mask_stats: MaskStats,
    pub theory: TheorySection,
    pub maskgen: MaskgenSection,
}

impl ExperimentConfig {
    pub fn scaling_config(&self) -> ScalingConfig {
        ScalingConfig {
            lotts_grid: self.scaling.lotts_grid.clone(),
            bon_grid: self.scaling.bon_grid.clone(),
            refinements: self.search.refinements,
            trials: self.trials,
        }
    }
}

/// Validated config plus what was changed on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// `key=value` overrides in the order applied.
    pub overrides: Vec<String>,
    pub warnings: Vec<String>,
    /// Directory relative input paths resolve against.
    pub base_dir: PathBuf,
}

const SECTIONS: &[&str] = &[
    "experiment",
    "master_seed",
    "trials",
    "world",
    "schedule",
    "resample",
    "search",
    "defects",
    "masks",
    "scaling",
    "economy",
    "mask_stats",
    "theory",
    "maskgen",
];

fn default_sections() -> Value {
    let schedule = NoiseSchedule {
        horizon: 1.0,
        steps: 20,
        kind: PathKind::Cosine,
    };
    serde_json::json!({
        "master_seed": 0,
        "trials": 200,
        "world": WorldSpec::default(),
        "schedule": schedule,
        "resample": ResampleSection::default(),
        "search": SearchSection::default(),
        "defects": DefectSpec { min_count: 0, max_count: 3, magnitude: 2.0 },
        "masks": MaskSection::default(),
        "scaling": ScalingSection::default(),
        "economy": PatchEconomy::default(),
        "mask_stats": MaskStats::default(),
        "theory": TheorySection::default(),
        "maskgen": MaskgenSection::default(),
    })
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Sets `path` (dot separated, numeric segments index arrays) to `value`,
/// parsed as JSON when possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(vec![format!("--set {assignment}: expected key=value")]))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = root;
    for seg in path.split('.') {
        if seg.is_empty() {
            return Err(Error::Config(vec![format!("--set {assignment}: empty key segment")]));
        }
        slot = match slot {
            Value::Array(items) => {
                let i: usize = seg.parse().map_err(|_| {
                    Error::Config(vec![format!("{path}: `{seg}` is not an array index")])
                })?;
                items.get_mut(i).ok_or_else(|| {
                    Error::Config(vec![format!("{path}: index {i} out of range")])
                })?
            }
            Value::Object(map) => map.entry(seg).or_insert_with(|| Value::Object(Map::new())),
            other => {
                *other = Value::Object(Map::new());
                other.as_object_mut().expect("object").entry(seg).or_insert(Value::Null)
            }
        };
    }
    *slot = value;
    Ok(())
}

struct Issues(Vec<String>);

impl Issues {
    fn push(&mut self, path: impl AsRef<str>, msg: impl std::fmt::Display) {
        self.0.push(format!("{}: {msg}", path.as_ref()));
    }

    fn section<T: DeserializeOwned>(&mut self, root: &Value, key: &str) -> Option<T> {
        let v = root.get(key).cloned().unwrap_or(Value::Null);
        match serde_path_to_error::deserialize::<_, T>(v) {
            Ok(t) => Some(t),
            Err(e) => {
                let inner = e.path().to_string();
                let path = if inner == "." || inner.is_empty() {
                    key.to_string()
                } else {
                    format!("{key}.{inner}")
                };
                self.push(path, e.into_inner());
                None
            }
        }
    }
}

/// Parses, defaults, overrides and validates a raw JSON config. `kind`,
/// when given, fills in a missing `experiment` key and must agree with a
/// present one.
pub fn validate_config(
    raw: &str,
    kind: Option<ExperimentKind>,
    overrides: &[String],
    base_dir: &Path,
) -> Result<LoadedConfig> {
    let user: Value = serde_json::from_str(raw)
        .map_err(|e| Error::Config(vec![format!("config is not valid JSON: {e}")]))?;
    let Value::Object(user_map) = &user else {
        return Err(Error::Config(vec!["config must be a JSON object".into()]));
    };
    let mut issues = Issues(Vec::new());
    let mut root = default_sections();
    merge(&mut root, user.clone());
    if let Some(k) = kind {
        match root.get("experiment") {
            None => {
                root["experiment"] = serde_json::to_value(k).expect("serializable");
            }
            Some(v) if *v == serde_json::to_value(k).expect("serializable") => {}
            Some(v) => issues.push("experiment", format!("config says {v} but {} was requested", k.as_str())),
        }
    }
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    for k in root.as_object().expect("object").keys() {
        if !SECTIONS.contains(&k.as_str()) {
            issues.push(k, "unknown key");
        }
    }
    let mut warnings = Vec::new();
    let seed_given = user_map.contains_key("master_seed")
        || overrides.iter().any(|o| o.split_once('=').is_some_and(|(k, _)| k == "master_seed"));
    if !seed_given {
        warnings.push("master_seed missing; defaulting to 0".to_string());
    }

    let experiment = match root.get("experiment") {
        None => {
            issues.push("experiment", "missing; expected one of theory, testbed, scaling, maskgen");
            None
        }
        Some(_) => issues.section::<ExperimentKind>(&root, "experiment"),
    };
    let master_seed = issues.section::<u64>(&root, "master_seed");
    let trials = issues.section::<usize>(&root, "trials");
    let world = issues.section::<WorldSpec>(&root, "world");
    let schedule = issues.section::<NoiseSchedule>(&root, "schedule");
    let resample = issues.section::<ResampleSection>(&root, "resample");
    let search = issues.section::<SearchSection>(&root, "search");
    let defects = issues.section::<DefectSpec>(&root, "defects");
    let masks = issues.section::<MaskSection>(&root, "masks");
    let scaling = issues.section::<ScalingSection>(&root, "scaling");
    let economy = issues.section::<PatchEconomy>(&root, "economy");
    let mask_stats = issues.section::<MaskStats>(&root, "mask_stats");
    let theory = issues.section::<TheorySection>(&root, "theory");
    let maskgen = issues.section::<MaskgenSection>(&root, "maskgen");

    if trials == Some(0) {
        issues.push("trials", "must be >= 1");
    }
    let world_built = world.as_ref().and_then(|w| match w.build() {
        Ok(b) => Some(b),
        Err(e) => {
            issues.push("world", e);
            None
        }
    });
    if let Some(s) = &schedule {
        if let Err(e) = s.validate() {
            issues.push("schedule", e);
        }
    }
    let resolved = match (&schedule, &resample) {
        (Some(s), Some(r)) if s.validate().is_ok() => resolve_resample(s, r, &mut issues),
        _ => None,
    };
    if let Some(s) = &search {
        if s.seeds == 0 {
            issues.push("search.seeds", "must be >= 1");
        }
    }
    if let (Some(d), Some(w)) = (&defects, &world_built) {
        if let Err(e) = d.validate(w.num_patches()) {
            issues.push("defects", e);
        }
    }
    if let Some(m) = &masks {
        check_mask_params(&mut issues, "masks", m.lambda, m.ratio);
        if let Err(e) = m.attention.validate() {
            issues.push("masks", e);
        }
    }
    if let (Some(sc), Some(se), Some(t)) = (&scaling, &search, trials) {
        let full = ScalingConfig {
            lotts_grid: sc.lotts_grid.clone(),
            bon_grid: sc.bon_grid.clone(),
            refinements: se.refinements,
            trials: t.max(1),
        };
        for (f, m) in full.violations() {
            issues.push(format!("scaling.{f}"), m);
        }
    }
    if let Some(e) = &economy {
        for (f, m) in e.violations() {
            issues.push(format!("economy.{f}"), m);
        }
    }
    if let Some(m) = &mask_stats {
        if !(0.0..=1.0).contains(&m.recall) {
            issues.push("mask_stats.recall", format!("must lie in [0, 1], got {}", m.recall));
        }
        if m.precision == 0.0 {
            issues.push(
                "mask_stats.precision",
                "precision 0 is the excluded degenerate case: the expected selection \
                 statistics divide by precision",
            );
        } else if !(m.precision > 0.0 && m.precision <= 1.0) {
            issues.push("mask_stats.precision", format!("must lie in (0, 1], got {}", m.precision));
        }
    }
    if let Some(t) = &theory {
        check_theory(&mut issues, t);
    }
    if let Some(m) = &maskgen {
        check_mask_params(&mut issues, "maskgen", m.lambda, m.ratio);
        if experiment == Some(ExperimentKind::Maskgen) {
            let raw = [&m.orig, &m.pos, &m.neg];
            let n_raw = raw.iter().filter(|p| p.is_some()).count();
            match (&m.attention, n_raw) {
                (Some(_), 0) | (None, 3) => {}
                (None, 0) => issues.push(
                    "maskgen.attention",
                    "required: a bundle document, or orig, pos and neg tensor documents",
                ),
                (Some(_), _) => issues.push("maskgen", "give either attention or orig/pos/neg, not both"),
                (None, _) => issues.push("maskgen", "orig, pos and neg must all be given"),
            }
        }
    }

    if !issues.0.is_empty() {
        return Err(Error::Config(issues.0));
    }
    let config = ExperimentConfig {
        experiment: experiment.expect("validated"),
        master_seed: master_seed.expect("validated"),
        trials: trials.expect("validated"),
        world: world.expect("validated"),
        schedule: schedule.expect("validated"),
        resample: resolved.expect("validated"),
        search: search.expect("validated"),
        defects: defects.expect("validated"),
        masks: masks.expect("validated"),
        scaling: scaling.expect("validated"),
        economy: economy.expect("validated"),
        mask_stats: mask_stats.expect("validated"),
        theory: theory.expect("validated"),
        maskgen: maskgen.expect("validated"),
    };
    Ok(LoadedConfig {
        config,
        overrides: overrides.to_vec(),
        warnings,
        base_dir: base_dir.to_path_buf(),
    })
}

/// Reads and validates a config file.
pub fn load_config(path: &Path, kind: Option<ExperimentKind>, overrides: &[String]) -> Result<LoadedConfig> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    validate_config(&raw, kind, overrides, &dir)
}

fn resolve_resample(s: &NoiseSchedule, r: &ResampleSection, issues: &mut Issues) -> Option<ResampleConfig> {
    let before = issues.0.len();
    let t0 = r.t0.unwrap_or(0.5 * s.horizon);
    let t_g = r.t_g.unwrap_or(0.1 * t0);
    if !(t0 > 0.0 && t0 <= s.horizon) {
        issues.push("resample.t0", format!("must lie in (0, {}], got {t0}", s.horizon));
    }
    if !(t_g >= 0.0) {
        issues.push("resample.t_g", format!("must be >= 0, got {t_g}"));
    } else if t_g >= t0 {
        issues.push("resample.t_g", format!("must be below t0 = {t0}, got {t_g}"));
    }
    if r.n_refine == Some(0) {
        issues.push("resample.n_refine", "must be >= 1");
    }
    if let Some(n) = r.n_integrate {
        if (n > 0) != (t_g > 0.0) {
            issues.push("resample.n_integrate", "must be positive exactly when t_g > 0");
        }
    }
    if issues.0.len() > before {
        return None;
    }
    let matched = match ResampleConfig::matched(s, t0, t_g) {
        Ok(m) => m,
        Err(e) => {
            issues.push("resample", e);
            return None;
        }
    };
    Some(ResampleConfig {
        n_refine: r.n_refine.unwrap_or(matched.n_refine),
        n_integrate: r.n_integrate.unwrap_or(matched.n_integrate),
        ..matched
    })
}

fn check_mask_params(issues: &mut Issues, section: &str, lambda: f64, ratio: f64) {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        issues.push(format!("{section}.lambda"), format!("must be finite and >= 0, got {lambda}"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        issues.push(format!("{section}.ratio"), format!("must lie in (0, 1), got {ratio}"));
    }
}

fn check_theory(issues: &mut Issues, t: &TheorySection) {
    if t.simulate_trials == 0 {
        issues.push("theory.simulate_trials", "must be >= 1");
    }
    if let Err(e) = t.profile.validate() {
        issues.push("theory.profile", e);
    }
    if !(0.0..=1.0).contains(&t.dense_cut) {
        issues.push("theory.dense_cut", format!("must lie in [0, 1], got {}", t.dense_cut));
    }
    if !(t.bon_theta1 > 0.0 && t.bon_theta1 < 1.0) {
        issues.push("theory.bon_theta1", format!("must lie in (0, 1), got {}", t.bon_theta1));
    }
    if t.bon_n_max == 0 {
        issues.push("theory.bon_n_max", "must be >= 1");
    }
    if t.bon_mc_n.contains(&0) {
        issues.push("theory.bon_mc_n", "entries must be >= 1");
    }
    if t.bon_mc_trials == 0 {
        issues.push("theory.bon_mc_trials", "must be >= 1");
    }
}
