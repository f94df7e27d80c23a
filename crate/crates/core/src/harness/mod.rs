//! Experiment orchestration: validated JSON configs in, a JSON report plus
//! CSV tables out. Reports embed the resolved config and contain no
//! timestamps or worker counts, so identical configs give identical bytes.

pub mod config;

pub use config::{
    apply_override, load_config, validate_config, ExperimentConfig, ExperimentKind, LoadedConfig,
    MaskKind, MaskSection, MaskgenSection, ResampleSection, ScalingSection, SearchSection,
    TheorySection,
};

use crate::error::{Error, Result};
use crate::mask::{
    mask_gen, mask_gen_with, AttentionBundle, AttentionDocument, DefectMask, MaskDocument,
    PropagationMatrix, QueryDocument,
};
use crate::resample::{localized_resample, Verifier};
use crate::search::{
    dfs_search, one_sided_p, scaling_sweep, Generator, MaskSource, OracleMasks, SearchConfig,
};
use crate::seed::{derive_seed, par_map_indexed, streams, trial_rng};
use crate::stats::Summary;
use crate::testbed::PatchWorld;
use crate::theory::{
    analyze, bon_curve, bon_repair_probability, simulate_bon_repair, simulate_patch_economy,
    SimulationConfig,
};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

/// One generated file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: Value,
    pub files: Vec<OutputFile>,
}

impl RunOutput {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.name == name).map(|f| f.contents.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        for f in &self.files {
            let path = dir.join(&f.name);
            std::fs::write(&path, &f.contents)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn file(name: &str, contents: String) -> OutputFile {
    OutputFile {
        name: name.to_string(),
        contents,
    }
}

fn json_text(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Runs the configured experiment on `workers` threads (0 = all cores).
pub fn run_experiment(loaded: &LoadedConfig, workers: usize) -> Result<RunOutput> {
    let cfg = &loaded.config;
    log::info!("running {} experiment", cfg.experiment.as_str());
    let (results, mut files) = match cfg.experiment {
        ExperimentKind::Theory => run_theory(cfg, workers)?,
        ExperimentKind::Testbed => run_testbed(cfg, workers)?,
        ExperimentKind::Scaling => run_scaling(cfg, workers)?,
        ExperimentKind::Maskgen => run_maskgen(cfg, &loaded.base_dir)?,
    };
    let report = json!({
        "experiment": cfg.experiment,
        "config": cfg,
        "overrides": loaded.overrides,
        "warnings": loaded.warnings,
        "results": results,
    });
    files.insert(0, file("report.json", json_text(&report)));
    Ok(RunOutput { report, files })
}

#[derive(Serialize)]
struct McRow {
    quantity: &'static str,
    closed_form: f64,
    estimate: f64,
    stderr: f64,
    z: Option<f64>,
}

fn mc_row(quantity: &'static str, closed_form: f64, s: &Summary) -> McRow {
    mc_row_raw(quantity, closed_form, s.mean, s.std_err())
}

fn mc_row_raw(quantity: &'static str, closed_form: f64, estimate: f64, stderr: f64) -> McRow {
    let z = if stderr > 0.0 {
        Some((estimate - closed_form) / stderr)
    } else if estimate == closed_form {
        Some(0.0)
    } else {
        None
    };
    McRow {
        quantity,
        closed_form,
        estimate,
        stderr,
        z,
    }
}

type Outcome = (Value, Vec<OutputFile>);

fn run_theory(cfg: &ExperimentConfig, workers: usize) -> Result<Outcome> {
    let econ = &cfg.economy;
    let stats = &cfg.mask_stats;
    let th = &cfg.theory;
    let analysis = analyze(econ, stats, th.dense_cut)?;
    let sim_cfg = SimulationConfig::new(th.simulate_trials, cfg.master_seed)
        .with_workers(workers)
        .with_profile(th.profile);
    let sim = simulate_patch_economy(econ, stats, &sim_cfg)?;
    let (margin, margin_se) = sim.margin(econ);
    let mc = vec![
        mc_row("true_positives", analysis.selection.true_positives, &sim.true_positives),
        mc_row("selected", analysis.selection.selected, &sim.selected),
        mc_row("false_positives", analysis.selection.false_positives, &sim.false_positives),
        mc_row("global_gain", analysis.per_trial.global, &sim.global_gain),
        mc_row("local_gain", analysis.per_trial.local, &sim.local_gain),
        mc_row_raw("margin", analysis.dominance.margin, margin, margin_se),
    ];

    let curve = bon_curve(th.bon_theta1, econ, th.bon_n_max)?;
    let mut bon_mc = Vec::new();
    for &n in &th.bon_mc_n {
        let s = simulate_bon_repair(th.bon_theta1, n, th.bon_mc_trials, cfg.master_seed, workers)?;
        bon_mc.push(json!({
            "n": n,
            "expected": bon_repair_probability(th.bon_theta1, n),
            "estimate": s.mean,
            "stderr": s.std_err(),
        }));
    }
    let results = json!({
        "analysis": analysis,
        "simulation": {
            "trials": th.simulate_trials,
            "clean_selection_probability": sim.clean_selection_probability,
            "comparison": mc,
        },
        "bon": {
            "theta1": th.bon_theta1,
            "peak": curve.peak(),
            "first_decrease": curve.first_decrease,
            "monte_carlo": bon_mc,
        },
    });
    let files = vec![
        file("theory_mc.csv", to_csv(&mc)?),
        file("bon_curve.csv", to_csv(&curve.points)?),
    ];
    Ok((results, files))
}

fn mask_source(cfg: &ExperimentConfig) -> Box<dyn MaskSource> {
    match cfg.masks.source {
        MaskKind::Oracle => Box::new(OracleMasks),
        MaskKind::Synthetic => Box::new(cfg.masks.synthetic()),
    }
}

fn build_world(cfg: &ExperimentConfig) -> Result<PatchWorld> {
    cfg.world.build()
}

#[derive(Serialize)]
struct TestbedRow {
    trial: usize,
    defects: usize,
    selected: usize,
    true_positives: usize,
    anchor_score: f64,
    refined_score: f64,
    improvement: f64,
    search_score: f64,
    search_nfe: u64,
}

fn run_testbed(cfg: &ExperimentConfig, workers: usize) -> Result<Outcome> {
    let world = build_world(cfg)?;
    let generator = Generator::new(&world, cfg.schedule, Some(cfg.defects))?;
    let masks = mask_source(cfg);
    let search = SearchConfig::new(cfg.search.seeds, cfg.search.refinements, cfg.resample)?;
    let rows = par_map_indexed(cfg.trials, workers, |t| -> Result<TestbedRow> {
        let seed = derive_seed(cfg.master_seed, streams::TESTBED, t as u64);
        let predictor = generator.predictor();
        let base = generator.generate(&predictor, &mut trial_rng(seed, streams::BASE, 0))?;
        let mask = masks.mask(&world, &base, &mut trial_rng(seed, streams::MASK, 0))?;
        let mut rng = trial_rng(derive_seed(seed, streams::REFINE, 0), streams::REFINE, 0);
        let anchor_score = world.score(&base.state.x)?;
        let out = localized_resample(&predictor, &base.state, &mask, &cfg.resample, &world, &mut rng)?;
        let found = dfs_search(&generator, masks.as_ref(), &search, seed)?;
        Ok(TestbedRow {
            trial: t,
            defects: base.defects.len(),
            selected: mask.count(),
            true_positives: base.defects.iter().filter(|&&j| mask.is_set(j)).count(),
            anchor_score,
            refined_score: out.score,
            improvement: out.score - anchor_score,
            search_score: found.best.score,
            search_nfe: found.nfe,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let improvement = Summary::from_iter(rows.iter().map(|r| r.improvement));
    let search_gain = Summary::from_iter(rows.iter().map(|r| r.search_score - r.anchor_score));
    let tp: usize = rows.iter().map(|r| r.true_positives).sum();
    let sel: usize = rows.iter().map(|r| r.selected).sum();
    let def: usize = rows.iter().map(|r| r.defects).sum();
    let z = if improvement.std_err() > 0.0 {
        improvement.mean / improvement.std_err()
    } else {
        0.0
    };
    let results = json!({
        "trials": cfg.trials,
        "improvement": {
            "mean": improvement.mean,
            "stderr": improvement.std_err(),
            "z": z,
            "p_value_positive": one_sided_p(z),
        },
        "search_gain": { "mean": search_gain.mean, "stderr": search_gain.std_err() },
        "search_nfe": search.nfe(&cfg.schedule),
        "mask": {
            "precision": if sel > 0 { Some(tp as f64 / sel as f64) } else { None },
            "recall": if def > 0 { Some(tp as f64 / def as f64) } else { None },
            "mean_selected": sel as f64 / cfg.trials as f64,
        },
    });
    Ok((results, vec![file("testbed.csv", to_csv(&rows)?)]))
}

#[derive(Serialize)]
struct ScalingCsvRow {
    method: &'static str,
    #[serde(rename = "N")]
    n: usize,
    nfe: u64,
    mean_score: f64,
    stderr: f64,
    trials: usize,
}

fn run_scaling(cfg: &ExperimentConfig, workers: usize) -> Result<Outcome> {
    let world = build_world(cfg)?;
    let generator = Generator::new(&world, cfg.schedule, Some(cfg.defects))?;
    let masks = mask_source(cfg);
    let report = scaling_sweep(
        &generator,
        masks.as_ref(),
        &cfg.resample,
        &cfg.scaling_config(),
        cfg.master_seed,
        workers,
    )?;
    let rows: Vec<ScalingCsvRow> = report
        .rows
        .iter()
        .map(|r| ScalingCsvRow {
            method: r.method.as_str(),
            n: r.n,
            nfe: r.nfe,
            mean_score: r.mean_score,
            stderr: r.stderr,
            trials: r.trials,
        })
        .collect();
    Ok((json!(report), vec![file("scaling.csv", to_csv(&rows)?)]))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_bundle(section: &MaskgenSection, base: &Path) -> Result<AttentionBundle> {
    if let Some(p) = &section.attention {
        return match AttentionDocument::read(&resolve(base, p))? {
            AttentionDocument::Bundle(b) => b.bundle(),
            AttentionDocument::Raw(_) => Err(Error::invalid(format!(
                "{}: expected a bundle with orig, pos and neg; give raw tensors as \
                 maskgen.orig/pos/neg",
                p.display()
            ))),
        };
    }
    let mut fields = Vec::new();
    for p in [&section.orig, &section.pos, &section.neg].into_iter().flatten() {
        match AttentionDocument::read(&resolve(base, p))? {
            AttentionDocument::Raw(r) => fields.push(r.reduce()?),
            AttentionDocument::Bundle(_) => {
                return Err(Error::invalid(format!("{}: expected a raw tensor document", p.display())))
            }
        }
    }
    let [orig, pos, neg]: [_; 3] = fields
        .try_into()
        .map_err(|_| Error::invalid("maskgen needs orig, pos and neg"))?;
    AttentionBundle::new(orig, pos, neg)
}

fn run_maskgen(cfg: &ExperimentConfig, base: &Path) -> Result<Outcome> {
    let section = &cfg.maskgen;
    let bundle = read_bundle(section, base)?;
    let mask: DefectMask = match &section.queries {
        Some(q) => {
            let path = resolve(base, q);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let doc: QueryDocument = serde_json::from_str(&text)
                .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
            mask_gen(&bundle, &doc.queries()?, section.lambda, section.ratio)?
        }
        None => mask_gen_with(
            &bundle,
            &PropagationMatrix::identity(bundle.grid().len()),
            section.lambda,
            section.ratio,
        )?,
    };
    let results = json!({
        "grid": bundle.grid(),
        "selected": mask.selected(),
        "count": mask.count(),
        "propagation": if section.queries.is_some() { "queries" } else { "identity" },
    });
    Ok((results, vec![file("mask.json", json_text(&MaskDocument::from(&mask)))]))
}
