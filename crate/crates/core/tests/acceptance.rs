//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

use lotts::harness::{run_experiment, validate_config, ExperimentKind};
use lotts::mask::{mask_gen, selection_size, threshold_mask, DefectMask, Grid, QualityMap};
use lotts::resample::{localized_resample, ResampleConfig};
use lotts::search::{scaling_sweep, Generator, ScalingConfig, SyntheticMasks};
use lotts::seed::{derive_seed, par_map_indexed, trial_rng};
use lotts::stats::Summary;
use lotts::testbed::{
    sample_base, standard_normal, synth_attention, Component, DefectSpec, LatentState, Mixture,
    NoisePredictor, NoiseSchedule, PatchWorld, SynthAttention, WorldSpec,
};
use lotts::theory::{
    bon_curve, bon_repair_probability, dominance_check, expected_selection_stats, net_local_benefit,
    per_trial_gains, precision_floor, required_recall, simulate_bon_repair, simulate_patch_economy,
    MaskStats, PatchEconomy, SimulationConfig,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use std::path::Path;
use std::time::Instant;

type Verdict = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within3(s: &Summary, value: f64, what: &str) -> Result<(), String> {
    check(s.within(value, 3.0), || {
        format!("{what}: estimate {} vs {value} (stderr {})", s.mean, s.std_err())
    })
}

fn selection_statistics() -> Verdict {
    let start = Instant::now();
    let mut checked = 0;
    for rho in [0.5, 0.8, 1.0] {
        for pi in [0.5, 0.8, 1.0] {
            for s in [5usize, 10, 50] {
                let econ = PatchEconomy {
                    patches: 100,
                    defects: s,
                    ..PatchEconomy::default()
                };
                let stats = MaskStats::new(rho, pi).map_err(|e| e.to_string())?;
                let seed = derive_seed(1, 0, checked as u64);
                let sim = simulate_patch_economy(&econ, &stats, &SimulationConfig::new(100_000, seed))
                    .map_err(|e| e.to_string())?;
                let e = expected_selection_stats(&stats, s).map_err(|e| e.to_string())?;
                let tag = format!("rho={rho} pi={pi} s={s}");
                within3(&sim.true_positives, e.true_positives, &format!("{tag} E[TP]"))?;
                within3(&sim.selected, e.selected, &format!("{tag} E[|S|]"))?;
                within3(&sim.false_positives, e.false_positives, &format!("{tag} E[FP]"))?;
                checked += 3;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 30.0, || format!("took {secs:.1}s, target < 30s"))?;
    Ok(format!("{checked} expectations within 3 SE at 1e5 trials in {secs:.1}s"))
}

fn random_economy(rng: &mut impl Rng) -> (PatchEconomy, MaskStats) {
    loop {
        let patches = rng.random_range(20..=200usize);
        let econ = PatchEconomy {
            patches,
            defects: rng.random_range(1..=patches / 4),
            delta: rng.random_range(0.1..2.0),
            gamma: rng.random_range(0.1..2.0),
            theta_g: rng.random(),
            q: rng.random(),
            h_g: rng.random_range(0.0..0.3),
            h_l: rng.random_range(0.0..0.3),
            cost_g: rng.random_range(0.5..2.0),
            cost_l: rng.random_range(0.5..2.0),
            budget: 1.0,
        };
        let stats = MaskStats::new(rng.random(), rng.random_range(0.2..=1.0)).expect("valid");
        let fp = stats.recall * econ.defects as f64 * (1.0 / stats.precision - 1.0);
        if fp <= (econ.patches - econ.defects) as f64 {
            return (econ, stats);
        }
    }
}

fn per_trial_gains_match() -> Verdict {
    let mut cases = vec![(PatchEconomy::default(), MaskStats::new(0.8, 0.8).expect("valid"))];
    let mut rng = trial_rng(2, 0, 0);
    cases.extend((0..20).map(|_| random_economy(&mut rng)));
    for (i, (econ, stats)) in cases.iter().enumerate() {
        let g = per_trial_gains(econ, stats).map_err(|e| e.to_string())?;
        if i == 0 {
            check((g.global - 0.5).abs() < 1e-12 && (g.local - 3.9).abs() < 1e-12, || {
                format!("worked economy gains {:?}", g)
            })?;
        }
        let sim = simulate_patch_economy(econ, stats, &SimulationConfig::new(100_000, derive_seed(2, 1, i as u64)))
            .map_err(|e| e.to_string())?;
        within3(&sim.global_gain, g.global, &format!("economy {i} global gain"))?;
        within3(&sim.local_gain, g.local, &format!("economy {i} local gain"))?;
    }
    Ok(format!("worked economy (0.5, 3.9) and 20 random economies within 3 SE"))
}

fn thresholds() -> Verdict {
    let mut rng = trial_rng(3, 0, 0);
    let mut flips = 0;
    while flips < 500 {
        let (mut econ, stats) = random_economy(&mut rng);
        econ.h_g = rng.random_range(0.0..0.05);
        let Ok(rho) = required_recall(&econ, stats.precision) else {
            continue;
        };
        if !(rho > 1e-6 && rho * (1.0 + 1e-6) <= 1.0) {
            continue;
        }
        let above = MaskStats::new(rho * (1.0 + 1e-6), stats.precision).expect("valid");
        let below = MaskStats::new(rho * (1.0 - 1e-6), stats.precision).expect("valid");
        let hi = dominance_check(&econ, &above).map_err(|e| e.to_string())?;
        let lo = dominance_check(&econ, &below).map_err(|e| e.to_string())?;
        check(hi.holds && !lo.holds, || format!("no flip at rho* = {rho} for {econ:?}"))?;
        flips += 1;
    }
    let floor = precision_floor(0.5, 1.0, 0.1, 0.5).map_err(|e| e.to_string())?;
    check((floor - 1.0 / 11.0).abs() < 1e-15, || format!("precision floor {floor}"))?;
    Ok(format!("{flips} economies flip at rho*(1 +/- 1e-6); precision floor = 1/11"))
}

fn bon_saturation() -> Verdict {
    let econ = PatchEconomy::default();
    let thetas = [0.01, 0.05, 0.2, 0.5, 0.9];
    for &th in &thetas {
        let c = bon_curve(th, &econ, 200).map_err(|e| e.to_string())?;
        for w in c.points.windows(3) {
            let d1 = w[1].repair_probability - w[0].repair_probability;
            let d2 = w[2].repair_probability - w[1].repair_probability;
            check(d1 >= 0.0 && d2 <= d1 + 1e-15, || format!("theta1={th}: not concave at N={}", w[1].n))?;
        }
        for n in 1..200 {
            let a = (1.0 - th).powi(n as i32 - 1) * th;
            let b = (1.0 - th).powi(n as i32) * th;
            check(b < a && b > 0.0 || b == 0.0 && a >= b, || format!("theta1={th}: increment at N={n}"))?;
        }
        let peak = c.peak();
        for w in c.points.windows(2).filter(|w| w[0].n >= peak) {
            check(w[1].normalized_gain <= w[0].normalized_gain + 1e-12, || {
                format!("theta1={th}: normalized gain rises after peak {peak} at N={}", w[1].n)
            })?;
        }
    }
    let mut mc = 0;
    for &th in &[0.1, 0.5] {
        for n in [1usize, 2, 5, 10, 20] {
            let s = simulate_bon_repair(th, n, 100_000, 4, 0).map_err(|e| e.to_string())?;
            within3(&s, bon_repair_probability(th, n), &format!("theta1={th} N={n} repair frequency"))?;
            mc += 1;
        }
    }
    Ok(format!("{} curves concave to N=200, gain non-increasing past peak, {mc} MC frequencies within 3 SE", thetas.len()))
}

fn failure_regimes() -> Verdict {
    let dense = PatchEconomy {
        patches: 50,
        defects: 50,
        theta_g: 0.4,
        q: 0.4,
        h_g: 0.2,
        h_l: 0.2,
        ..PatchEconomy::default()
    };
    let perfect = MaskStats::new(1.0, 1.0).expect("valid");
    let d = dominance_check(&dense, &perfect).map_err(|e| e.to_string())?;
    check(d.margin <= 0.0, || format!("dense margin {}", d.margin))?;
    let sim = simulate_patch_economy(&dense, &perfect, &SimulationConfig::new(100_000, 5))
        .map_err(|e| e.to_string())?;
    let (m, se) = sim.margin(&dense);
    check(m <= 3.0 * se, || format!("dense simulated margin {m} (stderr {se})"))?;

    let low = PatchEconomy {
        patches: 1000,
        defects: 10,
        q: 0.5,
        delta: 1.0,
        h_l: 0.5,
        gamma: 1.0,
        ..PatchEconomy::default()
    };
    let floor = precision_floor(low.q, low.delta, low.h_l, low.gamma).map_err(|e| e.to_string())?;
    let stats = MaskStats::new(1.0, 0.4 * floor).expect("valid");
    let net = net_local_benefit(&low, stats.precision);
    check(net < 0.0, || format!("net benefit {net} at precision {}", stats.precision))?;
    let sim = simulate_patch_economy(&low, &stats, &SimulationConfig::new(100_000, 6))
        .map_err(|e| e.to_string())?;
    let expected = low.defects as f64 * net;
    within3(&sim.local_gain, expected, "low-precision local gain")?;
    check(sim.local_gain.mean + 3.0 * sim.local_gain.std_err() < 0.0, || {
        format!("low-precision local gain {} not significantly negative", sim.local_gain.mean)
    })?;
    Ok(format!(
        "dense margin {:.3} (sim {m:.4} +/- {se:.4}); low precision net benefit {net:.3}, sim gain {:.3}",
        d.margin, sim.local_gain.mean
    ))
}

fn score_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = trial_rng(6, 0, 0);
    let mut worst: f64 = 0.0;
    for probe in 0..100 {
        let d = rng.random_range(1..=4usize);
        let comps = rng.random_range(1..=3usize);
        let mut w: Vec<f64> = (0..comps).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let components = w
            .iter()
            .map(|&weight| Component {
                weight,
                mean: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                variance: rng.random_range(0.1..1.0),
            })
            .collect();
        let world = PatchWorld::homogeneous(
            Grid::new(1, 2).expect("grid"),
            Mixture::new(components).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let t: f64 = rng.random_range(0.05..0.95);
        let schedule = NoiseSchedule::cosine(1.0, 10).expect("schedule");
        let (a, s) = (schedule.alpha(t), schedule.sigma(t));
        let x: Vec<f64> = standard_normal(&mut rng, 2 * d).iter().map(|z| 1.5 * z).collect();
        let score = world.score_at(&x, a, s).map_err(|e| e.to_string())?;
        let h = 1e-5;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (world.log_density_at(&xp, a, s).map_err(|e| e.to_string())?
                - world.log_density_at(&xm, a, s).map_err(|e| e.to_string())?)
                / (2.0 * h);
            let rel = (fd - score[i]).abs() / score[i].abs().max(1.0);
            worst = worst.max(rel);
            check(rel < 1e-5, || format!("probe {probe} coord {i}: score {} vs fd {fd}", score[i]))?;
        }
    }

    let mean = [0.7, -0.3];
    let world = PatchWorld::homogeneous(
        Grid::new(1, 1).expect("grid"),
        Mixture::gaussian(mean.to_vec(), 0.5).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let schedule = NoiseSchedule::cosine(1.0, 50).expect("schedule");
    let samples = par_map_indexed(10_000, 0, |i| {
        let p = NoisePredictor::new(&world, schedule);
        sample_base(&p, &mut trial_rng(66, 0, i as u64)).map(|s| s.x)
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    for (k, &m) in mean.iter().enumerate() {
        let s = Summary::from_iter(samples.iter().map(|x| x[k]));
        within3(&s, m, &format!("reverse SDE mean coordinate {k}"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, || format!("took {secs:.1}s, target < 60s"))?;
    Ok(format!("max relative score error {worst:.2e} over 100 probes; 1e4-trajectory mean within 3 SE; {secs:.1}s"))
}

fn locality() -> Verdict {
    let mut rng = trial_rng(7, 0, 0);
    for inst in 0..100 {
        let grid = Grid::new(rng.random_range(1..=6), rng.random_range(1..=6)).expect("grid");
        let d = rng.random_range(1..=3usize);
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let world = PatchWorld::homogeneous(
            grid,
            Mixture::gaussian(mean, rng.random_range(0.1..1.0)).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let steps = rng.random_range(4..=30usize);
        let schedule = NoiseSchedule::cosine(1.0, steps).expect("schedule");
        let anchor = LatentState::clean(standard_normal(&mut rng, world.dim())).map_err(|e| e.to_string())?;
        let bits: Vec<bool> = (0..grid.len()).map(|_| rng.random_bool(0.4)).collect();
        let mask = DefectMask::from_bits(grid, 0.4, bits).map_err(|e| e.to_string())?;
        let t0 = rng.random_range(0.1..=1.0);
        let cfg = ResampleConfig::new(t0, 0.0, rng.random_range(1..=12), 0).map_err(|e| e.to_string())?;
        let p = NoisePredictor::new(&world, schedule);
        let out = localized_resample(&p, &anchor, &mask, &cfg, &world, &mut rng).map_err(|e| e.to_string())?;
        for j in (0..grid.len()).filter(|&j| !mask.is_set(j)) {
            let (a, b) = (world.patch(&anchor.x, j), world.patch(&out.state.x, j));
            check(a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits()), || {
                format!("instance {inst}: unmasked patch {j} changed")
            })?;
        }
    }
    Ok("unmasked patches bit-identical to the anchor on 100 instances".into())
}

fn mask_pipeline() -> Verdict {
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (1usize..=12, 1usize..=12, 0.01f64..0.99, any::<bool>(), proptest::collection::vec(-3.0f64..3.0, 144));
    runner
        .run(&strategy, |(rows, cols, r, ties, vals)| {
            let grid = Grid::new(rows, cols).expect("grid");
            let s = grid.len();
            let values = if ties { vec![vals[0]; s] } else { vals[..s].to_vec() };
            let m = threshold_mask(&QualityMap::new(grid, values).expect("map"), r).expect("mask");
            let want = (r * s as f64 - 1e-9).ceil().clamp(1.0, s as f64) as usize;
            prop_assert_eq!(m.count(), want);
            prop_assert_eq!(m.count(), selection_size(r, s));
            Ok(())
        })
        .map_err(|e| format!("cardinality property: {e}"))?;

    let params = SynthAttention {
        noise_sd: 0.0,
        ..SynthAttention::default()
    };
    let mut rng = trial_rng(8, 0, 0);
    let mut shapes = 0;
    for rows in 1..=64usize {
        for cols in 1..=64 / rows {
            let s = rows * cols;
            if s < 2 {
                continue;
            }
            let grid = Grid::new(rows, cols).expect("grid");
            shapes += 1;
            for _ in 0..3 {
                let k = rng.random_range(1..s);
                let mut set = rand::seq::index::sample(&mut rng, s, k).into_vec();
                set.sort_unstable();
                let (bundle, q) = synth_attention(grid, &set, &params, &mut rng).map_err(|e| e.to_string())?;
                let m = mask_gen(&bundle, &q, 0.5, k as f64 / s as f64).map_err(|e| e.to_string())?;
                check(m.selected() == set, || format!("{rows}x{cols}: planted {set:?}, got {:?}", m.selected()))?;
            }
        }
    }
    Ok(format!("10000 random maps hit ceil(rS) exactly; planted sets recovered on {shapes} grid shapes with S <= 64"))
}

fn scaling_world() -> (PatchWorld, NoiseSchedule, DefectSpec, SyntheticMasks) {
    let world = WorldSpec::default().build().expect("world");
    let schedule = NoiseSchedule::cosine(1.0, 20).expect("schedule");
    let defects = DefectSpec {
        min_count: 0,
        max_count: 3,
        magnitude: 2.0,
    };
    (world, schedule, defects, SyntheticMasks::default())
}

fn directional_scaling() -> Verdict {
    let (world, schedule, defects, masks) = scaling_world();
    let generator = Generator::new(&world, schedule, Some(defects)).map_err(|e| e.to_string())?;
    let resample = ResampleConfig::default_for(&schedule).map_err(|e| e.to_string())?;
    let cfg = ScalingConfig {
        trials: 200,
        ..ScalingConfig::default()
    };
    let report = scaling_sweep(&generator, &masks, &resample, &cfg, 2026, 0).map_err(|e| e.to_string())?;
    let cmp = report.comparison.ok_or("no paired comparison at N = 9")?;
    check(cmp.n == 9 && cmp.mean_difference >= 0.0 && cmp.p_value < 0.05, || {
        format!("LoTTS(9) - BoN(9) = {} (stderr {}, p = {})", cmp.mean_difference, cmp.stderr, cmp.p_value)
    })?;
    let cross = report.crossover.ok_or("Best-of-N never reaches LoTTS(9) on the grid")?;
    check(cross.bon_n > 9, || format!("parity already at N' = {}", cross.bon_n))?;
    Ok(format!(
        "LoTTS(9) - BoN(9) = {:.4} +/- {:.4} (p = {:.2e}); parity at N' = {} ({} vs {} NFE, ratio {:.2})",
        cmp.mean_difference, cmp.stderr, cmp.p_value, cross.bon_n, cross.bon_nfe, cross.lotts_nfe, cross.nfe_ratio
    ))
}

fn determinism() -> Verdict {
    let configs = [
        (ExperimentKind::Theory, r#"{"master_seed": 7}"#),
        (ExperimentKind::Testbed, r#"{"master_seed": 1, "trials": 64}"#),
        (ExperimentKind::Scaling, r#"{"master_seed": 2026, "trials": 200}"#),
    ];
    for (kind, raw) in configs {
        let loaded = validate_config(raw, Some(kind), &[], Path::new(".")).map_err(|e| e.to_string())?;
        let mut bodies = Vec::new();
        for workers in [1, 4, 8] {
            let out = run_experiment(&loaded, workers).map_err(|e| e.to_string())?;
            let again = run_experiment(&loaded, workers).map_err(|e| e.to_string())?;
            check(out.files == again.files, || format!("{}: repeat differs at {workers} workers", kind.as_str()))?;
            bodies.push(out.files);
        }
        check(bodies.windows(2).all(|w| w[0] == w[1]), || {
            format!("{}: outputs differ across worker counts", kind.as_str())
        })?;
    }
    Ok("theory, testbed and scaling outputs byte-identical on repeat and at 1, 4, 8 workers".into())
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("selection statistics match Monte Carlo", selection_statistics),
        ("per-trial gains are tight", per_trial_gains_match),
        ("threshold exactness", thresholds),
        ("Best-of-N saturation", bon_saturation),
        ("failure regimes", failure_regimes),
        ("score oracle and reverse sampler", score_oracle),
        ("locality of localized resampling", locality),
        ("mask pipeline", mask_pipeline),
        ("directional scaling", directional_scaling),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = run();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {:>2} PASS [{secs:6.1}s] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL [{secs:6.1}s] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
