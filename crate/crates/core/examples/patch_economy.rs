//! Closed-form patch economy: gains, dominance, thresholds and regime flags,
//! checked against the Monte Carlo simulator.

use lotts::theory::{analyze, bon_curve, equal_cost_sweep, simulate_patch_economy, MaskStats, PatchEconomy, SimulationConfig};

fn main() -> lotts::Result<()> {
    let econ = PatchEconomy::default();
    let stats = MaskStats::default();
    let a = analyze(&econ, &stats, 0.5)?;
    println!("per trial: global {:.3}, local {:.3}", a.per_trial.global, a.per_trial.local);
    println!("margin {:.3} (local dominates: {})", a.dominance.margin, a.dominance.holds);
    println!("required recall {:?}, precision floor {:?}", a.required_recall, a.precision_floor);
    println!("regime {:?}", a.regime);

    let sim = simulate_patch_economy(&econ, &stats, &SimulationConfig::new(100_000, 1))?;
    let (m, se) = sim.margin(&econ);
    println!(
        "simulated: global {:.3} +/- {:.3}, local {:.3} +/- {:.3}, margin {m:.3} +/- {se:.3}",
        sim.global_gain.mean,
        sim.global_gain.std_err(),
        sim.local_gain.mean,
        sim.local_gain.std_err()
    );

    let curve = bon_curve(0.5, &econ, 20)?;
    println!("Best-of-N normalized gain peaks at N = {}", curve.peak());
    for p in curve.points.iter().take(6) {
        println!("  N={:2} repair {:.4} gain/cost {:.4}", p.n, p.repair_probability, p.normalized_gain);
    }

    let sweep = equal_cost_sweep(10_000, 7)?;
    println!(
        "sparse shortcut agrees with the exact test on {:.1}% of {} sparse economies",
        100.0 * sweep.agreement_rate(),
        sweep.samples
    );
    Ok(())
}
