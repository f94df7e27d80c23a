//! Budget-matched scaling: LoTTS against Best-of-N over a grid of sample
//! counts, with the paired comparison and the compute needed for parity.

use lotts::resample::ResampleConfig;
use lotts::search::{scaling_sweep, Generator, ScalingConfig, SyntheticMasks};
use lotts::testbed::{DefectSpec, NoiseSchedule, WorldSpec};

fn main() -> lotts::Result<()> {
    let world = WorldSpec::default().build()?;
    let schedule = NoiseSchedule::cosine(1.0, 20)?;
    let generator = Generator::new(&world, schedule, Some(DefectSpec { min_count: 0, max_count: 3, magnitude: 2.0 }))?;
    let resample = ResampleConfig::default_for(&schedule)?;
    let cfg = ScalingConfig::default();
    let report = scaling_sweep(&generator, &SyntheticMasks::default(), &resample, &cfg, 2026, 0)?;

    println!("{:<10} {:>3} {:>6} {:>10} {:>8}", "method", "N", "nfe", "mean", "stderr");
    for r in &report.rows {
        println!("{:<10} {:>3} {:>6} {:>10.4} {:>8.4}", r.method.as_str(), r.n, r.nfe, r.mean_score, r.stderr);
    }
    if let Some(c) = &report.comparison {
        println!("paired at N={}: diff {:.4} +/- {:.4}, p = {:.2e}", c.n, c.mean_difference, c.stderr, c.p_value);
    }
    match &report.crossover {
        Some(c) => println!("Best-of-N needs N={} ({} NFE, {:.2}x) to match", c.bon_n, c.bon_nfe, c.nfe_ratio),
        None => println!("Best-of-N does not reach LoTTS on this grid"),
    }
    Ok(())
}
