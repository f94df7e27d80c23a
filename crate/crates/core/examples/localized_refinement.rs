//! Repair a corrupted sample by renoising and resampling only the masked
//! patches, then compare against refining the wrong region.

use lotts::mask::DefectMask;
use lotts::resample::{localized_resample, ResampleConfig, Verifier};
use lotts::search::Generator;
use lotts::seed::trial_rng;
use lotts::stats::Summary;
use lotts::testbed::{DefectSpec, NoiseSchedule, WorldSpec};

fn main() -> lotts::Result<()> {
    let world = WorldSpec::default().build()?;
    let schedule = NoiseSchedule::cosine(1.0, 20)?;
    let generator = Generator::new(&world, schedule, Some(DefectSpec::fixed(2, 2.0)))?;
    let predictor = generator.predictor();
    let cfg = ResampleConfig::default_for(&schedule)?;
    println!("t0 {}, t_g {}, {} NFE per refinement", cfg.t0, cfg.t_g, cfg.nfe());

    let (mut on_target, mut off_target) = (Summary::new(), Summary::new());
    for trial in 0..200 {
        let base = generator.generate(&predictor, &mut trial_rng(5, 0, trial))?;
        let anchor = world.score(&base.state.x)?;
        let mask = DefectMask::from_indices(world.grid(), &base.defects)?;
        let mut rng = trial_rng(5, 1, trial);
        let good = localized_resample(&predictor, &base.state, &mask, &cfg, &world, &mut rng)?;
        let bad = localized_resample(&predictor, &base.state, &mask.complement(), &cfg, &world, &mut rng)?;
        on_target.push(good.score - anchor);
        off_target.push(bad.score - anchor);
    }
    println!(
        "mean score change: defect mask {:+.3} +/- {:.3}, complement {:+.3} +/- {:.3}",
        on_target.mean,
        on_target.std_err(),
        off_target.mean,
        off_target.std_err()
    );
    Ok(())
}
