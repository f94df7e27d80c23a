//! Draw samples from the analytic patch world, corrupt a few patches and
//! read the per-patch verifier.

use lotts::seed::trial_rng;
use lotts::testbed::{sample_base, verifier_score, DefectSpec, NoisePredictor, NoiseSchedule, WorldSpec};

fn main() -> lotts::Result<()> {
    let world = WorldSpec::default().build()?;
    let schedule = NoiseSchedule::cosine(1.0, 50)?;
    let predictor = NoisePredictor::new(&world, schedule);
    let mut rng = trial_rng(3, 0, 0);

    println!("grid {:?}, patch dim {}", world.grid(), world.patch_dim());
    let clean = sample_base(&predictor, &mut rng)?;
    println!("clean sample score {:.3}", verifier_score(&world, &clean.x)?);

    let spec = DefectSpec::fixed(3, 2.0);
    let (corrupted, defects) = spec.apply(&world, clean.clone(), &mut rng)?;
    println!("corrupted patches {defects:?}, score {:.3}", verifier_score(&world, &corrupted.x)?);

    let before = world.patch_log_densities(&clean.x)?;
    let after = world.patch_log_densities(&corrupted.x)?;
    for &j in &defects {
        println!("  patch {j:2}: log density {:8.3} -> {:8.3}", before[j], after[j]);
    }
    let untouched = (0..world.num_patches())
        .filter(|j| !defects.contains(j))
        .all(|j| before[j] == after[j]);
    println!("other patches unchanged: {untouched}");
    Ok(())
}
