use super::world::PatchWorld;
use crate::error::Result;

/// Patch-additive verifier `Σ_j w_j · log p_j(x_j)` under the clean target.
pub fn verifier_score(world: &PatchWorld, x: &[f64]) -> Result<f64> {
    let logs = world.patch_log_densities(x)?;
    Ok(logs.iter().zip(world.weights()).map(|(l, w)| w * l).sum())
}
