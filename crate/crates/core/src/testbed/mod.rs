//! Analytic patch-grid diffusion world.
//!
//! Each patch of the latent is an independent isotropic Gaussian mixture, so
//! the score of every noised marginal is available in closed form. On top of
//! that oracle sit the forward process, ancestral and flow-SDE reverse steps,
//! a base sampler, the patch-additive verifier, defect injection and
//! synthetic attention with controllable precision/recall.

mod defects;
mod predictor;
mod sampler;
mod schedule;
mod verifier;
mod world;

pub use defects::{inject_defects, positional_queries, synth_attention, DefectSpec, SynthAttention};
pub use predictor::{NoisePredictor, Prediction, PredictorMode};
pub use sampler::{
    ancestral_coefficients, flow_sde_step, flow_step_with_noise, forward_noise, integrate_reverse,
    reverse_sde_step, reverse_step_to, reverse_step_with_noise, sample_base, sample_flow,
    standard_normal, AncestralCoefficients, LatentState,
};
pub use schedule::{NoiseSchedule, PathKind};
pub use verifier::verifier_score;
pub use world::{Component, FieldEval, Mixture, PatchEval, PatchOverride, PatchWorld, WorldSpec};
