//! Localized test-time scaling for diffusion samplers.
//!
//! The crate is organized around the pieces of a localized refinement loop:
//!
//! - [`mask`]: contrastive attention maps reduced to a binary defect mask.
//! - [`testbed`]: an analytic patch-grid diffusion world whose score is known
//!   in closed form, with samplers, a patch-additive verifier and synthetic
//!   attention generation.
//! - [`resample`]: mask-aware renoising, anchored masked refinement and a
//!   short global integration sweep.
//! - [`search`]: depth-2 DFS over global seeds and local refinements, plus the
//!   Best-of-N baseline and the budget-matched scaling sweep.
//! - [`theory`]: closed-form patch-economy quantities (expected gains,
//!   dominance, recall/precision thresholds, Best-of-N saturation) and the
//!   Monte Carlo simulator that checks them.
//! - [`harness`]: JSON configuration, experiment orchestration and reports.
//!
//! Everything randomized takes an explicit seed or RNG; parallel work is
//! sharded by counter-derived seeds so results do not depend on worker count.

pub mod error;
pub mod harness;
pub mod mask;
pub mod resample;
pub mod search;
pub mod seed;
pub mod stats;
pub mod testbed;
pub mod theory;

pub use error::{Error, Result};
