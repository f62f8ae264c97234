//! Batch latent-edit transfer.
//!
//! One example edit `w₀ → w'₀` is turned into an edit direction Δ* fitted
//! for global consistency, then transferred to any number of test latents.
//! Each latent `w_i` moves along `n = Δ*/‖Δ*‖` by its own strength
//! `α_i = (t − w_i)·n`, so every edited latent lands on the hyperplane
//! through the shared target state `t`.
//!
//! The modules map onto the pipeline:
//!
//! * [`geometry`]: latents, directions, hyperplanes and the closed-form α.
//! * [`generator`] and [`raster`]: the toy latent → attribute feature map and
//!   its glyph renderer.
//! * [`solver`]: produces example edits by descending toward attribute targets.
//! * [`direction`]: fits Δ* with AdamW ([`adamw`]).
//! * [`session`]: the batch-editing state machine and its file format.
//! * [`evaluation`]: linearity (R²) and spread-collapse reports.

pub mod adamw;
pub mod direction;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod geometry;
pub mod linalg;
pub mod raster;
pub mod session;
pub mod solver;

pub use direction::{fit_direction, DirectionFitConfig, FitReport};
pub use error::{Error, Result};
pub use generator::{features, init_generator, sample_latents, GeneratorParams, GeneratorSpec};
pub use geometry::{
    apply_edit, batch_alphas, compute_alpha, hyperplane_through, normalize, signed_distance, AlphaAssignment,
    EditDirection, EditPair, Hyperplane, LatentCode,
};
pub use session::Session;
pub use solver::{solve_edit, AttributeGoal, EditTarget, SolverConfig};
