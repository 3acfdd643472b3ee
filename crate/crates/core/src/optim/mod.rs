//! The optimizer family: SGD, SAM, LookSAM-style reuse, C-Flat and
//! C-Flat Turbo, as step functions behind a common [`Optimizer`] trait.

mod config;
mod ema;
mod primitives;
pub mod registry;
mod state;
mod steps;

pub use config::{Mode, OptimizerConfig};
pub use ema::{ema_update, trigger, EmaState, Gate, INITIAL_SIGMA};
pub use primitives::{
    eval_gradient, flatness_from_proxy, flatness_gradient, orthogonal_component,
    perturbed_gradient, proxy_point, sam_gradient, sam_perturbation, scheduled_k,
    simulate_flatness, simulate_sharpness, surrogate_increment,
};
pub use registry::{builtin, Optimizer, Registry};
pub use state::{Branch, GradientBundle, StepOutput, TurboState};
pub use steps::{cflat_step, looksam_step, sam_step, sgd_step, turbo_step};
