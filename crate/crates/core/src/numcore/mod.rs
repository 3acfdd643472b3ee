//! Vector algebra, seeded randomness and differentiable objectives.

mod batch;
mod objective;
mod rng;
mod vector;

pub use batch::Batch;
pub use objective::{finite_diff_gradient, Classifier, Mlp, Objective, Quadratic, SoftmaxLinear};
pub use rng::{Rng, DEFAULT_SEED};
pub use vector::{axpy, dot, l2_norm, ParamVector, DEGENERATE_NORM};
