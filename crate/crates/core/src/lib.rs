pub mod clbench;
pub mod diagnostics;
pub mod error;
pub mod numcore;
pub mod optim;

pub use error::{Error, Result};
