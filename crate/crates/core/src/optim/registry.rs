//! Name-keyed registry of optimizer strategies.
//!
//! Every optimizer is a [`Optimizer`] trait object registered under its mode
//! name. Harness code looks strategies up by name (from config files or the
//! command line) and never matches on [`Mode`] itself.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::numcore::{Batch, Objective, ParamVector};

use super::config::{Mode, OptimizerConfig};
use super::state::{StepOutput, TurboState};
use super::steps;

pub trait Optimizer: Send + Sync {
    fn mode(&self) -> Mode;

    fn name(&self) -> &'static str {
        self.mode().name()
    }

    fn step(
        &self,
        obj: &dyn Objective,
        theta: &ParamVector,
        batch: &Batch,
        cfg: &OptimizerConfig,
        state: &mut TurboState,
    ) -> Result<StepOutput>;
}

type StepFn = fn(
    &dyn Objective,
    &ParamVector,
    &Batch,
    &OptimizerConfig,
    &mut TurboState,
) -> Result<StepOutput>;

/// Adapts one of the step functions in [`steps`] to the trait.
struct Builtin {
    mode: Mode,
    step: StepFn,
}

impl Optimizer for Builtin {
    fn mode(&self) -> Mode {
        self.mode
    }

    fn step(
        &self,
        obj: &dyn Objective,
        theta: &ParamVector,
        batch: &Batch,
        cfg: &OptimizerConfig,
        state: &mut TurboState,
    ) -> Result<StepOutput> {
        (self.step)(obj, theta, batch, cfg, state)
    }
}

#[derive(Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, Arc<dyn Optimizer>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Registry::empty();
        let table: [(Mode, StepFn); 5] = [
            (Mode::Sgd, steps::sgd_step),
            (Mode::Sam, steps::sam_step),
            (Mode::LookSam, steps::looksam_step),
            (Mode::CFlat, steps::cflat_step),
            (Mode::Turbo, steps::turbo_step),
        ];
        for (mode, step) in table {
            r.register(Arc::new(Builtin { mode, step }));
        }
        r
    }

    /// Registers `opt` under its name, replacing any previous entry.
    pub fn register(&mut self, opt: Arc<dyn Optimizer>) {
        self.entries.insert(opt.name().to_string(), opt);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Optimizer>> {
        self.entries
            .get(&name.to_ascii_lowercase())
            .cloned()
            .ok_or_else(|| Error::UnknownOptimizer(name.to_string()))
    }

    /// Strategy selected by `cfg.mode`.
    pub fn for_config(&self, cfg: &OptimizerConfig) -> Result<Arc<dyn Optimizer>> {
        self.get(cfg.mode.name())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// The process-wide registry of built-in optimizers.
pub fn builtin() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(Registry::with_builtins)
}
