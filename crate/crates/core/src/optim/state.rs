use crate::numcore::ParamVector;

use super::config::OptimizerConfig;
use super::ema::EmaState;
use super::primitives::scheduled_k;

/// Per-run optimizer state. One owner per training run.
#[derive(Clone, Debug)]
pub struct TurboState {
    pub cached_gvs: Option<ParamVector>,
    pub cached_gvf: Option<ParamVector>,
    pub ema: EmaState,
    /// Step index within the current task, starting at 0.
    pub iter_in_task: u64,
    pub task_index: u32,
    /// Current turbo step k_t, always ≥ 1.
    pub current_k: u32,
    /// Objective-gradient evaluations performed so far.
    pub eval_counter: u64,
}

impl TurboState {
    pub fn new(cfg: &OptimizerConfig) -> Self {
        let mut s = TurboState {
            cached_gvs: None,
            cached_gvf: None,
            ema: EmaState::default(),
            iter_in_task: 0,
            task_index: 0,
            current_k: cfg.k0.max(1),
            eval_counter: 0,
        };
        s.begin_task(0, cfg);
        s
    }

    /// Resets per-task state. Cached directions belong to the previous
    /// task's landscape and are dropped; the EMA restarts from its initial
    /// values; the turbo step follows the schedule.
    pub fn begin_task(&mut self, task: u32, cfg: &OptimizerConfig) {
        self.task_index = task;
        self.iter_in_task = 0;
        self.cached_gvs = None;
        self.cached_gvf = None;
        self.ema = EmaState::default();
        self.refresh_k(cfg);
    }

    pub(crate) fn refresh_k(&mut self, cfg: &OptimizerConfig) {
        self.current_k = if cfg.scheduler {
            scheduled_k(cfg.k0, cfg.sched_slope, self.task_index, cfg.num_tasks)
        } else {
            cfg.k0.max(1)
        };
    }

    /// Whether the current step refreshes cached directions.
    pub fn is_cache_step(&self) -> bool {
        self.iter_in_task.is_multiple_of(self.current_k as u64)
    }
}

/// How a regularization term was obtained on a given step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Branch {
    /// Not applied (mode does not use it, or its trigger did not fire).
    #[default]
    Off,
    /// Evaluated from perturbed gradients.
    Computed,
    /// Reconstructed from a cached direction.
    Simulated,
}

/// Everything one step computed. Members are `None` when the step did not
/// produce them.
#[derive(Clone, Debug, Default)]
pub struct GradientBundle {
    pub g: Option<ParamVector>,
    pub g_s: Option<ParamVector>,
    pub g_0: Option<ParamVector>,
    pub g_1: Option<ParamVector>,
    pub g_f: Option<ParamVector>,
    /// Direction-invariant sharpness component, set when freshly cached.
    pub g_vs: Option<ParamVector>,
    /// Direction-invariant flatness component, set when freshly cached.
    pub g_vf: Option<ParamVector>,
    /// On surrogate sharpness steps, the increment `g_s − g` as constructed.
    pub sharp_increment: Option<ParamVector>,
    /// On surrogate flatness steps, the increment `g_f − g₀` as constructed.
    pub flat_increment: Option<ParamVector>,
    pub sharp: Branch,
    pub flat: Branch,
    pub triggered_s: bool,
    pub triggered_f: bool,
    /// Final update direction ḡ.
    pub direction: ParamVector,
    /// Gradient evaluations spent on this step.
    pub evals: u32,
}

impl GradientBundle {
    pub fn cached(&self) -> bool {
        self.sharp == Branch::Computed || self.flat == Branch::Computed
    }

    /// `‖g_s − g‖` whichever way g_s was obtained.
    pub fn sharp_increment_norm(&self) -> Option<f64> {
        if let Some(inc) = &self.sharp_increment {
            return Some(inc.l2_norm());
        }
        match (&self.g_s, &self.g) {
            (Some(gs), Some(g)) => gs.distance(g).ok(),
            _ => None,
        }
    }
}

/// Result of one optimizer step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub theta: ParamVector,
    pub bundle: GradientBundle,
}
