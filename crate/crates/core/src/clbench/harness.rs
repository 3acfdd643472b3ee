//! Sequential training over a task stream and accuracy bookkeeping.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{StepContext, TraceBuffer, TraceConfig};
use crate::error::{Error, Result};
use crate::numcore::{Batch, Classifier, Objective, ParamVector, Rng, DEFAULT_SEED};
use crate::optim::{builtin, Optimizer, OptimizerConfig, TurboState};

use super::replay::ReplayBuffer;
use super::stream::{Task, TaskStream};

const SHUFFLE_TAG: u64 = 10;
const INIT_TAG: u64 = 11;

/// Training protocol shared by every optimizer in a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Protocol {
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
    /// Replay exemplars kept per class (0 disables replay).
    pub replay_per_class: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            epochs: 20,
            batch_size: 32,
            seed: DEFAULT_SEED,
            replay_per_class: 20,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// One optimizer step as seen by the harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StepEvent {
    pub step: u64,
    pub task: u32,
    pub epoch: u32,
    pub k: u32,
    pub triggered_s: bool,
    pub triggered_f: bool,
    pub cached: bool,
    pub evals: u32,
}

/// Step log plus running digests of the data order and θ trajectory.
pub struct Recorder {
    pub events: Vec<StepEvent>,
    pub trace: Option<TraceBuffer>,
    step: u64,
    batches: Sha256,
    trajectory: Sha256,
}

impl Recorder {
    pub fn new(trace: Option<TraceBuffer>) -> Self {
        Recorder {
            events: Vec::new(),
            trace,
            step: 0,
            batches: Sha256::new(),
            trajectory: Sha256::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn hex(h: &Sha256) -> String {
        h.clone().finalize()[..16]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn batch_digest(&self) -> String {
        Self::hex(&self.batches)
    }

    pub fn trajectory_digest(&self) -> String {
        Self::hex(&self.trajectory)
    }
}

fn classifier(obj: &dyn Objective) -> Result<&dyn Classifier> {
    obj.as_classifier()
        .ok_or_else(|| Error::NotAClassifier(obj.name().to_string()))
}

/// Trains on one task: `epochs` passes over the shuffled union of the
/// task's training rows and the replay exemplars, `⌈rows/batch_size⌉`
/// steps per pass. The replay buffer absorbs the task afterwards.
#[allow(clippy::too_many_arguments)]
pub fn train_task(
    obj: &dyn Objective,
    opt: &dyn Optimizer,
    theta: ParamVector,
    task_index: u32,
    task: &Task,
    replay: &mut ReplayBuffer,
    cfg: &OptimizerConfig,
    state: &mut TurboState,
    protocol: &Protocol,
    rec: &mut Recorder,
) -> Result<ParamVector> {
    protocol.validate()?;
    state.begin_task(task_index, cfg);

    let pool = match replay.as_batch()? {
        Some(old) => Batch::concat([&task.train, &old])?,
        None => task.train.clone(),
    };
    let mut theta = theta;
    for epoch in 0..protocol.epochs {
        let mut order: Vec<usize> = (0..pool.len()).collect();
        Rng::derive(
            protocol.seed,
            &[SHUFFLE_TAG, task_index as u64, epoch as u64],
        )
        .shuffle(&mut order);
        for chunk in order.chunks(protocol.batch_size) {
            let batch = pool.select(chunk)?;
            rec.batches.update(batch.fingerprint().as_bytes());

            let k = state.current_k;
            let out = opt.step(obj, &theta, &batch, cfg, state)?;
            theta = out.theta;
            for v in theta.iter() {
                rec.trajectory.update(v.to_bits().to_le_bytes());
            }
            let b = &out.bundle;
            rec.events.push(StepEvent {
                step: rec.step,
                task: task_index,
                epoch,
                k,
                triggered_s: b.triggered_s,
                triggered_f: b.triggered_f,
                cached: b.cached(),
                evals: b.evals,
            });
            if let Some(trace) = rec.trace.as_mut() {
                trace.record_step(
                    b,
                    StepContext {
                        step: rec.step,
                        task: task_index,
                        epoch,
                    },
                )?;
            }
            rec.step += 1;
        }
    }
    replay.update(&task.train);
    Ok(theta)
}

/// Accuracy on each seen task's test rows plus the pooled accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub per_task: Vec<f64>,
    pub overall: f64,
}

/// Argmax classification over the classes of tasks `0..=upto`.
pub fn evaluate(
    obj: &dyn Objective,
    theta: &ParamVector,
    stream: &TaskStream,
    upto: usize,
) -> Result<Evaluation> {
    let clf = classifier(obj)?;
    let seen = stream.seen_classes(upto);
    let mut per_task = Vec::with_capacity(upto + 1);
    let (mut hits, mut total) = (0usize, 0usize);
    for task in &stream.tasks[..=upto] {
        let mut task_hits = 0;
        for i in 0..task.test.len() {
            let logits = clf.logits(theta, task.test.row(i))?;
            let mut best = seen[0];
            for &c in &seen[1..] {
                if logits[c] > logits[best] {
                    best = c;
                }
            }
            task_hits += (best == task.test.label(i)) as usize;
        }
        per_task.push(task_hits as f64 / task.test.len() as f64);
        hits += task_hits;
        total += task.test.len();
    }
    Ok(Evaluation {
        per_task,
        overall: hits as f64 / total as f64,
    })
}

/// Deterministic outcome of a run. Wall-clock time lives in [`RunReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetrics {
    /// `accuracy[after][eval]`: accuracy on task `eval` once task `after`
    /// is learned. Row `after` has `after + 1` entries.
    pub accuracy: Vec<Vec<f64>>,
    /// Pooled accuracy on all seen classes after each stage.
    pub stage_accuracy: Vec<f64>,
    /// Mean of `stage_accuracy`.
    pub avg_acc: f64,
    /// Last entry of `stage_accuracy`.
    pub last_acc: f64,
    pub eval_count: u64,
    pub steps: u64,
    pub events: Vec<StepEvent>,
    pub batch_digest: String,
    pub trajectory_digest: String,
}

impl RunMetrics {
    pub fn evals_per_step(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.eval_count as f64 / self.steps as f64
        }
    }
}

pub struct RunReport {
    pub metrics: RunMetrics,
    pub theta: ParamVector,
    pub trace: Option<TraceBuffer>,
    pub wall_seconds: f64,
}

impl RunReport {
    pub fn steps_per_second(&self) -> f64 {
        self.metrics.steps as f64 / self.wall_seconds.max(1e-9)
    }
}

/// Full sequential run with the built-in strategy named by `cfg.mode`.
pub fn run_experiment(
    obj: &dyn Objective,
    stream: &TaskStream,
    cfg: &OptimizerConfig,
    protocol: &Protocol,
    trace: Option<TraceConfig>,
) -> Result<RunReport> {
    let opt = builtin().for_config(cfg)?;
    run_with_optimizer(obj, opt.as_ref(), stream, cfg, protocol, trace)
}

/// Full sequential run with an explicit strategy. The scheduler's task
/// count N is taken from the stream.
pub fn run_with_optimizer(
    obj: &dyn Objective,
    opt: &dyn Optimizer,
    stream: &TaskStream,
    cfg: &OptimizerConfig,
    protocol: &Protocol,
    trace: Option<TraceConfig>,
) -> Result<RunReport> {
    protocol.validate()?;
    let mut cfg = cfg.clone();
    cfg.num_tasks = stream.len().max(1) as u32;
    cfg.validate()?;
    let clf = classifier(obj)?;
    if clf.input_dim() != stream.features {
        return Err(Error::DimensionMismatch {
            expected: clf.input_dim(),
            found: stream.features,
        });
    }
    if clf.num_classes() < stream.total_classes {
        return Err(Error::invalid(
            "model",
            format!(
                "{} outputs cannot cover {} classes",
                clf.num_classes(),
                stream.total_classes
            ),
        ));
    }

    let started = Instant::now();
    let mut theta = obj.init_params(&mut Rng::derive(protocol.seed, &[INIT_TAG]));
    let mut state = TurboState::new(&cfg);
    let mut replay = ReplayBuffer::new(protocol.replay_per_class);
    let mut rec = Recorder::new(trace.map(TraceBuffer::new).transpose()?);
    let mut accuracy = Vec::with_capacity(stream.len());
    let mut stage_accuracy = Vec::with_capacity(stream.len());

    for (t, task) in stream.tasks.iter().enumerate() {
        theta = train_task(
            obj,
            opt,
            theta,
            t as u32,
            task,
            &mut replay,
            &cfg,
            &mut state,
            protocol,
            &mut rec,
        )?;
        let eval = evaluate(obj, &theta, stream, t)?;
        accuracy.push(eval.per_task);
        stage_accuracy.push(eval.overall);
    }

    let avg_acc = stage_accuracy.iter().sum::<f64>() / stage_accuracy.len().max(1) as f64;
    let last_acc = stage_accuracy.last().copied().unwrap_or(0.0);
    let metrics = RunMetrics {
        accuracy,
        stage_accuracy,
        avg_acc,
        last_acc,
        eval_count: state.eval_counter,
        steps: rec.steps(),
        batch_digest: rec.batch_digest(),
        trajectory_digest: rec.trajectory_digest(),
        events: rec.events,
    };
    Ok(RunReport {
        metrics,
        theta,
        trace: rec.trace,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
