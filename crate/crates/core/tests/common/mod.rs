#![allow(dead_code)]

use flatopt::clbench::{make_gaussian_stream, GaussianSpec, TaskStream};
use flatopt::numcore::{Batch, Mlp, Objective, ParamVector, Rng};
use flatopt::optim::{builtin, OptimizerConfig, StepOutput, TurboState};

/// 4-class, 4-feature single-task stream.
pub fn small_stream(seed: u64) -> TaskStream {
    let spec = GaussianSpec {
        dim: 4,
        classes: 4,
        initial: 4,
        increment: 0,
        samples_per_class: 40,
        ..Default::default()
    };
    make_gaussian_stream(&spec, seed).unwrap()
}

/// 20 classes in 10 tasks of 2, 8 features.
pub fn ten_task_stream(seed: u64) -> TaskStream {
    let spec = GaussianSpec {
        samples_per_class: 100,
        ..Default::default()
    };
    make_gaussian_stream(&spec, seed).unwrap()
}

/// `n` minibatches of 8 rows drawn with replacement from the stream's
/// first task.
pub fn batches(stream: &TaskStream, n: usize, seed: u64) -> Vec<Batch> {
    let train = &stream.tasks[0].train;
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            let idx: Vec<usize> = (0..8).map(|_| rng.below(train.len())).collect();
            train.select(&idx).unwrap()
        })
        .collect()
}

pub fn mlp() -> Mlp {
    Mlp::new(&[4, 16, 4]).unwrap()
}

pub fn init(obj: &dyn Objective, seed: u64) -> ParamVector {
    obj.init_params(&mut Rng::new(seed))
}

/// Runs the registered strategy for `cfg.mode` over `batches`, returning
/// every step's output.
pub fn run_steps(
    obj: &dyn Objective,
    theta: &ParamVector,
    batches: &[Batch],
    cfg: &OptimizerConfig,
) -> Vec<StepOutput> {
    let opt = builtin().for_config(cfg).unwrap();
    let mut state = TurboState::new(cfg);
    let mut theta = theta.clone();
    let mut out = Vec::with_capacity(batches.len());
    for b in batches {
        let step = opt.step(obj, &theta, b, cfg, &mut state).unwrap();
        theta = step.theta.clone();
        out.push(step);
    }
    out
}

pub fn bits(v: &ParamVector) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

pub fn trajectory_bits(steps: &[StepOutput]) -> Vec<Vec<u64>> {
    steps.iter().map(|s| bits(&s.theta)).collect()
}
