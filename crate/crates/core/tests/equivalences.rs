//! Modes that collapse onto one another must produce bit-identical
//! trajectories.

mod common;

use common::*;
use flatopt::clbench::{run_experiment, Protocol};
use flatopt::diagnostics::TraceConfig;
use flatopt::numcore::SoftmaxLinear;
use flatopt::optim::{Mode, OptimizerConfig};

const STEPS: usize = 240;

fn cfg(mode: Mode) -> OptimizerConfig {
    OptimizerConfig {
        lr: 0.1,
        ..OptimizerConfig::default().with_mode(mode)
    }
}

fn assert_same(a: &OptimizerConfig, b: &OptimizerConfig) {
    let stream = small_stream(5);
    let obj = mlp();
    let data = batches(&stream, STEPS, 17);
    let theta = init(&obj, 3);
    let ta = trajectory_bits(&run_steps(&obj, &theta, &data, a));
    let tb = trajectory_bits(&run_steps(&obj, &theta, &data, b));
    assert_eq!(ta.len(), STEPS);
    for (j, (x, y)) in ta.iter().zip(&tb).enumerate() {
        assert_eq!(x, y, "{} vs {} diverge at step {j}", a.mode, b.mode);
    }
    assert_ne!(ta[0], ta[STEPS - 1], "trajectory should move");
}

#[test]
fn turbo_every_step_is_cflat() {
    let turbo = OptimizerConfig {
        k0: 1,
        trigger: false,
        scheduler: false,
        beta: 123.0,
        ..cfg(Mode::Turbo)
    };
    assert_same(&turbo, &cfg(Mode::CFlat));
}

#[test]
fn cflat_without_flatness_is_sam() {
    assert_same(
        &OptimizerConfig {
            lambda: 0.0,
            ..cfg(Mode::CFlat)
        },
        &cfg(Mode::Sam),
    );
}

#[test]
fn turbo_that_never_triggers_is_sgd() {
    let turbo = OptimizerConfig {
        trigger_mult: f64::INFINITY,
        ..cfg(Mode::Turbo)
    };
    assert_same(&turbo, &cfg(Mode::Sgd));
    let lax = OptimizerConfig {
        strict_alg1: false,
        ..turbo
    };
    assert_same(&lax, &cfg(Mode::Sgd));
}

#[test]
fn looksam_every_step_is_sam() {
    let look = OptimizerConfig {
        k0: 1,
        scheduler: false,
        ..cfg(Mode::LookSam)
    };
    assert_same(&look, &cfg(Mode::Sam));
}

#[test]
fn harness_sgd_matches_silent_turbo() {
    let stream = small_stream(9);
    let obj = SoftmaxLinear::new(4, 4).unwrap();
    let p = Protocol {
        epochs: 3,
        batch_size: 10,
        ..Default::default()
    };
    let sgd = run_experiment(&obj, &stream, &cfg(Mode::Sgd), &p, None).unwrap();
    let turbo_cfg = OptimizerConfig {
        trigger_mult: f64::INFINITY,
        ..cfg(Mode::Turbo)
    };
    let turbo = run_experiment(&obj, &stream, &turbo_cfg, &p, None).unwrap();
    assert_eq!(sgd.metrics, turbo.metrics);
    assert_eq!(bits(&sgd.theta), bits(&turbo.theta));
}

#[test]
fn diagnostics_do_not_touch_the_trajectory() {
    let stream = ten_task_stream(2);
    let obj = flatopt::numcore::Mlp::new(&[8, 8, 20]).unwrap();
    let p = Protocol {
        epochs: 1,
        batch_size: 32,
        ..Default::default()
    };
    let cfg = OptimizerConfig::default();
    let off = run_experiment(&obj, &stream, &cfg, &p, None).unwrap();
    let on = run_experiment(&obj, &stream, &cfg, &p, Some(TraceConfig::default())).unwrap();
    assert_eq!(off.metrics, on.metrics);
    assert_eq!(bits(&off.theta), bits(&on.theta));
    assert!(off.trace.is_none());
    let trace = on.trace.unwrap();
    assert_eq!(trace.records(), on.metrics.steps);
    // the same number of objective gradients either way
    assert_eq!(off.metrics.eval_count, on.metrics.eval_count);
}

#[test]
fn same_seed_same_metrics() {
    let stream = ten_task_stream(4);
    let obj = flatopt::numcore::Mlp::new(&[8, 8, 20]).unwrap();
    let p = Protocol {
        epochs: 1,
        ..Default::default()
    };
    let a = run_experiment(&obj, &stream, &OptimizerConfig::default(), &p, None).unwrap();
    let b = run_experiment(
        &obj,
        &ten_task_stream(4),
        &OptimizerConfig::default(),
        &p,
        None,
    )
    .unwrap();
    assert_eq!(a.metrics, b.metrics);
}
