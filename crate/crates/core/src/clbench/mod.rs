//! Class-incremental benchmark harness: task streams, replay exemplars,
//! the training loop and accuracy metrics.

mod harness;
mod replay;
mod stream;

pub use harness::{
    evaluate, run_experiment, run_with_optimizer, train_task, Evaluation, Protocol, Recorder,
    RunMetrics, RunReport, StepEvent,
};
pub use replay::ReplayBuffer;
pub use stream::{
    load_csv_stream, make_gaussian_stream, task_count, GaussianSpec, Task, TaskStream,
};
