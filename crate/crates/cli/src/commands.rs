use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use flatopt::clbench::{run_experiment, RunReport, TaskStream};
use flatopt::optim::{Mode, OptimizerConfig};

use crate::config::{ConfigError, DatasetSpec, ExperimentConfig};
use crate::output::{self, CompareRow, SweepRow};

/// Hyperparameters that `sweep` can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Beta,
    K0,
    M,
    Rho,
    Lambda,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::K0 => "k0",
            SweepParam::M => "m",
            SweepParam::Rho => "rho",
            SweepParam::Lambda => "lambda",
        }
    }

    fn field(self) -> &'static str {
        match self {
            SweepParam::M => "trigger_mult",
            other => other.name(),
        }
    }

    /// Returns `base` with this parameter set to `value`.
    pub fn apply(self, base: &OptimizerConfig, value: f64) -> Result<OptimizerConfig, ConfigError> {
        let mut cfg = base.clone();
        match self {
            SweepParam::Beta => cfg.beta = value,
            SweepParam::Rho => cfg.rho = value,
            SweepParam::Lambda => cfg.lambda = value,
            SweepParam::M => cfg.trigger_mult = value,
            SweepParam::K0 => {
                if value.fract() != 0.0 || !(1.0..=u32::MAX as f64).contains(&value) {
                    return Err(config_err(
                        format!("--values {value}"),
                        "k0 must be a positive integer",
                    ));
                }
                cfg.k0 = value as u32;
            }
        }
        cfg.validate().map_err(|e| {
            config_err(format!("--values {value}"), format!("{} {e}", self.field()))
        })?;
        Ok(cfg)
    }
}

fn config_err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses a sweep value. `inf` is accepted for the trigger multiplier.
pub fn parse_value(s: &str) -> Result<f64, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
        t => t
            .parse::<f64>()
            .map_err(|e| format!("`{s}` is not a number: {e}")),
    }
}

/// Thread pool for independent runs, capped by `FLATOPT_THREADS`.
fn pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("FLATOPT_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
            config_err(
                "FLATOPT_THREADS",
                format!("expected a positive integer, got `{v}`"),
            )
        })?;
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn prepare(cfg: &ExperimentConfig) -> Result<(TaskStream, Box<dyn flatopt::numcore::Objective>)> {
    let stream = cfg.build_stream().with_context(|| match &cfg.dataset {
        DatasetSpec::Csv(c) => format!("loading {}", c.path.display()),
        DatasetSpec::Gaussian(_) => "generating task stream".to_string(),
    })?;
    let model = cfg.build_model(&stream).context("building model")?;
    Ok((stream, model))
}

fn execute(
    cfg: &ExperimentConfig,
    opt: &OptimizerConfig,
    stream: &TaskStream,
    model: &dyn flatopt::numcore::Objective,
) -> Result<RunReport> {
    run_experiment(
        model,
        stream,
        opt,
        &cfg.protocol,
        cfg.diagnostics.trace_config(),
    )
    .with_context(|| format!("{} run failed", opt.mode))
}

pub fn validate(path: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(path)?;
    match cfg.task_count_hint() {
        Some(n) => println!("ok: {} on {n} tasks", cfg.optimizer.mode),
        None => println!("ok: {}", cfg.optimizer.mode),
    }
    Ok(())
}

pub fn run(path: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(path)?;
    let (stream, model) = prepare(&cfg)?;
    let report = execute(&cfg, &cfg.optimizer, &stream, model.as_ref())?;
    let m = &report.metrics;

    let seen: Vec<usize> = (0..stream.len())
        .map(|t| stream.seen_classes(t).len())
        .collect();
    output::write_metrics(out, m, &seen)?;
    output::write_accuracy_matrix(out, m)?;
    output::write_events(out, m)?;
    if let Some(trace) = &report.trace {
        output::write_trace(out, trace)?;
    }
    output::write_summary(out, m, &cfg)?;

    println!(
        "{} {}: avg {:.4} last {:.4} evals {} steps {} ({:.0} steps/s)",
        cfg.optimizer.mode,
        stream.split_name(),
        m.avg_acc,
        m.last_acc,
        m.eval_count,
        m.steps,
        report.steps_per_second()
    );
    Ok(())
}

pub fn compare(path: &Path, modes: &[Mode], out: &Path) -> Result<()> {
    if modes.is_empty() {
        return Err(config_err("--modes", "at least one mode is required").into());
    }
    let cfg = ExperimentConfig::load(path)?;
    let (stream, model) = prepare(&cfg)?;
    let reports: Vec<Result<RunReport>> = pool()?.install(|| {
        modes
            .par_iter()
            .map(|&mode| {
                let opt = cfg.optimizer.clone().with_mode(mode);
                execute(&cfg, &opt, &stream, model.as_ref())
            })
            .collect()
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;

    let digest = &reports[0].metrics.batch_digest;
    if let Some(i) = reports
        .iter()
        .position(|r| &r.metrics.batch_digest != digest)
    {
        bail!("{} saw a different batch order than {}", modes[i], modes[0]);
    }

    let rows: Vec<CompareRow> = modes
        .iter()
        .zip(&reports)
        .map(|(mode, r)| CompareRow {
            mode: mode.to_string(),
            avg: r.metrics.avg_acc,
            last: r.metrics.last_acc,
            evals: r.metrics.eval_count,
            // SGD spends one evaluation per step on the same batches.
            evals_vs_sgd: r.metrics.evals_per_step(),
            steps_per_s: r.steps_per_second(),
        })
        .collect();
    output::write_compare(out, &rows)?;
    println!(
        "{:<8} {:>8} {:>8} {:>10} {:>8}",
        "mode", "avg", "last", "evals", "vs_sgd"
    );
    for r in &rows {
        println!(
            "{:<8} {:>8.4} {:>8.4} {:>10} {:>8.3}",
            r.mode, r.avg, r.last, r.evals, r.evals_vs_sgd
        );
    }
    println!("batch order {digest}");
    Ok(())
}

pub fn sweep(path: &Path, param: SweepParam, values: &[f64], out: &Path) -> Result<()> {
    if values.is_empty() {
        return Err(config_err("--values", "at least one value is required").into());
    }
    let cfg = ExperimentConfig::load(path)?;
    let opts = values
        .iter()
        .map(|&v| param.apply(&cfg.optimizer, v))
        .collect::<Result<Vec<_>, _>>()?;
    let (stream, model) = prepare(&cfg)?;
    let reports: Vec<Result<RunReport>> = pool()?.install(|| {
        opts.par_iter()
            .map(|opt| execute(&cfg, opt, &stream, model.as_ref()))
            .collect()
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;

    let rows: Vec<SweepRow> = values
        .iter()
        .zip(&reports)
        .map(|(&value, r)| SweepRow {
            param: param.name().to_string(),
            value,
            avg: r.metrics.avg_acc,
            last: r.metrics.last_acc,
            evals: r.metrics.eval_count,
        })
        .collect();
    output::write_sweep(out, &rows)?;
    for r in &rows {
        println!(
            "{}={:<8} avg {:.4} last {:.4} evals {}",
            r.param, r.value, r.avg, r.last, r.evals
        );
    }
    Ok(())
}
