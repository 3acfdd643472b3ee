//! Result files. Everything goes through [`write_atomic`] so a crashed or
//! interrupted run never leaves a half-written table behind.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

use flatopt::clbench::RunMetrics;
use flatopt::diagnostics::{
    fmt_f64, write_distances_csv, write_qq_csv, write_ratio_hist_csv, write_scalars_csv,
    TraceBuffer,
};

use crate::config::ExperimentConfig;

/// Writes `name` inside `dir` via a temp file in the same directory and a
/// rename, so readers see either the old file or the complete new one.
pub fn write_atomic<F>(dir: &Path, name: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    let target = dir.join(name);
    tmp.persist(&target)
        .with_context(|| format!("writing {}", target.display()))?;
    Ok(())
}

fn csv_table(dir: &Path, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    write_atomic(dir, name, |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(header)?;
        for r in rows {
            c.write_record(&r)?;
        }
        c.flush()?;
        Ok(())
    })
}

/// Per-stage accuracy with cumulative step and gradient-evaluation counts.
pub fn write_metrics(dir: &Path, m: &RunMetrics, classes_seen: &[usize]) -> Result<()> {
    let tasks = m.stage_accuracy.len();
    let mut steps = vec![0u64; tasks];
    let mut evals = vec![0u64; tasks];
    for e in &m.events {
        steps[e.task as usize] += 1;
        evals[e.task as usize] += u64::from(e.evals);
    }
    let (mut cs, mut ce) = (0, 0);
    let rows = (0..tasks)
        .map(|t| {
            cs += steps[t];
            ce += evals[t];
            vec![
                t.to_string(),
                classes_seen[t].to_string(),
                fmt_f64(m.stage_accuracy[t]),
                cs.to_string(),
                ce.to_string(),
            ]
        })
        .collect();
    csv_table(
        dir,
        "metrics.csv",
        &["task", "classes_seen", "stage_accuracy", "steps", "evals"],
        rows,
    )
}

pub fn write_accuracy_matrix(dir: &Path, m: &RunMetrics) -> Result<()> {
    let mut rows = Vec::new();
    for (after, row) in m.accuracy.iter().enumerate() {
        for (eval, acc) in row.iter().enumerate() {
            rows.push(vec![after.to_string(), eval.to_string(), fmt_f64(*acc)]);
        }
    }
    csv_table(
        dir,
        "accuracy_matrix.csv",
        &["after_task", "eval_task", "accuracy"],
        rows,
    )
}

pub fn write_events(dir: &Path, m: &RunMetrics) -> Result<()> {
    write_atomic(dir, "events.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        for e in &m.events {
            c.serialize(e)?;
        }
        if m.events.is_empty() {
            c.write_record([
                "step",
                "task",
                "epoch",
                "k",
                "triggered_s",
                "triggered_f",
                "cached",
                "evals",
            ])?;
        }
        c.flush()?;
        Ok(())
    })
}

pub fn write_trace(dir: &Path, trace: &TraceBuffer) -> Result<()> {
    write_atomic(dir, "trace_scalars.csv", |w| {
        Ok(write_scalars_csv(trace, w)?)
    })?;
    write_atomic(dir, "trace_distances.csv", |w| {
        Ok(write_distances_csv(trace, w)?)
    })?;
    write_atomic(dir, "qq.csv", |w| Ok(write_qq_csv(trace, w)?))?;
    write_atomic(dir, "ratio_hist.csv", |w| {
        Ok(write_ratio_hist_csv(trace, w)?)
    })?;
    Ok(())
}

/// Everything in here is a pure function of the config, so repeated runs
/// produce the same bytes. Throughput goes to stdout instead.
#[derive(Serialize)]
struct Summary<'a> {
    mode: String,
    avg_acc: f64,
    last_acc: f64,
    eval_count: u64,
    steps: u64,
    evals_per_step: f64,
    batch_digest: &'a str,
    trajectory_digest: &'a str,
    config: &'a ExperimentConfig,
}

pub fn write_summary(dir: &Path, m: &RunMetrics, cfg: &ExperimentConfig) -> Result<()> {
    let s = Summary {
        mode: cfg.optimizer.mode.to_string(),
        avg_acc: m.avg_acc,
        last_acc: m.last_acc,
        eval_count: m.eval_count,
        steps: m.steps,
        evals_per_step: m.evals_per_step(),
        batch_digest: &m.batch_digest,
        trajectory_digest: &m.trajectory_digest,
        config: cfg,
    };
    write_atomic(dir, "summary.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &s)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub struct CompareRow {
    pub mode: String,
    pub avg: f64,
    pub last: f64,
    pub evals: u64,
    pub evals_vs_sgd: f64,
    pub steps_per_s: f64,
}

pub fn write_compare(dir: &Path, rows: &[CompareRow]) -> Result<()> {
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                r.mode.clone(),
                fmt_f64(r.avg),
                fmt_f64(r.last),
                r.evals.to_string(),
                fmt_f64(r.evals_vs_sgd),
                fmt_f64(r.steps_per_s),
            ]
        })
        .collect();
    csv_table(
        dir,
        "compare.csv",
        &[
            "mode",
            "avg",
            "last",
            "evals",
            "evals_vs_sgd",
            "steps_per_s",
        ],
        rows,
    )
}

pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub avg: f64,
    pub last: f64,
    pub evals: u64,
}

pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<()> {
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                r.param.clone(),
                fmt_f64(r.value),
                fmt_f64(r.avg),
                fmt_f64(r.last),
                r.evals.to_string(),
            ]
        })
        .collect();
    csv_table(
        dir,
        "sweep.csv",
        &["param", "value", "avg", "last", "evals"],
        rows,
    )
}
