//! Class-incremental task streams ("B-m Inc-n" splits).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Batch, Rng};

/// Stream tags for [`Rng::derive`].
const DATA_TAG: u64 = 1;
const ORDER_TAG: u64 = 2;

/// One stage of the stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    /// Class ids introduced by this task, in stream order.
    pub classes: Vec<usize>,
    pub train: Batch,
    pub test: Batch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    pub total_classes: usize,
    pub initial: usize,
    pub increment: usize,
    pub features: usize,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// `B{m} Inc{n}`.
    pub fn split_name(&self) -> String {
        format!("B{} Inc{}", self.initial, self.increment)
    }

    /// Classes introduced by tasks `0..=t`.
    pub fn seen_classes(&self, t: usize) -> Vec<usize> {
        self.tasks[..=t]
            .iter()
            .flat_map(|task| task.classes.iter().copied())
            .collect()
    }
}

/// Number of tasks for a `B-m Inc-n` split of `classes`, or an error when
/// the split does not tile the classes exactly.
pub fn task_count(classes: usize, initial: usize, increment: usize) -> Result<usize> {
    if initial < 1 || initial > classes {
        return Err(Error::invalid(
            "initial",
            format!("must lie in [1, {classes}], got {initial}"),
        ));
    }
    let rest = classes - initial;
    if rest == 0 {
        return Ok(1);
    }
    if increment < 1 || !rest.is_multiple_of(increment) {
        return Err(Error::invalid(
            "increment",
            format!("{classes} classes cannot be split as B{initial} Inc{increment}"),
        ));
    }
    Ok(1 + rest / increment)
}

/// Rows of one class in their original order.
struct ClassRows {
    inputs: Vec<f64>,
    count: usize,
}

/// Splits per-class pools into tasks. Each class keeps its first 80% of
/// rows for training and the rest for testing. `order_seed = None` keeps
/// the natural class order.
fn assemble(
    features: usize,
    pools: Vec<ClassRows>,
    initial: usize,
    increment: usize,
    order_seed: Option<u64>,
) -> Result<TaskStream> {
    let classes = pools.len();
    let n_tasks = task_count(classes, initial, increment)?;
    let mut order: Vec<usize> = (0..classes).collect();
    if let Some(seed) = order_seed {
        Rng::derive(seed, &[ORDER_TAG]).shuffle(&mut order);
    }

    let mut tasks = Vec::with_capacity(n_tasks);
    let mut next = 0;
    for t in 0..n_tasks {
        let width = if t == 0 { initial } else { increment };
        let task_classes = order[next..next + width].to_vec();
        next += width;

        let (mut tr_x, mut tr_y, mut te_x, mut te_y) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for &c in &task_classes {
            let pool = &pools[c];
            let n_test = (pool.count / 5).max(1);
            let n_train = pool.count - n_test;
            tr_x.extend_from_slice(&pool.inputs[..n_train * features]);
            tr_y.extend(std::iter::repeat_n(c, n_train));
            te_x.extend_from_slice(&pool.inputs[n_train * features..]);
            te_y.extend(std::iter::repeat_n(c, n_test));
        }
        tasks.push(Task {
            classes: task_classes,
            train: Batch::new(features, tr_x, tr_y)?,
            test: Batch::new(features, te_x, te_y)?,
        });
    }
    Ok(TaskStream {
        tasks,
        total_classes: classes,
        initial,
        increment,
        features,
    })
}

/// Synthetic stream of isotropic Gaussian classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianSpec {
    pub dim: usize,
    pub classes: usize,
    pub initial: usize,
    pub increment: usize,
    pub samples_per_class: usize,
    /// Radius of the sphere the class means are drawn on.
    pub scale: f64,
    /// Per-coordinate standard deviation around each mean.
    pub noise: f64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        GaussianSpec {
            dim: 8,
            classes: 20,
            initial: 2,
            increment: 2,
            samples_per_class: 50,
            scale: 3.0,
            noise: 1.0,
        }
    }
}

impl GaussianSpec {
    pub fn validate(&self) -> Result<usize> {
        if self.dim < 2 {
            return Err(Error::invalid("dim", "must be at least 2"));
        }
        if self.samples_per_class < 2 {
            return Err(Error::invalid(
                "samples_per_class",
                "must be at least 2 (one train, one test)",
            ));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid(
                "scale",
                format!("must be > 0, got {}", self.scale),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid(
                "noise",
                format!("must be >= 0, got {}", self.noise),
            ));
        }
        task_count(self.classes, self.initial, self.increment)
    }
}

/// Draws class means uniformly on the sphere of radius `spec.scale`, then
/// `samples_per_class` noisy points per class. The class-to-task
/// assignment is permuted by `seed`; labels keep their generated ids.
pub fn make_gaussian_stream(spec: &GaussianSpec, seed: u64) -> Result<TaskStream> {
    spec.validate()?;
    let mut rng = Rng::derive(seed, &[DATA_TAG]);
    let d = spec.dim;
    let mut pools = Vec::with_capacity(spec.classes);
    for _ in 0..spec.classes {
        let mut mean: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let norm = mean
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        for v in &mut mean {
            *v *= spec.scale / norm;
        }
        let mut inputs = Vec::with_capacity(spec.samples_per_class * d);
        for _ in 0..spec.samples_per_class {
            for mu in &mean {
                inputs.push(mu + spec.noise * rng.normal());
            }
        }
        pools.push(ClassRows {
            inputs,
            count: spec.samples_per_class,
        });
    }
    assemble(d, pools, spec.initial, spec.increment, Some(seed))
}

/// Reads `f0,…,f{d−1},label` rows. `order_seed = None` keeps classes in
/// label order.
pub fn load_csv_stream(
    path: impl AsRef<Path>,
    initial: usize,
    increment: usize,
    order_seed: Option<u64>,
) -> Result<TaskStream> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let data = |line: usize, reason: String| Error::Data {
        path: shown.clone(),
        line,
        reason,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => data(0, format!("{other:?}")),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| data(1, e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(data(1, "empty file".into()));
    }
    let d = headers.len().saturating_sub(1);
    if d < 1 || &headers[d] != "label" {
        return Err(data(1, "header must be f0,...,f{d-1},label".into()));
    }
    for (i, h) in headers.iter().take(d).enumerate() {
        if h != format!("f{i}") {
            return Err(data(1, format!("expected column `f{i}`, found `{h}`")));
        }
    }

    let mut by_label: BTreeMap<usize, ClassRows> = BTreeMap::new();
    let mut rows = 0usize;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| data(line, e.to_string()))?;
        if rec.len() != d + 1 {
            return Err(data(
                line,
                format!("expected {} fields, found {}", d + 1, rec.len()),
            ));
        }
        let label: usize = rec[d]
            .trim()
            .parse()
            .map_err(|_| data(line, format!("bad label `{}`", &rec[d])))?;
        let entry = by_label.entry(label).or_insert_with(|| ClassRows {
            inputs: Vec::new(),
            count: 0,
        });
        for (j, cell) in rec.iter().take(d).enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| data(line, format!("bad value `{cell}` in f{j}")))?;
            if !v.is_finite() {
                return Err(data(line, format!("non-finite value in f{j}")));
            }
            entry.inputs.push(v);
        }
        entry.count += 1;
        rows += 1;
    }
    if rows == 0 {
        return Err(data(1, "no data rows".into()));
    }

    // labels must be exactly 0..C
    let classes = by_label.keys().next_back().map_or(0, |&m| m + 1);
    if by_label.len() != classes {
        let missing = (0..classes)
            .find(|c| !by_label.contains_key(c))
            .unwrap_or(0);
        return Err(data(
            rows + 1,
            format!("labels must cover 0..{classes}; class {missing} has no rows"),
        ));
    }
    if let Some((&c, _)) = by_label.iter().find(|(_, p)| p.count < 2) {
        return Err(data(
            rows + 1,
            format!("class {c} needs at least 2 rows for a train/test split"),
        ));
    }
    if let Err(e) = task_count(classes, initial, increment) {
        return Err(data(rows + 1, format!("class count mismatch: {e}")));
    }
    assemble(
        d,
        by_label.into_values().collect(),
        initial,
        increment,
        order_seed,
    )
}
