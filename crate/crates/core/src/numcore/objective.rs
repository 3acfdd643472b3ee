//! Differentiable objectives with analytic gradients.
//!
//! Parameter packing is part of the public contract (golden files written
//! by other tools rely on it):
//!
//! * softmax-linear: the `classes × features` weight matrix row-major (row
//!   `c` holds the weights of class `c`), followed by the `classes` biases.
//! * MLP with widths `d₀, d₁, …, d_L`: for each layer `l` in order, the
//!   `d_{l+1} × d_l` weight matrix row-major, followed by its `d_{l+1}`
//!   biases. Hidden layers use `tanh`; the last layer is linear and feeds a
//!   softmax cross-entropy.
//!
//! Batch losses are means over samples, accumulated in sample order.

use crate::error::{Error, Result};
use crate::numcore::{Batch, ParamVector, Rng};

/// A loss over parameters and a batch, with its exact gradient.
///
/// Implementations are immutable after construction and may be shared
/// across threads.
pub trait Objective: Send + Sync {
    fn name(&self) -> &'static str;

    fn param_dim(&self) -> usize;

    fn loss(&self, theta: &ParamVector, batch: &Batch) -> Result<f64>;

    fn gradient(&self, theta: &ParamVector, batch: &Batch) -> Result<ParamVector>;

    /// Class-scoring view, for objectives that are classifiers.
    fn as_classifier(&self) -> Option<&dyn Classifier> {
        None
    }

    /// Starting point for training.
    fn init_params(&self, _rng: &mut Rng) -> ParamVector {
        ParamVector::zeros(self.param_dim())
    }
}

pub trait Classifier {
    fn input_dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    /// Unnormalized class scores for one input row.
    fn logits(&self, theta: &ParamVector, row: &[f64]) -> Result<Vec<f64>>;
}

fn check_theta(theta: &ParamVector, dim: usize) -> Result<()> {
    if theta.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: theta.dim(),
        });
    }
    Ok(())
}

fn check_batch(batch: &Batch, features: usize, classes: usize) -> Result<()> {
    if batch.features() != features {
        return Err(Error::DimensionMismatch {
            expected: features,
            found: batch.features(),
        });
    }
    if let Some(&label) = batch.labels().iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

fn finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}

fn finite_vec(v: Vec<f64>, what: &'static str) -> Result<ParamVector> {
    let p = ParamVector::from_raw(v);
    if p.is_finite() {
        Ok(p)
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Writes `softmax(logits)` into `logits` and returns `−log p[label]`.
fn softmax_xent_in_place(logits: &mut [f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    let log_p = (logits[label] / sum).ln();
    let log_p = if log_p.is_finite() {
        log_p
    } else {
        // p underflowed; fall back to the log-sum-exp form.
        logits[label].ln() - sum.ln()
    };
    for z in logits.iter_mut() {
        *z /= sum;
    }
    -log_p
}

fn xent_only(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &z in logits {
        sum += (z - max).exp();
    }
    max + sum.ln() - logits[label]
}

// ---------------------------------------------------------------------------

/// `½ θᵀAθ − bᵀθ`. The batch is ignored.
#[derive(Clone, Debug)]
pub struct Quadratic {
    dim: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Quadratic {
    /// `a` is given as rows; it must be square and match `b`.
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let dim = a.len();
        if dim == 0 {
            return Err(Error::invalid("A", "matrix is empty"));
        }
        if let Some(row) = a.iter().find(|r| r.len() != dim) {
            return Err(Error::invalid(
                "A",
                format!("not square: {dim} rows but a row of length {}", row.len()),
            ));
        }
        if b.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: b.len(),
            });
        }
        let a: Vec<f64> = a.into_iter().flatten().collect();
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quadratic coefficients"));
        }
        Ok(Quadratic { dim, a, b })
    }

    pub fn diagonal(diag: &[f64], b: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { diag[i] } else { 0.0 }).collect())
            .collect();
        Quadratic::new(rows, b)
    }

    /// `A·x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let row = &self.a[i * self.dim..(i + 1) * self.dim];
                row.iter().zip(x).fold(0.0, |acc, (a, v)| acc + a * v)
            })
            .collect()
    }
}

impl Objective for Quadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, theta: &ParamVector, _batch: &Batch) -> Result<f64> {
        check_theta(theta, self.dim)?;
        let x = theta.as_slice();
        let ax = self.apply(x);
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..self.dim {
            quad += x[i] * ax[i];
            lin += self.b[i] * x[i];
        }
        finite(0.5 * quad - lin, "quadratic loss")
    }

    fn gradient(&self, theta: &ParamVector, _batch: &Batch) -> Result<ParamVector> {
        check_theta(theta, self.dim)?;
        let mut g = self.apply(theta.as_slice());
        for (gi, bi) in g.iter_mut().zip(&self.b) {
            *gi -= bi;
        }
        finite_vec(g, "quadratic gradient")
    }
}

// ---------------------------------------------------------------------------

/// Multinomial logistic regression: `logits = W x + b`, mean cross-entropy.
#[derive(Clone, Debug)]
pub struct SoftmaxLinear {
    features: usize,
    classes: usize,
}

impl SoftmaxLinear {
    pub fn new(features: usize, classes: usize) -> Result<Self> {
        if features < 1 {
            return Err(Error::invalid("feature_dim", "must be at least 1"));
        }
        if classes < 2 {
            return Err(Error::invalid("classes", "must be at least 2"));
        }
        Ok(SoftmaxLinear { features, classes })
    }

    fn logits_into(&self, theta: &[f64], row: &[f64], out: &mut [f64]) {
        let bias = &theta[self.classes * self.features..];
        for c in 0..self.classes {
            let w = &theta[c * self.features..(c + 1) * self.features];
            out[c] = w.iter().zip(row).fold(0.0, |acc, (a, x)| acc + a * x) + bias[c];
        }
    }
}

impl Objective for SoftmaxLinear {
    fn name(&self) -> &'static str {
        "softmax_linear"
    }

    fn param_dim(&self) -> usize {
        self.classes * (self.features + 1)
    }

    fn loss(&self, theta: &ParamVector, batch: &Batch) -> Result<f64> {
        check_theta(theta, self.param_dim())?;
        check_batch(batch, self.features, self.classes)?;
        let mut z = vec![0.0; self.classes];
        let mut total = 0.0;
        for i in 0..batch.len() {
            self.logits_into(theta.as_slice(), batch.row(i), &mut z);
            total += xent_only(&z, batch.label(i));
        }
        finite(total / batch.len() as f64, "softmax-linear loss")
    }

    fn gradient(&self, theta: &ParamVector, batch: &Batch) -> Result<ParamVector> {
        check_theta(theta, self.param_dim())?;
        check_batch(batch, self.features, self.classes)?;
        let n = batch.len() as f64;
        let (f, k) = (self.features, self.classes);
        let mut grad = vec![0.0; self.param_dim()];
        let mut z = vec![0.0; k];
        for i in 0..batch.len() {
            let x = batch.row(i);
            self.logits_into(theta.as_slice(), x, &mut z);
            softmax_xent_in_place(&mut z, batch.label(i));
            z[batch.label(i)] -= 1.0;
            for c in 0..k {
                let dz = z[c] / n;
                for (g, xj) in grad[c * f..(c + 1) * f].iter_mut().zip(x) {
                    *g += dz * xj;
                }
                grad[k * f + c] += dz;
            }
        }
        finite_vec(grad, "softmax-linear gradient")
    }

    fn as_classifier(&self) -> Option<&dyn Classifier> {
        Some(self)
    }
}

impl Classifier for SoftmaxLinear {
    fn input_dim(&self) -> usize {
        self.features
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn logits(&self, theta: &ParamVector, row: &[f64]) -> Result<Vec<f64>> {
        check_theta(theta, self.param_dim())?;
        let mut z = vec![0.0; self.classes];
        self.logits_into(theta.as_slice(), row, &mut z);
        Ok(z)
    }
}

// ---------------------------------------------------------------------------

/// Fully connected `tanh` network with a softmax cross-entropy head.
#[derive(Clone, Debug)]
pub struct Mlp {
    widths: Vec<usize>,
    /// Start of each layer's weight block in the packed parameter vector.
    offsets: Vec<usize>,
    dim: usize,
}

impl Mlp {
    pub fn new(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid(
                "layer_dims",
                "need at least an input and an output width",
            ));
        }
        if widths.contains(&0) {
            return Err(Error::invalid("layer_dims", "widths must be positive"));
        }
        if *widths.last().unwrap() < 2 {
            return Err(Error::invalid(
                "layer_dims",
                "output width is the class count and must be at least 2",
            ));
        }
        let mut offsets = Vec::with_capacity(widths.len() - 1);
        let mut dim = 0;
        for w in widths.windows(2) {
            offsets.push(dim);
            dim += w[1] * w[0] + w[1];
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            offsets,
            dim,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Returns the activations of every layer, input first, logits last.
    fn forward(&self, theta: &[f64], row: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(row.to_vec());
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let w = &theta[self.offsets[l]..self.offsets[l] + fan_out * fan_in];
            let b = &theta
                [self.offsets[l] + fan_out * fan_in..self.offsets[l] + fan_out * (fan_in + 1)];
            let input = &acts[l];
            let last = l + 1 == self.layers();
            let out = (0..fan_out)
                .map(|o| {
                    let z = w[o * fan_in..(o + 1) * fan_in]
                        .iter()
                        .zip(input)
                        .fold(0.0, |acc, (a, x)| acc + a * x)
                        + b[o];
                    if last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    fn check(&self, theta: &ParamVector, batch: &Batch) -> Result<()> {
        check_theta(theta, self.dim)?;
        check_batch(batch, self.widths[0], *self.widths.last().unwrap())
    }
}

impl Objective for Mlp {
    fn name(&self) -> &'static str {
        "mlp"
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, theta: &ParamVector, batch: &Batch) -> Result<f64> {
        self.check(theta, batch)?;
        let mut total = 0.0;
        for i in 0..batch.len() {
            let acts = self.forward(theta.as_slice(), batch.row(i));
            total += xent_only(acts.last().unwrap(), batch.label(i));
        }
        finite(total / batch.len() as f64, "mlp loss")
    }

    fn gradient(&self, theta: &ParamVector, batch: &Batch) -> Result<ParamVector> {
        self.check(theta, batch)?;
        let t = theta.as_slice();
        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.dim];
        for i in 0..batch.len() {
            let mut acts = self.forward(t, batch.row(i));
            let mut delta = acts.pop().unwrap();
            let label = batch.label(i);
            softmax_xent_in_place(&mut delta, label);
            delta[label] -= 1.0;
            for d in delta.iter_mut() {
                *d /= n;
            }
            for l in (0..self.layers()).rev() {
                let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
                let off = self.offsets[l];
                let input = &acts[l];
                for o in 0..fan_out {
                    let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += delta[o] * x;
                    }
                    grad[off + fan_out * fan_in + o] += delta[o];
                }
                if l > 0 {
                    let w = &t[off..off + fan_out * fan_in];
                    delta = (0..fan_in)
                        .map(|j| {
                            let back =
                                (0..fan_out).fold(0.0, |acc, o| acc + w[o * fan_in + j] * delta[o]);
                            back * (1.0 - input[j] * input[j])
                        })
                        .collect();
                }
            }
        }
        finite_vec(grad, "mlp gradient")
    }

    fn as_classifier(&self) -> Option<&dyn Classifier> {
        Some(self)
    }

    /// Glorot-uniform weights, zero biases.
    fn init_params(&self, rng: &mut Rng) -> ParamVector {
        let mut theta = vec![0.0; self.dim];
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut theta[self.offsets[l]..self.offsets[l] + fan_out * fan_in] {
                *w = rng.uniform_in(-limit, limit);
            }
        }
        ParamVector::from_raw(theta)
    }
}

impl Classifier for Mlp {
    fn input_dim(&self) -> usize {
        self.widths[0]
    }

    fn num_classes(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn logits(&self, theta: &ParamVector, row: &[f64]) -> Result<Vec<f64>> {
        check_theta(theta, self.dim)?;
        Ok(self.forward(theta.as_slice(), row).pop().unwrap())
    }
}

// ---------------------------------------------------------------------------

/// Central-difference gradient, `(L(θ+h·eᵢ) − L(θ−h·eᵢ)) / 2h` per
/// coordinate. This is the ground truth the analytic gradients are tested
/// against; it shares no code with them beyond `loss`.
pub fn finite_diff_gradient(
    obj: &dyn Objective,
    theta: &ParamVector,
    batch: &Batch,
    h: f64,
) -> Result<ParamVector> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("h", "step must be positive and finite"));
    }
    let mut x = theta.as_slice().to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = obj.loss(&ParamVector::from_raw(x.clone()), batch)?;
        x[i] = orig - h;
        let down = obj.loss(&ParamVector::from_raw(x.clone()), batch)?;
        x[i] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite("finite-difference loss"));
        }
        grad.push((up - down) / (2.0 * h));
    }
    finite_vec(grad, "finite-difference gradient")
}
