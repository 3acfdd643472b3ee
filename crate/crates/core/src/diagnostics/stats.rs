use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numcore::ParamVector;

/// `d_j = ‖x_j − x_{j−w}‖` for `j ≥ w`.
pub fn kstep_distance(series: &[ParamVector], w: usize) -> Result<Vec<f64>> {
    if w < 1 {
        return Err(Error::invalid("w", "must be at least 1"));
    }
    (w..series.len())
        .map(|j| series[j].distance(&series[j - w]))
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Standardized, sorted samples paired with standard-normal quantiles at
/// plotting positions `(i − 0.5)/n`.
pub fn qq_export(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::invalid(
            "samples",
            format!("need at least 10 samples, got {n}"),
        ));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Q-Q samples"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::invalid(
            "samples",
            "zero variance; cannot standardize",
        ));
    }
    let mut z: Vec<f64> = samples.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    Ok(z.into_iter()
        .enumerate()
        .map(|(i, s)| (s, normal.inverse_cdf((i as f64 + 0.5) / n as f64)))
        .collect())
}
