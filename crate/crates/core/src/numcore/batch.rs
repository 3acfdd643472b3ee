use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A minibatch of labelled feature rows, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    features: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: usize, inputs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("batch", "at least one sample is required"));
        }
        if inputs.len() != features * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features * labels.len(),
                found: inputs.len(),
            });
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("batch inputs"));
        }
        Ok(Batch {
            features,
            inputs,
            labels,
        })
    }

    /// A one-sample placeholder for objectives that ignore their data.
    pub fn empty_placeholder() -> Self {
        Batch {
            features: 0,
            inputs: Vec::new(),
            labels: vec![0],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.features..(i + 1) * self.features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// Gathers rows `indices` into a new batch.
    pub fn select(&self, indices: &[usize]) -> Result<Batch> {
        let mut inputs = Vec::with_capacity(indices.len() * self.features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(self.features, inputs, labels)
    }

    /// Concatenates batches with the same feature width.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Batch>) -> Result<Batch> {
        let mut features = None;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for b in parts {
            match features {
                None => features = Some(b.features),
                Some(f) if f != b.features => {
                    return Err(Error::DimensionMismatch {
                        expected: f,
                        found: b.features,
                    })
                }
                _ => {}
            }
            inputs.extend_from_slice(&b.inputs);
            labels.extend_from_slice(&b.labels);
        }
        Batch::new(features.unwrap_or(0), inputs, labels)
    }

    /// Content hash (hex, 16 chars) used to check that two runs consumed the
    /// same batches in the same order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.features as u64).to_le_bytes());
        for v in &self.inputs {
            h.update(v.to_bits().to_le_bytes());
        }
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(Batch::new(2, vec![], vec![]).is_err());
        assert!(Batch::new(2, vec![1.0, 2.0, 3.0], vec![0, 1]).is_err());
        let b = Batch::new(2, vec![1.0, 2.0, 3.0, 4.0], vec![0, 1]).unwrap();
        assert_eq!(b.row(1), &[3.0, 4.0]);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn select_and_concat() {
        let b = Batch::new(1, vec![1.0, 2.0, 3.0], vec![0, 1, 2]).unwrap();
        let s = b.select(&[2, 0]).unwrap();
        assert_eq!(s.inputs(), &[3.0, 1.0]);
        assert_eq!(s.labels(), &[2, 0]);
        let c = Batch::concat([&b, &s]).unwrap();
        assert_eq!(c.len(), 5);
        assert_ne!(b.fingerprint(), s.fingerprint());
        assert_eq!(b.fingerprint(), b.clone().fingerprint());
    }
}
