use std::collections::BTreeMap;

use crate::error::Result;
use crate::numcore::Batch;

/// Exemplar memory holding the first `per_class` training rows of every
/// class seen so far, in stream order.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    per_class: usize,
    features: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
    counts: BTreeMap<usize, usize>,
}

impl ReplayBuffer {
    pub fn new(per_class: usize) -> Self {
        ReplayBuffer {
            per_class,
            features: 0,
            inputs: Vec::new(),
            labels: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, class: usize) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    /// Number of distinct classes with at least one exemplar.
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    /// Adds rows of `data` until each class holds `per_class` exemplars.
    pub fn update(&mut self, data: &Batch) {
        if self.per_class == 0 {
            return;
        }
        if self.is_empty() {
            self.features = data.features();
        }
        debug_assert_eq!(self.features, data.features());
        for i in 0..data.len() {
            let c = data.label(i);
            let n = self.counts.entry(c).or_insert(0);
            if *n < self.per_class {
                *n += 1;
                self.inputs.extend_from_slice(data.row(i));
                self.labels.push(c);
            }
        }
    }

    /// Stored exemplars as one batch, or `None` when empty.
    pub fn as_batch(&self) -> Result<Option<Batch>> {
        if self.is_empty() {
            return Ok(None);
        }
        Batch::new(self.features, self.inputs.clone(), self.labels.clone()).map(Some)
    }
}
