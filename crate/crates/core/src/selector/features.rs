use std::collections::VecDeque;

use crate::nn::loss::dot;
use crate::percentile::percentile_index;
use crate::{Error, Result};

/// Running mean of every feature folded in, so the average similarity to
/// all stored features is a single dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBuffer {
    mean: Vec<f64>,
    count: u64,
}

impl FeatureBuffer {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn clear(&mut self) {
        self.mean.fill(0.0);
        self.count = 0;
    }

    /// `x̄ ← (M·x̄ + x)/(M + 1)`, `M ← M + 1`.
    pub fn fold(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape(format!(
                "feature of length {} folded into buffer of dimension {}",
                x.len(),
                self.mean.len()
            )));
        }
        let m = self.count as f64;
        for (avg, &v) in self.mean.iter_mut().zip(x) {
            *avg = (m * *avg + v) / (m + 1.0);
        }
        self.count += 1;
        Ok(())
    }

    /// Mean dot product of `x` with every stored feature, `x · x̄`; `None`
    /// while the buffer is empty.
    pub fn similarity(&self, x: &[f64]) -> Option<f64> {
        (self.count > 0).then(|| dot(x, &self.mean))
    }
}

/// Fixed-length FIFO of recent distances; its percentile is the adaptive
/// advising threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceQueue {
    values: VecDeque<f64>,
    capacity: usize,
    percentile: f64,
}

impl DistanceQueue {
    pub fn new(capacity: usize, percentile: f64) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            values: VecDeque::with_capacity(capacity),
            capacity,
            percentile,
        }
    }

    pub fn push(&mut self, d: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(d);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.values.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    /// σ = ascending element `⌈p·len⌉ − 1`; `None` until the queue is full.
    pub fn threshold(&self) -> Option<f64> {
        if !self.is_full() {
            return None;
        }
        let mut sorted: Vec<f64> = self.values.iter().copied().collect();
        let k = percentile_index(sorted.len(), self.percentile);
        let (_, nth, _) = sorted.select_nth_unstable_by(k, f64::total_cmp);
        Some(*nth)
    }
}

/// Strict `d > σ`.
pub fn should_advise(distance: f64, threshold: f64) -> bool {
    distance > threshold
}
