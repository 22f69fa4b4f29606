use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Sparse point measure on ages: `counts[x]` individuals of age `x`.
///
/// Zero counts are never stored, and the total is kept in sync with the map.
/// The ordered map gives deterministic iteration, which the simulator relies
/// on for reproducibility.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct AgePopulation {
    counts: BTreeMap<usize, u64>,
    total: u64,
}

impl AgePopulation {
    pub fn empty() -> Self {
        Self::default()
    }

    /// One individual of age `x`.
    pub fn singleton(x: usize) -> Self {
        let mut p = Self::default();
        p.add(x, 1);
        p
    }

    pub fn from_counts<I: IntoIterator<Item = (usize, u64)>>(counts: I) -> Self {
        let mut p = Self::default();
        for (x, c) in counts {
            p.add(x, c);
        }
        p
    }

    pub fn add(&mut self, age: usize, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(age).or_insert(0) += count;
        self.total += count;
    }

    pub fn count(&self, age: usize) -> u64 {
        self.counts.get(&age).copied().unwrap_or(0)
    }

    /// `‖Z‖`, the number of individuals.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn max_age(&self) -> Option<usize> {
        self.counts.keys().next_back().copied()
    }

    /// Ascending-age iteration over `(age, count)` with `count >= 1`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts.iter().map(|(&x, &c)| (x, c))
    }

    /// `Z(f) = Σ_x f(x)·Z({x})`.
    pub fn apply<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        self.counts.iter().map(|(&x, &c)| f(x) * c as f64).sum()
    }
}
