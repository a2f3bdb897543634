//! Joint probability tables over outcome sequences.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

/// Joint distribution over outcome tuples on an ordered subset of time
/// slots. Probabilities are clipped to [0, 1] at the Born-rule level;
/// entries of a full table sum to 1 within tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTable {
    /// Slot indices this table refers to, ascending.
    pub slots: Vec<usize>,
    /// Outcome alphabet size per listed slot.
    pub outcome_dims: Vec<usize>,
    pub probs: BTreeMap<Vec<usize>, f64>,
}

impl ProbTable {
    pub fn empty(slots: Vec<usize>, outcome_dims: Vec<usize>) -> Self {
        assert_eq!(slots.len(), outcome_dims.len());
        Self { slots, outcome_dims, probs: BTreeMap::new() }
    }

    pub fn set(&mut self, tuple: Vec<usize>, p: f64) {
        debug_assert_eq!(tuple.len(), self.slots.len());
        self.probs.insert(tuple, p);
    }

    pub fn get(&self, tuple: &[usize]) -> f64 {
        self.probs.get(tuple).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    /// Number of slots the table covers.
    pub fn arity(&self) -> usize {
        self.slots.len()
    }

    /// Sum out the slot at list position `pos`, producing the classical
    /// marginal table on the remaining slots.
    pub fn marginal_out(&self, pos: usize) -> ProbTable {
        assert!(pos < self.slots.len());
        let slots: Vec<usize> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, &s)| s)
            .collect();
        let dims: Vec<usize> = self
            .outcome_dims
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, &d)| d)
            .collect();
        let mut out = ProbTable::empty(slots, dims);
        for (tuple, &p) in &self.probs {
            let mut reduced = tuple.clone();
            reduced.remove(pos);
            *out.probs.entry(reduced).or_insert(0.0) += p;
        }
        out
    }

    /// Marginal table on a sub-list of positions (by classical summation).
    pub fn marginal_to_positions(&self, keep: &[usize]) -> ProbTable {
        let mut table = self.clone();
        // remove positions not kept, from the back to keep indices stable
        let mut remove: Vec<usize> =
            (0..self.slots.len()).filter(|i| !keep.contains(i)).collect();
        remove.sort_unstable_by(|a, b| b.cmp(a));
        for pos in remove {
            table = table.marginal_out(pos);
        }
        table
    }

    /// Iterate all outcome tuples in lexicographic order, including any
    /// absent from the map (probability 0).
    pub fn tuples(&self) -> Vec<Vec<usize>> {
        let total: usize = self.outcome_dims.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut tuple = vec![0usize; self.outcome_dims.len()];
        for flat in 0..total {
            crate::tensor::decompose(flat, &self.outcome_dims, &mut tuple);
            out.push(tuple.clone());
        }
        out
    }
}
