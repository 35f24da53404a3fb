use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ingest::{FingerprintDb, Observation};

pub const DEFAULT_ALPHA: f64 = 0.5;

/// Symbol counts observed in one state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateHistogram {
    pub total: u64,
    pub counts: BTreeMap<usize, u64>,
}

/// Additively smoothed per-state histograms over the global symbol set.
///
/// Symbols are indexed by their position in the sorted training vocabulary;
/// one extra index (`vocab.len()`) is reserved for observations never seen
/// during training. States without training data emit uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionModel {
    alpha: f64,
    vocab: Vec<Observation>,
    index: BTreeMap<Observation, usize>,
    states: Vec<StateHistogram>,
}

impl EmissionModel {
    pub fn build(db: &FingerprintDb, alpha: f64) -> Result<Self> {
        let vocab: Vec<Observation> = db.vocab().iter().cloned().collect();
        let index: BTreeMap<Observation, usize> =
            vocab.iter().cloned().enumerate().map(|(i, o)| (o, i)).collect();
        let spec = db.spec();
        let mut states = vec![StateHistogram::default(); spec.n_cells()];
        for (cell, counts) in db.per_cell_counts() {
            let h = &mut states[spec.flat(*cell)];
            for (obs, &c) in counts {
                h.counts.insert(index[obs], c);
                h.total += c;
            }
        }
        Self::from_parts(alpha, vocab, states)
    }

    pub fn from_parts(alpha: f64, vocab: Vec<Observation>, states: Vec<StateHistogram>) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Invalid(format!("smoothing must be non-negative, got {alpha}")));
        }
        if vocab.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        if vocab.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("vocabulary must be strictly sorted".into()));
        }
        for h in &states {
            if h.counts.keys().any(|&k| k >= vocab.len()) || h.counts.values().sum::<u64>() != h.total {
                return Err(Error::Invalid("inconsistent emission histogram".into()));
            }
        }
        let index = vocab.iter().cloned().enumerate().map(|(i, o)| (o, i)).collect();
        Ok(EmissionModel {
            alpha,
            vocab,
            index,
            states,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab(&self) -> &[Observation] {
        &self.vocab
    }

    pub fn histograms(&self) -> &[StateHistogram] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Size of the symbol set including the reserved unknown symbol.
    pub fn n_symbols(&self) -> usize {
        self.vocab.len() + 1
    }

    pub fn unknown_symbol(&self) -> usize {
        self.vocab.len()
    }

    /// Symbol id of `obs`, or the unknown symbol when it was never trained on.
    pub fn symbol(&self, obs: &Observation) -> usize {
        self.index.get(obs).copied().unwrap_or(self.vocab.len())
    }

    pub fn prob(&self, state: usize, symbol: usize) -> f64 {
        let h = &self.states[state];
        let v = self.n_symbols() as f64;
        if h.total == 0 {
            return 1.0 / v;
        }
        let c = h.counts.get(&symbol).copied().unwrap_or(0) as f64;
        (c + self.alpha) / (h.total as f64 + self.alpha * v)
    }

    pub fn log_prob(&self, state: usize, symbol: usize) -> f64 {
        self.prob(state, symbol).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(t: &str, b: i32) -> Observation {
        Observation {
            tower_id: t.into(),
            rssi_bin: b,
        }
    }

    fn model(alpha: f64) -> EmissionModel {
        let vocab = vec![obs("A", 1), obs("A", 2)];
        let mut h = StateHistogram::default();
        h.counts.insert(0, 3);
        h.counts.insert(1, 1);
        h.total = 4;
        EmissionModel::from_parts(alpha, vocab, vec![h, StateHistogram::default()]).unwrap()
    }

    #[test]
    fn empirical_histogram_without_smoothing() {
        let m = model(0.0);
        assert_eq!(m.prob(0, 0), 0.75);
        assert_eq!(m.prob(0, 1), 0.25);
        assert_eq!(m.prob(0, m.unknown_symbol()), 0.0);
    }

    #[test]
    fn additive_smoothing() {
        let m = model(0.5);
        assert!((m.prob(0, 0) - 3.5 / 5.5).abs() < 1e-15);
        assert!((m.prob(0, 1) - 1.5 / 5.5).abs() < 1e-15);
        assert!((m.prob(0, 2) - 0.5 / 5.5).abs() < 1e-15);
    }

    #[test]
    fn empty_state_is_uniform() {
        let m = model(0.5);
        for k in 0..3 {
            assert_eq!(m.prob(1, k), 1.0 / 3.0);
        }
    }

    #[test]
    fn unseen_observation_maps_to_unknown() {
        let m = model(0.5);
        assert_eq!(m.symbol(&obs("A", 2)), 1);
        assert_eq!(m.symbol(&obs("B", 2)), 2);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            EmissionModel::from_parts(0.5, vec![], vec![]),
            Err(Error::EmptyVocabulary)
        ));
        assert!(EmissionModel::from_parts(-1.0, vec![obs("A", 1)], vec![]).is_err());
    }

    proptest! {
        #[test]
        fn rows_normalized(alpha in prop_oneof![Just(0.0), Just(0.5), Just(1.0), 0.0..3.0f64],
                           counts in proptest::collection::vec(proptest::collection::vec(0u64..20, 6), 1..8)) {
            let vocab: Vec<_> = (0..6).map(|b| obs("T", b)).collect();
            let states: Vec<StateHistogram> = counts.iter().map(|row| {
                let counts: BTreeMap<usize, u64> =
                    row.iter().enumerate().filter(|(_, &c)| c > 0).map(|(k, &c)| (k, c)).collect();
                StateHistogram { total: counts.values().sum(), counts }
            }).collect();
            let m = EmissionModel::from_parts(alpha, vocab, states).unwrap();
            for s in 0..m.n_states() {
                let sum: f64 = (0..m.n_symbols()).map(|k| m.prob(s, k)).sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                if alpha > 0.0 {
                    prop_assert!((0..m.n_symbols()).all(|k| m.prob(s, k) > 0.0));
                }
            }
        }
    }
}
