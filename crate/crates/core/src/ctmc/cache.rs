//! Per-chain memo of decompositions keyed by the excluded prevalence.

use super::{subject_rate_matrix, Decomposition};
use crate::model::ModelSpec;
use crate::params::Params;

/// With the parameters fixed, the subject rate matrix depends only on the
/// prevalence among the other subjects, so entries are indexed by it.
/// Changing the parameters empties the cache.
#[derive(Debug, Clone)]
pub struct DecompositionCache {
    model: ModelSpec,
    params: Params,
    entries: Vec<Option<Decomposition>>,
    hits: u64,
    misses: u64,
}

impl DecompositionCache {
    pub fn new(model: &ModelSpec, params: &Params) -> Self {
        DecompositionCache { model: model.clone(), params: params.clone(), entries: Vec::new(), hits: 0, misses: 0 }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Installs new parameters, dropping every entry if they differ.
    pub fn set_params(&mut self, params: &Params) {
        if *params != self.params {
            self.params = params.clone();
            self.entries.clear();
        }
    }

    pub fn get(&mut self, i_excluded: usize) -> &Decomposition {
        if i_excluded >= self.entries.len() {
            self.entries.resize(i_excluded + 1, None);
        }
        if self.entries[i_excluded].is_some() {
            self.hits += 1;
        } else {
            self.misses += 1;
            let q = subject_rate_matrix(&self.model, &self.params, i_excluded);
            self.entries[i_excluded] = Some(Decomposition::new(&q));
        }
        self.entries[i_excluded].as_ref().expect("filled above")
    }

    /// Ensures every key has an entry, so that `entry` can then be used
    /// through a shared borrow.
    pub fn prepare(&mut self, keys: impl IntoIterator<Item = usize>) {
        for k in keys {
            self.get(k);
        }
    }

    /// A previously prepared entry.
    pub fn entry(&self, i_excluded: usize) -> &Decomposition {
        self.entries[i_excluded].as_ref().expect("cache entry not prepared")
    }

    pub fn len(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn params(beta: f64) -> Params {
        Params { beta, gamma: Some(0.2), mu: 0.5, rho: 0.5, phi: None, p_init: vec![1.0 / 3.0; 3] }
    }

    #[test]
    fn hit_is_identical() {
        let mut c = DecompositionCache::new(&ModelSpec::sirs(), &params(0.1));
        let a = c.get(3).clone();
        let b = c.get(3).clone();
        assert_eq!(a, b);
        assert_eq!((c.hits(), c.misses()), (1, 1));
    }

    #[test]
    fn parameter_change_clears() {
        let mut c = DecompositionCache::new(&ModelSpec::sir(), &params(0.1));
        c.get(1);
        c.get(4);
        c.set_params(&params(0.1));
        assert_eq!(c.len(), 2);
        c.set_params(&params(0.2));
        assert!(c.is_empty());
    }

    #[test]
    fn size_bounded_by_distinct_keys() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut c = DecompositionCache::new(&ModelSpec::sir(), &params(0.1));
        let mut seen = std::collections::HashSet::new();
        for step in 0..500 {
            if step % 100 == 99 {
                c.set_params(&params(0.1 + step as f64 * 1e-3));
                seen.clear();
            }
            let i = rng.random_range(0..30usize);
            seen.insert(i);
            c.get(i);
            assert!(c.len() <= seen.len());
            assert_eq!(c.len(), seen.len());
        }
    }
}
