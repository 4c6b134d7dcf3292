//! Shared fixtures for the criterion benchmarks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wmest::{Catalog, EmbeddingSpace, LayoutConfig, PolicySet, Query};

pub fn default_catalog() -> Catalog {
    Catalog::build(LayoutConfig::default()).expect("default layout builds")
}

/// Random 16-dimensional vectors for every environment, standing in for a
/// trained space where only the scoring cost matters.
pub fn random_space(catalog: &Catalog, seed: u64) -> EmbeddingSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: BTreeMap<usize, Vec<f64>> =
        catalog.ids().map(|id| (id, (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect();
    EmbeddingSpace::from_vectors(vectors).expect("finite vectors")
}

/// `n` queries taken from the optimal behaviour of environment `env_id`.
pub fn queries_from(policies: &PolicySet, env_id: usize, n: usize) -> Vec<Query> {
    let p = policies.policy(env_id).expect("environment has a policy");
    let mut states: Vec<_> = p.states().copied().collect();
    states.sort();
    states
        .iter()
        .step_by((states.len() / n.max(1)).max(1))
        .take(n)
        .map(|s| Query::new(*s, p.optimal_action(s).expect("non-terminal state")))
        .collect()
}
