//! Candidate scoring, world-model estimation and language explanation.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::concept::{query_vector, ConceptVector, Query};
use crate::embedding::{cosine, distance, sub, EmbeddingSpace};
use crate::error::{Error, Result};
use crate::policy::PolicySet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// Cosine alignment with concept vectors.
    #[default]
    Cav,
    /// Sum of query satisfaction probabilities.
    Prob,
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cav" => Ok(ScoreMode::Cav),
            "prob" | "probabilistic" => Ok(ScoreMode::Prob),
            other => Err(Error::Parse(format!("unknown score mode {other:?} (expected cav or prob)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub lambda: f64,
    #[serde(default)]
    pub excluded: BTreeSet<usize>,
    #[serde(default)]
    pub mode: ScoreMode,
}

impl EstimatorConfig {
    pub fn new(lambda: f64, mode: ScoreMode) -> Self {
        Self {
            lambda,
            excluded: BTreeSet::new(),
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!("lambda must be finite and non-negative, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    /// `(env_id, score)`, best first.
    pub ranking: Vec<(usize, f64)>,
    pub env_est: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

impl EstimationResult {
    /// 1-based rank of `env_id`, if it was scored.
    pub fn rank_of(&self, env_id: usize) -> Option<usize> {
        self.ranking.iter().position(|r| r.0 == env_id).map(|i| i + 1)
    }
}

fn check_dim(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: v.len() });
    }
    Ok(())
}

/// `Σ ρ cos(v_c, v_i − v_obs) − λ ‖v_i − v_obs‖`.
pub fn score(v_i: &[f64], v_obs: &[f64], concepts: &[ConceptVector], lambda: f64) -> Result<f64> {
    check_dim(v_i.len(), v_obs)?;
    let diff = sub(v_i, v_obs);
    let mut s = 0.0;
    for c in concepts {
        check_dim(v_i.len(), &c.vector)?;
        s += c.weight * cosine(&c.vector, &diff);
    }
    Ok(s - lambda * distance(v_i, v_obs))
}

/// `Σ P(a_q | env, s_q) − λ ‖v_i − v_obs‖`, with `P = 0` where `s_q` is
/// absent from the environment.
pub fn score_probabilistic(
    env_id: usize,
    v_i: &[f64],
    v_obs: &[f64],
    queries: &[Query],
    lambda: f64,
    policies: &PolicySet,
) -> Result<f64> {
    check_dim(v_i.len(), v_obs)?;
    let p: f64 = queries
        .iter()
        .map(|q| q.weight * policies.satisfaction(env_id, &q.state, q.action).unwrap_or(0.0))
        .sum();
    Ok(p - lambda * distance(v_i, v_obs))
}

fn by_score(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

fn finish(mut ranking: Vec<(usize, f64)>) -> Result<EstimationResult> {
    ranking.sort_by(by_score);
    let env_est = ranking.first().ok_or(Error::Exhausted)?.0;
    Ok(EstimationResult {
        ranking,
        env_est,
        explanation: None,
    })
}

/// Ranks every non-excluded environment against precomputed concept
/// vectors. `cfg.mode` is ignored.
pub fn rank_concepts(
    space: &EmbeddingSpace,
    obs: usize,
    concepts: &[ConceptVector],
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    let v_obs = space.vector(obs)?;
    let ranking = space
        .vectors
        .iter()
        .filter(|(id, _)| !cfg.excluded.contains(id))
        .map(|(&id, v)| Ok((id, score(v, v_obs, concepts, cfg.lambda)?)))
        .collect::<Result<Vec<_>>>()?;
    finish(ranking)
}

/// Ranks every non-excluded environment by query satisfaction.
pub fn rank_probabilistic(
    space: &EmbeddingSpace,
    obs: usize,
    queries: &[Query],
    policies: &PolicySet,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    let v_obs = space.vector(obs)?;
    let ranking = space
        .vectors
        .iter()
        .filter(|(id, _)| !cfg.excluded.contains(id))
        .map(|(&id, v)| Ok((id, score_probabilistic(id, v, v_obs, queries, cfg.lambda, policies)?)))
        .collect::<Result<Vec<_>>>()?;
    finish(ranking)
}

/// Estimates the user's environment from the queries, plus any extra
/// concept vectors (user vectors) in CAV mode. `extra` is ignored in
/// probabilistic mode.
pub fn estimate(
    space: &EmbeddingSpace,
    obs: usize,
    queries: &[Query],
    extra: &[ConceptVector],
    policies: &PolicySet,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    cfg.validate()?;
    match cfg.mode {
        ScoreMode::Cav => {
            let mut concepts = queries
                .iter()
                .map(|q| query_vector(space, q, policies))
                .collect::<Result<Vec<_>>>()?;
            concepts.extend_from_slice(extra);
            rank_concepts(space, obs, &concepts, cfg)
        }
        ScoreMode::Prob => rank_probabilistic(space, obs, queries, policies, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// `(label, cosine)`, most similar first.
    pub ranked: Vec<(String, f64)>,
}

impl Explanation {
    pub fn best(&self) -> &str {
        &self.ranked[0].0
    }
}

/// Orders the language vectors by cosine with `v_est − v_obs`.
pub fn explain(
    space: &EmbeddingSpace,
    env_est: usize,
    obs: usize,
    language: &[ConceptVector],
) -> Result<Explanation> {
    if language.is_empty() {
        return Err(Error::NoLanguageVectors);
    }
    let diff = sub(space.vector(env_est)?, space.vector(obs)?);
    if diff.iter().all(|&d| d == 0.0) {
        return Err(Error::NoDifference);
    }
    let mut ranked = language
        .iter()
        .enumerate()
        .map(|(i, c)| {
            check_dim(diff.len(), &c.vector)?;
            let label = c.label.clone().unwrap_or_else(|| format!("#{i}"));
            Ok((i, label, cosine(&c.vector, &diff)))
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    Ok(Explanation {
        ranked: ranked.into_iter().map(|(_, l, s)| (l, s)).collect(),
    })
}
