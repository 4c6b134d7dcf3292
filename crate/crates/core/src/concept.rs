//! Concept directions in the embedding space.
//!
//! Query vectors and user vectors are both weighted contrasts: the
//! `p`-weighted mean of the environment vectors minus the `(1 - p)`-weighted
//! mean. For queries `p` is the probability that the environment's policy
//! picks the queried action in the queried state; for user vectors it is
//! the user's prior over environments. Language vectors average embedding
//! differences of environment pairs that share a spatial relation.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::embedding::{sub, EmbeddingSpace};
use crate::error::{Error, Result};
use crate::gridworld::{Action, AgentState, Catalog, Cell, Orientation};
use crate::policy::PolicySet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Positive,
    Negative,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Positive => "positive",
            Side::Negative => "negative",
        })
    }
}

/// "In `state`, `action` should be chosen", with importance `weight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub state: AgentState,
    pub action: Action,
    pub weight: f64,
}

impl Query {
    pub fn new(state: AgentState, action: Action) -> Self {
        Self {
            state,
            action,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConceptKind {
    QueryCav,
    UserVector,
    LanguageVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptVector {
    pub kind: ConceptKind,
    pub vector: Vec<f64>,
    /// Environments (or pairs) on the positive and negative side.
    pub support: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Importance ρ in the evaluation score.
    pub weight: f64,
}

/// Centred weighted contrast `Σ p v / Σ p − Σ (1 − p) v / Σ (1 − p)`.
///
/// Evaluated as `Σ (p_i − p̄) v_i / (n p̄ (1 − p̄))` with the deviations taken
/// relative to the first coefficient, so a constant `p` yields an exact zero
/// vector.
fn weighted_contrast(space: &EmbeddingSpace, coeffs: &[(usize, f64)]) -> std::result::Result<(Vec<f64>, usize, usize), Side> {
    let n = coeffs.len() as f64;
    let pos_mass: f64 = coeffs.iter().map(|c| c.1).sum();
    let neg_mass: f64 = coeffs.iter().map(|c| 1.0 - c.1).sum();
    if !(pos_mass > 0.0) {
        return Err(Side::Positive);
    }
    if !(neg_mass > 0.0) {
        return Err(Side::Negative);
    }
    let reference = coeffs[0].1;
    let mean_dev = coeffs.iter().map(|c| c.1 - reference).sum::<f64>() / n;
    let p_bar = reference + mean_dev;
    let denom = n * p_bar * (1.0 - p_bar);
    let mut v = vec![0.0; space.dim];
    for &(id, p) in coeffs {
        let c = ((p - reference) - mean_dev) / denom;
        if c == 0.0 {
            continue;
        }
        let x = space.vector(id).expect("coefficients only name stored environments");
        for (vi, xi) in v.iter_mut().zip(x) {
            *vi += c * xi;
        }
    }
    let pos = coeffs.iter().filter(|c| c.1 > 0.0).count();
    let neg = coeffs.iter().filter(|c| c.1 < 1.0).count();
    Ok((v, pos, neg))
}

/// Satisfaction coefficients `P(a_query | env, s_query)` for the given
/// environments; environments lacking `s_query` are left out.
pub fn query_coefficients(
    q: &Query,
    policies: &PolicySet,
    env_ids: impl IntoIterator<Item = usize>,
) -> Vec<(usize, f64)> {
    env_ids
        .into_iter()
        .filter_map(|id| policies.satisfaction(id, &q.state, q.action).map(|p| (id, p)))
        .collect()
}

/// Query CAV over every environment of the space.
pub fn query_vector(space: &EmbeddingSpace, q: &Query, policies: &PolicySet) -> Result<ConceptVector> {
    query_vector_over(space, q, policies, space.ids())
}

/// Query CAV restricted to a subset of environments.
pub fn query_vector_over(
    space: &EmbeddingSpace,
    q: &Query,
    policies: &PolicySet,
    env_ids: impl IntoIterator<Item = usize>,
) -> Result<ConceptVector> {
    let coeffs = query_coefficients(q, policies, env_ids);
    if coeffs.is_empty() {
        return Err(Error::DegenerateQuery(Side::Positive));
    }
    let (vector, pos, neg) = weighted_contrast(space, &coeffs).map_err(Error::DegenerateQuery)?;
    Ok(ConceptVector {
        kind: ConceptKind::QueryCav,
        vector,
        support: (pos, neg),
        label: None,
        weight: q.weight,
    })
}

/// Prior probability that the user holds each environment.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPrior {
    pub p: Vec<(usize, f64)>,
}

impl UserPrior {
    pub fn uniform(ids: impl IntoIterator<Item = usize>, p: f64) -> Self {
        Self {
            p: ids.into_iter().map(|id| (id, p)).collect(),
        }
    }
}

pub fn user_vector(space: &EmbeddingSpace, prior: &UserPrior) -> Result<ConceptVector> {
    for &(id, p) in &prior.p {
        space.vector(id)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("prior of environment {id} is {p}, outside [0, 1]")));
        }
    }
    if prior.p.is_empty() {
        return Err(Error::DegeneratePrior(Side::Positive));
    }
    let (vector, pos, neg) = weighted_contrast(space, &prior.p).map_err(Error::DegeneratePrior)?;
    Ok(ConceptVector {
        kind: ConceptKind::UserVector,
        vector,
        support: (pos, neg),
        label: None,
        weight: 1.0,
    })
}

/// Mean of `v_m − v_n` over the pairs.
pub fn language_vector(space: &EmbeddingSpace, pairs: &[(usize, usize)], label: &str) -> Result<ConceptVector> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs(label.to_string()));
    }
    let mut v = vec![0.0; space.dim];
    for &(m, n) in pairs {
        let d = sub(space.vector(m)?, space.vector(n)?);
        for (vi, di) in v.iter_mut().zip(d) {
            *vi += di;
        }
    }
    for vi in &mut v {
        *vi /= pairs.len() as f64;
    }
    Ok(ConceptVector {
        kind: ConceptKind::LanguageVector,
        vector: v,
        support: (pairs.len(), pairs.len()),
        label: Some(label.to_string()),
        weight: 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Object {
    Key,
    Door,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Upper,
    Lower,
    Left,
    Right,
}

/// "In the user's world model, `object` is further `direction` than in the
/// agent's."
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationLabel {
    pub object: Object,
    pub direction: Direction,
}

impl RelationLabel {
    pub const ALL: [RelationLabel; 8] = {
        use Direction::*;
        use Object::*;
        [
            RelationLabel { object: Key, direction: Upper },
            RelationLabel { object: Key, direction: Lower },
            RelationLabel { object: Key, direction: Left },
            RelationLabel { object: Key, direction: Right },
            RelationLabel { object: Door, direction: Upper },
            RelationLabel { object: Door, direction: Lower },
            RelationLabel { object: Door, direction: Left },
            RelationLabel { object: Door, direction: Right },
        ]
    };

    pub fn text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = match self.object {
            Object::Key => "key",
            Object::Door => "door",
        };
        let d = match self.direction {
            Direction::Upper => "upper",
            Direction::Lower => "lower",
            Direction::Left => "left",
            Direction::Right => "right",
        };
        write!(f, "{o} {d}")
    }
}

fn relations(object: Object, m: Cell, n: Cell, out: &mut BTreeSet<RelationLabel>) {
    let mut push = |direction| {
        out.insert(RelationLabel { object, direction });
    };
    if m.y < n.y {
        push(Direction::Upper);
    }
    if m.y > n.y {
        push(Direction::Lower);
    }
    if m.x < n.x {
        push(Direction::Left);
    }
    if m.x > n.x {
        push(Direction::Right);
    }
}

/// Every relation label that holds between environment `m` (user) and `n`
/// (agent). Smaller `y` is "upper".
pub fn pair_labeler(catalog: &Catalog, m: usize, n: usize) -> Result<BTreeSet<RelationLabel>> {
    let (em, en) = (catalog.env(m)?, catalog.env(n)?);
    let mut out = BTreeSet::new();
    relations(Object::Key, em.key, en.key, &mut out);
    relations(Object::Door, em.door, en.door, &mut out);
    Ok(out)
}

/// JSON shape of a query: `{state: {x, y, orientation, has_key, door_open},
/// action, weight}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub state: StateRecord,
    pub action: Action,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub x: i32,
    pub y: i32,
    pub orientation: Orientation,
    pub has_key: bool,
    pub door_open: bool,
}

impl From<&Query> for QueryRecord {
    fn from(q: &Query) -> Self {
        Self {
            state: StateRecord {
                x: q.state.pos.x,
                y: q.state.pos.y,
                orientation: q.state.orientation,
                has_key: q.state.has_key,
                door_open: q.state.door_open,
            },
            action: q.action,
            weight: q.weight,
        }
    }
}

impl QueryRecord {
    pub fn to_query(&self) -> Result<Query> {
        if !(self.weight > 0.0) {
            return Err(Error::Config(format!("query weight must be positive, got {}", self.weight)));
        }
        let s = &self.state;
        Ok(Query {
            state: AgentState::new(Cell::new(s.x, s.y), s.orientation, s.has_key, s.door_open),
            action: self.action,
            weight: self.weight,
        })
    }
}
