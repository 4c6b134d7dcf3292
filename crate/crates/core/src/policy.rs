//! Exact shortest-path policies and action-selection probabilities.
//!
//! Each environment is small and deterministic, so the optimal policy is
//! obtained by a reverse breadth-first search from the goal states over the
//! reachable state graph (unit step cost, goal absorbing). Ties between
//! equally short actions go to the first action in [`Action::ALL`].

use std::collections::{BTreeMap, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Action, AgentState, Catalog, Environment, LayoutConfig, StateSpace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyEntry {
    pub action: Action,
    /// Steps to the goal under the optimal policy.
    pub steps: u32,
    /// `Q(s, a) = value(step(s, a)) - 1` for every action.
    pub q: [f64; 5],
}

/// Optimal policy of one environment over its reachable decision states.
#[derive(Debug, Clone)]
pub struct Policy {
    pub env_id: usize,
    pub temperature: f64,
    entries: HashMap<AgentState, PolicyEntry>,
}

impl Policy {
    pub fn entry(&self, s: &AgentState) -> Option<&PolicyEntry> {
        self.entries.get(s)
    }

    /// Whether `s` is a reachable, non-terminal state of this environment.
    pub fn contains(&self, s: &AgentState) -> bool {
        self.entries.contains_key(s)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = &AgentState> {
        self.entries.keys()
    }

    pub fn optimal_action(&self, s: &AgentState) -> Option<Action> {
        self.entries.get(s).map(|e| e.action)
    }

    /// Negative number of steps to the goal.
    pub fn value(&self, s: &AgentState) -> Option<f64> {
        self.entries.get(s).map(|e| -(e.steps as f64))
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    /// `P(a | env, s)`: an indicator of the optimal action at temperature
    /// zero, otherwise a softmax over Q-values.
    pub fn action_prob(&self, s: &AgentState, a: Action) -> Result<f64> {
        let entry = self.entries.get(s).ok_or_else(|| Error::StateAbsent {
            env_id: self.env_id,
            state: s.key(),
        })?;
        Ok(action_distribution(entry, self.temperature)[a.index()])
    }

    /// Follows the optimal policy from `from` until a terminal state.
    pub fn rollout(&self, layout: &LayoutConfig, env: &Environment, from: AgentState) -> Vec<(AgentState, Action)> {
        let mut out = Vec::new();
        let mut s = from;
        while let Some(e) = self.entries.get(&s) {
            out.push((s, e.action));
            s = layout.step(env, s, e.action);
        }
        out
    }

    pub fn to_record(&self) -> PolicyRecord {
        let mut actions = BTreeMap::new();
        let mut values = BTreeMap::new();
        for (s, e) in &self.entries {
            actions.insert(s.key(), e.action.index());
            values.insert(s.key(), -(e.steps as f64));
        }
        PolicyRecord {
            env_id: self.env_id,
            actions,
            values,
        }
    }

    /// Rebuilds a policy from its serialized form, recomputing Q-values by
    /// stepping the environment.
    pub fn from_record(record: &PolicyRecord, layout: &LayoutConfig, env: &Environment, temperature: f64) -> Result<Self> {
        let mut steps = HashMap::new();
        for (k, v) in &record.values {
            steps.insert(AgentState::parse_key(k)?, (-v).round() as u32);
        }
        let mut entries = HashMap::new();
        for (k, &a) in &record.actions {
            let s = AgentState::parse_key(k)?;
            let action = Action::from_index(a).ok_or_else(|| Error::Parse(format!("action index {a}")))?;
            let own = *steps.get(&s).ok_or_else(|| Error::Parse(format!("missing value for {k}")))?;
            let q = Action::ALL.map(|b| {
                let t = layout.step(env, s, b);
                let succ = if layout.is_terminal(&t) { 0 } else { steps.get(&t).copied().unwrap_or(u32::MAX / 2) };
                -(succ as f64) - 1.0
            });
            entries.insert(s, PolicyEntry { action, steps: own, q });
        }
        Ok(Self {
            env_id: record.env_id,
            temperature,
            entries,
        })
    }
}

/// Probabilities over [`Action::ALL`] for one state.
pub fn action_distribution(entry: &PolicyEntry, temperature: f64) -> [f64; 5] {
    let mut p = [0.0; 5];
    if temperature <= 0.0 {
        p[entry.action.index()] = 1.0;
        return p;
    }
    let max = entry.q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (pi, q) in p.iter_mut().zip(entry.q) {
        *pi = ((q - max) / temperature).exp();
        total += *pi;
    }
    for pi in &mut p {
        *pi /= total;
    }
    p
}

/// Shortest-path policy for `env` (reverse BFS from the goal states).
pub fn plan_optimal(layout: &LayoutConfig, env: &Environment) -> Result<Policy> {
    let space = layout.explore(env);
    plan_on(&space, layout)
}

fn plan_on(space: &StateSpace, layout: &LayoutConfig) -> Result<Policy> {
    let n = space.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, succ) in space.successors.iter().enumerate() {
        for &j in succ.iter().flatten() {
            if i != j {
                preds[j].push(i);
            }
        }
    }
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for (i, s) in space.states.iter().enumerate() {
        if layout.is_terminal(s) {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(j) = queue.pop_front() {
        for &i in &preds[j] {
            if dist[i] == u32::MAX {
                dist[i] = dist[j] + 1;
                queue.push_back(i);
            }
        }
    }
    let mut entries = HashMap::with_capacity(n);
    for (i, s) in space.states.iter().enumerate() {
        let Some(succ) = space.successors[i] else { continue };
        if dist[i] == u32::MAX {
            return Err(Error::GoalUnreachable(space.env_id));
        }
        let q = succ.map(|j| if dist[j] == u32::MAX { f64::NEG_INFINITY } else { -(dist[j] as f64) - 1.0 });
        let action = Action::ALL
            .into_iter()
            .find(|a| dist[succ[a.index()]] != u32::MAX && dist[succ[a.index()]] + 1 == dist[i])
            .expect("a BFS predecessor always has an optimal successor");
        entries.insert(
            *s,
            PolicyEntry {
                action,
                steps: dist[i],
                q,
            },
        );
    }
    Ok(Policy {
        env_id: space.env_id,
        temperature: 0.0,
        entries,
    })
}

/// Serialized policy: state key → action index and state key → value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub env_id: usize,
    pub actions: BTreeMap<String, usize>,
    pub values: BTreeMap<String, f64>,
}

/// Policies of a whole catalog, keyed by environment id.
#[derive(Debug, Clone)]
pub struct PolicySet {
    policies: BTreeMap<usize, Policy>,
}

impl PolicySet {
    /// Plans every environment of the catalog in parallel.
    pub fn plan(catalog: &Catalog, temperature: f64) -> Result<Self> {
        let planned: Vec<Policy> = catalog
            .environments
            .par_iter()
            .map(|env| plan_optimal(&catalog.layout, env).map(|p| p.with_temperature(temperature)))
            .collect::<Result<_>>()?;
        Ok(Self {
            policies: planned.into_iter().map(|p| (p.env_id, p)).collect(),
        })
    }

    pub fn from_policies(policies: impl IntoIterator<Item = Policy>) -> Self {
        Self {
            policies: policies.into_iter().map(|p| (p.env_id, p)).collect(),
        }
    }

    pub fn get(&self, env_id: usize) -> Option<&Policy> {
        self.policies.get(&env_id)
    }

    pub fn policy(&self, env_id: usize) -> Result<&Policy> {
        self.get(env_id).ok_or(Error::UnknownEnvironment(env_id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Policy> {
        self.policies.values()
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn temperature(&self) -> f64 {
        self.policies.values().next().map_or(0.0, |p| p.temperature)
    }

    pub fn set_temperature(&mut self, temperature: f64) {
        for p in self.policies.values_mut() {
            p.temperature = temperature;
        }
    }

    /// `P(a | env, s)`, or `None` when `s` is not a decision state of `env`.
    pub fn satisfaction(&self, env_id: usize, s: &AgentState, a: Action) -> Option<f64> {
        self.get(env_id).and_then(|p| p.action_prob(s, a).ok())
    }

    pub fn to_file(&self) -> PolicyFile {
        PolicyFile {
            temperature: self.temperature(),
            policies: self
                .policies
                .iter()
                .map(|(id, p)| (id.to_string(), p.to_record()))
                .collect(),
        }
    }

    pub fn from_file(file: &PolicyFile, catalog: &Catalog) -> Result<Self> {
        let mut policies = BTreeMap::new();
        for record in file.policies.values() {
            let env = catalog.env(record.env_id)?;
            let p = Policy::from_record(record, &catalog.layout, env, file.temperature)?;
            policies.insert(p.env_id, p);
        }
        Ok(Self { policies })
    }
}

/// JSON layout of a policy set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub temperature: f64,
    pub policies: BTreeMap<String, PolicyRecord>,
}
