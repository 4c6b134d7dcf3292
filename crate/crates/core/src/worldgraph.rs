//! Undirected world-model graphs and Weisfeiler–Lehman label bags.
//!
//! A world graph has one node per reachable agent state and an edge between
//! two states whenever a single action moves from one to the other. Node
//! labels are the five state features; the key and door positions only name
//! the graph and never appear inside it.
//!
//! WL relabeling compresses `(own label, sorted neighbour labels)` through a
//! dictionary shared by the whole corpus. Ids are handed out in sorted key
//! order within each graph and in env-id order across graphs, so the labels
//! are reproducible and independent of node numbering.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gridworld::{Action, AgentState, Catalog, Environment, LayoutConfig};
use crate::policy::Policy;

pub type Label = u32;

pub const DEFAULT_WL_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldGraph {
    pub env_id: usize,
    pub nodes: Vec<AgentState>,
    /// Unordered pairs `(i, j)`, `i < j`.
    pub edges: Vec<(usize, usize)>,
}

impl WorldGraph {
    /// Builds a graph from arbitrary node/edge lists, dropping self-loops and
    /// duplicate edges.
    pub fn new(env_id: usize, nodes: Vec<AgentState>, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let edges: BTreeSet<(usize, usize)> = edges
            .into_iter()
            .filter(|(i, j)| i != j)
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
        Self {
            env_id,
            nodes,
            edges: edges.into_iter().collect(),
        }
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    pub fn features(&self) -> Vec<[i32; 5]> {
        self.nodes.iter().map(|s| s.features()).collect()
    }

    pub fn to_record(&self) -> GraphRecord {
        GraphRecord {
            env_id: self.env_id,
            nodes: self.features(),
            adjacency: self.adjacency(),
        }
    }

    pub fn from_record(r: &GraphRecord) -> Result<Self> {
        let nodes = r
            .nodes
            .iter()
            .map(|f| {
                AgentState::from_features(*f)
                    .ok_or_else(|| crate::error::Error::Parse(format!("bad node features {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = r
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().map(move |&j| (i, j)));
        Ok(Self::new(r.env_id, nodes, edges))
    }
}

/// Exhaustive graph: every reachable state and every non-trivial transition.
pub fn build_world_graph(layout: &LayoutConfig, env: &Environment) -> WorldGraph {
    let space = layout.explore(env);
    let edges = space.edges();
    WorldGraph {
        env_id: env.env_id,
        nodes: space.states,
        edges,
    }
}

pub fn build_world_graphs(catalog: &Catalog) -> Vec<WorldGraph> {
    catalog
        .environments
        .par_iter()
        .map(|env| build_world_graph(&catalog.layout, env))
        .collect()
}

/// Partial-experience mode: transitions observed during ε-greedy rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledCoverage {
    pub episodes: usize,
    pub epsilon: f64,
    pub max_steps: usize,
}

impl Default for SampledCoverage {
    fn default() -> Self {
        Self {
            episodes: 50,
            epsilon: 0.3,
            max_steps: 200,
        }
    }
}

pub fn build_sampled_world_graph<R: Rng>(
    layout: &LayoutConfig,
    env: &Environment,
    policy: &Policy,
    cfg: &SampledCoverage,
    rng: &mut R,
) -> WorldGraph {
    let mut states: BTreeSet<AgentState> = BTreeSet::new();
    let mut pairs: BTreeSet<(AgentState, AgentState)> = BTreeSet::new();
    for _ in 0..cfg.episodes {
        let mut s = layout.initial_state();
        states.insert(s);
        for _ in 0..cfg.max_steps {
            if layout.is_terminal(&s) {
                break;
            }
            let a = match policy.optimal_action(&s) {
                Some(a) if rng.gen::<f64>() >= cfg.epsilon => a,
                _ => Action::ALL[rng.gen_range(0..Action::ALL.len())],
            };
            let t = layout.step(env, s, a);
            if t != s {
                states.insert(t);
                pairs.insert((s.min(t), s.max(t)));
            }
            s = t;
        }
    }
    let nodes: Vec<AgentState> = states.into_iter().collect();
    let index: HashMap<AgentState, usize> = nodes.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let edges = pairs.iter().map(|(a, b)| (index[a], index[b])).collect::<Vec<_>>();
    WorldGraph::new(env.env_id, nodes, edges)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum WlKey {
    Base([i32; 5]),
    Refined(Label, Vec<Label>),
}

/// Insertion-ordered compression dictionary shared across a corpus.
#[derive(Debug, Clone, Default)]
pub struct WlDictionary {
    ids: HashMap<WlKey, Label>,
}

/// The multiset of WL labels of one graph over depths `0..=depth`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelBag {
    pub env_id: usize,
    pub depth: usize,
    pub counts: BTreeMap<Label, u32>,
}

impl LabelBag {
    pub fn len(&self) -> usize {
        self.counts.values().map(|&c| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

impl WlDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn assign(&mut self, keys: &[WlKey]) -> Vec<Label> {
        let mut distinct: Vec<&WlKey> = keys.iter().collect();
        distinct.sort();
        distinct.dedup();
        for k in distinct {
            let next = self.ids.len() as Label;
            self.ids.entry(k.clone()).or_insert(next);
        }
        keys.iter().map(|k| self.ids[k]).collect()
    }

    /// Label bag of a single graph, extending the dictionary as needed.
    pub fn label_bag(&mut self, g: &WorldGraph, depth: usize) -> LabelBag {
        self.relabel_corpus(std::slice::from_ref(g), depth).pop().expect("one graph in, one bag out")
    }

    /// Label bags of a corpus. Each round proposes keys for all graphs in
    /// parallel, then assigns ids sequentially in env-id order.
    pub fn relabel_corpus(&mut self, graphs: &[WorldGraph], depth: usize) -> Vec<LabelBag> {
        let mut order: Vec<usize> = (0..graphs.len()).collect();
        order.sort_by_key(|&i| graphs[i].env_id);
        let adjacency: Vec<Vec<Vec<usize>>> = graphs.par_iter().map(|g| g.adjacency()).collect();

        let mut current: Vec<Vec<Label>> = vec![Vec::new(); graphs.len()];
        let mut bags: Vec<BTreeMap<Label, u32>> = vec![BTreeMap::new(); graphs.len()];
        for round in 0..=depth {
            let proposals: Vec<Vec<WlKey>> = (0..graphs.len())
                .into_par_iter()
                .map(|gi| {
                    let g = &graphs[gi];
                    if round == 0 {
                        g.nodes.iter().map(|s| WlKey::Base(s.features())).collect()
                    } else {
                        let prev = &current[gi];
                        adjacency[gi]
                            .iter()
                            .enumerate()
                            .map(|(v, ns)| {
                                let mut neigh: Vec<Label> = ns.iter().map(|&u| prev[u]).collect();
                                neigh.sort_unstable();
                                WlKey::Refined(prev[v], neigh)
                            })
                            .collect()
                    }
                })
                .collect();
            for &gi in &order {
                let labels = self.assign(&proposals[gi]);
                for &l in &labels {
                    *bags[gi].entry(l).or_insert(0) += 1;
                }
                current[gi] = labels;
            }
        }
        graphs
            .iter()
            .zip(bags)
            .map(|(g, counts)| LabelBag {
                env_id: g.env_id,
                depth,
                counts,
            })
            .collect()
    }
}

/// Label bags for a corpus with a fresh dictionary.
pub fn wl_corpus(graphs: &[WorldGraph], depth: usize) -> Vec<LabelBag> {
    WlDictionary::new().relabel_corpus(graphs, depth)
}

/// JSON form of a graph: feature tuples plus adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub env_id: usize,
    pub nodes: Vec<[i32; 5]>,
    pub adjacency: Vec<Vec<usize>>,
}

/// JSON form of a corpus of label bags (`label → count` per environment).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagFile {
    pub depth: usize,
    pub bags: BTreeMap<String, BTreeMap<String, u32>>,
}

impl BagFile {
    pub fn from_bags(bags: &[LabelBag]) -> Self {
        Self {
            depth: bags.first().map_or(DEFAULT_WL_DEPTH, |b| b.depth),
            bags: bags
                .iter()
                .map(|b| {
                    (
                        b.env_id.to_string(),
                        b.counts.iter().map(|(l, c)| (l.to_string(), *c)).collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn to_bags(&self) -> Result<Vec<LabelBag>> {
        let parse = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| crate::error::Error::Parse(format!("{s:?}: {e}")))
        };
        let mut out = Vec::with_capacity(self.bags.len());
        for (id, counts) in &self.bags {
            let counts = counts
                .iter()
                .map(|(l, c)| Ok((parse(l)? as Label, *c)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            out.push(LabelBag {
                env_id: parse(id)? as usize,
                depth: self.depth,
                counts,
            });
        }
        out.sort_by_key(|b| b.env_id);
        Ok(out)
    }
}
