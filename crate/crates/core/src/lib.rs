//! Estimating a user's world model from an agent's world model and the
//! user's queries.
//!
//! Each candidate environment is turned into a state-transition graph
//! ([`worldgraph`]), embedded with a graph2vec-style trainer
//! ([`embedding`]), and scored against query, user and language directions
//! in that space ([`concept`], [`estimator`]). [`experiments`] runs the
//! evaluation suites on top of the pipeline.

pub mod concept;
pub mod embedding;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod gridworld;
pub mod plot;
pub mod policy;
pub mod stats;
pub mod worldgraph;

pub use concept::{ConceptKind, ConceptVector, Query, RelationLabel, UserPrior};
pub use embedding::{EmbeddingSpace, TrainConfig};
pub use error::{Error, Result};
pub use estimator::{EstimationResult, EstimatorConfig, ScoreMode};
pub use gridworld::{Action, AgentState, Catalog, Cell, Environment, LayoutConfig, Orientation};
pub use policy::{Policy, PolicySet};
pub use worldgraph::{LabelBag, WorldGraph};
