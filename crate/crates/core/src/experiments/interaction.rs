use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{fmt3, to_csv, Report, Table};
use super::{choose, trial_rng, Context, ExperimentConfig, Method};
use crate::concept::{user_vector, ConceptVector, Query, UserPrior};
use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorConfig, ScoreMode};
use crate::gridworld::{Action, AgentState};
use crate::stats::{mean, paired_t_test, std_dev, TTest};

/// How A picks its next estimate of B's environment.
#[derive(Debug, Clone, PartialEq)]
pub enum Selector {
    /// Highest evaluation score against the query vectors plus `extra`.
    Cav { lambda: f64, extra: Vec<ConceptVector> },
    /// Highest summed query satisfaction.
    Prob { lambda: f64 },
    /// Uniform over environments satisfying the latest query (every query
    /// when `cumulative`). With `prefix`, candidates must also agree with
    /// the actions B endorsed in the latest presentation (in every
    /// presentation when `cumulative`).
    AndSearch { prefix: bool, cumulative: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    /// Environment selections, the initial one included.
    pub updates: usize,
    pub queries: usize,
    /// The selected environments in order.
    pub path: Vec<usize>,
}

/// Simulates the exchange between agent A (initially holding environment
/// `a`) and user B (holding `b`).
///
/// A presents the optimal action sequence of its current estimate, starting
/// from the state of the latest query (or the initial state before any
/// query, or when the estimate lacks that state). B checks each action
/// against its own optimal policy; at the first disagreement it adds the
/// query "in this state, take my action", and A re-estimates without ever
/// revisiting an environment.
pub fn interact<R: Rng>(ctx: &Context, a: usize, b: usize, selector: &Selector, rng: &mut R) -> Result<Outcome> {
    let layout = ctx.layout();
    let user = ctx.policies.policy(b)?;
    let mut est = a;
    let mut path = vec![a];
    let mut selected = BTreeSet::from([a]);
    let mut queries: Vec<Query> = Vec::new();
    // The newest correction, which may repeat an earlier one.
    let mut newest: Option<Query> = None;
    let mut endorsed_all: BTreeMap<AgentState, Action> = BTreeMap::new();

    while est != b {
        let policy = ctx.policies.policy(est)?;
        let start = match &newest {
            Some(q) if policy.contains(&q.state) => q.state,
            _ => layout.initial_state(),
        };
        let shown = policy.rollout(layout, ctx.env(est), start);
        let mut latest = BTreeMap::new();
        for (s, act) in shown {
            match user.optimal_action(&s) {
                Some(wanted) if wanted == act => {
                    latest.insert(s, act);
                }
                Some(wanted) => {
                    let q = Query::new(s, wanted);
                    if !queries.contains(&q) {
                        queries.push(q);
                    }
                    newest = Some(q);
                    break;
                }
                // B cannot judge a state its own world does not have.
                None => break,
            }
        }
        endorsed_all.extend(latest.iter().map(|(s, a)| (*s, *a)));
        let evidence = Evidence {
            queries: &queries,
            newest: newest.as_ref(),
            endorsed: &latest,
            endorsed_all: &endorsed_all,
        };
        est = select(ctx, a, &selected, &evidence, selector, rng)?;
        selected.insert(est);
        path.push(est);
    }
    Ok(Outcome {
        updates: path.len(),
        queries: queries.len(),
        path,
    })
}

struct Evidence<'a> {
    queries: &'a [Query],
    newest: Option<&'a Query>,
    endorsed: &'a BTreeMap<AgentState, Action>,
    endorsed_all: &'a BTreeMap<AgentState, Action>,
}

fn select<R: Rng>(
    ctx: &Context,
    a: usize,
    selected: &BTreeSet<usize>,
    evidence: &Evidence,
    selector: &Selector,
    rng: &mut R,
) -> Result<usize> {
    let queries = evidence.queries;
    let cfg = |lambda, mode| EstimatorConfig {
        lambda,
        excluded: selected.clone(),
        mode,
    };
    match selector {
        Selector::Cav { lambda, extra } => {
            Ok(estimate(&ctx.space, a, queries, extra, &ctx.policies, &cfg(*lambda, ScoreMode::Cav))?.env_est)
        }
        Selector::Prob { lambda } => {
            Ok(estimate(&ctx.space, a, queries, &[], &ctx.policies, &cfg(*lambda, ScoreMode::Prob))?.env_est)
        }
        Selector::AndSearch { prefix, cumulative } => {
            let (required, endorsed) = if *cumulative {
                (queries, evidence.endorsed_all)
            } else {
                (evidence.newest.map(std::slice::from_ref).unwrap_or_default(), evidence.endorsed)
            };
            let pool: Vec<usize> = ctx
                .catalog
                .ids()
                .filter(|id| !selected.contains(id))
                .filter(|&id| required.iter().all(|q| ctx.satisfies(id, q)))
                .filter(|&id| {
                    !prefix || {
                        let p = ctx.policies.get(id).expect("catalog environment has a policy");
                        endorsed.iter().all(|(s, act)| p.optimal_action(s) == Some(*act))
                    }
                })
                .collect();
            if pool.is_empty() {
                return Err(Error::Exhausted);
            }
            Ok(*choose(rng, &pool))
        }
    }
}

/// One compared configuration of an interactive experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub variant: String,
    pub method: Method,
    pub selector: Selector,
}

impl Arm {
    pub fn new(variant: impl Into<String>, method: Method, selector: Selector) -> Self {
        Self {
            variant: variant.into(),
            method,
            selector,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub trial_id: u64,
    pub group: String,
    pub variant: String,
    pub method: Method,
    pub agent: usize,
    pub user: usize,
    pub updates: usize,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub group: String,
    pub first: String,
    pub second: String,
    pub mean_first: f64,
    pub mean_second: f64,
    /// `None` when the differences are constant and non-zero.
    pub t_test: Option<TTest>,
    /// Bonferroni-adjusted p, where the experiment applies it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_adjusted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionReport {
    pub id: u8,
    pub title: String,
    pub records: Vec<InteractionRecord>,
    pub comparisons: Vec<Comparison>,
}

pub type Exp3Report = InteractionReport;
pub type Exp4Report = InteractionReport;
pub type Exp6Report = InteractionReport;

impl InteractionReport {
    pub fn updates(&self, group: &str, variant: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.group == group && r.variant == variant)
            .map(|r| r.updates as f64)
            .collect()
    }

    pub fn mean_updates(&self, group: &str, variant: &str) -> f64 {
        mean(&self.updates(group, variant))
    }

    pub fn comparison(&self, group: &str, first: &str, second: &str) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.group == group && c.first == first && c.second == second)
    }

    fn groups(&self) -> Vec<(String, String)> {
        let mut seen = Vec::new();
        for r in &self.records {
            let k = (r.group.clone(), r.variant.clone());
            if !seen.contains(&k) {
                seen.push(k);
            }
        }
        seen
    }

    fn compare(&mut self, group: &str, first: &str, second: &str, bonferroni: usize) {
        let x = self.updates(group, first);
        let y = self.updates(group, second);
        if x.is_empty() || y.is_empty() {
            return;
        }
        let t_test = paired_t_test(&x, &y).ok();
        let p_adjusted = (bonferroni > 1).then(|| t_test.map_or(1.0, |t| (t.p * bonferroni as f64).min(1.0)));
        self.comparisons.push(Comparison {
            group: group.to_string(),
            first: first.to_string(),
            second: second.to_string(),
            mean_first: mean(&x),
            mean_second: mean(&y),
            t_test,
            p_adjusted,
        });
    }
}

impl Report for InteractionReport {
    fn id(&self) -> u8 {
        self.id
    }

    fn csv(&self) -> Result<String> {
        to_csv(&self.records)
    }

    fn summary(&self) -> serde_json::Value {
        let arms: Vec<serde_json::Value> = self
            .groups()
            .into_iter()
            .map(|(g, v)| {
                let u = self.updates(&g, &v);
                let q: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.group == g && r.variant == v)
                    .map(|r| r.queries as f64)
                    .collect();
                serde_json::json!({
                    "group": g,
                    "variant": v,
                    "trials": u.len(),
                    "mean_updates": mean(&u),
                    "sd_updates": std_dev(&u),
                    "mean_queries": mean(&q),
                })
            })
            .collect();
        serde_json::json!({
            "experiment": self.id,
            "arms": arms,
            "comparisons": self.comparisons,
        })
    }

    fn table(&self) -> Table {
        let mut t = Table::new(self.title.clone(), &["group", "variant", "mean updates", "sd", "mean queries"]);
        for (g, v) in self.groups() {
            let u = self.updates(&g, &v);
            let q: Vec<f64> = self
                .records
                .iter()
                .filter(|r| r.group == g && r.variant == v)
                .map(|r| r.queries as f64)
                .collect();
            t.row(vec![g, v, fmt3(mean(&u)), fmt3(std_dev(&u)), fmt3(mean(&q))]);
        }
        for c in &self.comparisons {
            let stat = match c.t_test {
                Some(tt) => format!("t({:.0}) = {:.3}, p = {:.4}", tt.df, tt.t, tt.p),
                None => "t undefined".to_string(),
            };
            let adj = c.p_adjusted.map(|p| format!(", Bonferroni p = {p:.4}")).unwrap_or_default();
            t.row(vec![c.group.clone(), format!("{} vs {}", c.first, c.second), stat + &adj, String::new(), String::new()]);
        }
        t
    }
}

fn run_arms(
    ctx: &Context,
    cfg: &ExperimentConfig,
    group: &str,
    arms: &[Arm],
    draw: impl Fn(&mut ChaCha8Rng) -> (usize, usize) + Sync,
) -> Result<Vec<InteractionRecord>> {
    let per_trial: Vec<Vec<InteractionRecord>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial_id| {
            let mut rng = trial_rng(cfg.seed, trial_id);
            let (a, b) = draw(&mut rng);
            let arm_seeds: Vec<u64> = arms.iter().map(|_| rng.gen()).collect();
            arms.iter()
                .zip(arm_seeds)
                .map(|(arm, s)| {
                    let mut arm_rng = ChaCha8Rng::seed_from_u64(s);
                    let out = interact(ctx, a, b, &arm.selector, &mut arm_rng)?;
                    Ok(InteractionRecord {
                        trial_id,
                        group: group.to_string(),
                        variant: arm.variant.clone(),
                        method: arm.method,
                        agent: a,
                        user: b,
                        updates: out.updates,
                        queries: out.queries,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Experiment 3 arms: the proposed estimator and both AND searches.
pub fn exp3_arms(lambda: f64, cumulative: bool) -> Vec<Arm> {
    vec![
        Arm::new("Proposed", Method::Proposed, Selector::Cav { lambda, extra: Vec::new() }),
        Arm::new("ANDSearch1", Method::AndSearch1, Selector::AndSearch { prefix: false, cumulative }),
        Arm::new("ANDSearch2", Method::AndSearch2, Selector::AndSearch { prefix: true, cumulative }),
    ]
}

/// Runs experiment 3 on `methods` (all three when empty).
pub fn run_exp3(ctx: &Context, cfg: &ExperimentConfig, methods: &[Method]) -> Result<Exp3Report> {
    cfg.validate()?;
    let arms: Vec<Arm> = exp3_arms(cfg.interaction_lambda, cfg.cumulative_and_search)
        .into_iter()
        .filter(|a| methods.is_empty() || methods.contains(&a.method))
        .collect();
    if arms.is_empty() {
        return Err(Error::Config("experiment 3 compares Proposed, ANDSearch1 and ANDSearch2".into()));
    }
    let n = ctx.catalog.len();
    let records = run_arms(ctx, cfg, "all", &arms, |rng| (rng.gen_range(0..n), rng.gen_range(0..n)))?;
    let mut report = InteractionReport {
        id: 3,
        title: format!("Experiment 3: environment updates until agreement (lambda = {})", cfg.interaction_lambda),
        records,
        comparisons: Vec::new(),
    };
    report.compare("all", "Proposed", "ANDSearch2", 1);
    report.compare("all", "Proposed", "ANDSearch1", 1);
    report.compare("all", "ANDSearch2", "ANDSearch1", 1);
    Ok(report)
}

pub const EXP4_CAV_SIMILAR: &str = "CAV(lambda=similar)";
pub const EXP4_CAV_FREE: &str = "CAV(lambda=0)";
pub const EXP4_PROB: &str = "Probabilistic(lambda=similar)";

/// Experiment 4: B's environment shares A's key or A's door.
pub fn run_exp4(ctx: &Context, cfg: &ExperimentConfig) -> Result<Exp4Report> {
    cfg.validate()?;
    let l = cfg.similar_lambda;
    let arms = vec![
        Arm::new(EXP4_CAV_SIMILAR, Method::Proposed, Selector::Cav { lambda: l, extra: Vec::new() }),
        Arm::new(EXP4_CAV_FREE, Method::Proposed, Selector::Cav { lambda: 0.0, extra: Vec::new() }),
        Arm::new(EXP4_PROB, Method::Probabilistic, Selector::Prob { lambda: l }),
    ];
    let layout = ctx.layout();
    let records = run_arms(ctx, cfg, "all", &arms, |rng| {
        let a = ctx.env(rng.gen_range(0..ctx.catalog.len()));
        let b = if rng.gen_bool(0.5) {
            let keys: Vec<_> = layout.key_region.iter().filter(|&&k| k != a.key).copied().collect();
            ctx.with_key(a, *choose(rng, &keys))
        } else {
            let rows: Vec<i32> = layout.door_rows.iter().filter(|&&r| r != a.door.y).copied().collect();
            ctx.with_door_row(a, *choose(rng, &rows))
        };
        (a.env_id, b.expect("moved placement lies in the catalog").env_id)
    })?;
    let mut report = InteractionReport {
        id: 4,
        title: format!("Experiment 4: updates when key or door is shared (similar lambda = {l})"),
        records,
        comparisons: Vec::new(),
    };
    report.compare("all", EXP4_CAV_SIMILAR, EXP4_CAV_FREE, 2);
    report.compare("all", EXP4_CAV_SIMILAR, EXP4_PROB, 2);
    Ok(report)
}

/// Distribution of B's door row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    Uniform,
    /// Weight growing linearly with the door row (lower rows likelier).
    Linear,
    /// Weight peaking at the middle rows.
    Triangular,
    /// All mass on one row.
    Point(i32),
}

impl Prior {
    pub fn name(&self) -> String {
        match self {
            Prior::Uniform => "uniform".into(),
            Prior::Linear => "prior1".into(),
            Prior::Triangular => "prior2".into(),
            Prior::Point(r) => format!("point{r}"),
        }
    }

    /// Normalized weight of each of `rows` (in the given order).
    pub fn weights(&self, rows: &[i32]) -> Vec<f64> {
        let n = rows.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| rows[i]);
        let mut w = vec![0.0; n];
        for (rank, &i) in order.iter().enumerate() {
            w[i] = match self {
                Prior::Uniform => 1.0,
                Prior::Linear => (rank + 1) as f64,
                Prior::Triangular => (rank + 1).min(n - rank) as f64,
                Prior::Point(r) => (rows[i] == *r) as u8 as f64,
            };
        }
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect()
    }
}

impl std::str::FromStr for Prior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Prior::Uniform),
            "1" | "prior1" | "linear" => Ok(Prior::Linear),
            "2" | "prior2" | "triangular" => Ok(Prior::Triangular),
            other => match other.strip_prefix("point").map(str::parse) {
                Some(Ok(r)) => Ok(Prior::Point(r)),
                _ => Err(Error::Parse(format!("unknown prior {other:?}"))),
            },
        }
    }
}

/// `P(v_i)`: the prior of the environment's door row spread evenly over the
/// key placements.
pub fn environment_prior(ctx: &Context, prior: Prior) -> UserPrior {
    let rows = &ctx.layout().door_rows;
    let w = prior.weights(rows);
    let keys = ctx.layout().key_region.len() as f64;
    UserPrior {
        p: ctx
            .catalog
            .environments
            .iter()
            .map(|e| {
                let i = rows.iter().position(|&r| r == e.door.y).expect("door row in layout");
                (e.env_id, w[i] / keys)
            })
            .collect(),
    }
}

/// Experiment 6: the user vector as an extra query, for each prior.
pub fn run_exp6(ctx: &Context, cfg: &ExperimentConfig, priors: &[Prior]) -> Result<Exp6Report> {
    cfg.validate()?;
    let priors: Vec<Prior> = if priors.is_empty() {
        vec![Prior::Linear, Prior::Triangular, Prior::Uniform]
    } else {
        priors.to_vec()
    };
    let l = cfg.interaction_lambda;
    let layout = ctx.layout();
    let mut records = Vec::new();
    for prior in &priors {
        let user = user_vector(&ctx.space, &environment_prior(ctx, *prior))?;
        let arms = vec![
            Arm::new("QueryOnly", Method::QueryOnly, Selector::Cav { lambda: l, extra: Vec::new() }),
            Arm::new("QueryPlusUser", Method::QueryPlusUser, Selector::Cav { lambda: l, extra: vec![user] }),
        ];
        let rows = layout.door_rows.clone();
        let row_dist = WeightedIndex::new(prior.weights(&rows)).map_err(|e| Error::Config(e.to_string()))?;
        records.extend(run_arms(ctx, cfg, &prior.name(), &arms, |rng| {
            let a = rng.gen_range(0..ctx.catalog.len());
            let row = rows[row_dist.sample(rng)];
            let key = *choose(rng, &layout.key_region);
            let b = ctx.catalog.find(key, crate::gridworld::Cell::new(layout.wall_column, row));
            (a, b.expect("prior rows lie in the catalog").env_id)
        })?);
    }
    let mut report = InteractionReport {
        id: 6,
        title: format!("Experiment 6: user vectors as an extra query (lambda = {l})"),
        records,
        comparisons: Vec::new(),
    };
    for prior in &priors {
        report.compare(&prior.name(), "QueryPlusUser", "QueryOnly", 1);
    }
    Ok(report)
}
