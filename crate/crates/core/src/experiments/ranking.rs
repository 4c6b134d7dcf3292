use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{cumulative, fmt3, to_csv, Report, Table};
use super::{choose, trial_rng, Context, ExperimentConfig};
use crate::concept::{query_vector_over, ConceptVector, Object, Query};
use crate::error::{Error, Result};
use crate::estimator::{rank_concepts, EstimatorConfig};
use crate::gridworld::Action;
use crate::stats::{mean, paired_t_test, std_dev, TTest};

const SCENARIO_RETRIES: usize = 10;

/// One ranking trial: the agent's model, a query the agent's model does not
/// satisfy, and the minimally modified environment that does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub agent: usize,
    /// The environment the query was drawn from.
    pub target: usize,
    pub object: Object,
    pub query: Query,
    pub optimal: usize,
}

/// The query-satisfying environment closest to `agent`: fewest moved
/// objects, then smallest Manhattan displacement, then smallest env_id.
pub fn optimal_environment(ctx: &Context, agent: usize, q: &Query) -> Option<usize> {
    let a = ctx.env(agent);
    ctx.catalog
        .environments
        .iter()
        .filter(|e| ctx.satisfies(e.env_id, q))
        .min_by_key(|e| {
            let moved = (e.key != a.key) as i32 + (e.door != a.door) as i32;
            let shift = e.key.manhattan(a.key) + e.door.manhattan(a.door);
            (moved, shift, e.env_id)
        })
        .map(|e| e.env_id)
}

fn sample_scenario<R: Rng>(ctx: &Context, rng: &mut R) -> Option<Scenario> {
    let layout = ctx.layout();
    for _ in 0..SCENARIO_RETRIES {
        let agent = ctx.env(rng.gen_range(0..ctx.catalog.len()));
        let (object, target, action) = if rng.gen_bool(0.5) {
            let key = *layout.key_region.iter().filter(|&&c| c != agent.key).choose(rng)?;
            (Object::Key, ctx.with_key(agent, key)?, Action::Pickup)
        } else {
            let row = *layout.door_rows.iter().filter(|&&r| r != agent.door.y).choose(rng)?;
            (Object::Door, ctx.with_door_row(agent, row)?, Action::OpenDoor)
        };
        let states = ctx.states_choosing(target.env_id, action);
        if states.is_empty() {
            continue;
        }
        let query = Query::new(*choose(rng, &states), action);
        let Some(optimal) = optimal_environment(ctx, agent.env_id, &query) else {
            continue;
        };
        return Some(Scenario {
            agent: agent.env_id,
            target: target.env_id,
            object,
            query,
            optimal,
        });
    }
    None
}

fn rank_with(ctx: &Context, sc: &Scenario, cav: &ConceptVector, lambda: f64) -> Result<usize> {
    let r = rank_concepts(&ctx.space, sc.agent, std::slice::from_ref(cav), &EstimatorConfig::new(lambda, Default::default()))?;
    Ok(r.rank_of(sc.optimal).expect("nothing is excluded"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub trial_id: u64,
    pub agent: usize,
    pub target: usize,
    pub optimal: usize,
    pub action: Action,
    pub query_state: String,
    pub proposed_rank: usize,
    pub random_rank: usize,
    /// Environments satisfying the query (the random baseline's pool).
    pub satisfying: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Report {
    pub lambda: f64,
    pub records: Vec<RankRecord>,
    pub skipped: usize,
}

impl Exp2Report {
    pub fn mean_proposed(&self) -> f64 {
        mean(&self.records.iter().map(|r| r.proposed_rank as f64).collect::<Vec<_>>())
    }

    pub fn mean_random(&self) -> f64 {
        mean(&self.records.iter().map(|r| r.random_rank as f64).collect::<Vec<_>>())
    }

    pub fn cumulative(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let p: Vec<Option<usize>> = self.records.iter().map(|r| Some(r.proposed_rank)).collect();
        let q: Vec<Option<usize>> = self.records.iter().map(|r| Some(r.random_rank)).collect();
        (cumulative(&p, k), cumulative(&q, k))
    }

    pub fn t_test(&self) -> Result<TTest> {
        let p: Vec<f64> = self.records.iter().map(|r| r.proposed_rank as f64).collect();
        let q: Vec<f64> = self.records.iter().map(|r| r.random_rank as f64).collect();
        paired_t_test(&p, &q)
    }
}

pub fn run_exp2(ctx: &Context, cfg: &ExperimentConfig) -> Result<Exp2Report> {
    cfg.validate()?;
    let outcomes: Vec<Option<RankRecord>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial_id| {
            let mut rng = trial_rng(cfg.seed, trial_id);
            let Some(sc) = sample_scenario(ctx, &mut rng) else {
                log::warn!("experiment 2: trial {trial_id} found no usable query, skipped");
                return Ok(None);
            };
            let cav = query_vector_over(&ctx.space, &sc.query, &ctx.policies, ctx.space.ids())?;
            let proposed_rank = rank_with(ctx, &sc, &cav, cfg.ranking_lambda)?;
            let mut pool: Vec<usize> = ctx.catalog.ids().filter(|&id| ctx.satisfies(id, &sc.query)).collect();
            pool.shuffle(&mut rng);
            let random_rank = pool.iter().position(|&id| id == sc.optimal).expect("optimal satisfies") + 1;
            Ok(Some(RankRecord {
                trial_id,
                agent: sc.agent,
                target: sc.target,
                optimal: sc.optimal,
                action: sc.query.action,
                query_state: sc.query.state.key(),
                proposed_rank,
                random_rank,
                satisfying: pool.len(),
            }))
        })
        .collect::<Result<_>>()?;
    let skipped = outcomes.iter().filter(|o| o.is_none()).count();
    let records: Vec<RankRecord> = outcomes.into_iter().flatten().collect();
    if records.is_empty() {
        return Err(Error::Config("experiment 2 produced no usable trials".into()));
    }
    Ok(Exp2Report {
        lambda: cfg.ranking_lambda,
        records,
        skipped,
    })
}

impl Report for Exp2Report {
    fn id(&self) -> u8 {
        2
    }

    fn csv(&self) -> Result<String> {
        to_csv(&self.records)
    }

    fn summary(&self) -> serde_json::Value {
        let (p, r) = self.cumulative(5);
        let ranks = |f: fn(&RankRecord) -> usize| self.records.iter().map(|x| f(x) as f64).collect::<Vec<_>>();
        serde_json::json!({
            "experiment": 2,
            "trials": self.records.len(),
            "skipped": self.skipped,
            "lambda": self.lambda,
            "proposed": {
                "mean_rank": self.mean_proposed(),
                "sd_rank": std_dev(&ranks(|x| x.proposed_rank)),
                "cumulative_frequency": p,
            },
            "random": {
                "mean_rank": self.mean_random(),
                "sd_rank": std_dev(&ranks(|x| x.random_rank)),
                "cumulative_frequency": r,
            },
            "t_test": self.t_test().ok(),
        })
    }

    fn table(&self) -> Table {
        let (p, r) = self.cumulative(5);
        let mut t = Table::new(
            format!("Experiment 2: rank of the optimal environment ({} trials)", self.records.len()),
            &["method", "<=1", "<=2", "<=3", "<=4", "<=5", "mean rank"],
        );
        for (name, cum, m) in [("Proposed", p, self.mean_proposed()), ("Random", r, self.mean_random())] {
            let mut row = vec![name.to_string()];
            row.extend(cum.iter().map(|c| fmt3(*c)));
            row.push(fmt3(m));
            t.row(row);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub trial_id: u64,
    pub fraction: f64,
    pub samples: usize,
    /// `None` when the subsample left one side of the query empty.
    pub rank: Option<usize>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleLevel {
    pub fraction: f64,
    pub samples: usize,
    /// Fraction of trials with the optimal environment at order 1, ≤ 2, ≤ 3.
    pub cumulative: Vec<f64>,
    pub degenerate_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp5Report {
    pub lambda: f64,
    pub records: Vec<SampleRecord>,
    pub levels: Vec<SampleLevel>,
}

impl Exp5Report {
    pub fn level(&self, fraction: f64) -> Option<&SampleLevel> {
        self.levels.iter().find(|l| (l.fraction - fraction).abs() < 1e-9)
    }
}

pub fn run_exp5(ctx: &Context, cfg: &ExperimentConfig) -> Result<Exp5Report> {
    cfg.validate()?;
    let n_env = ctx.catalog.len();
    let sizes: Vec<(f64, usize)> = cfg
        .sample_fractions
        .iter()
        .map(|&f| (f, ((f * n_env as f64).round() as usize).clamp(1, n_env)))
        .collect();
    let per_trial: Vec<Vec<SampleRecord>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial_id| {
            let mut rng = trial_rng(cfg.seed, trial_id);
            let Some(sc) = sample_scenario(ctx, &mut rng) else {
                log::warn!("experiment 5: trial {trial_id} found no usable query, skipped");
                return Ok(Vec::new());
            };
            let ids: Vec<usize> = ctx.catalog.ids().collect();
            sizes
                .iter()
                .map(|&(fraction, samples)| {
                    let mut subset: Vec<usize> = ids.choose_multiple(&mut rng, samples).copied().collect();
                    subset.sort_unstable();
                    let rank = match query_vector_over(&ctx.space, &sc.query, &ctx.policies, subset) {
                        Ok(cav) => Some(rank_with(ctx, &sc, &cav, cfg.ranking_lambda)?),
                        Err(Error::DegenerateQuery(_)) => None,
                        Err(e) => return Err(e),
                    };
                    Ok(SampleRecord {
                        trial_id,
                        fraction,
                        samples,
                        rank,
                        degenerate: rank.is_none(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let records: Vec<SampleRecord> = per_trial.into_iter().flatten().collect();
    let levels = sizes
        .iter()
        .map(|&(fraction, samples)| {
            let ranks: Vec<Option<usize>> = records
                .iter()
                .filter(|r| r.fraction == fraction)
                .map(|r| r.rank)
                .collect();
            SampleLevel {
                fraction,
                samples,
                cumulative: cumulative(&ranks, 3),
                degenerate_rate: ranks.iter().filter(|r| r.is_none()).count() as f64 / ranks.len().max(1) as f64,
            }
        })
        .collect();
    Ok(Exp5Report {
        lambda: cfg.ranking_lambda,
        records,
        levels,
    })
}

impl Report for Exp5Report {
    fn id(&self) -> u8 {
        5
    }

    fn csv(&self) -> Result<String> {
        to_csv(&self.records)
    }

    fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "experiment": 5,
            "lambda": self.lambda,
            "levels": self.levels,
        })
    }

    fn table(&self) -> Table {
        let mut t = Table::new(
            "Experiment 5: cumulative frequency of the optimal environment by CAV sample size",
            &["samples", "<=1", "<=2", "<=3", "degenerate"],
        );
        for l in &self.levels {
            let mut row = vec![l.samples.to_string()];
            row.extend(l.cumulative.iter().map(|c| fmt3(*c)));
            row.push(fmt3(l.degenerate_rate));
            t.row(row);
        }
        t
    }
}
