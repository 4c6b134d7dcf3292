use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{fmt3, to_csv, Report, Table};
use super::{trial_rng, Context, ExperimentConfig};
use crate::concept::{language_vector, pair_labeler, ConceptVector, RelationLabel};
use crate::error::{Error, Result};
use crate::estimator::explain;
use crate::gridworld::Catalog;

/// Ordered pairs `(m, n)` whose environments differ in exactly one object.
pub fn eligible_pairs(catalog: &Catalog) -> Vec<(usize, usize)> {
    let envs = &catalog.environments;
    let mut out = Vec::new();
    for m in envs {
        for n in envs {
            if (m.key != n.key) != (m.door != n.door) {
                out.push((m.env_id, n.env_id));
            }
        }
    }
    out
}

/// One language vector per relation label occurring in `pairs`; labels
/// without pairs are skipped.
pub fn language_vectors(ctx: &Context, pairs: &[(usize, usize)]) -> Result<(Vec<ConceptVector>, Vec<RelationLabel>)> {
    let mut by_label: BTreeMap<RelationLabel, Vec<(usize, usize)>> = BTreeMap::new();
    for &(m, n) in pairs {
        for l in pair_labeler(&ctx.catalog, m, n)? {
            by_label.entry(l).or_default().push((m, n));
        }
    }
    let mut vectors = Vec::new();
    let mut missing = Vec::new();
    for label in RelationLabel::ALL {
        match by_label.get(&label) {
            Some(p) => vectors.push(language_vector(&ctx.space, p, &label.text())?),
            None => missing.push(label),
        }
    }
    Ok((vectors, missing))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageRecord {
    pub pairs: usize,
    pub trial_id: u64,
    pub user_env: usize,
    pub agent_env: usize,
    pub correct: String,
    pub first: String,
    pub second: String,
    pub top1: bool,
    /// Whether at least two labels are correct for this pair.
    pub multi: bool,
    /// Both of the top two labels correct (only for `multi` pairs).
    pub top2: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageLevel {
    pub pairs: usize,
    pub trials: usize,
    pub top1_accuracy: f64,
    pub multi_trials: usize,
    pub top2_accuracy: Option<f64>,
    pub missing_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp7Report {
    pub eligible: usize,
    pub records: Vec<LanguageRecord>,
    pub levels: Vec<LanguageLevel>,
}

impl Exp7Report {
    pub fn level(&self, pairs: usize) -> Option<&LanguageLevel> {
        self.levels.iter().find(|l| l.pairs == pairs)
    }
}

pub fn run_exp7(ctx: &Context, cfg: &ExperimentConfig) -> Result<Exp7Report> {
    cfg.validate()?;
    let eligible = eligible_pairs(&ctx.catalog);
    if eligible.len() < 2 {
        return Err(Error::EmptyPairs("experiment 7 needs at least two eligible pairs".into()));
    }
    let mut records = Vec::new();
    let mut levels = Vec::new();
    for (level, &requested) in cfg.pair_counts.iter().enumerate() {
        let n = requested.min(eligible.len() - 1);
        if n != requested {
            log::warn!("experiment 7: {requested} training pairs requested, only {n} available");
        }
        let out: Vec<(LanguageRecord, Vec<RelationLabel>)> = (0..cfg.language_trials as u64)
            .into_par_iter()
            .map(|trial_id| {
                let mut rng = trial_rng(cfg.seed, ((level as u64) << 32) | trial_id);
                let train: Vec<(usize, usize)> = eligible.choose_multiple(&mut rng, n).copied().collect();
                let held: BTreeSet<&(usize, usize)> = train.iter().collect();
                let (m, k) = loop {
                    let p = eligible[rng.gen_range(0..eligible.len())];
                    if !held.contains(&p) {
                        break p;
                    }
                };
                let (vectors, missing) = language_vectors(ctx, &train)?;
                let correct = pair_labeler(&ctx.catalog, m, k)?;
                let names: BTreeSet<String> = correct.iter().map(|l| l.text()).collect();
                let e = explain(&ctx.space, m, k, &vectors)?;
                let first = e.ranked.first().map(|r| r.0.clone()).unwrap_or_default();
                let second = e.ranked.get(1).map(|r| r.0.clone()).unwrap_or_default();
                let multi = correct.len() >= 2;
                Ok((
                    LanguageRecord {
                        pairs: n,
                        trial_id,
                        user_env: m,
                        agent_env: k,
                        correct: names.iter().cloned().collect::<Vec<_>>().join("|"),
                        top1: names.contains(&first),
                        multi,
                        top2: multi.then(|| names.contains(&first) && names.contains(&second)),
                        first,
                        second,
                    },
                    missing,
                ))
            })
            .collect::<Result<_>>()?;
        let mut missing: BTreeSet<String> = BTreeSet::new();
        for (_, m) in &out {
            missing.extend(m.iter().map(|l| l.text()));
        }
        if !missing.is_empty() {
            log::warn!("experiment 7: no training pairs for {missing:?} at n = {n}; those labels were skipped");
        }
        let level_records: Vec<LanguageRecord> = out.into_iter().map(|(r, _)| r).collect();
        let multi: Vec<bool> = level_records.iter().filter_map(|r| r.top2).collect();
        levels.push(LanguageLevel {
            pairs: n,
            trials: level_records.len(),
            top1_accuracy: level_records.iter().filter(|r| r.top1).count() as f64 / level_records.len().max(1) as f64,
            multi_trials: multi.len(),
            top2_accuracy: (!multi.is_empty()).then(|| multi.iter().filter(|&&b| b).count() as f64 / multi.len() as f64),
            missing_labels: missing.into_iter().collect(),
        });
        records.extend(level_records);
    }
    Ok(Exp7Report {
        eligible: eligible.len(),
        records,
        levels,
    })
}

impl Report for Exp7Report {
    fn id(&self) -> u8 {
        7
    }

    fn csv(&self) -> Result<String> {
        to_csv(&self.records)
    }

    fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "experiment": 7,
            "eligible_pairs": self.eligible,
            "levels": self.levels,
        })
    }

    fn table(&self) -> Table {
        let mut t = Table::new(
            format!("Experiment 7: explanation accuracy ({} eligible pairs)", self.eligible),
            &["training pairs", "top-1", "1st and 2nd", "multi-label tests"],
        );
        for l in &self.levels {
            t.row(vec![
                l.pairs.to_string(),
                fmt3(l.top1_accuracy),
                l.top2_accuracy.map_or_else(|| "-".into(), fmt3),
                l.multi_trials.to_string(),
            ]);
        }
        t
    }
}
