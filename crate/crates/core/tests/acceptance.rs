//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wmest::embedding::{cosine, distance, sub, train};
use wmest::estimator::estimate;
use wmest::experiments::{
    run_exp1, run_exp2, run_exp3, run_exp4, run_exp5, run_exp6, run_exp7, Context, ExperimentConfig, Prior,
    EXP4_CAV_FREE, EXP4_CAV_SIMILAR, EXP4_PROB,
};
use wmest::stats::paired_t_test;
use wmest::worldgraph::{build_world_graphs, wl_corpus, WlDictionary, DEFAULT_WL_DEPTH};
use wmest::{
    Action, Catalog, EmbeddingSpace, EstimatorConfig, LayoutConfig, PolicySet, Query, ScoreMode, TrainConfig,
    WorldGraph,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, format!("took {took:.1?}, limit {limit:?}"))
}

fn catalog() -> &'static Catalog {
    static CATALOG: OnceLock<Catalog> = OnceLock::new();
    CATALOG.get_or_init(|| Catalog::build(LayoutConfig::default()).expect("default layout builds"))
}

/// The default pipeline, trained once.
fn context() -> &'static Context {
    static CTX: OnceLock<Context> = OnceLock::new();
    CTX.get_or_init(|| {
        let t = Instant::now();
        let ctx = Context::build(LayoutConfig::default(), DEFAULT_WL_DEPTH, &TrainConfig::default())
            .expect("default pipeline builds");
        println!("(trained default space in {:.1?})", t.elapsed());
        ctx
    })
}

fn door_and_key_crossings() -> Check {
    let start = Instant::now();
    let cat = catalog();
    let graphs = build_world_graphs(cat);
    for g in &graphs {
        let env = cat.env(g.env_id).map_err(|e| e.to_string())?;
        let door = g.edges.iter().filter(|&&(i, j)| g.nodes[i].door_open != g.nodes[j].door_open).count();
        ensure(door == 1, format!("env {}: {door} door-crossing edges", g.env_id))?;
        let key = g.edges.iter().filter(|&&(i, j)| g.nodes[i].has_key != g.nodes[j].has_key).count();
        let pickups = g
            .nodes
            .iter()
            .filter(|s| !s.has_key && cat.layout.step(env, **s, Action::Pickup).has_key)
            .count();
        ensure(key == pickups, format!("env {}: {key} key edges, {pickups} pickup states", g.env_id))?;
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("{} environments in {:.2?}", graphs.len(), start.elapsed()))
}

fn permuted(g: &WorldGraph, rng: &mut ChaCha8Rng) -> WorldGraph {
    let mut perm: Vec<usize> = (0..g.nodes.len()).collect();
    perm.shuffle(rng);
    let mut nodes = g.nodes.clone();
    for (old, &new) in perm.iter().enumerate() {
        nodes[new] = g.nodes[old];
    }
    WorldGraph::new(g.env_id, nodes, g.edges.iter().map(|&(i, j)| (perm[j], perm[i])))
}

fn embedding_properties() -> Check {
    let start = Instant::now();
    let graphs = build_world_graphs(catalog());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for round in 0..100 {
        let g = graphs.choose(&mut rng).expect("catalog is not empty");
        let reference = WlDictionary::new().label_bag(g, DEFAULT_WL_DEPTH);
        let other = WlDictionary::new().label_bag(&permuted(g, &mut rng), DEFAULT_WL_DEPTH);
        ensure(reference == other, format!("relabeling {round} of env {} changed the bag", g.env_id))?;
    }

    // A third of the catalog plus a copy of its first graph under a new id.
    let mut subset: Vec<WorldGraph> = graphs.iter().step_by(3).cloned().collect();
    let mut twin = subset[0].clone();
    twin.env_id = 10_000;
    subset.push(twin);
    let bags = wl_corpus(&subset, DEFAULT_WL_DEPTH);
    let cfg = TrainConfig::default();
    let a = train(&bags, &cfg).map_err(|e| e.to_string())?;
    let b = train(&bags, &cfg).map_err(|e| e.to_string())?;
    let bits = |s: &EmbeddingSpace| -> Vec<u64> { s.vectors.values().flatten().map(|x| x.to_bits()).collect() };
    ensure(bits(&a) == bits(&b), "same-seed training differs")?;
    let cos = cosine(a.vector(subset[0].env_id).unwrap(), a.vector(10_000).unwrap());
    ensure(cos >= 0.9, format!("duplicated graph cosine {cos:.4}"))?;

    let full = &context().space;
    let (first, last) = (full.epoch_losses[0], *full.epoch_losses.last().unwrap());
    ensure(last < first, format!("loss went from {first:.4} to {last:.4}"))?;
    within(start, Duration::from_secs(120))?;
    Ok(format!("duplicate cosine {cos:.4}, loss {first:.4} -> {last:.4}"))
}

fn exp1_clusters() -> Check {
    let ctx = context();
    let start = Instant::now();
    let r = run_exp1(ctx).map_err(|e| e.to_string())?;
    let door = r.ratio("door_row").ok_or("no door_row ratio")?;
    let key_x = r.ratio("key_x").ok_or("no key_x ratio")?;
    let detail = format!("r(door row) = {door:.3}, r(key x) = {key_x:.3}");
    ensure(door > 1.2, format!("{detail}; door ratio not above 1.2"))?;
    ensure(door > key_x, format!("{detail}; door ratio not above key x"))?;
    within(start, Duration::from_secs(60))?;
    Ok(detail)
}

fn exp2_ranking() -> Check {
    let ctx = context();
    let start = Instant::now();
    let r = run_exp2(ctx, &ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let (p, q) = (r.mean_proposed(), r.mean_random());
    let detail = format!("{} trials, proposed {p:.2} vs random {q:.2}", r.records.len());
    ensure(r.records.len() == 100, format!("{detail}; expected 100 trials"))?;
    ensure(p <= 0.5 * q, detail.clone())?;
    within(start, Duration::from_secs(120))?;
    Ok(detail)
}

fn p_of(report: &wmest::experiments::InteractionReport, first: &str, second: &str) -> Result<f64, String> {
    report
        .comparison("all", first, second)
        .and_then(|c| c.t_test.as_ref())
        .map(|t| t.p)
        .ok_or_else(|| format!("no t-test for {first} vs {second}"))
}

fn exp3_ordering() -> Check {
    let ctx = context();
    let start = Instant::now();
    let r = run_exp3(ctx, &ExperimentConfig::default(), &[]).map_err(|e| e.to_string())?;
    let m = |v: &str| r.mean_updates("all", v);
    let (p, a2, a1) = (m("Proposed"), m("ANDSearch2"), m("ANDSearch1"));
    let (p2, p1) = (p_of(&r, "Proposed", "ANDSearch2")?, p_of(&r, "Proposed", "ANDSearch1")?);
    let detail = format!("Proposed {p:.2}, ANDSearch2 {a2:.2}, ANDSearch1 {a1:.2}; p = {p2:.4}, {p1:.4}");
    ensure(p < a2 && a2 < a1, format!("{detail}; ordering"))?;
    ensure(p2 < 0.05 && p1 < 0.05, format!("{detail}; significance"))?;
    within(start, Duration::from_secs(300))?;
    Ok(detail)
}

fn exp4_ordering() -> Check {
    let ctx = context();
    let start = Instant::now();
    let r = run_exp4(ctx, &ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let m = |v: &str| r.mean_updates("all", v);
    let (sim, free, prob) = (m(EXP4_CAV_SIMILAR), m(EXP4_CAV_FREE), m(EXP4_PROB));
    let (pf, pp) = (p_of(&r, EXP4_CAV_SIMILAR, EXP4_CAV_FREE)?, p_of(&r, EXP4_CAV_SIMILAR, EXP4_PROB)?);
    let detail = format!("CAV(0.05) {sim:.2}, CAV(0) {free:.2}, Prob(0.05) {prob:.2}; p = {pf:.4}, {pp:.4}");
    ensure(sim < free && sim < prob, format!("{detail}; ordering"))?;
    ensure(pf < 0.05 && pp < 0.05, format!("{detail}; significance"))?;
    within(start, Duration::from_secs(300))?;
    Ok(detail)
}

fn exp5_degradation() -> Check {
    let ctx = context();
    let start = Instant::now();
    let r = run_exp5(ctx, &ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let at = |f: f64| -> Result<f64, String> {
        r.level(f).map(|l| l.cumulative[2]).ok_or_else(|| format!("no level for fraction {f:.3}"))
    };
    let (full, third, sixth) = (at(1.0)?, at(1.0 / 3.0)?, at(1.0 / 6.0)?);
    let detail = format!("order<=3 frequency: full {full:.2}, 1/3 {third:.2}, 1/6 {sixth:.2}");
    ensure(third >= 0.7 * full, format!("{detail}; 1/3 below 70% of full"))?;
    ensure(sixth < third, format!("{detail}; no drop at 1/6"))?;
    within(start, Duration::from_secs(300))?;
    Ok(detail)
}

fn exp6_user_vector() -> Check {
    let ctx = context();
    let start = Instant::now();
    let r = run_exp6(ctx, &ExperimentConfig::default(), &[Prior::Uniform, Prior::Linear])
        .map_err(|e| e.to_string())?;
    let uniform = Prior::Uniform.name();
    ensure(
        r.updates(&uniform, "QueryPlusUser") == r.updates(&uniform, "QueryOnly"),
        "uniform prior differs from QueryOnly",
    )?;
    let skewed = Prior::Linear.name();
    let (with, without) = (r.mean_updates(&skewed, "QueryPlusUser"), r.mean_updates(&skewed, "QueryOnly"));
    let p = r
        .comparison(&skewed, "QueryPlusUser", "QueryOnly")
        .and_then(|c| c.t_test.as_ref())
        .map_or(f64::NAN, |t| t.p);
    let detail = format!("uniform identical; {skewed}: QueryPlusUser {with:.2} vs QueryOnly {without:.2} (p = {p:.4})");
    ensure(with < without, detail.clone())?;
    within(start, Duration::from_secs(300))?;
    Ok(detail)
}

fn exp7_language() -> Check {
    let ctx = context();
    let start = Instant::now();
    let r = run_exp7(ctx, &ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let tenth = (r.eligible as f64 / 10.0).round() as usize;
    let top = r.level(tenth).ok_or_else(|| format!("no level at {tenth} pairs"))?.top1_accuracy;
    let mut levels: Vec<(usize, f64)> = r
        .levels
        .iter()
        .filter(|l| l.pairs <= tenth && l.pairs >= tenth / 8)
        .map(|l| (l.pairs, l.top1_accuracy))
        .collect();
    levels.sort_by_key(|l| std::cmp::Reverse(l.0));
    let smallest = levels.last().copied().ok_or("no levels")?;
    let trend: String = levels.iter().map(|(n, a)| format!("{n}:{a:.3}")).collect::<Vec<_>>().join(" ");
    let detail = format!("top-1 by pairs {trend}");
    ensure(top >= 0.75, format!("{detail}; below 0.75 at {tenth} pairs"))?;
    ensure(tenth / smallest.0 >= 7, format!("{detail}; smallest level is not ~8x fewer pairs"))?;
    // Trend: the least-squares slope against log(pairs) is non-negative and
    // the smallest level is below the largest.
    let xs: Vec<f64> = levels.iter().map(|l| (l.0 as f64).ln()).collect();
    let ys: Vec<f64> = levels.iter().map(|l| l.1).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
    let slope: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    ensure(slope >= 0.0 && smallest.1 < top, format!("{detail}; accuracy does not fall with fewer pairs"))?;
    ensure(ys.iter().all(|&a| a > 1.0 / 8.0), format!("{detail}; at or below chance"))?;
    within(start, Duration::from_secs(120))?;
    Ok(detail)
}

/// Weighted mean of satisfying environments minus weighted mean of the rest.
fn oracle_cav(space: &EmbeddingSpace, policies: &PolicySet, q: &Query) -> Vec<f64> {
    let mut pos = vec![0.0; space.dim];
    let mut neg = vec![0.0; space.dim];
    let (mut wp, mut wn) = (0.0, 0.0);
    for (&id, v) in &space.vectors {
        let Some(p) = policies.policy(id).unwrap().optimal_action(&q.state).map(|a| (a == q.action) as u8 as f64)
        else {
            continue;
        };
        for k in 0..space.dim {
            pos[k] += p * v[k];
            neg[k] += (1.0 - p) * v[k];
        }
        wp += p;
        wn += 1.0 - p;
    }
    (0..space.dim).map(|k| pos[k] / wp - neg[k] / wn).collect()
}

fn oracle_ranking(
    space: &EmbeddingSpace,
    policies: &PolicySet,
    obs: usize,
    queries: &[Query],
    lambda: f64,
    mode: ScoreMode,
) -> Vec<(usize, f64)> {
    let v_obs = &space.vectors[&obs];
    let cavs: Vec<Vec<f64>> = queries.iter().map(|q| oracle_cav(space, policies, q)).collect();
    let mut out: Vec<(usize, f64)> = space
        .vectors
        .iter()
        .map(|(&id, v)| {
            let gain: f64 = match mode {
                ScoreMode::Cav => queries
                    .iter()
                    .zip(&cavs)
                    .map(|(q, c)| q.weight * cosine(c, &sub(v, v_obs)))
                    .sum(),
                ScoreMode::Prob => queries
                    .iter()
                    .map(|q| {
                        let a = policies.policy(id).unwrap().optimal_action(&q.state);
                        q.weight * (a == Some(q.action)) as u8 as f64
                    })
                    .sum(),
            };
            (id, gain - lambda * distance(v, v_obs))
        })
        .collect();
    // Best first, ties to the smaller id.
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}

fn estimator_oracle() -> Check {
    let start = Instant::now();
    let cat = catalog();
    let policies = PolicySet::plan(cat, 0.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 50 {
        let dim = rng.gen_range(2..=12);
        let vectors: BTreeMap<usize, Vec<f64>> =
            cat.ids().map(|id| (id, (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect();
        let space = EmbeddingSpace::from_vectors(vectors).unwrap();
        let obs = rng.gen_range(0..cat.len());
        let mut queries = Vec::new();
        for _ in 0..rng.gen_range(1..=4) {
            let env = rng.gen_range(0..cat.len());
            let p = policies.policy(env).unwrap();
            let mut states: Vec<_> = p.states().copied().collect();
            states.sort();
            let s = *states.choose(&mut rng).unwrap();
            let mut q = Query::new(s, p.optimal_action(&s).unwrap());
            q.weight = rng.gen_range(0.5..2.0);
            queries.push(q);
        }
        let lambda = rng.gen_range(0.0..1.0);
        for mode in [ScoreMode::Cav, ScoreMode::Prob] {
            let cfg = EstimatorConfig::new(lambda, mode);
            let got = match estimate(&space, obs, &queries, &[], &policies, &cfg) {
                Ok(r) => r.ranking,
                // A query every environment satisfies has no contrast.
                Err(wmest::Error::DegenerateQuery(_)) => continue,
                Err(e) => return Err(e.to_string()),
            };
            let want = oracle_ranking(&space, &policies, obs, &queries, lambda, mode);
            let ids = |r: &[(usize, f64)]| r.iter().map(|x| x.0).collect::<Vec<_>>();
            ensure(ids(&got) == ids(&want), format!("instance {checked} {mode:?}: ranking differs"))?;
            for (g, w) in got.iter().zip(&want) {
                ensure((g.1 - w.1).abs() < 1e-9, format!("instance {checked}: score {} vs {}", g.1, w.1))?;
            }
        }
        checked += 1;
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("{checked} instances, both modes"))
}

fn t_test_oracle() -> Check {
    let t = paired_t_test(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).map_err(|e| e.to_string())?;
    let want = 2.0 * 3f64.sqrt();
    ensure((t.t - want).abs() < 1e-6, format!("t = {}", t.t))?;
    ensure(t.df == 2.0, format!("df = {}", t.df))?;
    ensure((t.p - 0.0742).abs() < 1e-4, format!("p = {}", t.p))?;
    Ok(format!("t = {:.6}, df = {}, p = {:.5}", t.t, t.df, t.p))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("door/key crossing structure", door_and_key_crossings),
        ("WL invariance and embedding properties", embedding_properties),
        ("exp1 door-row clustering", exp1_clusters),
        ("exp2 ranking vs random", exp2_ranking),
        ("exp3 Proposed < ANDSearch2 < ANDSearch1", exp3_ordering),
        ("exp4 CAV(0.05) beats CAV(0) and Prob(0.05)", exp4_ordering),
        ("exp5 sample-size degradation", exp5_degradation),
        ("exp6 user vector", exp6_user_vector),
        ("exp7 language accuracy", exp7_language),
        ("estimator oracle equivalence", estimator_oracle),
        ("paired t-test oracle", t_test_oracle),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
