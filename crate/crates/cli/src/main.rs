mod config;
mod store;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use wmest::concept::QueryRecord;
use wmest::embedding::train;
use wmest::estimator::{estimate, explain};
use wmest::experiments::{
    eligible_pairs, language_vectors, run_exp1, run_exp2, run_exp3, run_exp4, run_exp5, run_exp6, run_exp7,
    write_report, ExperimentConfig, Method, Prior, Report,
};
use wmest::worldgraph::{build_world_graphs, wl_corpus, BagFile, GraphRecord};
use wmest::{Catalog, EstimatorConfig, LayoutConfig, PolicySet, ScoreMode};

use config::RunConfig;
use store::{read_input, write_json, Inputs};

#[derive(Parser, Debug)]
#[command(name = "wmest", version, about = "Estimate a user's world model from queries over embedded environments")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory, or a `.json` file for single-artifact commands.
    /// Inputs are looked up in the same directory.
    #[arg(long, global = true, env = "WM_OUT", value_name = "PATH")]
    out: Option<PathBuf>,
    /// Overrides the training seed (train) or the experiment seed (exp).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct InputArgs {
    #[arg(long, value_name = "FILE")]
    catalog: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    policies: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    space: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enumerate the key/door catalog.
    Catalog {
        /// Layout JSON; defaults to the config's layout.
        #[arg(long, value_name = "FILE")]
        layout: Option<PathBuf>,
    },
    /// Plan an optimal policy for every environment.
    Plan {
        #[arg(long, value_name = "FILE")]
        catalog: Option<PathBuf>,
        /// Softmax temperature for action probabilities; 0 gives indicators.
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
    },
    /// Build world graphs and their WL label bags.
    Graphs {
        #[arg(long, value_name = "FILE")]
        catalog: Option<PathBuf>,
        /// WL depth; defaults to the config's training.wl_depth.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Train environment embeddings from the label bags.
    Train {
        /// Directory holding bags.json.
        #[arg(long, value_name = "DIR")]
        graphs: Option<PathBuf>,
    },
    /// Rank environments for a set of queries and print the result as JSON.
    Estimate {
        /// The agent's current environment.
        #[arg(long)]
        obs: usize,
        /// JSON array of queries.
        #[arg(long, value_name = "FILE")]
        queries: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        mode: Option<ScoreMode>,
        /// Environments to leave out, comma separated.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<usize>,
        /// Attach the best relation label for the estimate.
        #[arg(long)]
        explain: bool,
        #[command(flatten)]
        inputs: InputArgs,
    },
    /// Run an experiment (1 to 7), write its CSV and JSON and print a summary.
    Exp {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=7))]
        id: u8,
        #[arg(long)]
        trials: Option<usize>,
        /// Distance penalty of the experiment's main estimator.
        #[arg(long)]
        lambda: Option<f64>,
        /// Experiment 3 only: methods to run (repeatable).
        #[arg(long)]
        method: Vec<Method>,
        /// Experiment 6 only: priors to run (repeatable): uniform, prior1, prior2, point<row>.
        #[arg(long)]
        prior: Vec<Prior>,
        #[command(flatten)]
        inputs: InputArgs,
    },
    /// Render an experiment's plot as SVG.
    Plot {
        #[arg(long = "exp")]
        id: u8,
        #[command(flatten)]
        inputs: InputArgs,
    },
}

/// Where a command writes: a file when `--out` names a `.json`, otherwise
/// `name` inside the output directory.
struct Out {
    dir: PathBuf,
    file: Option<PathBuf>,
}

impl Out {
    fn new(flag: Option<PathBuf>, cfg: &RunConfig) -> Self {
        let path = flag.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        if path.extension().is_some_and(|e| e == "json") {
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            Self { dir, file: Some(path) }
        } else {
            Self { dir: path, file: None }
        }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.file.clone().unwrap_or_else(|| self.dir.join(name))
    }

    fn inputs<'a>(&'a self, args: &'a InputArgs) -> Inputs<'a> {
        Inputs {
            dir: &self.dir,
            catalog: args.catalog.as_deref(),
            policies: args.policies.as_deref(),
            space: args.space.as_deref(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let out = Out::new(cli.out, &cfg);
    match cli.command {
        Command::Catalog { layout } => {
            let layout: LayoutConfig = match layout {
                Some(p) => read_input(&p)?,
                None => cfg.layout.clone(),
            };
            let catalog = Catalog::build(layout)?;
            let path = out.file(store::CATALOG);
            write_json(&path, &catalog)?;
            println!("{} environments -> {}", catalog.len(), path.display());
        }
        Command::Plan { catalog, temperature } => {
            let catalog = out.inputs(&InputArgs { catalog, ..Default::default() }).catalog()?;
            let t = Instant::now();
            let policies = PolicySet::plan(&catalog, temperature)?;
            let path = out.file(store::POLICIES);
            write_json(&path, &policies.to_file())?;
            println!("{} policies in {:.2?} -> {}", policies.len(), t.elapsed(), path.display());
        }
        Command::Graphs { catalog, depth } => {
            let catalog = out.inputs(&InputArgs { catalog, ..Default::default() }).catalog()?;
            let depth = depth.unwrap_or(cfg.training.wl_depth);
            let graphs = build_world_graphs(&catalog);
            let bags = wl_corpus(&graphs, depth);
            let records: Vec<GraphRecord> = graphs.iter().map(|g| g.to_record()).collect();
            write_json(&out.dir.join(store::GRAPHS), &records)?;
            write_json(&out.dir.join(store::BAGS), &BagFile::from_bags(&bags))?;
            let nodes: usize = graphs.iter().map(|g| g.nodes.len()).sum();
            println!("{} graphs, {nodes} nodes, WL depth {depth} -> {}", graphs.len(), out.dir.display());
        }
        Command::Train { graphs } => {
            let dir = graphs.unwrap_or_else(|| out.dir.clone());
            let bags = store::bags_in(&dir)?.to_bags()?;
            let mut train_cfg = cfg.training.train.clone();
            if let Some(seed) = cli.seed {
                train_cfg.seed = seed;
            }
            let t = Instant::now();
            let space = train(&bags, &train_cfg)?;
            info!("epoch losses: {:?}", space.epoch_losses);
            let path = out.file(store::SPACE);
            write_json(&path, &space.to_file())?;
            println!(
                "{} vectors of dim {} in {:.1?}, final loss {:.4} -> {}",
                space.len(),
                space.dim,
                t.elapsed(),
                space.trained_loss,
                path.display()
            );
        }
        Command::Estimate { obs, queries, lambda, mode, exclude, explain: with_label, inputs } => {
            let records: Vec<QueryRecord> = read_input(&queries)?;
            let queries = records.iter().map(QueryRecord::to_query).collect::<wmest::Result<Vec<_>>>()?;
            let inputs = out.inputs(&inputs);
            let ctx = inputs.context()?;
            let est_cfg = EstimatorConfig {
                lambda: lambda.unwrap_or(cfg.estimator.lambda),
                excluded: exclude.into_iter().collect::<BTreeSet<_>>(),
                mode: mode.unwrap_or(cfg.estimator.mode),
            };
            let mut result = estimate(&ctx.space, obs, &queries, &[], &ctx.policies, &est_cfg)?;
            if with_label && result.env_est != obs {
                let (language, _) = language_vectors(&ctx, &eligible_pairs(&ctx.catalog))?;
                let e = explain(&ctx.space, result.env_est, obs, &language)?;
                result.explanation = Some(e.best().to_string());
            }
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Exp { id, trials, lambda, method, prior, inputs } => {
            ensure!(method.is_empty() || id == 3, "--method applies to experiment 3 only");
            ensure!(prior.is_empty() || id == 6, "--prior applies to experiment 6 only");
            let mut exp_cfg = cfg.experiments.clone();
            apply_overrides(&mut exp_cfg, id, cli.seed, trials, lambda)?;
            let ctx = out.inputs(&inputs).context()?;
            let t = Instant::now();
            let report: Box<dyn Report> = match id {
                1 => Box::new(run_exp1(&ctx)?),
                2 => Box::new(run_exp2(&ctx, &exp_cfg)?),
                3 => Box::new(run_exp3(&ctx, &exp_cfg, &method)?),
                4 => Box::new(run_exp4(&ctx, &exp_cfg)?),
                5 => Box::new(run_exp5(&ctx, &exp_cfg)?),
                6 => Box::new(run_exp6(&ctx, &exp_cfg, &prior)?),
                7 => Box::new(run_exp7(&ctx, &exp_cfg)?),
                _ => unreachable!("clap limits the id to 1..=7"),
            };
            let mut written = write_report(report.as_ref(), &out.dir)?;
            if id == 1 {
                written.extend(write_plot(&ctx, &out.dir)?);
            }
            println!("{}", report.table());
            info!("experiment {id} took {:.2?}", t.elapsed());
            for p in written {
                println!("wrote {}", p.display());
            }
        }
        Command::Plot { id, inputs } => {
            if id != 1 {
                bail!("experiment {id} has no plot; only `plot --exp 1` is available");
            }
            let ctx = out.inputs(&inputs).context()?;
            for p in write_plot(&ctx, &out.dir)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

/// Writes the projection CSV and scatter plot of the embedding space.
fn write_plot(ctx: &wmest::experiments::Context, dir: &Path) -> Result<Vec<PathBuf>> {
    let report = run_exp1(ctx)?;
    std::fs::create_dir_all(dir)?;
    let csv = dir.join("exp1_projection.csv");
    std::fs::write(&csv, report.projection_csv()?)?;
    let svg = dir.join("exp1_projection.svg");
    std::fs::write(&svg, report.svg())?;
    Ok(vec![csv, svg])
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    id: u8,
    seed: Option<u64>,
    trials: Option<usize>,
    lambda: Option<f64>,
) -> Result<()> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = trials {
        match id {
            1 => bail!("experiment 1 has no trials"),
            7 => cfg.language_trials = n,
            _ => cfg.trials = n,
        }
    }
    if let Some(l) = lambda {
        match id {
            2 | 5 => cfg.ranking_lambda = l,
            3 | 6 => cfg.interaction_lambda = l,
            4 => cfg.similar_lambda = l,
            _ => bail!("experiment {id} has no distance penalty"),
        }
    }
    cfg.validate()?;
    Ok(())
}
