//! `rsm`: generate synthetic logs, learn weights, run flip-prediction experiments
//! and show the paper-shredder example.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_distr::{Distribution, Exp1};

use rsm_core::data::{generate_synthetic, load_csv, load_json, save_csv, training_instances, LogRow, Manifest, Noise, Schema, SyntheticSpec};
use rsm_core::demo::run_shredder_demo;
use rsm_core::eval::{lambda_sweep, write_reports, ExperimentConfig, ModelKind};
use rsm_core::learner::{fit, grid_search, Init, LearnerConfig};
use rsm_core::topology::WeightVector;
use rsm_core::{seeds, RsmError};

#[derive(Parser, Debug)]
#[command(name = "rsm", version, about = "Random Shopper Model: context-dependent ranking with Markov-chain features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic click log with known weights.
    Synth(SynthArgs),
    /// Learn feature weights from a dataset.
    Train(TrainArgs),
    /// Run the flip-prediction experiment over repeated train/test splits.
    Eval(EvalArgs),
    /// Rank the paper-shredder contexts and report whether A and B flip.
    DemoShredder {
        #[arg(long, default_value_t = 0.15)]
        lambda: f64,
    },
}

#[derive(Args, Debug)]
struct LearnerArgs {
    /// Restart probability.
    #[arg(long, default_value_t = 0.15)]
    lambda: f64,
    /// Per-coordinate step bound.
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    #[arg(long, default_value_t = 1e-6)]
    halt_eps: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
}

impl LearnerArgs {
    fn config(&self) -> LearnerConfig {
        LearnerConfig { lambda: self.lambda, eta: self.eta, halt_eps: self.halt_eps, max_iters: self.max_iters, ..Default::default() }
    }
}

#[derive(Args, Debug)]
struct DatasetArgs {
    /// Manifest written by `rsm synth`.
    #[arg(long, conflicts_with_all = ["data", "schema"])]
    manifest: Option<PathBuf>,
    /// CSV click log (needs --schema) or JSON dataset.
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON schema for a CSV log.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Reporting-form weights, comma separated; their count sets k.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.3, 0.2])]
    weights: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 40)]
    queries: usize,
    /// Items per query; defaults to n.
    #[arg(long)]
    catalog: Option<usize>,
    #[arg(long, default_value_t = 1)]
    contexts_per_query: usize,
    /// Multinomial clicks per context; 0 writes exact shares.
    #[arg(long, default_value_t = 0)]
    clicks: u64,
    /// Use display position as the last topology.
    #[arg(long)]
    position: bool,
    #[arg(long, default_value_t = 0.15)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    learner: LearnerArgs,
    #[arg(long)]
    out_dir: PathBuf,
    /// Brute-force simplex grid instead of the iterative learner.
    #[arg(long)]
    grid: bool,
    #[arg(long, default_value_t = 0.05)]
    grid_step: f64,
    /// Start from random weights drawn from the seed instead of uniform.
    #[arg(long)]
    random_init: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    learner: LearnerArgs,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "rsm,ls,constant")]
    models: Vec<ModelKind>,
    #[arg(long, default_value_t = 100)]
    splits: usize,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Repeat the experiment at each of these restart probabilities.
    #[arg(long, value_delimiter = ',')]
    lambda_sweep: Vec<f64>,
}

fn exit_code(e: &RsmError) -> u8 {
    if e.is_config_error() {
        2
    } else if e.is_data_error() || matches!(e, RsmError::ContextTooSmall(_) | RsmError::DanglingItem(_)) {
        3
    } else {
        4
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads().and_then(|()| run(cli.command)) {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    ExitCode::SUCCESS
}

fn configure_threads() -> Result<(), RsmError> {
    let Ok(raw) = std::env::var("RSM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| RsmError::InvalidConfig(format!("RSM_THREADS={raw:?} is not a count")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| RsmError::InvalidConfig(e.to_string()))?;
    }
    Ok(())
}

fn run(command: Command) -> Result<(), RsmError> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::DemoShredder { lambda } => {
            print!("{}", run_shredder_demo(lambda)?);
            Ok(())
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), RsmError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| RsmError::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| RsmError::Io(format!("{}: {e}", path.display())))
}

fn synth(a: SynthArgs) -> Result<(), RsmError> {
    let spec = SyntheticSpec {
        k: a.weights.len(),
        n: a.n,
        num_queries: a.queries,
        catalog_size: a.catalog.unwrap_or(a.n),
        contexts_per_query: a.contexts_per_query,
        true_weights: a.weights,
        lambda: a.lambda,
        seed: seeds::sub_seed(a.seed, seeds::SYNTH, 0),
        noise: if a.clicks == 0 { Noise::None } else { Noise::Multinomial { clicks_per_context: a.clicks } },
        position_feature: a.position,
    };
    let ds = generate_synthetic(&spec)?;
    fs::create_dir_all(&a.out_dir)?;
    save_csv(a.out_dir.join("dataset.csv"), &ds.rows, &ds.schema)?;
    let manifest = Manifest { data_file: "dataset.csv".into(), schema: ds.schema, seed: a.seed, spec };
    write_json(&a.out_dir.join("manifest.json"), &manifest)?;
    info!("wrote {} contexts to {}", ds.rows.len(), a.out_dir.display());
    Ok(())
}

fn load_dataset(a: &DatasetArgs) -> Result<(Schema, Vec<LogRow>), RsmError> {
    let (schema, csv_path) = match (&a.manifest, &a.data, &a.schema) {
        (Some(m), _, _) => {
            let text = fs::read_to_string(m).map_err(|e| RsmError::Io(format!("{}: {e}", m.display())))?;
            let manifest: Manifest = serde_json::from_str(&text).map_err(|e| RsmError::Parse { line: e.line() as u64, message: e.to_string() })?;
            let dir = m.parent().unwrap_or(Path::new("."));
            (manifest.schema, dir.join(manifest.data_file))
        }
        (None, Some(d), None) if d.extension().is_some_and(|x| x == "json") => {
            let ds = load_json(d)?;
            return Ok((ds.schema, ds.rows));
        }
        (None, Some(d), Some(s)) => {
            let text = fs::read_to_string(s).map_err(|e| RsmError::Io(format!("{}: {e}", s.display())))?;
            let schema: Schema = serde_json::from_str(&text).map_err(|e| RsmError::Schema(e.to_string()))?;
            (schema, d.clone())
        }
        _ => return Err(RsmError::InvalidConfig("give --manifest, a JSON --data file, or --data with --schema".into())),
    };
    let load = load_csv(&csv_path, &schema)?;
    for e in &load.errors {
        log::warn!("{}: {e}", csv_path.display());
    }
    if load.rows.is_empty() {
        return Err(RsmError::EmptyDataset);
    }
    Ok((schema, load.rows))
}

fn random_weights(k: usize, lambda: f64, seed: u64) -> Result<WeightVector, RsmError> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seeds::sub_seed(seed, seeds::INIT, 0));
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = draws.iter().sum();
    WeightVector::reporting(draws.iter().map(|d| d / total).collect())?.to_native(lambda)
}

#[derive(serde::Serialize)]
struct TrainOutput {
    method: &'static str,
    lambda: f64,
    features: Vec<String>,
    weights: Vec<f64>,
    err_s: f64,
    iterations: Option<usize>,
    converged: Option<bool>,
    grid_step: Option<f64>,
}

fn train(a: TrainArgs) -> Result<(), RsmError> {
    let mut config = a.learner.config();
    config.validate()?;
    let (schema, rows) = load_dataset(&a.dataset)?;
    let instances = training_instances(&rows, &schema)?;
    let features = schema.topology_specs().into_iter().map(|s| s.name).collect();
    fs::create_dir_all(&a.out_dir)?;

    let out = if a.grid {
        let r = grid_search(&instances, a.grid_step, config.lambda)?;
        TrainOutput {
            method: "grid",
            lambda: config.lambda,
            features,
            weights: r.weights.as_slice().to_vec(),
            err_s: r.err_s,
            iterations: None,
            converged: None,
            grid_step: Some(a.grid_step),
        }
    } else {
        if a.random_init {
            config.init = Init::Given(random_weights(schema.k(), config.lambda, a.seed)?);
        }
        let r = fit(&instances, &config)?;
        let mut log = String::from("iteration,loss\n");
        for (i, l) in r.per_iteration_loss.iter().enumerate() {
            log.push_str(&format!("{i},{l}\n"));
        }
        fs::write(a.out_dir.join("convergence.csv"), log)?;
        TrainOutput {
            method: "fit",
            lambda: config.lambda,
            features,
            weights: r.weights.as_slice().to_vec(),
            err_s: r.err_s,
            iterations: Some(r.iterations),
            converged: Some(r.converged),
            grid_step: None,
        }
    };
    info!("weights {:?}, err_S {:.3e}", out.weights, out.err_s);
    write_json(&a.out_dir.join("weights.json"), &out)
}

fn eval(a: EvalArgs) -> Result<(), RsmError> {
    let learner = a.learner.config();
    learner.validate()?;
    let (schema, rows) = load_dataset(&a.dataset)?;
    let config = ExperimentConfig {
        models: a.models,
        num_splits: a.splits,
        train_fraction: a.train_frac,
        seed: a.seed,
        learner,
        ..Default::default()
    };
    let lambdas = if a.lambda_sweep.is_empty() { vec![config.learner.lambda] } else { a.lambda_sweep };
    let reports = lambda_sweep(&rows, &schema, &config, &lambdas)?;
    for r in &reports {
        print!("{}", r.to_table());
        println!();
    }
    write_reports(&a.out_dir, &reports)?;
    Ok(())
}
