//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid flags or configuration, 3 data or
//! ingestion errors, 4 training aborts and empty selections.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bench::{downstream_eval, fit_power_law, measure_scaling, EvalConfig, ScalingReport, PUBLISHED_ALPHA};
use crate::data::{
    apply_stats, inject_noise, load_csv, split, standardize, univariate_f_scores, write_csv, Dataset, Fractions,
    NoiseConfig, NoiseKind, StandardizeStats, TaskType,
};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::selection::{apply_selection, extract_selection, rank_top_k, SelectionReport};
use crate::trainer::{train, Checkpoint, SelectMode, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "gfsnet", version, about = "Differentiable feature selection with Gumbel-Sigmoid masks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a masking and task network and report the selected features.
    Select(SelectArgs),
    /// Append artificial noise features to a CSV file.
    Synth(SynthArgs),
    /// Compare downstream performance with and without feature selection.
    Eval(EvalArgs),
    /// Measure training time against the number of features.
    Scaling(ScalingArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Weight of the select loss.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    /// Initial temperature.
    #[arg(long, default_value_t = 2.0)]
    pub tau0: f64,
    /// Per-epoch temperature decay factor.
    #[arg(long, default_value_t = 0.997)]
    pub decay: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SelectMode::Sparsity)]
    pub mode: SelectMode,
    /// Desired number of features; required with `--mode target`.
    #[arg(long, required_if_eq("mode", "target"))]
    pub target_k: Option<usize>,
}

impl TrainFlags {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            tau0: self.tau0,
            alpha: self.decay,
            lambda: self.lambda,
            epochs: self.epochs,
            batch_size: self.batch,
            seed: self.seed,
            select_mode: self.mode,
            target_k: self.target_k,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Name of the target column.
    #[arg(long)]
    pub target: String,
    #[arg(long, value_enum)]
    pub task: TaskType,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Output directory.
    #[arg(long, default_value = "gfsnet-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Random,
    Corrupted,
    SecondOrder,
}

impl From<SynthKind> for NoiseKind {
    fn from(k: SynthKind) -> Self {
        match k {
            SynthKind::Random => NoiseKind::Random,
            SynthKind::Corrupted => NoiseKind::Corrupted,
            SynthKind::SecondOrder => NoiseKind::SecondOrder,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Target column; defaults to the last column.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path; the sidecar is written next to it with a `.json` suffix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Selector {
    Gfs,
    Univariate,
    None,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub target: String,
    #[arg(long, value_enum, default_value_t = TaskType::Classification)]
    pub task: TaskType,
    #[arg(long, value_enum)]
    pub selector: Selector,
    /// Keep the top k features by score instead of the hard mask.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Epochs of the downstream predictor.
    #[arg(long, default_value_t = 30)]
    pub eval_epochs: usize,
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    /// Comma-separated feature counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[arg(long, default_value_t = 2048)]
    pub rows: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip training and fit synthetic times `t = D^alpha` instead.
    #[arg(long)]
    pub planted_alpha: Option<f64>,
    /// Output directory for `scaling.json` and `scaling.csv`.
    #[arg(long, default_value = "gfsnet-scaling")]
    pub out: PathBuf,
}

/// Everything needed to rerun a `select` invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub timestamp_unix: u64,
    pub argv: Vec<String>,
    pub seed: u64,
    pub input: PathBuf,
    pub input_sha256: String,
    pub target: String,
    pub task: TaskType,
    pub config: TrainConfig,
    pub config_digest: String,
    pub standardization: StandardizeStats,
    pub outputs: Vec<PathBuf>,
}

/// Hex SHA-256 of the JSON encoding of `config`.
pub fn config_digest(config: &TrainConfig) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(config)?)))
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Contract(_) => EXIT_USAGE,
        Error::Parse { .. } | Error::Data(_) | Error::EmptyDataset | Error::Io(_) | Error::Csv(_) | Error::Json(_) => {
            EXIT_DATA
        }
        Error::Diverged { .. } | Error::NonFiniteGradient(_) | Error::EmptySelection => EXIT_TRAINING,
        Error::Shape { .. } | Error::UnreliableOracle { .. } => 1,
    }
}

/// Parse `argv` and run the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match &cli.command {
        Command::Select(a) => cmd_select(a, &argv),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Scaling(a) => cmd_scaling(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn cmd_select(args: &SelectArgs, argv: &[String]) -> Result<()> {
    let config = args.train.config();
    let raw = load_csv(&args.input, &args.target, args.task)?;
    config.validate(raw.n_features())?;
    let (ds, stats) = standardize(&raw);
    let out = train(&ds, &config)?;
    let result = extract_selection(&out.mask);
    let digest = config_digest(&config)?;

    std::fs::create_dir_all(&args.out)?;
    let paths = ["selection.json", "history.csv", "model.json", "manifest.json"].map(|f| args.out.join(f));
    let report = SelectionReport::new(&result, &ds.feature_names, digest.clone(), config.seed, ds.n_rows());
    write_json(&paths[0], &report)?;
    out.history.save_csv(&paths[1])?;
    Checkpoint::new(&out, &config).save(&paths[2])?;
    let manifest = RunManifest {
        tool: "gfsnet".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        argv: argv.to_vec(),
        seed: config.seed,
        input: args.input.clone(),
        input_sha256: file_digest(&args.input)?,
        target: args.target.clone(),
        task: args.task,
        config,
        config_digest: digest,
        standardization: stats,
        outputs: paths.to_vec(),
    };
    write_json(&paths[3], &manifest)?;

    println!("selected_count {}", result.selected_count);
    println!(
        "selected_indices {}",
        result.selected_indices.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    );
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let target = match &args.target {
        Some(t) => t.clone(),
        None => {
            let mut r = csv::Reader::from_path(&args.input)?;
            r.headers()?
                .iter()
                .next_back()
                .map(str::to_string)
                .ok_or_else(|| Error::Data("input has no columns".into()))?
        }
    };
    // Classification keeps target values as their original strings.
    let ds = load_csv(&args.input, &target, TaskType::Classification)?;
    let mut rng = rng::stream(args.seed, Stream::Data);
    let augmented = inject_noise(&ds, args.kind.into(), &NoiseConfig::default(), &mut rng)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(&augmented, &args.out)?;
    let sidecar_path = args.out.with_extension("json");
    augmented.sidecar().write(&sidecar_path)?;
    let artificial = augmented
        .noise_flags
        .as_ref()
        .map_or(0, |f| f.iter().filter(|f| f.is_artificial()).count());
    println!("features {} artificial {}", augmented.n_features(), artificial);
    Ok(())
}

/// Summary printed by `eval`.
#[derive(Debug, Serialize)]
pub struct EvalSummary {
    pub selector: String,
    pub metric: String,
    pub validation: f64,
    pub test: f64,
    pub n_features: usize,
    pub selected_count: usize,
    pub selected_indices: Vec<usize>,
    pub selected_names: Vec<String>,
}

/// Indices chosen by `selector` on standardized training data.
pub fn choose_features(train_ds: &Dataset, selector: Selector, k: Option<usize>, config: &TrainConfig) -> Result<Vec<usize>> {
    let d = train_ds.n_features();
    if let Some(k) = k {
        if k == 0 || k > d {
            return Err(Error::Config(format!("--k must lie in 1..={d}, got {k}")));
        }
    }
    match selector {
        Selector::None => Ok((0..d).collect()),
        Selector::Univariate => {
            let k = k.ok_or_else(|| Error::Config("--selector univariate requires --k".into()))?;
            let scores = univariate_f_scores(train_ds)?;
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            order.truncate(k);
            order.sort_unstable();
            Ok(order)
        }
        Selector::Gfs => {
            config.validate(d)?;
            let out = train(train_ds, config)?;
            let result = extract_selection(&out.mask);
            match k {
                Some(k) => {
                    let mut top = rank_top_k(&result, k)?;
                    top.sort_unstable();
                    Ok(top)
                }
                None => Ok(result.selected_indices),
            }
        }
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let config = args.train.config();
    let ds = load_csv(&args.input, &args.target, args.task)?;
    let parts = split(&ds, Fractions::default(), &mut rng::stream(config.seed, Stream::Split))?;
    let (train_ds, stats) = standardize(&parts.train);
    let val_ds = apply_stats(&parts.validation, &stats);
    let test_ds = apply_stats(&parts.test, &stats);

    let chosen = choose_features(&train_ds, args.selector, args.k, &config)?;
    if chosen.is_empty() {
        return Err(Error::EmptySelection);
    }
    let eval = EvalConfig {
        epochs: args.eval_epochs,
        seed: config.seed,
        ..EvalConfig::default()
    };
    let tr = apply_selection(&train_ds, &chosen)?;
    let validation = downstream_eval(&tr, &apply_selection(&val_ds, &chosen)?, &eval)?;
    let test = downstream_eval(&tr, &apply_selection(&test_ds, &chosen)?, &eval)?;
    let summary = EvalSummary {
        selector: format!("{:?}", args.selector).to_lowercase(),
        metric: if ds.task().is_classification() { "accuracy" } else { "neg_mse" }.into(),
        validation,
        test,
        n_features: ds.n_features(),
        selected_count: chosen.len(),
        selected_names: chosen.iter().map(|&j| ds.feature_names[j].clone()).collect(),
        selected_indices: chosen,
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

pub fn cmd_scaling(args: &ScalingArgs) -> Result<()> {
    let workload = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let report = match args.planted_alpha {
        Some(alpha) => {
            let trial_times = args
                .dims
                .iter()
                .map(|&d| vec![(d as f64).powf(alpha); args.trials])
                .collect();
            ScalingReport::from_trial_times(args.dims.clone(), trial_times, &workload, args.rows)?
        }
        None => {
            workload.validate(1)?;
            measure_scaling(&args.dims, args.rows, &workload, args.trials)?
        }
    };
    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("scaling.json"), &report)?;
    std::fs::write(args.out.join("scaling.csv"), report.to_csv())?;
    let (alpha, r2) = fit_power_law(&report.dims, &report.times)?;
    println!("alpha {alpha:.6} r2 {r2:.6} published_alpha {PUBLISHED_ALPHA}");
    if !report.warning.is_empty() {
        eprintln!("warning: {}", report.warning);
    }
    Ok(())
}
