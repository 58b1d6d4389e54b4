//! `abcboost` command-line tool: train, predict, sweep and synth.

mod sweep;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abcboost::data::{self, ClassMap, Dataset, Format, IndexBase, RawTable};
use abcboost::model_io;
use abcboost::synth::{Blobs, Separable};
use abcboost::{Algorithm, Ensemble, TrainConfig};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "abcboost", version, about = "Multi-class boosting with mart, logitboost and their abc variants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model.
    Train(TrainArgs),
    /// Score a data file with a saved model.
    Predict(PredictArgs),
    /// Run a grid of training jobs and tabulate final test errors.
    Sweep(sweep::SweepArgs),
    /// Write a synthetic data set in libsvm format.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Input layout.
    #[arg(long, default_value = "libsvm")]
    pub format: Format,
    /// Label column for CSV input (0-based).
    #[arg(long, default_value_t = 0)]
    pub label_column: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_parser = parse_algorithm)]
    algo: Algorithm,
    #[arg(long)]
    train: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Terminal nodes per tree.
    #[arg(short = 'J', long = "leaves", default_value_t = 20, value_parser = parse_leaves)]
    leaves: usize,
    /// Shrinkage.
    #[arg(long, default_value_t = 0.1, value_parser = parse_nu)]
    nu: f64,
    /// Boosting iterations.
    #[arg(short = 'M', long = "iterations", default_value_t = 1000)]
    iterations: usize,
    /// Iterations between base-class searches (abc algorithms only).
    #[arg(short = 'G', long = "gap", value_parser = parse_gap)]
    gap: Option<usize>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    /// Stop once the training loss falls to this value.
    #[arg(long)]
    early_stop_loss: Option<f64>,
    /// Worker threads (0: all cores). Results do not depend on it.
    #[arg(long, env = "ABCBOOST_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    layout: DataArgs,
    /// Use only the first N iterations.
    #[arg(long)]
    up_to_m: Option<usize>,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "ABCBOOST_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SynthKind {
    /// Gaussian clusters, one per class.
    Blobs,
    /// Linearly separable classes with a margin.
    Separable,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Informative features (blobs) or all features (separable).
    #[arg(long, default_value_t = 10)]
    features: usize,
    /// Extra pure-noise features (blobs only).
    #[arg(long, default_value_t = 0)]
    noise_features: usize,
    /// Centre spread for blobs, margin for separable.
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    /// Seed of the class structure; share it between train and test files.
    #[arg(long, default_value_t = 0)]
    structure_seed: u64,
    /// Seed of the sample draw.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short = 'n', long)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

pub fn parse_leaves(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(j) if j >= 2 => Ok(j),
        _ => Err(format!("J must be an integer >= 2, got {s:?}")),
    }
}

pub fn parse_nu(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v <= 1.0 => Ok(v),
        _ => Err(format!("nu must lie in (0, 1], got {s:?}")),
    }
}

pub fn parse_gap(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(g) if g >= 1 => Ok(g),
        _ => Err(format!("G must be an integer >= 1, got {s:?}")),
    }
}

/// Runtime failure: reported on stderr, exit status 1.
#[derive(Debug)]
pub struct Failure(pub String);

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

/// Reports a flag error with the subcommand's usage; exit status 2.
pub fn usage_error(subcommand: &str, msg: &str) -> ! {
    let mut cli = Cli::command();
    let mut cmd = match cli.find_subcommand_mut(subcommand) {
        Some(sub) => sub.clone().bin_name(format!("abcboost {subcommand}")),
        None => cli,
    };
    cmd.error(ErrorKind::ArgumentConflict, msg).exit()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Sweep(a) => sweep::cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn read_table(path: &Path, layout: &DataArgs, index_base: IndexBase) -> Result<RawTable, Failure> {
    data::read_raw(path, layout.format, layout.label_column, index_base)
        .map_err(|e| Failure(format!("{}: {e}", path.display())))
}

/// Loads a training set and, optionally, a test set that shares its class
/// list and feature numbering.
pub fn load_train_test(
    train: &Path,
    test: Option<&Path>,
    layout: &DataArgs,
) -> Result<(Dataset, Option<Dataset>), Failure> {
    let raw = read_table(train, layout, IndexBase::Auto)?;
    let train_ds =
        Dataset::from_raw(raw, &ClassMap::Infer).map_err(|e| Failure(format!("{}: {e}", train.display())))?;
    let test_ds = match test {
        None => None,
        Some(path) => {
            let mut raw = read_table(path, layout, train_ds.index_base)?;
            if layout.format == Format::Libsvm {
                raw.pad_features(train_ds.n_features);
            }
            let ds = Dataset::from_raw(raw, &ClassMap::Fixed(train_ds.classes.clone()))
                .map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            Some(ds)
        }
    };
    Ok((train_ds, test_ds))
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    if a.gap.is_some() && !a.algo.is_abc() {
        usage_error("train", "G requires an abc algorithm");
    }
    let config = TrainConfig {
        algorithm: a.algo,
        n_leaves: a.leaves,
        shrinkage: a.nu,
        n_iterations: a.iterations,
        gap: a.gap.unwrap_or(1),
        early_stop_loss: a.early_stop_loss,
        threads: a.threads,
    };
    if let Err(e) = config.validate() {
        usage_error("train", &e.to_string());
    }
    let (train, test) = load_train_test(&a.train, a.test.as_deref(), &a.data)?;
    let model = abcboost::train(&config, &train, test.as_ref())?;

    if let Some(path) = &a.model_out {
        model_io::save_model(&model, path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &a.metrics_out {
        model_io::write_atomic(path, model_io::metrics_csv_string(&model.metrics).as_bytes())
            .map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    }
    print_summary(&model);
    Ok(())
}

fn print_summary(model: &Ensemble) {
    println!("iterations: {}", model.n_iterations());
    match model.metrics.last() {
        Some(m) => {
            println!("train_loss: {}", m.train_loss);
            if let Some(e) = m.test_error {
                println!("test_errors: {e}");
            }
        }
        None => println!("train_loss: n/a"),
    }
    println!("tree_fit_count: {}", model.tree_fit_count);
}

fn cmd_predict(a: PredictArgs) -> Result<(), Failure> {
    let model =
        model_io::load_model(&a.model).map_err(|e| Failure(format!("{}: {e}", a.model.display())))?;
    if let Some(m) = a.up_to_m {
        if m > model.n_iterations() {
            return Err(Failure(format!("--up-to-m {m} exceeds the model's {} iterations", model.n_iterations())));
        }
    }
    let mut raw = read_table(&a.data, &a.layout, model.index_base)?;
    if a.layout.format == Format::Libsvm {
        raw.pad_features(model.n_features);
    }
    if raw.n_features() < model.n_features {
        return Err(Failure(format!(
            "{} has {} features; the model uses {}",
            a.data.display(),
            raw.n_features(),
            model.n_features
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.threads).build()?;
    let rows: Vec<Vec<f64>> = (0..raw.n_samples()).map(|i| raw.columns.iter().map(|c| c[i]).collect()).collect();
    let predictions = pool.install(|| {
        use rayon::prelude::*;
        rows.par_iter().map(|x| model.predict(x, a.up_to_m)).collect::<Result<Vec<_>, _>>()
    })?;

    let mut out = String::from("id,predicted");
    for k in 0..model.n_classes {
        write!(out, ",score_{k}").unwrap();
    }
    out.push('\n');
    for (i, p) in predictions.iter().enumerate() {
        write!(out, "{i},{}", model.classes[p.class]).unwrap();
        for s in &p.scores {
            write!(out, ",{s}").unwrap();
        }
        out.push('\n');
    }
    match &a.out {
        Some(path) => model_io::write_atomic(path, out.as_bytes())
            .map_err(|e| Failure(format!("{}: {e}", path.display())))?,
        None => print!("{out}"),
    }

    let truth: Option<Vec<usize>> =
        raw.labels.iter().map(|l| model.classes.iter().position(|c| c == l)).collect();
    if let Some(truth) = truth {
        let errors = predictions.iter().zip(&truth).filter(|(p, &t)| p.class != t).count();
        let line = format!("errors: {errors} of {}", truth.len());
        if a.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let ds = match a.kind {
        SynthKind::Blobs => Blobs {
            n_classes: a.classes,
            n_informative: a.features,
            n_noise: a.noise_features,
            separation: a.spread,
            seed: a.structure_seed,
        }
        .sample(a.samples, a.seed)?,
        SynthKind::Separable => Separable {
            n_classes: a.classes,
            n_features: a.features,
            margin: a.spread,
            seed: a.structure_seed,
        }
        .sample(a.samples, a.seed)?,
    };
    let mut buf = Vec::new();
    ds.write_libsvm(&mut buf)?;
    model_io::write_atomic(&a.out, &buf).map_err(|e| Failure(format!("{}: {e}", a.out.display())))?;
    Ok(())
}
