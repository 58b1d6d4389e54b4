//! Grid runner. Every cell writes its own metrics CSV; a cell whose file
//! already exists is not retrained, so an interrupted sweep resumes where it
//! stopped.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use abcboost::boost::IterationMetrics;
use abcboost::data::{self, Dataset};
use abcboost::model_io;
use abcboost::{Algorithm, TrainConfig};
use clap::Args;
use rayon::prelude::*;

use crate::{load_train_test, parse_gap, parse_leaves, parse_nu, DataArgs, Failure};

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',', default_value = "mart,abc-mart,logitboost,abc-logitboost", value_parser = parse_algorithm)]
    algos: Vec<Algorithm>,
    #[arg(short = 'J', long = "leaves", value_delimiter = ',', default_value = "20", value_parser = parse_leaves)]
    leaves: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1", value_parser = parse_nu)]
    nu: Vec<f64>,
    /// Gap values; only abc algorithms are crossed with them.
    #[arg(short = 'G', long = "gap", value_delimiter = ',', default_value = "1", value_parser = parse_gap)]
    gap: Vec<usize>,
    #[arg(short = 'M', long = "iterations", default_value_t = 1000)]
    iterations: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Train on a class-stratified subset of this many samples.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Refuse grids with more cells than this.
    #[arg(long, default_value_t = 1000)]
    max_cells: usize,
    /// Cells trained concurrently (0: all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Threads inside each cell.
    #[arg(long, env = "ABCBOOST_THREADS", default_value_t = 1)]
    threads: usize,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

#[derive(Debug, Clone)]
struct Cell {
    algorithm: Algorithm,
    leaves: usize,
    nu: f64,
    gap: Option<usize>,
}

impl Cell {
    fn file_name(&self, m: usize) -> String {
        let g = self.gap.map(|g| format!("_G{g}")).unwrap_or_default();
        format!("{}_J{}_nu{}{g}_M{m}.csv", self.algorithm, self.leaves, self.nu)
    }

    fn config(&self, m: usize, threads: usize) -> TrainConfig {
        TrainConfig {
            algorithm: self.algorithm,
            n_leaves: self.leaves,
            shrinkage: self.nu,
            n_iterations: m,
            gap: self.gap.unwrap_or(1),
            early_stop_loss: None,
            threads,
        }
    }
}

struct Outcome {
    test_error: Option<usize>,
    tree_fit_count: u64,
}

fn grid(a: &SweepArgs) -> Vec<Cell> {
    let mut algos: Vec<Algorithm> = Vec::new();
    for &x in &a.algos {
        if !algos.contains(&x) {
            algos.push(x);
        }
    }
    let mut cells = Vec::new();
    for &algorithm in &algos {
        for &leaves in &a.leaves {
            for &nu in &a.nu {
                if algorithm.is_abc() {
                    cells.extend(a.gap.iter().map(|&g| Cell { algorithm, leaves, nu, gap: Some(g) }));
                } else {
                    cells.push(Cell { algorithm, leaves, nu, gap: None });
                }
            }
        }
    }
    cells
}

fn outcome(metrics: &[IterationMetrics]) -> Outcome {
    let last = metrics.last();
    Outcome {
        test_error: last.and_then(|m| m.test_error),
        tree_fit_count: last.map_or(0, |m| m.trees_fit_cum),
    }
}

fn run_cell(cell: &Cell, path: &Path, a: &SweepArgs, train: &Dataset, test: &Dataset) -> Result<Outcome, Failure> {
    if path.exists() {
        let file = fs::File::open(path)?;
        let metrics = model_io::read_metrics_csv(BufReader::new(file))?;
        return Ok(outcome(&metrics));
    }
    let model = abcboost::train(&cell.config(a.iterations, a.threads), train, Some(test))?;
    model_io::write_atomic(path, model_io::metrics_csv_string(&model.metrics).as_bytes())?;
    Ok(outcome(&model.metrics))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn ratio(plain: usize, abc: usize) -> String {
    match (plain, abc) {
        (0, 0) => String::new(),
        (_, 0) => "inf".into(),
        (p, q) => (p as f64 / q as f64).to_string(),
    }
}

pub fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let cells = grid(&a);
    if cells.len() > a.max_cells {
        crate::usage_error("sweep", &format!("grid has {} cells, more than --max-cells {}", cells.len(), a.max_cells));
    }
    let metrics_dir = a.out.join("metrics");
    fs::create_dir_all(&metrics_dir).map_err(|e| Failure(format!("{}: {e}", metrics_dir.display())))?;

    let (train, test) = load_train_test(&a.train, Some(&a.test), &a.data)?;
    let test = test.expect("test set requested");
    let train = match a.subsample {
        Some(n) => data::subsample(&train, n, a.seed)?,
        None => train,
    };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build()?;
    let results: Vec<Result<Outcome, Failure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let path = metrics_dir.join(cell.file_name(a.iterations));
                let r = run_cell(cell, &path, &a, &train, &test);
                match &r {
                    Ok(o) => eprintln!("{}: test errors {}", cell.file_name(a.iterations), opt(o.test_error)),
                    Err(Failure(msg)) => eprintln!("{}: FAILED: {msg}", cell.file_name(a.iterations)),
                }
                r
            })
            .collect()
    });

    let mut summary = String::from("algo,J,nu,G,final_test_error,tree_fit_count\n");
    for (cell, r) in cells.iter().zip(&results) {
        if let Ok(o) = r {
            summary.push_str(&format!(
                "{},{},{},{},{},{}\n",
                cell.algorithm,
                cell.leaves,
                cell.nu,
                opt(cell.gap),
                opt(o.test_error),
                o.tree_fit_count
            ));
        }
    }
    model_io::write_atomic(&a.out.join("summary.csv"), summary.as_bytes())?;

    // plain error over abc error, per (J, nu, G)
    let mut ratios = String::from("pair,J,nu,G,plain_error,abc_error,ratio\n");
    for (abc_cell, abc_r) in cells.iter().zip(&results) {
        let Ok(Outcome { test_error: Some(abc_err), .. }) = abc_r else { continue };
        if !abc_cell.algorithm.is_abc() {
            continue;
        }
        let plain = abc_cell.algorithm.plain_counterpart();
        let partner = cells.iter().zip(&results).find(|(c, _)| {
            c.algorithm == plain && c.leaves == abc_cell.leaves && c.nu == abc_cell.nu
        });
        if let Some((_, Ok(Outcome { test_error: Some(plain_err), .. }))) = partner {
            ratios.push_str(&format!(
                "{plain}/{},{},{},{},{plain_err},{abc_err},{}\n",
                abc_cell.algorithm,
                abc_cell.leaves,
                abc_cell.nu,
                opt(abc_cell.gap),
                ratio(*plain_err, *abc_err)
            ));
        }
    }
    model_io::write_atomic(&a.out.join("ratios.csv"), ratios.as_bytes())?;

    let failed = results.iter().filter(|r| r.is_err()).count();
    println!("cells: {}, failed: {failed}", cells.len());
    if failed > 0 {
        return Err(Failure(format!("{failed} of {} cells failed", cells.len())));
    }
    Ok(())
}
