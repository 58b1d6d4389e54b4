//! Model files and metrics tables.
//!
//! A model is a pretty-printed JSON document with a fixed key order. Reals
//! are written in shortest round-trip form and parsed with correct rounding,
//! so every threshold and leaf value reloads bit-exactly and
//! `save -> load -> save` reproduces the same bytes.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boost::{Algorithm, ClassTree, Ensemble, IterationMetrics, Stage, TrainConfig};
use crate::data::IndexBase;
use crate::tree::{Node, RegressionTree};

pub const FORMAT_VERSION: u32 = 1;

pub const METRICS_HEADER: &str = "iteration,train_loss,test_error,base_class,trees_fit_cum";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt model file at line {line}, column {column}: {msg}")]
    Corrupt { line: usize, column: usize, msg: String },
    #[error("unsupported model format_version {found} (this build reads {FORMAT_VERSION})")]
    Version { found: u64 },
    #[error("model file has no format_version")]
    MissingVersion,
    #[error("integrity error at {path}: {msg}")]
    Integrity { path: String, msg: String },
    #[error("metrics file line {line}: {msg}")]
    Metrics { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Serialize, Deserialize)]
struct ConfigEcho {
    algorithm: String,
    n_leaves: usize,
    shrinkage: f64,
    n_iterations: usize,
    gap: usize,
    early_stop_loss: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeFile {
    class: usize,
    n_leaves: usize,
    nodes: Vec<Node>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StageFile {
    base_class: i64,
    trees: Vec<TreeFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetricsRow {
    iteration: usize,
    train_loss: f64,
    test_error: Option<usize>,
    base_class: i64,
    trees_fit_cum: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    config: ConfigEcho,
    n_classes: usize,
    n_features: usize,
    classes: Vec<i64>,
    feature_index_base: usize,
    tree_fit_count: u64,
    base_history: Vec<i64>,
    stages: Vec<StageFile>,
    metrics: Vec<MetricsRow>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u64>,
}

fn base_code(base: Option<usize>) -> i64 {
    base.map_or(-1, |b| b as i64)
}

fn to_file(e: &Ensemble) -> ModelFile {
    let c = &e.config;
    ModelFile {
        format_version: FORMAT_VERSION,
        config: ConfigEcho {
            algorithm: c.algorithm.name().to_string(),
            n_leaves: c.n_leaves,
            shrinkage: c.shrinkage,
            n_iterations: c.n_iterations,
            gap: c.gap,
            early_stop_loss: c.early_stop_loss,
        },
        n_classes: e.n_classes,
        n_features: e.n_features,
        classes: e.classes.clone(),
        feature_index_base: e.index_base.offset(),
        tree_fit_count: e.tree_fit_count,
        base_history: e.base_history.iter().map(|&b| base_code(b)).collect(),
        stages: e
            .stages
            .iter()
            .map(|s| StageFile {
                base_class: base_code(s.base),
                trees: s
                    .trees
                    .iter()
                    .map(|t| TreeFile { class: t.class, n_leaves: t.tree.n_leaves(), nodes: t.tree.nodes().to_vec() })
                    .collect(),
            })
            .collect(),
        metrics: e
            .metrics
            .iter()
            .map(|m| MetricsRow {
                iteration: m.iteration,
                train_loss: m.train_loss,
                test_error: m.test_error,
                base_class: base_code(m.base_class),
                trees_fit_cum: m.trees_fit_cum,
            })
            .collect(),
    }
}

fn integrity(path: impl Into<String>, msg: impl Into<String>) -> ModelError {
    ModelError::Integrity { path: path.into(), msg: msg.into() }
}

fn decode_base(code: i64, n_classes: usize, path: &str) -> Result<Option<usize>> {
    match code {
        -1 => Ok(None),
        b if b >= 0 && (b as usize) < n_classes => Ok(Some(b as usize)),
        b => Err(integrity(path, format!("base class {b} out of range"))),
    }
}

fn from_file(f: ModelFile) -> Result<Ensemble> {
    let k = f.n_classes;
    if k < crate::data::MIN_CLASSES {
        return Err(integrity("n_classes", format!("{k} classes; at least 3 required")));
    }
    let algorithm: Algorithm = f.config.algorithm.parse().map_err(|e: String| integrity("config.algorithm", e))?;
    let config = TrainConfig {
        algorithm,
        n_leaves: f.config.n_leaves,
        shrinkage: f.config.shrinkage,
        n_iterations: f.config.n_iterations,
        gap: f.config.gap,
        early_stop_loss: f.config.early_stop_loss,
        threads: 0,
    };
    config.validate().map_err(|e| integrity("config", e.to_string()))?;
    if f.classes.len() != k {
        return Err(integrity("classes", format!("{} labels for {k} classes", f.classes.len())));
    }
    let index_base = match f.feature_index_base {
        0 => IndexBase::Zero,
        1 => IndexBase::One,
        other => return Err(integrity("feature_index_base", format!("must be 0 or 1, got {other}"))),
    };
    if f.base_history.len() != f.stages.len() {
        return Err(integrity("base_history", "length differs from stages"));
    }

    let mut stages = Vec::with_capacity(f.stages.len());
    let mut base_history = Vec::with_capacity(f.stages.len());
    for (m, (sf, &hist)) in f.stages.into_iter().zip(&f.base_history).enumerate() {
        let path = format!("stages[{m}]");
        let base = decode_base(sf.base_class, k, &path)?;
        if decode_base(hist, k, "base_history")? != base {
            return Err(integrity(format!("base_history[{m}]"), "disagrees with stage base_class"));
        }
        let expected: Vec<usize> = (0..k).filter(|&c| Some(c) != base).collect();
        if base.is_some() != algorithm.is_abc() {
            return Err(integrity(&path, format!("base class {base:?} inconsistent with {algorithm}")));
        }
        let classes: Vec<usize> = sf.trees.iter().map(|t| t.class).collect();
        if classes != expected {
            return Err(integrity(&path, format!("tree classes {classes:?}, expected {expected:?}")));
        }
        let mut trees = Vec::with_capacity(sf.trees.len());
        for (j, tf) in sf.trees.into_iter().enumerate() {
            let tpath = format!("{path}.trees[{j}]");
            let tree = RegressionTree::from_nodes(tf.nodes).map_err(|e| integrity(&tpath, e.to_string()))?;
            if tree.n_leaves() != tf.n_leaves {
                return Err(integrity(
                    &tpath,
                    format!("declared {} leaves, found {}", tf.n_leaves, tree.n_leaves()),
                ));
            }
            if tree.n_leaves() > config.n_leaves {
                return Err(integrity(&tpath, format!("{} leaves exceeds J = {}", tree.n_leaves(), config.n_leaves)));
            }
            if tree.max_feature().is_some_and(|mf| mf >= f.n_features) {
                return Err(integrity(&tpath, "split on a feature beyond n_features"));
            }
            trees.push(ClassTree { class: tf.class, tree });
        }
        base_history.push(base);
        stages.push(Stage { base, trees });
    }

    let metrics = f
        .metrics
        .into_iter()
        .enumerate()
        .map(|(m, r)| {
            Ok(IterationMetrics {
                iteration: r.iteration,
                train_loss: r.train_loss,
                test_error: r.test_error,
                base_class: decode_base(r.base_class, k, &format!("metrics[{m}]"))?,
                trees_fit_cum: r.trees_fit_cum,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Ensemble {
        config,
        n_classes: k,
        n_features: f.n_features,
        classes: f.classes,
        index_base,
        stages,
        base_history,
        metrics,
        tree_fit_count: f.tree_fit_count,
    })
}

fn corrupt(e: serde_json::Error) -> ModelError {
    ModelError::Corrupt { line: e.line(), column: e.column(), msg: e.to_string() }
}

/// Serializes a model; the output ends with a newline.
pub fn to_string(ensemble: &Ensemble) -> String {
    let mut s = serde_json::to_string_pretty(&to_file(ensemble)).expect("model values are finite");
    s.push('\n');
    s
}

pub fn from_str(text: &str) -> Result<Ensemble> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(corrupt)?;
    match probe.format_version {
        None => return Err(ModelError::MissingVersion),
        Some(v) if v != u64::from(FORMAT_VERSION) => return Err(ModelError::Version { found: v }),
        Some(_) => {}
    }
    let file: ModelFile = serde_json::from_str(text).map_err(corrupt)?;
    from_file(file)
}

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn save_model(ensemble: &Ensemble, path: &Path) -> Result<()> {
    write_atomic(path, to_string(ensemble).as_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Ensemble> {
    from_str(&fs::read_to_string(path)?)
}

/// Per-iteration metrics as CSV. Missing test errors are left empty and
/// plain iterations have base class `-1`.
pub fn write_metrics_csv<W: Write>(metrics: &[IterationMetrics], mut out: W) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for m in metrics {
        let test = m.test_error.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            m.iteration,
            m.train_loss,
            test,
            base_code(m.base_class),
            m.trees_fit_cum
        )?;
    }
    Ok(())
}

pub fn metrics_csv_string(metrics: &[IterationMetrics]) -> String {
    let mut buf = Vec::new();
    write_metrics_csv(metrics, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

pub fn read_metrics_csv<R: BufRead>(reader: R) -> Result<Vec<IterationMetrics>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if n == 0 {
            if line.trim() != METRICS_HEADER {
                return Err(ModelError::Metrics { line: 1, msg: format!("unexpected header {line:?}") });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| ModelError::Metrics { line: lineno, msg: msg.to_string() };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(bad("expected 5 cells"));
        }
        let base: i64 = cells[3].parse().map_err(|_| bad("bad base_class"))?;
        out.push(IterationMetrics {
            iteration: cells[0].parse().map_err(|_| bad("bad iteration"))?,
            train_loss: cells[1].parse().map_err(|_| bad("bad train_loss"))?,
            test_error: match cells[2] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("bad test_error"))?),
            },
            base_class: usize::try_from(base).ok(),
            trees_fit_cum: cells[4].parse().map_err(|_| bad("bad trees_fit_cum"))?,
        });
    }
    Ok(out)
}
