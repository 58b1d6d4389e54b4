//! Column-oriented training data.
//!
//! Datasets are read from libsvm text (`label idx:val ...`) or from numeric
//! CSV, stored densely per feature, and carry a per-feature ascending sort
//! order that the split search scans. Class labels are mapped to `0..K`
//! preserving numeric order; the original label values are kept in
//! [`Dataset::classes`] so that test data can be mapped consistently.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Smallest number of classes this library trains on.
pub const MIN_CLASSES: usize = 3;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: label {label:?} is not an integer")]
    BadLabel { line: usize, label: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("no samples")]
    Empty,
    #[error("{found} classes found; at least {MIN_CLASSES} are required (multi-class only)")]
    TooFewClasses { found: usize },
    #[error("label {label} is not one of the known classes")]
    UnknownLabel { label: i64 },
    #[error("{distinct} distinct labels cannot be mapped onto {n_classes} classes")]
    ClassCount { distinct: usize, n_classes: usize },
    #[error("label column {column} out of range for {width} columns")]
    LabelColumn { column: usize, width: usize },
    #[error("cannot subsample {requested} of {available} samples")]
    SubsampleSize { requested: usize, available: usize },
    #[error("cannot keep all {n_classes} classes in a subsample of {requested}")]
    SubsampleTooSmall { requested: usize, n_classes: usize },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Feature numbering convention of a libsvm file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexBase {
    /// 0-based if any index 0 appears, 1-based otherwise.
    #[default]
    Auto,
    Zero,
    One,
}

impl IndexBase {
    pub fn offset(self) -> usize {
        match self {
            IndexBase::One => 1,
            _ => 0,
        }
    }
}

/// How integer labels become class ids.
#[derive(Debug, Clone, Default)]
pub enum ClassMap {
    /// Order-preserving remap of the observed labels.
    #[default]
    Infer,
    /// Exactly `k` classes. Labels already inside `0..k` are kept as they
    /// are; otherwise exactly `k` distinct labels must be present.
    Count(usize),
    /// Map through an existing class list, e.g. the training set's.
    Fixed(Vec<i64>),
}

/// Parsed rows before label mapping.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub labels: Vec<i64>,
    pub columns: Vec<Vec<f64>>,
    pub index_base: IndexBase,
}

impl RawTable {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    /// Zero-fills missing trailing features up to `n`.
    pub fn pad_features(&mut self, n: usize) {
        let rows = self.n_samples();
        while self.columns.len() < n {
            self.columns.push(vec![0.0; rows]);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    /// Class id in `0..n_classes` per sample.
    pub labels: Vec<u32>,
    pub columns: Vec<Vec<f64>>,
    /// Per feature, sample ids in ascending value order (ties by id).
    pub sort_index: Vec<Vec<u32>>,
    /// Original label value of each class id.
    pub classes: Vec<i64>,
    pub index_base: IndexBase,
}

impl Dataset {
    /// Builds a dataset from already-mapped class ids.
    pub fn new(columns: Vec<Vec<f64>>, labels: Vec<u32>, n_classes: usize) -> Result<Self> {
        let classes = (0..n_classes as i64).collect();
        Self::assemble(columns, labels, n_classes, classes, IndexBase::Zero)
    }

    fn assemble(
        columns: Vec<Vec<f64>>,
        labels: Vec<u32>,
        n_classes: usize,
        classes: Vec<i64>,
        index_base: IndexBase,
    ) -> Result<Self> {
        let n_samples = labels.len();
        if n_samples == 0 {
            return Err(DataError::Empty);
        }
        if n_classes < MIN_CLASSES {
            return Err(DataError::TooFewClasses { found: n_classes });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(DataError::Invalid(format!(
                "class id {bad} out of range for {n_classes} classes"
            )));
        }
        for (f, col) in columns.iter().enumerate() {
            if col.len() != n_samples {
                return Err(DataError::Invalid(format!(
                    "feature {f} has {} values for {n_samples} samples",
                    col.len()
                )));
            }
            if let Some(v) = col.iter().find(|v| !v.is_finite()) {
                return Err(DataError::Invalid(format!("feature {f} holds non-finite value {v}")));
            }
        }
        let mut ds = Dataset {
            n_samples,
            n_features: columns.len(),
            n_classes,
            labels,
            columns,
            sort_index: Vec::new(),
            classes,
            index_base,
        };
        ds.build_sort_index();
        Ok(ds)
    }

    /// Maps a raw table onto class ids.
    pub fn from_raw(raw: RawTable, map: &ClassMap) -> Result<Self> {
        if raw.n_samples() == 0 {
            return Err(DataError::Empty);
        }
        let (labels, classes) = map_labels(&raw.labels, map)?;
        let k = classes.len();
        Self::assemble(raw.columns, labels, k, classes, raw.index_base)
    }

    /// Recomputes the stable per-feature sort order.
    pub fn build_sort_index(&mut self) {
        self.sort_index = self.columns.par_iter().map(|col| sort_order(col)).collect();
    }

    /// Number of samples of each class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Zero-fills extra features so the dataset has at least `n` columns.
    pub fn pad_features(&mut self, n: usize) {
        if n <= self.n_features {
            return;
        }
        while self.columns.len() < n {
            self.columns.push(vec![0.0; self.n_samples]);
        }
        self.n_features = n;
        self.build_sort_index();
    }

    /// Keeps only the given sample ids (in the given order).
    pub fn select(&self, ids: &[usize]) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .map(|c| ids.iter().map(|&i| c[i]).collect())
            .collect();
        let labels = ids.iter().map(|&i| self.labels[i]).collect();
        Self::assemble(columns, labels, self.n_classes, self.classes.clone(), self.index_base)
    }

    /// Writes libsvm text using the original class labels and 1-based indices.
    /// Zero values are omitted.
    pub fn write_libsvm<W: Write>(&self, mut out: W) -> io::Result<()> {
        for i in 0..self.n_samples {
            write!(out, "{}", self.classes[self.labels[i] as usize])?;
            for (f, col) in self.columns.iter().enumerate() {
                let v = col[i];
                if v != 0.0 {
                    write!(out, " {}:{}", f + 1, v)?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Stable ascending order of `values`; ties keep ascending sample id.
pub fn sort_order(values: &[f64]) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..values.len() as u32).collect();
    idx.sort_by(|&a, &b| values[a as usize].total_cmp(&values[b as usize]));
    idx
}

fn map_labels(raw: &[i64], map: &ClassMap) -> Result<(Vec<u32>, Vec<i64>)> {
    let distinct: Vec<i64> = raw.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let classes = match map {
        ClassMap::Infer => distinct.clone(),
        ClassMap::Count(k) => {
            let k = *k;
            if distinct.iter().all(|&l| l >= 0 && (l as usize) < k) {
                (0..k as i64).collect()
            } else if distinct.len() == k {
                distinct.clone()
            } else {
                return Err(DataError::ClassCount { distinct: distinct.len(), n_classes: k });
            }
        }
        ClassMap::Fixed(classes) => classes.clone(),
    };
    if classes.len() < MIN_CLASSES {
        return Err(DataError::TooFewClasses { found: classes.len() });
    }
    let labels = raw
        .iter()
        .map(|&l| match classes.binary_search(&l) {
            Ok(pos) => Ok(pos as u32),
            Err(_) => classes
                .iter()
                .position(|&c| c == l)
                .map(|p| p as u32)
                .ok_or(DataError::UnknownLabel { label: l }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((labels, classes))
}

fn parse_label(tok: &str, line: usize) -> Result<i64> {
    if let Ok(v) = tok.parse::<i64>() {
        return Ok(v);
    }
    // "+1", "2.0" and similar integral spellings
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(DataError::BadLabel { line, label: tok.to_string() }),
    }
}

/// Opens `path` for buffered reading; `-` means stdin.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        Ok(Box::new(BufReader::new(File::open(path)?)))
    }
}

/// Reads libsvm text. Blank lines and `#` comments are skipped.
pub fn read_libsvm_raw<R: BufRead>(reader: R, index_base: IndexBase) -> Result<RawTable> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut saw_zero = false;
    let mut max_index = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let label = parse_label(toks.next().unwrap_or_default(), lineno)?;
        let mut row = Vec::new();
        for tok in toks {
            let (idx, val) = tok.split_once(':').ok_or_else(|| DataError::Malformed {
                line: lineno,
                msg: format!("expected idx:val, found {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| DataError::Malformed {
                line: lineno,
                msg: format!("bad feature index {idx:?}"),
            })?;
            let val: f64 = val.parse().map_err(|_| DataError::Malformed {
                line: lineno,
                msg: format!("bad feature value {val:?}"),
            })?;
            if !val.is_finite() {
                return Err(DataError::Malformed {
                    line: lineno,
                    msg: format!("non-finite feature value {val}"),
                });
            }
            if idx == 0 {
                if index_base == IndexBase::One {
                    return Err(DataError::Malformed {
                        line: lineno,
                        msg: "feature index 0 in a 1-based file".into(),
                    });
                }
                saw_zero = true;
            }
            max_index = max_index.max(idx);
            row.push((idx, val));
        }
        labels.push(label);
        rows.push(row);
    }
    if labels.is_empty() {
        return Err(DataError::Empty);
    }
    let base = match index_base {
        IndexBase::Auto if saw_zero => IndexBase::Zero,
        IndexBase::Auto => IndexBase::One,
        b => b,
    };
    let offset = base.offset();
    let any_feature = rows.iter().any(|r| !r.is_empty());
    let n_features = if any_feature { max_index + 1 - offset } else { 0 };
    let mut columns = vec![vec![0.0; labels.len()]; n_features];
    for (i, row) in rows.iter().enumerate() {
        for &(idx, val) in row {
            columns[idx - offset][i] = val;
        }
    }
    Ok(RawTable { labels, columns, index_base: base })
}

/// Reads libsvm text from `path` (`-` for stdin).
pub fn parse_libsvm(path: &Path, n_classes: Option<usize>) -> Result<Dataset> {
    let raw = read_libsvm_raw(open_input(path)?, IndexBase::Auto)?;
    let map = n_classes.map_or(ClassMap::Infer, ClassMap::Count);
    Dataset::from_raw(raw, &map)
}

/// Reads a rectangular numeric CSV. The first row is treated as a header if
/// any of its cells is not a number.
pub fn read_csv_raw<R: Read>(reader: R, label_column: usize) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut labels = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (rowno, rec) in rdr.records().enumerate() {
        let row = rowno + 1;
        let rec = rec.map_err(|e| DataError::Malformed { line: row, msg: e.to_string() })?;
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        if rowno == 0 && rec.iter().any(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(DataError::Ragged { row, expected, found: rec.len() });
        }
        if label_column >= expected {
            return Err(DataError::LabelColumn { column: label_column, width: expected });
        }
        if columns.is_empty() {
            columns = vec![Vec::new(); expected - 1];
        }
        let mut f = 0;
        for (c, cell) in rec.iter().enumerate() {
            if c == label_column {
                labels.push(parse_label(cell, row)?);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| DataError::Malformed {
                line: row,
                msg: format!("non-numeric cell {cell:?} in column {c}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Malformed { line: row, msg: format!("non-finite cell {v}") });
            }
            columns[f].push(v);
            f += 1;
        }
    }
    if labels.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(RawTable { labels, columns, index_base: IndexBase::Zero })
}

/// Reads a CSV file from `path` (`-` for stdin).
pub fn parse_csv(path: &Path, label_column: usize) -> Result<Dataset> {
    let raw = read_csv_raw(open_input(path)?, label_column)?;
    Dataset::from_raw(raw, &ClassMap::Infer)
}

/// On-disk table layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Libsvm,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "libsvm" => Ok(Format::Libsvm),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?} (expected libsvm or csv)")),
        }
    }
}

/// Reads a table in either format. `index_base` only matters for libsvm and
/// `label_column` only for CSV.
pub fn read_raw(path: &Path, format: Format, label_column: usize, index_base: IndexBase) -> Result<RawTable> {
    let input = open_input(path)?;
    match format {
        Format::Libsvm => read_libsvm_raw(input, index_base),
        Format::Csv => read_csv_raw(input, label_column),
    }
}

/// Deterministic class-stratified sample of `n` rows without replacement.
///
/// Each class keeps at least one sample; the remaining slots are shared in
/// proportion to class size (largest remainder, ties to the lower class).
/// The selected rows keep their original relative order.
pub fn subsample(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    let k = dataset.n_classes;
    if n > dataset.n_samples {
        return Err(DataError::SubsampleSize { requested: n, available: dataset.n_samples });
    }
    let counts = dataset.class_counts();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if n < present {
        return Err(DataError::SubsampleTooSmall { requested: n, n_classes: k });
    }
    if n == dataset.n_samples {
        return Ok(dataset.clone());
    }
    let quota = stratified_quota(&counts, n);

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in dataset.labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = Vec::with_capacity(n);
    for (members, &q) in by_class.iter_mut().zip(&quota) {
        members.shuffle(&mut rng);
        ids.extend_from_slice(&members[..q]);
    }
    ids.sort_unstable();
    dataset.select(&ids)
}

fn stratified_quota(counts: &[usize], n: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    let ideal: Vec<f64> = counts.iter().map(|&c| n as f64 * c as f64 / total as f64).collect();
    let mut quota: Vec<usize> = counts
        .iter()
        .zip(&ideal)
        .map(|(&c, &x)| if c == 0 { 0 } else { (x.floor() as usize).clamp(1, c) })
        .collect();
    // order classes by fractional remainder, largest first, ties to the lower class
    let mut by_rem: Vec<usize> = (0..counts.len()).collect();
    by_rem.sort_by(|&a, &b| {
        let ra = ideal[a] - quota[a] as f64;
        let rb = ideal[b] - quota[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut sum: usize = quota.iter().sum();
    while sum < n {
        for &j in &by_rem {
            if sum < n && quota[j] < counts[j] {
                quota[j] += 1;
                sum += 1;
            }
        }
    }
    while sum > n {
        // bumped-to-one classes overshot; take back from the least deserving
        for &j in by_rem.iter().rev() {
            if sum > n && quota[j] > 1 {
                quota[j] -= 1;
                sum -= 1;
            }
        }
    }
    quota
}
