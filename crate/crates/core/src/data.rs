//! Loading, cleaning, scaling and splitting labelled tabular data.
//!
//! All randomness comes from ChaCha8 seeded with `seed_from_u64(seed)` and a
//! per-purpose stream number (see [`stream`]), so each consumer of the seed
//! is reproducible on its own.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{PsvmError, Result};
use crate::matrix::Matrix;
use crate::model::class_order;

/// Stream numbers for [`rng_for`].
pub mod stream {
    pub const SPLIT: u64 = 0;
    pub const PAIR: u64 = 1;
    pub const FOLDS: u64 = 2;
    pub const SUBSETS: u64 = 3;
    pub const INSTANCES: u64 = 4;
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    /// Class labels as text; numeric labels are normalized (`+1.0` -> `1`).
    pub labels: Vec<String>,
    pub feature_names: Option<Vec<String>>,
    pub standardized: bool,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Vec<String>) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(PsvmError::invalid(format!(
                "{} rows but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        Ok(Self {
            x,
            labels,
            feature_names: None,
            standardized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn classes(&self) -> Vec<String> {
        class_order(&self.labels)
    }

    /// `+1` for the first class in [`class_order`], `-1` for the other.
    pub fn binary_targets(&self) -> Result<Vec<f64>> {
        let classes = self.classes();
        if classes.len() != 2 {
            return Err(PsvmError::invalid(format!(
                "binary targets need exactly two classes, found {}",
                classes.len()
            )));
        }
        Ok(self
            .labels
            .iter()
            .map(|l| if *l == classes[0] { 1.0 } else { -1.0 })
            .collect())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            standardized: self.standardized,
        }
    }
}

/// Which field holds the label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    /// Zero-based field index.
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = PsvmError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "last" => LabelColumn::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// `None` reads every field as a feature.
    pub label: Option<LabelColumn>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: true,
            label: Some(LabelColumn::Last),
        }
    }
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty()
        || f == "?"
        || f.eq_ignore_ascii_case("na")
        || f.eq_ignore_ascii_case("nan")
        || f.eq_ignore_ascii_case("n/a")
}

fn normalize_label(raw: &str) -> String {
    let t = raw.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => format!("{v}"),
        _ => t.to_string(),
    }
}

/// Reads a labelled file. Rows with a missing field are dropped.
pub fn load_csv(path: &Path, has_header: bool, label: LabelColumn) -> Result<Dataset> {
    load_csv_with(
        path,
        &CsvOptions {
            has_header,
            label: Some(label),
            ..CsvOptions::default()
        },
    )
}

pub fn load_csv_with(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| PsvmError::io(path, e))?;
    read_csv(file, opts)
}

/// Parses delimiter-separated text from any reader.
pub fn read_csv<R: std::io::Read>(reader: R, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let csv_err = |e: csv::Error| {
        let row = e.position().map_or(0, |p| p.line() as usize);
        PsvmError::Parse {
            row,
            column: 0,
            message: e.to_string(),
        }
    };

    let header: Option<Vec<String>> = if opts.has_header {
        match records.next() {
            Some(r) => Some(r.map_err(csv_err)?.iter().map(str::to_string).collect()),
            None => None,
        }
    } else {
        None
    };

    let mut width: Option<usize> = header.as_ref().map(Vec::len);
    let mut label_idx: Option<usize> = None;
    let resolve_label = |width: usize| -> Result<Option<usize>> {
        Ok(match &opts.label {
            None => None,
            Some(LabelColumn::Last) => Some(width - 1),
            Some(LabelColumn::Index(i)) if *i < width => Some(*i),
            Some(LabelColumn::Index(i)) => {
                return Err(PsvmError::invalid(format!(
                    "label column {i} out of range for {width} fields"
                )))
            }
            Some(LabelColumn::Name(name)) => {
                let h = header.as_ref().ok_or_else(|| {
                    PsvmError::invalid(format!(
                        "label column {name:?} given by name but the file has no header"
                    ))
                })?;
                Some(
                    h.iter()
                        .position(|c| c == name)
                        .ok_or_else(|| PsvmError::invalid(format!("no column named {name:?}")))?,
                )
            }
        })
    };
    if let Some(w) = width {
        label_idx = resolve_label(w)?;
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0usize;
    let mut dropped = 0usize;
    for rec in records {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let w = match width {
            Some(w) => w,
            None => {
                width = Some(rec.len());
                label_idx = resolve_label(rec.len())?;
                rec.len()
            }
        };
        if rec.len() != w {
            return Err(PsvmError::Parse {
                row: line,
                column: rec.len().min(w) + 1,
                message: format!("expected {w} fields, found {}", rec.len()),
            });
        }
        if rec.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        for (c, field) in rec.iter().enumerate() {
            if Some(c) == label_idx {
                labels.push(normalize_label(field));
            } else {
                let v: f64 = field.parse().map_err(|_| PsvmError::Parse {
                    row: line,
                    column: c + 1,
                    message: format!("not a number: {field:?}"),
                })?;
                data.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(PsvmError::invalid("no complete rows in input"));
    }
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing values");
    }
    let w = width.unwrap_or(0);
    let cols = w - usize::from(label_idx.is_some());
    let feature_names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_idx)
            .map(|(_, n)| n)
            .collect()
    });
    if label_idx.is_none() {
        labels = vec![String::new(); rows];
    }
    Ok(Dataset {
        x: Matrix::from_vec(rows, cols, data)?,
        labels,
        feature_names,
        standardized: false,
    })
}

/// Per-column affine map `(x - mean) / sd` with population `sd`; columns with
/// zero spread map to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let (m, n) = (x.rows(), x.cols());
        let mut mean = vec![0.0; n];
        for r in x.iter_rows() {
            for (mu, v) in mean.iter_mut().zip(r) {
                *mu += v;
            }
        }
        for mu in &mut mean {
            *mu /= m.max(1) as f64;
        }
        let mut var = vec![0.0; n];
        for r in x.iter_rows() {
            for ((s, v), mu) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - mu) * (v - mu);
            }
        }
        let sd = var
            .into_iter()
            .map(|s| (s / m.max(1) as f64).sqrt())
            .collect();
        Self { mean, sd }
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for ((v, mu), sd) in row.iter_mut().zip(&self.mean).zip(&self.sd) {
            *v = if *sd > 0.0 { (*v - mu) / sd } else { 0.0 };
        }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(PsvmError::invalid(format!(
                "scaler expects {} features, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            self.transform_row(out.row_mut(i));
        }
        Ok(out)
    }
}

/// Scales every column to zero mean and unit population variance.
pub fn standardize(ds: &Dataset) -> Dataset {
    standardize_with_scaler(ds).0
}

pub fn standardize_with_scaler(ds: &Dataset) -> (Dataset, Standardizer) {
    let scaler = Standardizer::fit(&ds.x);
    let x = scaler
        .transform(&ds.x)
        .expect("scaler fitted on the same matrix");
    (
        Dataset {
            x,
            labels: ds.labels.clone(),
            feature_names: ds.feature_names.clone(),
            standardized: true,
        },
        scaler,
    )
}

/// Quality scores `0..=5` become `-1`, `6..=10` become `+1`.
pub fn binarize_wine(quality: &[i64]) -> Result<Vec<f64>> {
    quality
        .iter()
        .map(|&q| match q {
            0..=5 => Ok(-1.0),
            6..=10 => Ok(1.0),
            _ => Err(PsvmError::invalid(format!(
                "wine quality {q} outside [0, 10]"
            ))),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

/// `floor(m * fraction)`, robust to representation error in `fraction`.
pub fn train_count(m: usize, fraction: f64) -> usize {
    ((m as f64) * fraction + 1e-9).floor() as usize
}

/// Train and test row indices.
///
/// Plain mode shuffles `0..m` and takes the first `floor(m f)` rows.
/// Stratified mode shuffles each class, takes `floor(n_c f)` rows from each
/// and hands the remaining slots to the classes with the largest fractional
/// remainders (ties to the earlier class), so the train size is the same.
pub fn split_indices(labels: &[String], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(PsvmError::invalid(format!(
            "train fraction must lie in (0, 1), got {f}"
        )));
    }
    let m = labels.len();
    let n_train = train_count(m, f);
    let mut rng = rng_for(spec.seed, stream::SPLIT);
    if !spec.stratified {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut rng);
        let test = idx.split_off(n_train);
        return Ok((idx, test));
    }
    let classes = class_order(labels);
    let mut groups: Vec<Vec<usize>> = classes
        .iter()
        .map(|c| (0..m).filter(|&i| labels[i] == *c).collect())
        .collect();
    for g in &mut groups {
        g.shuffle(&mut rng);
    }
    let mut take: Vec<usize> = groups.iter().map(|g| train_count(g.len(), f)).collect();
    let mut rest = n_train - take.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = groups[a].len() as f64 * f - take[a] as f64;
        let rb = groups[b].len() as f64 * f - take[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(order.len() * 2) {
        if rest == 0 {
            break;
        }
        if take[c] < groups[c].len() {
            take[c] += 1;
            rest -= 1;
        }
    }
    if let Some(c) = (0..groups.len()).find(|&c| take[c] == 0) {
        return Err(PsvmError::invalid(format!(
            "class {:?} has no training rows at fraction {f}",
            classes[c]
        )));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (g, &t) in groups.iter().zip(&take) {
        train.extend_from_slice(&g[..t]);
        test.extend_from_slice(&g[t..]);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((train, test))
}

pub fn train_test_split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (tr, te) = split_indices(&ds.labels, spec)?;
    Ok((ds.subset(&tr), ds.subset(&te)))
}

fn check_folds(m: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(PsvmError::invalid(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    if k > m {
        return Err(PsvmError::invalid(format!("{k} folds for only {m} rows")));
    }
    Ok(())
}

/// `k` disjoint folds covering `0..m`; the first `m mod k` folds hold one
/// extra index.
pub fn kfold_indices(m: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    check_folds(m, k)?;
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut rng_for(seed, stream::FOLDS));
    let (base, extra) = (m / k, m % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Class-balanced folds: each class is shuffled, the classes are
/// concatenated in [`class_order`] and position `p` goes to fold `p mod k`.
pub fn stratified_kfold_indices(labels: &[String], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let m = labels.len();
    check_folds(m, k)?;
    let mut rng = rng_for(seed, stream::FOLDS);
    let mut order = Vec::with_capacity(m);
    for c in class_order(labels) {
        let mut g: Vec<usize> = (0..m).filter(|&i| labels[i] == c).collect();
        g.shuffle(&mut rng);
        order.extend(g);
    }
    let mut folds = vec![Vec::new(); k];
    for (p, i) in order.into_iter().enumerate() {
        folds[p % k].push(i);
    }
    Ok(folds)
}
