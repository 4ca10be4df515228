//! Trained classifiers: binary kernel expansions and one-vs-one ensembles.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::data::Standardizer;
use crate::dual::Hyperparams;
use crate::error::{PsvmError, Result};
use crate::kernel::{Kernel, KernelStore};
use crate::matrix::Matrix;
use crate::solver::{train_dual, SolverOptions, TrainReport};

/// `sum_k coef_k K(sv_k, x) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub support_x: Matrix,
    /// `a_k y_k` per support vector.
    pub coef: Vec<f64>,
    pub b: f64,
    pub kernel: Kernel,
    pub hp: Hyperparams,
    pub n_train: usize,
    /// Row of each support vector in the training set.
    pub support_index: Vec<usize>,
}

impl BinaryModel {
    pub fn n_support(&self) -> usize {
        self.coef.len()
    }

    pub fn n_features(&self) -> usize {
        self.support_x.cols()
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(PsvmError::invalid(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.n_features()
            )));
        }
        if !self.kernel.is_analytic() {
            return Err(PsvmError::invalid(
                "models trained on a precomputed kernel cannot score new points",
            ));
        }
        let mut sum = 0.0;
        for (k, &c) in self.coef.iter().enumerate() {
            sum += c * self.kernel.eval_unchecked(self.support_x.row(k), x);
        }
        Ok(sum + self.b)
    }

    /// `+1` or `-1`; a decision value of exactly zero maps to `+1`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(sign(self.decision_value(x)?))
    }
}

/// `+1` for `v >= 0`, else `-1`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn decision_value(model: &BinaryModel, x: &[f64]) -> Result<f64> {
    model.decision_value(x)
}

pub fn predict_binary(model: &BinaryModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

/// Trains a binary model with default solver options.
pub fn fit_binary(x: &Matrix, y: &[f64], hp: &Hyperparams, kernel: &Kernel) -> Result<BinaryModel> {
    Ok(fit_binary_with(x, y, hp, kernel, &SolverOptions::default())?.0)
}

pub fn fit_binary_with(
    x: &Matrix,
    y: &[f64],
    hp: &Hyperparams,
    kernel: &Kernel,
    opts: &SolverOptions,
) -> Result<(BinaryModel, TrainReport)> {
    if x.rows() != y.len() {
        return Err(PsvmError::invalid(format!(
            "{} feature rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    let store = KernelStore::new(kernel, x, opts.full_cap, opts.cache_rows)?;
    let (state, report) = train_dual(store, y, hp, opts)?;
    let support_index = state.support_indices();
    let coef = support_index
        .iter()
        .map(|&k| state.alpha()[k] * y[k])
        .collect();
    let model = BinaryModel {
        support_x: x.select_rows(&support_index),
        coef,
        b: state.bias(),
        kernel: kernel.clone(),
        hp: *hp,
        n_train: x.rows(),
        support_index,
    };
    Ok((model, report))
}

/// One binary model per unordered class pair. Within a pair the earlier
/// class in `classes` is the positive one.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub class_a: usize,
    pub class_b: usize,
    pub model: BinaryModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvOModel {
    pub classes: Vec<String>,
    pub pairs: Vec<PairModel>,
    pub n_train: usize,
    /// Feature scaling to apply to raw inputs before prediction, if the
    /// model was trained on scaled data.
    pub scaler: Option<Standardizer>,
}

impl OvOModel {
    pub fn n_features(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.model.n_features())
    }

    /// Distinct training points that are support vectors in any pair.
    pub fn n_support(&self) -> usize {
        self.pairs
            .iter()
            .flat_map(|p| p.model.support_index.iter().copied())
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn nsv_fraction(&self) -> f64 {
        if self.n_train == 0 {
            0.0
        } else {
            self.n_support() as f64 / self.n_train as f64
        }
    }

    /// Applies the stored scaler, if any, to raw feature rows.
    pub fn prepare(&self, x: &Matrix) -> Result<Matrix> {
        match &self.scaler {
            Some(s) => s.transform(x),
            None => Ok(x.clone()),
        }
    }

    /// Index into `classes` of the predicted class.
    pub fn predict_index(&self, x: &[f64]) -> Result<usize> {
        let k = self.classes.len();
        let mut votes = vec![0usize; k];
        let mut margins = vec![0.0f64; k];
        for p in &self.pairs {
            let d = p.model.decision_value(x)?;
            let winner = if d >= 0.0 { p.class_a } else { p.class_b };
            votes[winner] += 1;
            margins[winner] += d.abs();
        }
        let best = (0..k)
            .max_by(|&a, &b| {
                votes[a]
                    .cmp(&votes[b])
                    .then(
                        margins[a]
                            .partial_cmp(&margins[b])
                            .unwrap_or(Ordering::Equal),
                    )
                    // Earlier classes win remaining ties.
                    .then(b.cmp(&a))
            })
            .unwrap_or(0);
        Ok(best)
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        Ok(&self.classes[self.predict_index(x)?])
    }
}

pub fn predict_multiclass<'m>(model: &'m OvOModel, x: &[f64]) -> Result<&'m str> {
    model.predict(x)
}

fn numeric_label(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Canonical class order.
///
/// Numeric labels sort numerically, others lexically. For the conventional
/// binary encodings `{-1, +1}` and `{0, 1}` the `1` class comes first so it
/// becomes the positive class.
pub fn class_order(labels: &[String]) -> Vec<String> {
    let mut set: Vec<String> = labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let nums: Option<Vec<f64>> = set.iter().map(|s| numeric_label(s)).collect();
    if let Some(nums) = nums {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(set).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let values: Vec<f64> = paired.iter().map(|p| p.0).collect();
        if values == [-1.0, 1.0] || values == [0.0, 1.0] {
            paired.reverse();
        }
        set = paired.into_iter().map(|p| p.1).collect();
    }
    set
}

/// Class index of every label under [`class_order`].
pub fn encode_labels(labels: &[String], classes: &[String]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            classes.iter().position(|c| c == l).ok_or_else(|| {
                PsvmError::invalid(format!("label {l:?} is not one of the model classes"))
            })
        })
        .collect()
}

/// Trains all `k (k - 1) / 2` pairwise models in parallel.
pub fn fit_multiclass(
    x: &Matrix,
    labels: &[String],
    hp: &Hyperparams,
    kernel: &Kernel,
) -> Result<OvOModel> {
    Ok(fit_multiclass_with(x, labels, hp, kernel, &SolverOptions::default())?.0)
}

pub fn fit_multiclass_with(
    x: &Matrix,
    labels: &[String],
    hp: &Hyperparams,
    kernel: &Kernel,
    opts: &SolverOptions,
) -> Result<(OvOModel, Vec<TrainReport>)> {
    if x.rows() != labels.len() {
        return Err(PsvmError::invalid(format!(
            "{} feature rows but {} labels",
            x.rows(),
            labels.len()
        )));
    }
    let classes = class_order(labels);
    if classes.len() < 2 {
        return Err(PsvmError::invalid(format!(
            "need at least two classes, found {}",
            classes.len()
        )));
    }
    let codes = encode_labels(labels, &classes)?;
    let k = classes.len();
    let jobs: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| ((a + 1)..k).map(move |b| (a, b)))
        .collect();
    let results: Vec<Result<(PairModel, TrainReport)>> = jobs
        .par_iter()
        .map(|&(a, b)| {
            let idx: Vec<usize> = (0..codes.len())
                .filter(|&r| codes[r] == a || codes[r] == b)
                .collect();
            let y: Vec<f64> = idx
                .iter()
                .map(|&r| if codes[r] == a { 1.0 } else { -1.0 })
                .collect();
            let sub = x.select_rows(&idx);
            let (mut model, report) = fit_binary_with(&sub, &y, hp, kernel, opts)?;
            for s in model.support_index.iter_mut() {
                *s = idx[*s];
            }
            model.n_train = x.rows();
            Ok((
                PairModel {
                    class_a: a,
                    class_b: b,
                    model,
                },
                report,
            ))
        })
        .collect();
    let mut pairs = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        let (p, rep) = r?;
        pairs.push(p);
        reports.push(rep);
    }
    Ok((
        OvOModel {
            classes,
            pairs,
            n_train: x.rows(),
            scaler: None,
        },
        reports,
    ))
}
