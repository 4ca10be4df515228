//! Grid search with k-fold cross-validation, held-out evaluation and
//! learning curves.

use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{rng_for, stratified_kfold_indices, stream, train_count, Dataset};
use crate::dual::Hyperparams;
use crate::error::{PsvmError, Result};
use crate::kernel::KernelSpec;
use crate::model::{encode_labels, fit_multiclass_with, OvOModel};
use crate::solver::{SolverOptions, TrainReport};

pub const DEFAULT_P_GRID: [f64; 9] = [1.0, 1.25, 1.29, 1.33, 1.4, 1.5, 1.67, 2.0, 3.0];
pub const DEFAULT_C_GRID: [f64; 5] = [0.1, 0.5, 1.0, 5.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub p_values: Vec<f64>,
    pub c_values: Vec<f64>,
    pub folds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            p_values: DEFAULT_P_GRID.to_vec(),
            c_values: DEFAULT_C_GRID.to_vec(),
            folds: 5,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p_values.is_empty() || self.c_values.is_empty() {
            return Err(PsvmError::invalid("grid lists must be non-empty"));
        }
        if self.folds < 2 {
            return Err(PsvmError::invalid(
                "cross-validation needs at least 2 folds",
            ));
        }
        if let Some(p) = self.p_values.iter().find(|&&p| !(p >= 1.0)) {
            return Err(PsvmError::invalid(format!("grid p = {p} is below 1")));
        }
        if let Some(c) = self.c_values.iter().find(|&&c| !(c > 0.0)) {
            return Err(PsvmError::invalid(format!("grid C = {c} is not positive")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub correct: usize,
    pub nsv_fraction: f64,
    pub n_support: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub p: f64,
    pub c: f64,
    /// Training time in seconds, when known.
    pub wall_time: f64,
}

/// Resolves the kernel on the training features and trains one-vs-one.
pub fn fit_dataset(
    train: &Dataset,
    hp: &Hyperparams,
    kernel: &KernelSpec,
    opts: &SolverOptions,
) -> Result<(OvOModel, Vec<TrainReport>)> {
    let k = kernel.resolve(&train.x)?;
    fit_multiclass_with(&train.x, &train.labels, hp, &k, opts)
}

/// Predicted class index for every row.
pub fn predict_all(model: &OvOModel, ds: &Dataset) -> Result<Vec<usize>> {
    ds.x.iter_rows().map(|r| model.predict_index(r)).collect()
}

/// Accuracy and support statistics of `model` on a labelled set.
pub fn evaluate(model: &OvOModel, test: &Dataset) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(PsvmError::invalid("evaluation set is empty"));
    }
    let truth = encode_labels(&test.labels, &model.classes)?;
    let pred = predict_all(model, test)?;
    let correct = truth.iter().zip(&pred).filter(|(a, b)| a == b).count();
    let hp = model.pairs[0].model.hp;
    Ok(EvalReport {
        accuracy: correct as f64 / test.len() as f64,
        correct,
        nsv_fraction: model.nsv_fraction(),
        n_support: model.n_support(),
        train_size: model.n_train,
        test_size: test.len(),
        p: hp.p,
        c: hp.c,
        wall_time: 0.0,
    })
}

/// Trains on `train`, evaluates on `test` and records the training time.
pub fn fit_and_evaluate(
    train: &Dataset,
    test: &Dataset,
    hp: &Hyperparams,
    kernel: &KernelSpec,
    opts: &SolverOptions,
) -> Result<(OvOModel, EvalReport)> {
    let start = Instant::now();
    let (model, _) = fit_dataset(train, hp, kernel, opts)?;
    let wall_time = start.elapsed().as_secs_f64();
    let mut report = evaluate(&model, test)?;
    report.wall_time = wall_time;
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvCell {
    pub p: f64,
    pub c: f64,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub best_p: f64,
    pub best_c: f64,
    pub best_accuracy: f64,
    /// One cell per `(p, C)`, in grid order.
    pub cells: Vec<CvCell>,
}

/// Mean stratified k-fold accuracy for every grid cell. The best cell has
/// the highest mean; ties go to the smaller `C`, then the smaller `p`.
pub fn cross_validate(
    ds: &Dataset,
    grid: &GridSpec,
    kernel: &KernelSpec,
    base: &Hyperparams,
    opts: &SolverOptions,
) -> Result<CvReport> {
    grid.validate()?;
    let folds = stratified_kfold_indices(&ds.labels, grid.folds, base.seed)?;
    let splits: Vec<(Dataset, Dataset)> = folds
        .iter()
        .enumerate()
        .map(|(f, held)| {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            (ds.subset(&train_idx), ds.subset(held))
        })
        .collect();

    let mut jobs = Vec::new();
    for &p in &grid.p_values {
        for &c in &grid.c_values {
            for f in 0..splits.len() {
                jobs.push((p, c, f));
            }
        }
    }
    let accs: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(p, c, f)| {
            let run = || -> Result<f64> {
                let mut hp = Hyperparams::new(p, c)?;
                hp.eps = base.eps;
                hp.max_iter = base.max_iter;
                hp.seed = base.seed;
                let (tr, te) = &splits[f];
                let (model, _) = fit_dataset(tr, &hp, kernel, opts)?;
                Ok(evaluate(&model, te)?.accuracy)
            };
            run().map_err(|e| e.context(format!("cross-validation p = {p}, C = {c}, fold {f}")))
        })
        .collect();

    let k = splits.len();
    let mut cells = Vec::new();
    let mut it = accs.into_iter();
    for &p in &grid.p_values {
        for &c in &grid.c_values {
            let fold_accuracy = (0..k)
                .map(|_| it.next().expect("one result per job"))
                .collect::<Result<Vec<f64>>>()?;
            let mean_accuracy = fold_accuracy.iter().sum::<f64>() / k as f64;
            cells.push(CvCell {
                p,
                c,
                fold_accuracy,
                mean_accuracy,
            });
        }
    }
    let best = cells
        .iter()
        .min_by(|a, b| {
            b.mean_accuracy
                .total_cmp(&a.mean_accuracy)
                .then(a.c.total_cmp(&b.c))
                .then(a.p.total_cmp(&b.p))
        })
        .expect("grid is non-empty");
    Ok(CvReport {
        best_p: best.p,
        best_c: best.c,
        best_accuracy: best.mean_accuracy,
        cells: cells.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub fraction: f64,
    pub train_size: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub n_support: usize,
    pub nsv_fraction: f64,
}

/// Trains on nested prefixes of one shuffled copy of `train`. Fractions
/// whose prefix holds a single class are skipped with a warning.
pub fn learning_curve(
    train: &Dataset,
    test: &Dataset,
    fractions: &[f64],
    hp: &Hyperparams,
    kernel: &KernelSpec,
    opts: &SolverOptions,
) -> Result<Vec<CurveRow>> {
    if let Some(f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(PsvmError::invalid(format!(
            "curve fraction {f} outside (0, 1]"
        )));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng_for(hp.seed, stream::SUBSETS));
    let mut rows = Vec::new();
    for &f in fractions {
        let n = train_count(train.len(), f).max(1);
        let sub = train.subset(&order[..n]);
        if sub.classes().len() < 2 {
            warn!("skipping fraction {f}: the {n}-row prefix holds a single class");
            continue;
        }
        let (model, _) = fit_dataset(&sub, hp, kernel, opts)
            .map_err(|e| e.context(format!("learning curve fraction {f}")))?;
        let tr = evaluate(&model, &sub)?;
        let te = evaluate(&model, test)?;
        rows.push(CurveRow {
            fraction: f,
            train_size: n,
            train_accuracy: tr.accuracy,
            test_accuracy: te.accuracy,
            n_support: tr.n_support,
            nsv_fraction: tr.nsv_fraction,
        });
    }
    Ok(rows)
}
