//! Named reproduction experiments.
//!
//! * `table1:<cancer|heart|ionosphere|wine|banknote>`: Gaussian kernel,
//!   every `p` of the default grid at its frozen `C`, one held-out split.
//! * `table2:<glass|vehicle|dermatology|usps>`: linear kernel, 8:2 split,
//!   `p` in {1.5, 2}, `C` chosen by 5-fold cross-validation on the train part.
//! * `fig2`: learning curves on the wine data for every `p` of the grid.
//!
//! Data files are looked up by name in a data directory; see the README for
//! the expected layouts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::data::{
    binarize_wine, load_csv, rng_for, standardize, stream, train_test_split, Dataset, LabelColumn,
    SplitSpec,
};
use crate::dual::{dual_objective, Hyperparams};
use crate::error::{PsvmError, Result};
use crate::kernel::{kernel_matrix, Kernel, KernelSpec, KernelStore};
use crate::matrix::Matrix;
use crate::reference::{reference_dual_solve, OracleConfig};
use crate::selection::{
    cross_validate, fit_and_evaluate, learning_curve, GridSpec, DEFAULT_C_GRID, DEFAULT_P_GRID,
};
use crate::solver::{train_dual, SolverOptions};

/// Environment variable that overrides the data directory.
pub const DATA_DIR_ENV: &str = "PSVM_DATA_DIR";

pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// A binary benchmark: file layout, split and per-`p` settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySetup {
    pub name: &'static str,
    pub file: &'static str,
    pub label: &'static str,
    pub train_fraction: f64,
    /// Quality scores to be binarized at 5/6.
    pub wine_quality: bool,
    /// `C` used at each `p` of [`DEFAULT_P_GRID`]. Ignored at `p = 1`.
    pub c_per_p: [f64; 9],
    /// Reference test accuracy (%) and nSV (%) at each `p`.
    pub reported_accuracy: [f64; 9],
    pub reported_nsv: [f64; 9],
}

pub const BINARY_SETUPS: [BinarySetup; 5] = [
    BinarySetup {
        name: "cancer",
        file: "cancer.csv",
        label: "diagnosis",
        train_fraction: 0.7,
        wine_quality: false,
        c_per_p: [5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 10.0],
        reported_accuracy: [97.66; 9],
        reported_nsv: [31.2, 31.2, 30.9, 31.2, 31.7, 31.7, 32.2, 34.9, 39.4],
    },
    BinarySetup {
        name: "heart",
        file: "heart.csv",
        label: "class",
        train_fraction: 0.7,
        wine_quality: false,
        c_per_p: [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.1],
        reported_accuracy: [
            82.72, 85.19, 85.19, 85.19, 85.19, 83.95, 83.95, 83.95, 83.95,
        ],
        reported_nsv: [78.3, 79.4, 79.4, 79.4, 84.1, 86.2, 89.4, 93.7, 100.0],
    },
    BinarySetup {
        name: "ionosphere",
        file: "ionosphere.csv",
        label: "class",
        train_fraction: 0.7,
        wine_quality: false,
        c_per_p: [0.1; 9],
        reported_accuracy: [
            95.28, 96.23, 96.23, 96.23, 97.17, 97.17, 97.17, 97.17, 97.17,
        ],
        reported_nsv: [59.2, 89.0, 89.0, 90.6, 91.4, 94.3, 98.8, 100.0, 100.0],
    },
    BinarySetup {
        name: "wine",
        file: "wine.csv",
        label: "quality",
        train_fraction: 0.1,
        wine_quality: true,
        c_per_p: [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.1],
        reported_accuracy: [
            74.49, 74.86, 74.91, 74.88, 75.07, 75.15, 75.41, 75.63, 74.91,
        ],
        reported_nsv: [79.0, 79.5, 79.8, 79.5, 82.4, 84.3, 87.2, 91.7, 100.0],
    },
    BinarySetup {
        name: "banknote",
        file: "banknote.csv",
        label: "class",
        train_fraction: 0.3,
        wine_quality: false,
        c_per_p: [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 1.0],
        reported_accuracy: [100.0; 9],
        reported_nsv: [26.3, 40.6, 41.6, 45.5, 48.4, 49.1, 56.2, 66.4, 82.2],
    },
];

pub fn binary_setup(name: &str) -> Result<&'static BinarySetup> {
    BINARY_SETUPS
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| PsvmError::invalid(format!("unknown binary benchmark {name:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSetup {
    pub name: &'static str,
    pub file: &'static str,
    pub label: &'static str,
    /// Reference accuracy at p = 1.5 and p = 2.
    pub reported: [f64; 2],
}

pub const MULTICLASS_SETUPS: [MulticlassSetup; 4] = [
    MulticlassSetup {
        name: "glass",
        file: "glass.csv",
        label: "type",
        reported: [0.744, 0.767],
    },
    MulticlassSetup {
        name: "vehicle",
        file: "vehicle.csv",
        label: "class",
        reported: [0.834, 0.828],
    },
    MulticlassSetup {
        name: "dermatology",
        file: "dermatology.csv",
        label: "class",
        reported: [0.986, 0.986],
    },
    MulticlassSetup {
        name: "usps",
        file: "usps.csv",
        label: "label",
        reported: [0.959, 0.960],
    },
];

pub fn multiclass_setup(name: &str) -> Result<&'static MulticlassSetup> {
    MULTICLASS_SETUPS
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| PsvmError::invalid(format!("unknown multiclass benchmark {name:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub data_dir: PathBuf,
    pub seed: u64,
    pub stratified: bool,
    pub eps: f64,
    pub max_iter: usize,
    pub solver: SolverOptions,
    /// Restricts the `p` values that are run.
    pub p_filter: Option<Vec<f64>>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            data_dir: default_data_dir(),
            seed: 42,
            stratified: false,
            eps: crate::dual::DEFAULT_EPS,
            max_iter: crate::dual::DEFAULT_MAX_ITER,
            solver: SolverOptions::default(),
            p_filter: None,
        }
    }
}

impl BenchOptions {
    fn hyper(&self, p: f64, c: f64) -> Result<Hyperparams> {
        Ok(Hyperparams::new(p, c)?
            .with_eps(self.eps)
            .with_max_iter(self.max_iter)
            .with_seed(self.seed))
    }

    fn wants(&self, p: f64) -> bool {
        self.p_filter
            .as_ref()
            .map_or(true, |ps| ps.iter().any(|&q| (q - p).abs() < 1e-9))
    }

    fn split(&self, fraction: f64) -> SplitSpec {
        SplitSpec {
            train_fraction: fraction,
            seed: self.seed,
            stratified: self.stratified,
        }
    }
}

fn data_path(dir: &Path, file: &str) -> Result<PathBuf> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(PsvmError::invalid(format!(
            "data file {} not found (set {DATA_DIR_ENV} or --data-dir)",
            path.display()
        )));
    }
    Ok(path)
}

/// Loads, cleans and standardizes a binary benchmark dataset.
pub fn load_binary(setup: &BinarySetup, dir: &Path) -> Result<Dataset> {
    let path = data_path(dir, setup.file)?;
    let mut ds = load_csv(&path, true, LabelColumn::Name(setup.label.to_string()))?;
    if setup.wine_quality {
        let q = ds
            .labels
            .iter()
            .map(|l| {
                l.parse::<i64>().map_err(|_| {
                    PsvmError::invalid(format!("wine quality {l:?} is not an integer"))
                })
            })
            .collect::<Result<Vec<i64>>>()?;
        ds.labels = binarize_wine(&q)?.iter().map(|v| format!("{v}")).collect();
    }
    Ok(standardize(&ds))
}

pub fn load_multiclass(setup: &MulticlassSetup, dir: &Path) -> Result<Dataset> {
    let path = data_path(dir, setup.file)?;
    let ds = load_csv(&path, true, LabelColumn::Name(setup.label.to_string()))?;
    Ok(standardize(&ds))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub dataset: &'static str,
    pub p: f64,
    pub c: f64,
    pub train_size: usize,
    pub test_size: usize,
    /// Percent.
    pub accuracy: f64,
    /// Percent of the training set.
    pub nsv: f64,
    pub reported_accuracy: f64,
    pub reported_nsv: f64,
    pub seconds: f64,
}

/// One row per `p` of the grid for a binary benchmark.
pub fn table1(name: &str, opts: &BenchOptions) -> Result<Vec<Table1Row>> {
    let setup = binary_setup(name)?;
    let ds = load_binary(setup, &opts.data_dir)?;
    let (train, test) = train_test_split(&ds, &opts.split(setup.train_fraction))?;
    let kernel = KernelSpec::Gaussian(None);
    let mut rows = Vec::new();
    for (k, &p) in DEFAULT_P_GRID.iter().enumerate() {
        if !opts.wants(p) {
            continue;
        }
        let c = setup.c_per_p[k];
        let hp = opts.hyper(p, c)?;
        let (_, rep) = fit_and_evaluate(&train, &test, &hp, &kernel, &opts.solver)
            .map_err(|e| e.context(format!("{name} at p = {p}")))?;
        rows.push(Table1Row {
            dataset: setup.name,
            p,
            c,
            train_size: rep.train_size,
            test_size: rep.test_size,
            accuracy: 100.0 * rep.accuracy,
            nsv: 100.0 * rep.nsv_fraction,
            reported_accuracy: setup.reported_accuracy[k],
            reported_nsv: setup.reported_nsv[k],
            seconds: rep.wall_time,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table2Row {
    pub dataset: &'static str,
    pub p: f64,
    pub c: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub reported: f64,
    pub seconds: f64,
}

/// Multiclass benchmark with `C` selected by cross-validation per `p`.
pub fn table2(name: &str, opts: &BenchOptions) -> Result<Vec<Table2Row>> {
    let setup = multiclass_setup(name)?;
    let ds = load_multiclass(setup, &opts.data_dir)?;
    let (train, test) = train_test_split(&ds, &opts.split(0.8))?;
    let kernel = KernelSpec::Linear;
    let mut rows = Vec::new();
    for (k, &p) in [1.5, 2.0].iter().enumerate() {
        if !opts.wants(p) {
            continue;
        }
        let grid = GridSpec {
            p_values: vec![p],
            c_values: DEFAULT_C_GRID.to_vec(),
            folds: 5,
        };
        let base = opts.hyper(p, 1.0)?;
        let cv = cross_validate(&train, &grid, &kernel, &base, &opts.solver)
            .map_err(|e| e.context(format!("{name} at p = {p}")))?;
        let hp = opts.hyper(p, cv.best_c)?;
        let (_, rep) = fit_and_evaluate(&train, &test, &hp, &kernel, &opts.solver)?;
        rows.push(Table2Row {
            dataset: setup.name,
            p,
            c: cv.best_c,
            train_size: rep.train_size,
            test_size: rep.test_size,
            accuracy: rep.accuracy,
            reported: setup.reported[k],
            seconds: rep.wall_time,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Row {
    pub p: f64,
    pub c: f64,
    pub fraction: f64,
    pub train_size: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub nsv: f64,
}

pub const FIG2_FRACTIONS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Learning curves on the wine benchmark.
pub fn fig2(opts: &BenchOptions) -> Result<Vec<Fig2Row>> {
    let setup = binary_setup("wine")?;
    let ds = load_binary(setup, &opts.data_dir)?;
    let (train, test) = train_test_split(&ds, &opts.split(setup.train_fraction))?;
    let kernel = KernelSpec::Gaussian(None);
    let mut rows = Vec::new();
    for (k, &p) in DEFAULT_P_GRID.iter().enumerate() {
        if !opts.wants(p) {
            continue;
        }
        let c = setup.c_per_p[k];
        let hp = opts.hyper(p, c)?;
        for r in learning_curve(&train, &test, &FIG2_FRACTIONS, &hp, &kernel, &opts.solver)? {
            rows.push(Fig2Row {
                p,
                c,
                fraction: r.fraction,
                train_size: r.train_size,
                train_accuracy: r.train_accuracy,
                test_accuracy: r.test_accuracy,
                nsv: 100.0 * r.nsv_fraction,
            });
        }
    }
    Ok(rows)
}

/// A random binary problem with both classes present.
#[derive(Debug, Clone)]
pub struct Instance {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub kernel: Kernel,
    pub k: Matrix,
}

/// Gaussian clouds around `+-mu` in `n_features` dimensions, with overlap.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    m: usize,
    n_features: usize,
    gaussian: bool,
) -> Result<Instance> {
    if m < 2 {
        return Err(PsvmError::invalid("instances need at least two points"));
    }
    let mut y: Vec<f64> = (0..m)
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let mut data = Vec::with_capacity(m * n_features);
    for &label in &y {
        for _ in 0..n_features {
            // Sum of uniforms: cheap, bell-shaped noise.
            let noise: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() * 0.5;
            data.push(0.6 * label + noise);
        }
    }
    let x = Matrix::from_vec(m, n_features, data)?;
    let kernel = if gaussian {
        KernelSpec::Gaussian(None).resolve(&x)?
    } else {
        Kernel::Linear
    };
    let k = kernel_matrix(&kernel, &x)?;
    Ok(Instance { x, y, kernel, k })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub instance: usize,
    pub m: usize,
    pub p: f64,
    pub c: f64,
    pub gaussian: bool,
    pub solver_objective: f64,
    pub oracle_objective: f64,
    pub relative_gap: f64,
}

/// Compares the pair solver with the reference solver on random instances.
pub fn oracle_check(count: usize, opts: &BenchOptions) -> Result<Vec<OracleRow>> {
    let mut rng = rng_for(opts.seed, stream::INSTANCES);
    let ps = [1.5, 2.0, 2.5];
    let cs = [0.1, 1.0, 10.0];
    let mut rows = Vec::with_capacity(count);
    for n in 0..count {
        let m = rng.gen_range(4..=50);
        let dims = rng.gen_range(2..=10);
        let gaussian = n % 2 == 0;
        let p = ps[rng.gen_range(0..ps.len())];
        let c = cs[rng.gen_range(0..cs.len())];
        let inst = random_instance(&mut rng, m, dims, gaussian)?;
        let hp = opts.hyper(p, c)?;
        let store = KernelStore::from_matrix(&inst.k)?;
        let (state, _) = train_dual(store, &inst.y, &hp, &opts.solver)?;
        let ours = dual_objective(state.alpha(), &inst.y, &inst.k, &hp)?;
        let (_, theirs) = reference_dual_solve(&inst.k, &inst.y, &hp, &OracleConfig::default())?;
        rows.push(OracleRow {
            instance: n,
            m,
            p,
            c,
            gaussian,
            solver_objective: ours,
            oracle_objective: theirs,
            relative_gap: (theirs - ours) / theirs.abs().max(1e-12),
        });
    }
    Ok(rows)
}

pub fn format_table1(rows: &[Table1Row]) -> String {
    let mut out =
        String::from("dataset,p,C,train,test,acc%,nsv%,reported_acc%,reported_nsv%,seconds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.2},{:.1},{:.2},{:.1},{:.3}",
            r.dataset,
            r.p,
            r.c,
            r.train_size,
            r.test_size,
            r.accuracy,
            r.nsv,
            r.reported_accuracy,
            r.reported_nsv,
            r.seconds
        );
    }
    out
}

pub fn format_table2(rows: &[Table2Row]) -> String {
    let mut out = String::from("dataset,p,C,train,test,accuracy,reported,seconds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3},{:.3},{:.3}",
            r.dataset, r.p, r.c, r.train_size, r.test_size, r.accuracy, r.reported, r.seconds
        );
    }
    out
}

pub fn format_fig2(rows: &[Fig2Row]) -> String {
    let mut out = String::from("p,C,fraction,train_size,train_acc,test_acc,nsv%\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{:.1}",
            r.p, r.c, r.fraction, r.train_size, r.train_accuracy, r.test_accuracy, r.nsv
        );
    }
    out
}

pub fn format_oracle(rows: &[OracleRow]) -> String {
    let mut out = String::from("instance,m,p,C,kernel,solver_obj,oracle_obj,rel_gap\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.10e},{:.10e},{:.3e}",
            r.instance,
            r.m,
            r.p,
            r.c,
            if r.gaussian { "gaussian" } else { "linear" },
            r.solver_objective,
            r.oracle_objective,
            r.relative_gap
        );
    }
    out
}
