//! Command-line front end: `train`, `predict`, `eval`, `cv` and `bench`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::bench::{self, BenchOptions};
use crate::data::{
    load_csv_with, standardize_with_scaler, train_test_split, CsvOptions, Dataset, LabelColumn,
    SplitSpec,
};
use crate::dual::{Hyperparams, DEFAULT_EPS, DEFAULT_MAX_ITER, DEFAULT_SEED};
use crate::error::{PsvmError, Result};
use crate::kernel::KernelSpec;
use crate::model::OvOModel;
use crate::model_io;
use crate::selection::{self, EvalReport, GridSpec, DEFAULT_C_GRID, DEFAULT_P_GRID};
use crate::solver::{BiasRule, SolverOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "psvm", version, about = "Kernel SVMs with a p-norm hinge loss")]
pub struct CliConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model, save it and report accuracy on a held-out split.
    Train(TrainArgs),
    /// Write one predicted label per row of a data file.
    Predict(PredictArgs),
    /// Accuracy and support statistics of a saved model on labelled data.
    Eval(EvalArgs),
    /// Grid search over (p, C) with stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Run a named reproduction experiment.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Delimited data file.
    #[arg(long)]
    pub data: PathBuf,
    /// Field delimiter (single byte).
    #[arg(long, default_value = ",")]
    pub delim: String,
    /// Label column: `last`, a zero-based index or a header name.
    #[arg(long, default_value = "last")]
    pub label: String,
    /// The file has no header row.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// `gaussian` or `linear`.
    #[arg(long, default_value = "gaussian")]
    pub kernel: String,
    /// Fixed Gaussian bandwidth instead of the data-driven default.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// `kkt-mean` or `support-mean`.
    #[arg(long, default_value = "kkt-mean")]
    pub bias_rule: String,
    /// Keep raw feature values.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Training fraction; 1 trains on everything and reports training accuracy.
    #[arg(long, default_value_t = 0.7)]
    pub split: f64,
    /// Preserve class proportions in the split.
    #[arg(long)]
    pub stratified: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = ",")]
    pub delim: String,
    /// Label column to skip; when given, accuracy is reported on stderr.
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub no_header: bool,
    /// Write predictions here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Comma-separated p values.
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Option<Vec<f64>>,
    /// Comma-separated C values.
    #[arg(long = "C-grid", value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// `table1:<dataset>`, `table2:<dataset>` or `fig2`.
    pub name: Option<String>,
    /// Also compare the solver with the reference solver on this many
    /// random instances.
    #[arg(long, num_args = 0..=1, default_missing_value = "200")]
    pub oracle: Option<usize>,
    /// Directory holding the benchmark files.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long)]
    pub stratified: bool,
    /// Comma-separated subset of p values to run.
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    #[arg(long, default_value = "kkt-mean")]
    pub bias_rule: String,
}

/// Maps an error to its process exit code.
pub fn exit_code(err: &PsvmError) -> i32 {
    if err.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_DATA
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Reports go to `out`, diagnostics to stderr.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match CliConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(config, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            exit_code(&e)
        }
    }
}

pub fn run(config: CliConfig, out: &mut dyn Write) -> Result<()> {
    match config.command {
        Command::Train(a) => train(a, out),
        Command::Predict(a) => predict(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Cv(a) => cv(a, out),
        Command::Bench(a) => run_bench(a, out),
    }
}

fn delimiter(s: &str) -> Result<u8> {
    let s = if s == "\\t" || s == "tab" { "\t" } else { s };
    match s.as_bytes() {
        [b] => Ok(*b),
        _ => Err(PsvmError::invalid(format!(
            "delimiter must be a single byte, got {s:?}"
        ))),
    }
}

fn load_input(a: &InputArgs) -> Result<Dataset> {
    let opts = CsvOptions {
        delimiter: delimiter(&a.delim)?,
        has_header: !a.no_header,
        label: Some(a.label.parse::<LabelColumn>()?),
    };
    load_csv_with(&a.data, &opts)
}

impl FitArgs {
    fn hyperparams(&self) -> Result<Hyperparams> {
        let hp = Hyperparams::new(self.p, self.c)?
            .with_eps(self.eps)
            .with_max_iter(self.max_iter)
            .with_seed(self.seed);
        hp.validate()?;
        Ok(hp)
    }

    fn kernel(&self) -> Result<KernelSpec> {
        let spec: KernelSpec = self.kernel.parse()?;
        match (spec, self.sigma) {
            (KernelSpec::Gaussian(_), Some(s)) => Ok(KernelSpec::Gaussian(Some(s))),
            (KernelSpec::Linear, Some(_)) => Err(PsvmError::invalid(
                "--sigma only applies to the gaussian kernel",
            )),
            (k, None) => Ok(k),
        }
    }

    fn solver(&self) -> Result<SolverOptions> {
        Ok(SolverOptions {
            bias_rule: self.bias_rule.parse::<BiasRule>()?,
            ..SolverOptions::default()
        })
    }
}

fn write_report(out: &mut dyn Write, r: &EvalReport, split: &str) -> Result<()> {
    let io = |e| PsvmError::io("<stdout>", e);
    writeln!(
        out,
        "split,p,C,train,test,correct,accuracy,nsv,nsv%,seconds"
    )
    .map_err(io)?;
    writeln!(
        out,
        "{split},{},{},{},{},{},{:.4},{},{:.1},{:.3}",
        r.p,
        r.c,
        r.train_size,
        r.test_size,
        r.correct,
        r.accuracy,
        r.n_support,
        100.0 * r.nsv_fraction,
        r.wall_time
    )
    .map_err(io)
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let hp = a.fit.hyperparams()?;
    let kernel = a.fit.kernel()?;
    let solver = a.fit.solver()?;
    let raw = load_input(&a.input)?;
    let (ds, scaler) = if a.fit.no_standardize {
        (raw, None)
    } else {
        let (d, s) = standardize_with_scaler(&raw);
        (d, Some(s))
    };
    let (train, test, split) = if a.split >= 1.0 {
        (ds.clone(), ds, "train")
    } else {
        let spec = SplitSpec {
            train_fraction: a.split,
            seed: hp.seed,
            stratified: a.stratified,
        };
        let (tr, te) = train_test_split(&ds, &spec)?;
        (tr, te, "test")
    };
    info!(
        "training on {} rows, {} features, {} classes",
        train.len(),
        train.n_features(),
        train.classes().len()
    );
    let (mut model, report) = selection::fit_and_evaluate(&train, &test, &hp, &kernel, &solver)?;
    model.scaler = scaler;
    model_io::save(&model, &a.model)?;
    info!("model written to {}", a.model.display());
    write_report(out, &report, split)
}

fn load_model(path: &Path) -> Result<OvOModel> {
    model_io::load(path).map_err(|e| e.context(format!("loading model {}", path.display())))
}

fn check_width(model: &OvOModel, ds: &Dataset) -> Result<()> {
    if model.n_features() != ds.n_features() {
        return Err(PsvmError::invalid(format!(
            "model expects {} features, data has {}",
            model.n_features(),
            ds.n_features()
        )));
    }
    Ok(())
}

fn prepared(model: &OvOModel, ds: Dataset) -> Result<Dataset> {
    check_width(model, &ds)?;
    Ok(Dataset {
        x: model.prepare(&ds.x)?,
        ..ds
    })
}

fn predict(a: PredictArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let opts = CsvOptions {
        delimiter: delimiter(&a.delim)?,
        has_header: !a.no_header,
        label: a
            .label
            .as_deref()
            .map(str::parse::<LabelColumn>)
            .transpose()?,
    };
    let ds = prepared(&model, load_csv_with(&a.data, &opts)?)?;
    let pred = selection::predict_all(&model, &ds)?;
    let mut text = String::with_capacity(pred.len() * 4);
    for &k in &pred {
        text.push_str(&model.classes[k]);
        text.push('\n');
    }
    match &a.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).map_err(|e| PsvmError::io(path, e))?);
            w.write_all(text.as_bytes())
                .map_err(|e| PsvmError::io(path, e))?;
            w.flush().map_err(|e| PsvmError::io(path, e))?;
        }
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| PsvmError::io("<stdout>", e))?,
    }
    if a.label.is_some() {
        let correct = pred
            .iter()
            .zip(&ds.labels)
            .filter(|(&k, l)| &model.classes[k] == *l)
            .count();
        eprintln!(
            "accuracy {:.4} ({correct}/{})",
            correct as f64 / ds.len() as f64,
            ds.len()
        );
    }
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let ds = prepared(&model, load_input(&a.input)?)?;
    let report = selection::evaluate(&model, &ds)?;
    write_report(out, &report, "eval")
}

fn cv(a: CvArgs, out: &mut dyn Write) -> Result<()> {
    let base = a.fit.hyperparams()?;
    let kernel = a.fit.kernel()?;
    let solver = a.fit.solver()?;
    let raw = load_input(&a.input)?;
    let ds = if a.fit.no_standardize {
        raw
    } else {
        standardize_with_scaler(&raw).0
    };
    let grid = GridSpec {
        p_values: a.p_grid.unwrap_or_else(|| DEFAULT_P_GRID.to_vec()),
        c_values: a.c_grid.unwrap_or_else(|| DEFAULT_C_GRID.to_vec()),
        folds: a.folds,
    };
    let report = selection::cross_validate(&ds, &grid, &kernel, &base, &solver)?;
    let io = |e| PsvmError::io("<stdout>", e);
    writeln!(out, "p,C,mean_accuracy,folds").map_err(io)?;
    for c in &report.cells {
        let folds: Vec<String> = c.fold_accuracy.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(
            out,
            "{},{},{:.4},{}",
            c.p,
            c.c,
            c.mean_accuracy,
            folds.join(";")
        )
        .map_err(io)?;
    }
    writeln!(
        out,
        "best p = {}, C = {}, mean accuracy = {:.4}",
        report.best_p, report.best_c, report.best_accuracy
    )
    .map_err(io)
}

fn run_bench(a: BenchArgs, out: &mut dyn Write) -> Result<()> {
    let opts = BenchOptions {
        data_dir: a.data_dir.unwrap_or_else(bench::default_data_dir),
        seed: a.seed,
        stratified: a.stratified,
        eps: a.eps,
        max_iter: a.max_iter,
        solver: SolverOptions {
            bias_rule: a.bias_rule.parse()?,
            ..SolverOptions::default()
        },
        p_filter: a.p,
    };
    if a.name.is_none() && a.oracle.is_none() {
        return Err(PsvmError::invalid(
            "bench needs an experiment name or --oracle",
        ));
    }
    let text = match a.name.as_deref() {
        None => String::new(),
        Some("fig2") => bench::format_fig2(&bench::fig2(&opts)?),
        Some(name) => match name.split_once(':') {
            Some(("table1", ds)) => bench::format_table1(&bench::table1(ds, &opts)?),
            Some(("table2", ds)) => bench::format_table2(&bench::table2(ds, &opts)?),
            _ => return Err(PsvmError::invalid(format!(
                "unknown experiment {name:?}; expected table1:<dataset>, table2:<dataset> or fig2"
            ))),
        },
    };
    let io = |e| PsvmError::io("<stdout>", e);
    out.write_all(text.as_bytes()).map_err(io)?;
    if let Some(n) = a.oracle {
        let rows = bench::oracle_check(n, &opts)?;
        let worst = rows
            .iter()
            .map(|r| r.relative_gap.abs())
            .fold(0.0, f64::max);
        out.write_all(bench::format_oracle(&rows).as_bytes())
            .map_err(io)?;
        writeln!(
            out,
            "worst relative objective gap {worst:.3e} over {} instances",
            rows.len()
        )
        .map_err(io)?;
    }
    Ok(())
}
