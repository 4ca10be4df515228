//! Pair-wise coordinate ascent on the p-norm SVM dual.
//!
//! Each sweep performs `m` pair updates. The first index of a pair is the
//! point with the largest KKT residual, the second is uniform at random.
//! Training stops once no multiplier moved by `eps` or more during a sweep
//! and the KKT residual is small, or after `max_iter` sweeps. The bias and the margin cache are refreshed
//! at the end of every sweep.

mod pair;
mod state;

use std::time::Instant;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use pair::{
    solve_g_root, Branch, Domain, PairSolution, PairSubproblem, RootMode, BISECTION_RTOL,
    MAX_EXPANSIONS,
};
pub use state::{DualState, PairUpdateResult};

use crate::dual::{dual_objective, Hyperparams};
use crate::error::{PsvmError, Result};
use crate::kernel::{KernelStore, DEFAULT_FULL_MATRIX_CAP};
use crate::matrix::Matrix;

/// RNG stream used for drawing the second index of each pair.
pub const PAIR_STREAM: u64 = 1;

/// Which intercept the trained model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasRule {
    /// Mean of `y_k - f_k` over the support vectors.
    SupportMean,
    /// Mean of `y_k (1 - xi_k) - f_k` over the support vectors, with the
    /// slack recovered from the multiplier. Identical to `SupportMean` at
    /// `p = 1`.
    #[default]
    KktMean,
}

impl std::str::FromStr for BiasRule {
    type Err = PsvmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "support-mean" => Ok(BiasRule::SupportMean),
            "kkt-mean" => Ok(BiasRule::KktMean),
            _ => Err(PsvmError::invalid(format!(
                "unknown bias rule {s:?}, expected support-mean or kkt-mean"
            ))),
        }
    }
}

impl std::fmt::Display for BiasRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BiasRule::SupportMean => "support-mean",
            BiasRule::KktMean => "kkt-mean",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Multipliers above this count as support vectors.
    pub sv_threshold: f64,
    /// Relative KKT tolerance: a sweep without movement ends training only
    /// when the residual is below `kkt_tol * (1 + max a)`.
    pub kkt_tol: f64,
    /// Problems with at most this many rows keep the full kernel matrix.
    pub full_cap: usize,
    /// Rows kept by the kernel cache for larger problems.
    pub cache_rows: usize,
    pub bias_rule: BiasRule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            sv_threshold: 1e-8,
            kkt_tol: 1e-3,
            full_cap: DEFAULT_FULL_MATRIX_CAP,
            cache_rows: 2048,
            bias_rule: BiasRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub sweeps: usize,
    pub updates: usize,
    /// True when the sweep-level `eps` test fired before `max_iter`.
    pub converged: bool,
    /// Largest KKT residual at the end, at the stationarity-consistent bias.
    pub max_kkt_residual: f64,
    pub support_mean_bias: f64,
    pub kkt_bias: f64,
    pub n_support: usize,
    pub seconds: f64,
}

/// Runs the solver to completion. Returns the final state and a report.
pub fn train_dual(
    store: KernelStore,
    y: &[f64],
    hp: &Hyperparams,
    opts: &SolverOptions,
) -> Result<(DualState, TrainReport)> {
    train_dual_observed(store, y, hp, opts, &mut |_, _| {})
}

/// [`train_dual`] with a callback invoked after every pair update.
pub fn train_dual_observed(
    store: KernelStore,
    y: &[f64],
    hp: &Hyperparams,
    opts: &SolverOptions,
    observer: &mut dyn FnMut(&PairUpdateResult, &DualState),
) -> Result<(DualState, TrainReport)> {
    let start = Instant::now();
    check_labels(y)?;
    let mut state = DualState::new(store, y.to_vec(), *hp, opts.sv_threshold)?;
    let m = state.len();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    rng.set_stream(PAIR_STREAM);

    let mut excluded = vec![false; m];
    let mut excluded_list: Vec<usize> = Vec::new();
    let mut updates = 0;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < hp.max_iter {
        sweeps += 1;
        let b_select = state.kkt_bias();
        let mut max_delta: f64 = 0.0;
        for _ in 0..m {
            let pick = match state.select_excluding(&mut rng, b_select, &excluded) {
                None if !excluded_list.is_empty() => {
                    for k in excluded_list.drain(..) {
                        excluded[k] = false;
                    }
                    state.select_excluding(&mut rng, b_select, &excluded)
                }
                pick => pick,
            };
            let Some((i, j)) = pick else {
                break;
            };
            let r = state.update_pair(i, j).map_err(|e| PsvmError::Training {
                sweep: sweeps,
                source: Box::new(e),
            })?;
            updates += 1;
            observer(&r, &state);
            max_delta = max_delta.max(r.delta_alpha);
            // A hub that cannot move is set aside until some pair moves.
            if r.delta_alpha >= hp.eps {
                for k in excluded_list.drain(..) {
                    excluded[k] = false;
                }
            } else {
                excluded[i] = true;
                excluded_list.push(i);
            }
        }
        for k in excluded_list.drain(..) {
            excluded[k] = false;
        }
        state.refresh_margins();
        apply_bias(&mut state, opts.bias_rule);
        if max_delta < hp.eps && kkt_settled(&state, opts.kkt_tol) {
            converged = true;
            break;
        }
    }

    let report = TrainReport {
        sweeps,
        updates,
        converged,
        max_kkt_residual: state.max_kkt_residual(),
        support_mean_bias: state.support_mean_bias(),
        kkt_bias: state.kkt_bias(),
        n_support: state.support_indices().len(),
        seconds: start.elapsed().as_secs_f64(),
    };
    if !converged {
        debug!("solver stopped at max_iter = {} sweeps", hp.max_iter);
    }
    if report.max_kkt_residual > opts.kkt_tol {
        debug!(
            "final KKT residual {:.3e} exceeds {:.1e}",
            report.max_kkt_residual, opts.kkt_tol
        );
    }
    Ok((state, report))
}

/// A quiet sweep only counts as convergence once the KKT residual is within
/// `tol * (1 + max a)`; random partners can miss the few productive pairs.
fn kkt_settled(state: &DualState, tol: f64) -> bool {
    let scale = 1.0 + state.alpha().iter().copied().fold(0.0, f64::max);
    state.max_kkt_residual() <= tol * scale
}

fn apply_bias(state: &mut DualState, rule: BiasRule) {
    match rule {
        BiasRule::SupportMean => {
            state.update_bias();
        }
        BiasRule::KktMean => {
            let b = state.kkt_bias();
            state.set_bias(b);
        }
    }
}

fn check_labels(y: &[f64]) -> Result<()> {
    if y.len() < 2 {
        return Err(PsvmError::invalid("training needs at least two points"));
    }
    let pos = y.iter().any(|&v| v == 1.0);
    let neg = y.iter().any(|&v| v == -1.0);
    if !(pos && neg) {
        return Err(PsvmError::invalid(
            "training data must contain both classes",
        ));
    }
    Ok(())
}

/// Dual objective of a finished state, evaluated from scratch on `k`.
pub fn state_objective(state: &DualState, k: &Matrix) -> Result<f64> {
    dual_objective(state.alpha(), state.y(), k, state.hyperparams())
}
