//! Mutable solver state: multipliers, bias and the margin cache.

use std::sync::Arc;

use rand::Rng;

use super::pair::{Branch, PairSubproblem, RootMode};
use crate::dual::{pow_gamma, Hyperparams, Penalty};
use crate::error::{PsvmError, Result};
use crate::kernel::KernelStore;

/// Outcome of one pair update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairUpdateResult {
    pub i: usize,
    pub j: usize,
    /// Larger of the two `|delta alpha|`.
    pub delta_alpha: f64,
    pub objective_increase: f64,
    pub branch: Branch,
    pub eta: f64,
    /// `(a_i, a_j)` before and after.
    pub before: (f64, f64),
    pub after: (f64, f64),
    pub g_bracket: Option<(f64, f64)>,
}

/// Multipliers, bias and `f_k = sum_j a_j y_j K_jk` for one binary problem.
///
/// `E_k = f_k + b - y_k` is derived on demand, so the cache never goes stale
/// when `b` moves.
pub struct DualState {
    pub(crate) alpha: Vec<f64>,
    pub(crate) b: f64,
    pub(crate) f: Vec<f64>,
    pub(crate) y: Vec<f64>,
    pub(crate) store: KernelStore,
    pub(crate) hp: Hyperparams,
    pub(crate) mode: RootMode,
    pub(crate) sv_threshold: f64,
}

impl DualState {
    /// Zero multipliers and zero bias.
    pub fn new(
        store: KernelStore,
        y: Vec<f64>,
        hp: Hyperparams,
        sv_threshold: f64,
    ) -> Result<Self> {
        hp.validate()?;
        if store.len() != y.len() {
            return Err(PsvmError::invalid(format!(
                "kernel has {} rows but there are {} labels",
                store.len(),
                y.len()
            )));
        }
        if let Some(k) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
            return Err(PsvmError::invalid(format!(
                "labels must be +1 or -1, found {} at index {k}",
                y[k]
            )));
        }
        let m = y.len();
        Ok(Self {
            alpha: vec![0.0; m],
            b: 0.0,
            f: vec![0.0; m],
            y,
            store,
            mode: RootMode::for_penalty(&hp.penalty),
            hp,
            sv_threshold,
        })
    }

    /// Replaces the multipliers and rebuilds the margin cache.
    pub fn set_alpha(&mut self, alpha: Vec<f64>) -> Result<()> {
        if alpha.len() != self.y.len() {
            return Err(PsvmError::invalid("alpha length does not match the data"));
        }
        if alpha.iter().any(|&a| !(a >= 0.0)) {
            return Err(PsvmError::invalid("alpha must be non-negative"));
        }
        self.alpha = alpha;
        self.refresh_margins();
        Ok(())
    }

    pub fn set_bias(&mut self, b: f64) {
        self.b = b;
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn bias(&self) -> f64 {
        self.b
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn root_mode(&self) -> RootMode {
        self.mode
    }

    /// Overrides the root solver, e.g. to force bisection.
    pub fn set_root_mode(&mut self, mode: RootMode) {
        self.mode = mode;
    }

    /// `f_k`, the decision value without bias.
    pub fn margin_without_bias(&self, k: usize) -> f64 {
        self.f[k]
    }

    /// Recomputes the margin cache from the support rows.
    pub fn refresh_margins(&mut self) {
        let m = self.len();
        let mut f = vec![0.0; m];
        for j in 0..m {
            let a = self.alpha[j];
            if a == 0.0 {
                continue;
            }
            let w = a * self.y[j];
            let row = self.store.row(j);
            for (fk, kjk) in f.iter_mut().zip(row.iter()) {
                *fk += w * kjk;
            }
        }
        self.f = f;
    }

    /// `E_i = sum_j a_j y_j K_ij + b - y_i`.
    pub fn compute_error(&self, i: usize) -> f64 {
        self.f[i] + self.b - self.y[i]
    }

    /// Two-variable update of `(a_i, a_j)`.
    pub fn update_pair(&mut self, i: usize, j: usize) -> Result<PairUpdateResult> {
        if i == j {
            return Err(PsvmError::invalid(format!(
                "update_pair needs i != j, got {i}"
            )));
        }
        let eta = self.store.eta(i, j)?;
        let (ai, aj) = (self.alpha[i], self.alpha[j]);
        let (yi, yj) = (self.y[i], self.y[j]);
        let e_diff = self.f[i] - self.f[j] - (yi - yj);
        let sub = PairSubproblem::new(ai, aj, yi, yj, eta, e_diff, &self.hp.penalty);
        let sol = sub.solve(self.mode).map_err(|e| match e {
            PsvmError::NumericFailure { c, q, reason, .. } => {
                PsvmError::NumericFailure { i, j, c, q, reason }
            }
            other => other,
        })?;
        let (ni, nj) = (sol.alpha_i, sol.alpha_j);
        let di = ni - ai;
        let dj = nj - aj;

        let mut increase = 0.0;
        if di != 0.0 || dj != 0.0 {
            let row_i = self.store.row(i);
            let row_j = self.store.row(j);
            let kij = row_i[j];
            let (kii, kjj) = (self.store.diag(i), self.store.diag(j));
            let pen = match self.hp.penalty {
                Penalty::HardMargin => 0.0,
                Penalty::Smooth { gamma, theta } => {
                    theta
                        * ((pow_gamma(ni, gamma) - pow_gamma(ai, gamma))
                            + (pow_gamma(nj, gamma) - pow_gamma(aj, gamma)))
                }
            };
            let quad = di * yi * self.f[i]
                + dj * yj * self.f[j]
                + 0.5 * (di * di * kii + dj * dj * kjj + 2.0 * di * dj * yi * yj * kij);
            increase = di + dj - pen - quad;
            self.apply_delta(&row_i, di * yi);
            self.apply_delta(&row_j, dj * yj);
            self.alpha[i] = ni;
            self.alpha[j] = nj;
        }
        Ok(PairUpdateResult {
            i,
            j,
            delta_alpha: di.abs().max(dj.abs()),
            objective_increase: increase,
            branch: sol.branch,
            eta,
            before: (ai, aj),
            after: (ni, nj),
            g_bracket: sol.g_bracket,
        })
    }

    fn apply_delta(&mut self, row: &Arc<[f64]>, w: f64) {
        if w == 0.0 {
            return;
        }
        for (fk, k) in self.f.iter_mut().zip(row.iter()) {
            *fk += w * k;
        }
    }

    fn support(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.alpha[k] > self.sv_threshold)
    }

    /// Average of `y_k - f_k` over the support vectors, or 0 when there are
    /// none. Stores and returns the new bias.
    pub fn update_bias(&mut self) -> f64 {
        self.b = self.support_mean_bias();
        self.b
    }

    pub fn support_mean_bias(&self) -> f64 {
        let (sum, n) = self.support().fold((0.0, 0usize), |(s, n), k| {
            (s + (self.y[k] - self.f[k]), n + 1)
        });
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Bias consistent with the stationarity conditions: on a support vector
    /// `y_k (f_k + b) = 1 - xi_k` with `xi_k = gamma theta a_k^(gamma-1)`, so
    /// each support vector proposes `y_k (1 - xi_k) - f_k`. Averaged; 0 when
    /// there are no support vectors. Equals [`Self::support_mean_bias`] in
    /// hard-margin mode.
    pub fn kkt_bias(&self) -> f64 {
        let (gt, gamma) = match self.hp.penalty {
            Penalty::HardMargin => (0.0, 2.0),
            Penalty::Smooth { gamma, theta } => (gamma * theta, gamma),
        };
        let (sum, n) = self.support().fold((0.0, 0usize), |(s, n), k| {
            let xi = if gt == 0.0 {
                0.0
            } else {
                gt * pow_gamma(self.alpha[k], gamma - 1.0)
            };
            (s + (self.y[k] * (1.0 - xi) - self.f[k]), n + 1)
        });
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// KKT residual of point `k` for a given bias.
    ///
    /// Smooth mode: `|a_k - C p xi_k^(p-1)|` with `xi_k = max(0, 1 - y_k (f_k + b))`.
    /// Hard-margin mode: `1 - y_k phi_k` when that is positive, `y_k phi_k - 1`
    /// when `a_k > 0` and the point is outside the margin, else 0.
    pub fn kkt_residual_at(&self, k: usize, b: f64) -> f64 {
        let yphi = self.y[k] * (self.f[k] + b);
        match self.hp.penalty {
            Penalty::HardMargin => {
                if yphi < 1.0 {
                    1.0 - yphi
                } else if self.alpha[k] > 0.0 {
                    yphi - 1.0
                } else {
                    0.0
                }
            }
            Penalty::Smooth { .. } => {
                let xi = (1.0 - yphi).max(0.0);
                let target = if xi == 0.0 {
                    0.0
                } else {
                    self.hp.c * self.hp.p * pow_gamma(xi, self.hp.p - 1.0)
                };
                (self.alpha[k] - target).abs()
            }
        }
    }

    /// Largest KKT residual, evaluated at the stationarity-consistent bias.
    pub fn max_kkt_residual(&self) -> f64 {
        let b = self.kkt_bias();
        (0..self.len())
            .map(|k| self.kkt_residual_at(k, b))
            .fold(0.0, f64::max)
    }

    /// `i` maximizes the KKT residual (lowest index on ties), `j` is uniform
    /// over the other indices. `None` when every residual is zero.
    pub fn select_working_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(usize, usize)> {
        self.select_excluding(rng, self.kkt_bias(), &[])
    }

    pub(crate) fn select_excluding<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        b: f64,
        excluded: &[bool],
    ) -> Option<(usize, usize)> {
        let m = self.len();
        if m < 2 {
            return None;
        }
        let mut best = 0.0;
        let mut best_i = None;
        for k in 0..m {
            if excluded.get(k).copied().unwrap_or(false) {
                continue;
            }
            let r = self.kkt_residual_at(k, b);
            if r > best {
                best = r;
                best_i = Some(k);
            }
        }
        let i = best_i?;
        let mut j = rng.gen_range(0..m - 1);
        if j >= i {
            j += 1;
        }
        Some((i, j))
    }

    /// Indices with `a_k` above the support threshold.
    pub fn support_indices(&self) -> Vec<usize> {
        self.support().collect()
    }
}
