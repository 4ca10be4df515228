//! Hyperparameters and the concave dual of the p-norm soft-margin SVM:
//!
//! `max  sum a_i - theta sum a_i^gamma - 1/2 sum_ij a_i a_j y_i y_j K_ij`
//! `s.t. a_i >= 0, sum a_i y_i = 0`
//!
//! with `gamma = p / (p - 1)` and `theta = C^(1 - gamma) p^(-gamma) (p - 1)`.
//! At `p = 1` gamma diverges; that case is the hard-margin dual with no
//! penalty term and no upper bound on the multipliers.

use crate::error::{PsvmError, Result};
use crate::margin::pnorm_hinge_sum;
use crate::matrix::Matrix;

/// Shape of the extra dual penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    /// `p = 1`: no penalty term, multipliers unbounded above.
    HardMargin,
    /// `p > 1`: `-theta * sum a_i^gamma`.
    Smooth { gamma: f64, theta: f64 },
}

impl Penalty {
    pub fn theta(&self) -> f64 {
        match *self {
            Penalty::HardMargin => 0.0,
            Penalty::Smooth { theta, .. } => theta,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Penalty::HardMargin => None,
            Penalty::Smooth { gamma, .. } => Some(gamma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub p: f64,
    pub c: f64,
    /// Stop once the largest multiplier change over a sweep drops below this.
    pub eps: f64,
    /// Maximum number of sweeps.
    pub max_iter: usize,
    pub seed: u64,
    pub penalty: Penalty,
}

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_SEED: u64 = 42;

impl Hyperparams {
    pub fn new(p: f64, c: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(PsvmError::invalid(format!("p must be >= 1, got {p}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(PsvmError::invalid(format!("C must be > 0, got {c}")));
        }
        let penalty = if p == 1.0 {
            Penalty::HardMargin
        } else {
            let (gamma, theta) = derive_gamma_theta(p, c)?;
            Penalty::Smooth { gamma, theta }
        };
        Ok(Self {
            p,
            c,
            eps: DEFAULT_EPS,
            max_iter: DEFAULT_MAX_ITER,
            seed: DEFAULT_SEED,
            penalty,
        })
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Replaces the derived penalty. Used to pin `theta` directly, e.g. to
    /// study the `theta = 0` classic dual with a smooth-mode solver.
    pub fn with_penalty(mut self, penalty: Penalty) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn is_hard_margin(&self) -> bool {
        matches!(self.penalty, Penalty::HardMargin)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(PsvmError::invalid(format!(
                "eps must be > 0, got {}",
                self.eps
            )));
        }
        if self.max_iter == 0 {
            return Err(PsvmError::invalid("max_iter must be positive"));
        }
        if let Penalty::Smooth { gamma, theta } = self.penalty {
            if !(gamma > 1.0 && gamma.is_finite() && theta >= 0.0 && theta.is_finite()) {
                return Err(PsvmError::invalid(format!(
                    "invalid penalty: gamma = {gamma}, theta = {theta}"
                )));
            }
        }
        Ok(())
    }
}

/// `gamma = p / (p - 1)`, `theta = C^(1 - gamma) p^(-gamma) (p - 1)`.
pub fn derive_gamma_theta(p: f64, c: f64) -> Result<(f64, f64)> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(PsvmError::invalid(format!(
            "gamma/theta need p > 1, got {p}; p = 1 is the hard-margin mode"
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(PsvmError::invalid(format!("C must be > 0, got {c}")));
    }
    let gamma = p / (p - 1.0);
    let theta = c.powf(1.0 - gamma) * p.powf(-gamma) * (p - 1.0);
    Ok((gamma, theta))
}

/// `a^gamma` with `0^gamma = 0` exactly.
#[inline]
pub fn pow_gamma(a: f64, gamma: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        (gamma * a.ln()).exp()
    }
}

/// `sum_ij a_i a_j y_i y_j K_ij`, i.e. `|w|^2` in feature space.
pub fn quadratic_term(alpha: &[f64], y: &[f64], k: &Matrix) -> f64 {
    let mut total = 0.0;
    for i in 0..alpha.len() {
        if alpha[i] == 0.0 {
            continue;
        }
        let row = k.row(i);
        let inner: f64 = (0..alpha.len())
            .filter(|&j| alpha[j] != 0.0)
            .map(|j| alpha[j] * y[j] * row[j])
            .sum();
        total += alpha[i] * y[i] * inner;
    }
    total
}

fn check_lengths(alpha: &[f64], y: &[f64], k: Option<&Matrix>) -> Result<()> {
    if alpha.len() != y.len() {
        return Err(PsvmError::invalid(format!(
            "alpha has {} entries but y has {}",
            alpha.len(),
            y.len()
        )));
    }
    if let Some(k) = k {
        if k.rows() != alpha.len() || k.cols() != alpha.len() {
            return Err(PsvmError::invalid(format!(
                "kernel is {}x{}, expected {n}x{n}",
                k.rows(),
                k.cols(),
                n = alpha.len()
            )));
        }
    }
    Ok(())
}

/// Dual objective value. The penalty term is skipped in hard-margin mode, so
/// that mode evaluates exactly the classic soft-margin dual objective.
pub fn dual_objective(alpha: &[f64], y: &[f64], k: &Matrix, hp: &Hyperparams) -> Result<f64> {
    check_lengths(alpha, y, Some(k))?;
    if let Some(i) = alpha.iter().position(|&a| !(a >= 0.0)) {
        return Err(PsvmError::invalid(format!(
            "alpha[{i}] = {} is negative",
            alpha[i]
        )));
    }
    let linear: f64 = alpha.iter().sum();
    let quad = 0.5 * quadratic_term(alpha, y, k);
    Ok(match hp.penalty {
        Penalty::HardMargin => linear - quad,
        Penalty::Smooth { gamma, theta } => {
            let pen: f64 = alpha.iter().map(|&a| pow_gamma(a, gamma)).sum();
            linear - theta * pen - quad
        }
    })
}

/// Default feasibility tolerance: `1e-8`, scaled by `sum alpha` above one.
pub fn default_feasibility_tol(alpha: &[f64]) -> f64 {
    1e-8 * alpha.iter().sum::<f64>().max(1.0)
}

/// `min alpha >= -tol` and `|sum alpha_i y_i| <= tol`.
pub fn is_feasible(alpha: &[f64], y: &[f64], tol: f64) -> bool {
    if alpha.len() != y.len() {
        return false;
    }
    let min_ok = alpha.iter().all(|&a| a >= -tol);
    let balance: f64 = alpha.iter().zip(y).map(|(a, y)| a * y).sum();
    min_ok && balance.abs() <= tol
}

/// `1/2 |w|^2 + C sum max(0, 1 - margin_i)^p`, reported as a diagnostic.
pub fn primal_objective(w_norm_sq: f64, margins: &[f64], hp: &Hyperparams) -> f64 {
    0.5 * w_norm_sq + hp.c * pnorm_hinge_sum(hp.p, margins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn running_example() -> (Vec<f64>, Matrix) {
        // x1 = (1, 0), x2 = (-1, 0), linear kernel
        let k = Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap();
        (vec![1.0, -1.0], k)
    }

    #[test]
    fn gamma_theta_examples() {
        let (g, t) = derive_gamma_theta(2.0, 1.0).unwrap();
        assert_abs_diff_eq!(g, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t, 0.25, epsilon = 1e-15);

        let (g, t) = derive_gamma_theta(1.5, 1.0).unwrap();
        assert_abs_diff_eq!(g, 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t, 4.0 / 27.0, epsilon = 1e-15);

        let (g, t) = derive_gamma_theta(2.0, 0.25).unwrap();
        assert_abs_diff_eq!(g, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t, 1.0, epsilon = 1e-14);

        assert!(derive_gamma_theta(1.0, 1.0).is_err());
        assert!(derive_gamma_theta(0.5, 1.0).is_err());
        assert!(derive_gamma_theta(2.0, 0.0).is_err());
    }

    #[test]
    fn theta_shrinks_towards_classic_as_p_approaches_one() {
        let thetas: Vec<f64> = [1.1, 1.01, 1.001]
            .iter()
            .map(|&p| derive_gamma_theta(p, 1.0).unwrap().1)
            .collect();
        assert!(thetas.windows(2).all(|w| w[1] < w[0]), "{thetas:?}");
        assert!(thetas[2] < 1e-3);
    }

    #[test]
    fn hyperparams_modes() {
        assert!(Hyperparams::new(1.0, 1.0).unwrap().is_hard_margin());
        let hp = Hyperparams::new(1.5, 2.0).unwrap();
        assert_eq!(hp.penalty.gamma(), Some(3.0));
        assert_eq!(hp.eps, DEFAULT_EPS);
        assert_eq!(hp.max_iter, DEFAULT_MAX_ITER);
        assert_eq!(hp.seed, 42);
        assert!(Hyperparams::new(0.9, 1.0).is_err());
        assert!(Hyperparams::new(2.0, -1.0).is_err());
    }

    #[test]
    fn dual_objective_examples() {
        let (y, k) = running_example();
        let hp = Hyperparams::new(2.0, 1.0).unwrap();
        assert_eq!(dual_objective(&[0.0, 0.0], &y, &k, &hp).unwrap(), 0.0);
        // reduces to 2a - 2.5a^2 along alpha1 = alpha2 = a
        assert_abs_diff_eq!(
            dual_objective(&[0.4, 0.4], &y, &k, &hp).unwrap(),
            0.4,
            epsilon = 1e-15
        );
        assert!(dual_objective(&[-0.1, 0.4], &y, &k, &hp).is_err());
    }

    #[test]
    fn zero_theta_matches_classic_objective_bitwise() {
        let k = Matrix::from_rows(&[[2.0, 0.3, -0.1], [0.3, 1.0, 0.2], [-0.1, 0.2, 1.5]]).unwrap();
        let y = [1.0, -1.0, 1.0];
        let alpha = [0.37, 0.91, 0.54];
        let classic = Hyperparams::new(1.0, 1.0).unwrap();
        let smooth0 = classic.with_penalty(Penalty::Smooth {
            gamma: 2.0,
            theta: 0.0,
        });
        let a = dual_objective(&alpha, &y, &k, &classic).unwrap();
        let b = dual_objective(&alpha, &y, &k, &smooth0).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn feasibility_examples() {
        assert!(is_feasible(&[0.0, 0.0], &[1.0, -1.0], 1e-9));
        assert!(is_feasible(&[1.0, 1.0], &[1.0, -1.0], 1e-9));
        assert!(!is_feasible(&[1.0, 1.0], &[1.0, 1.0], 1e-9));
        assert!(!is_feasible(&[-1.0, -1.0], &[1.0, -1.0], 1e-9));
    }

    #[test]
    fn primal_examples() {
        let hp1 = Hyperparams::new(1.0, 1.0).unwrap();
        assert_eq!(primal_objective(0.0, &[0.0, 0.0, 0.0], &hp1), 3.0);
        let hp = Hyperparams::new(2.0, 3.0).unwrap();
        assert_eq!(primal_objective(5.0, &[1.0, 2.0], &hp), 2.5);
        let hp2 = Hyperparams::new(2.0, 2.0).unwrap();
        assert_abs_diff_eq!(primal_objective(2.0, &[0.5], &hp2), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn pow_gamma_zero_is_exact() {
        assert_eq!(pow_gamma(0.0, 1.7), 0.0);
        assert_abs_diff_eq!(pow_gamma(2.0, 3.0), 8.0, epsilon = 1e-13);
    }
}
