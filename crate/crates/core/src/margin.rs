//! The rho-margin loss under p-norm, its empirical average, the p-norm hinge
//! sum, and the margin-based generalization bound for p-norm SVMs.

use crate::error::{PsvmError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginLossParams {
    p: f64,
    rho: f64,
}

impl MarginLossParams {
    pub fn new(p: f64, rho: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(PsvmError::invalid(format!("p must be >= 1, got {p}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(PsvmError::invalid(format!("rho must be > 0, got {rho}")));
        }
        Ok(Self { p, rho })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Lipschitz constant of [`phi`].
    pub fn lipschitz(&self) -> f64 {
        self.p / self.rho
    }
}

/// `1` for `x <= 0`, `(1 - x/rho)^p` on `[0, rho]`, `0` for `x >= rho`.
pub fn phi(params: &MarginLossParams, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x >= params.rho {
        return 0.0;
    }
    let base = 1.0 - x / params.rho;
    if base <= 0.0 {
        0.0
    } else {
        (params.p * base.ln()).exp().min(1.0)
    }
}

/// Mean of [`phi`] over the scores `y_i h(x_i)`.
pub fn empirical_margin_loss(params: &MarginLossParams, scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(PsvmError::invalid(
            "empirical margin loss of an empty sample",
        ));
    }
    Ok(scores.iter().map(|&s| phi(params, s)).sum::<f64>() / scores.len() as f64)
}

/// `sum_i max(0, 1 - margin_i)^p`.
pub fn pnorm_hinge_sum(p: f64, margins: &[f64]) -> f64 {
    margins
        .iter()
        .map(|&m| {
            let slack = 1.0 - m;
            if slack > 0.0 {
                slack.powf(p)
            } else {
                0.0
            }
        })
        .sum()
}

/// Right-hand side of the high-probability bound
///
/// `empirical + 4p sqrt((r/rho)^2 / m) + sqrt(ln(log2(2r/rho)) / m) + sqrt(ln(2/delta) / (2m))`
///
/// valid for `rho` in `(0, r]`. Logarithms are natural except the explicit
/// base-2 one. The norm constraint on the hypothesis is the caller's business.
pub fn generalization_bound(
    params: &MarginLossParams,
    empirical: f64,
    r: f64,
    m: usize,
    delta: f64,
) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(PsvmError::invalid(format!("radius r must be > 0, got {r}")));
    }
    if params.rho > r {
        return Err(PsvmError::invalid(format!(
            "rho = {} exceeds the radius r = {r}",
            params.rho
        )));
    }
    if m == 0 {
        return Err(PsvmError::invalid("sample size must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PsvmError::invalid(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(empirical >= 0.0) {
        return Err(PsvmError::invalid(format!(
            "empirical loss must be non-negative, got {empirical}"
        )));
    }
    let mf = m as f64;
    let ratio = r / params.rho;
    let complexity = 4.0 * params.p * (ratio * ratio / mf).sqrt();
    // log2(2r/rho) >= 1 for rho <= r, so the inner log is >= 0.
    let grid = ((2.0 * ratio).log2().ln().max(0.0) / mf).sqrt();
    let confidence = ((2.0 / delta).ln() / (2.0 * mf)).sqrt();
    Ok(empirical + complexity + grid + confidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(p: f64, rho: f64) -> MarginLossParams {
        MarginLossParams::new(p, rho).unwrap()
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(&params(2.0, 1.0), -0.5), 1.0);
        for p in [1.0, 1.5, 2.0, 3.3] {
            assert_eq!(phi(&params(p, 0.7), 0.7), 0.0);
            assert_eq!(phi(&params(p, 0.7), 0.0), 1.0);
        }
        assert_abs_diff_eq!(phi(&params(2.0, 1.0), 0.5), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn phi_p1_is_linear_ramp() {
        let pr = params(1.0, 2.0);
        assert_abs_diff_eq!(phi(&pr, 0.5), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(phi(&pr, 1.0e-12), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phi(&pr, 2.0 - 1e-12), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(MarginLossParams::new(0.99, 1.0).is_err());
        assert!(MarginLossParams::new(2.0, 0.0).is_err());
        assert!(MarginLossParams::new(2.0, -1.0).is_err());
    }

    #[test]
    fn empirical_examples() {
        let pr = params(2.0, 1.0);
        assert_eq!(empirical_margin_loss(&pr, &[1.0, 3.0, 7.0]).unwrap(), 0.0);
        assert_eq!(empirical_margin_loss(&pr, &[0.0, -3.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            empirical_margin_loss(&pr, &[0.5, 2.0, -1.0]).unwrap(),
            1.25 / 3.0,
            epsilon = 1e-15
        );
        assert!(empirical_margin_loss(&pr, &[]).is_err());
    }

    #[test]
    fn hinge_sum_examples() {
        assert_eq!(pnorm_hinge_sum(2.0, &[1.0, 1.5, 9.0]), 0.0);
        assert_eq!(pnorm_hinge_sum(1.0, &[0.0]), 1.0);
        assert_abs_diff_eq!(pnorm_hinge_sum(2.0, &[0.5, -1.0]), 4.25, epsilon = 1e-15);
    }

    #[test]
    fn bound_examples() {
        // rho = r: log2(2) = 1 so the middle term vanishes.
        let b = generalization_bound(&params(1.0, 1.0), 0.0, 1.0, 10_000, 0.05).unwrap();
        // 4 * 0.01 + sqrt(ln 40 / 20000)
        assert_abs_diff_eq!(b, 0.053_581_015_157_406_2, epsilon = 1e-12);

        let b1 = generalization_bound(&params(1.0, 0.5), 0.1, 1.0, 500, 0.1).unwrap();
        let b2 = generalization_bound(&params(2.0, 0.5), 0.1, 1.0, 500, 0.1).unwrap();
        let second = 4.0 * (4.0f64 / 500.0).sqrt();
        assert_abs_diff_eq!(b2 - b1, second, epsilon = 1e-12);
    }

    #[test]
    fn bound_rejects_bad_arguments() {
        assert!(generalization_bound(&params(1.0, 2.0), 0.0, 1.0, 10, 0.05).is_err());
        assert!(generalization_bound(&params(1.0, 1.0), 0.0, 1.0, 0, 0.05).is_err());
        assert!(generalization_bound(&params(1.0, 1.0), 0.0, 1.0, 10, 1.0).is_err());
        assert!(generalization_bound(&params(1.0, 1.0), -0.1, 1.0, 10, 0.5).is_err());
    }
}
