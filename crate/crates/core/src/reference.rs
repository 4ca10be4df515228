//! Independent dual solver for small problems, used to cross-check the pair
//! solver. Accelerated projected gradient ascent with backtracking and
//! function-value restarts. The projection onto `{a >= 0, sum a_i y_i = 0}`
//! (optionally also `a <= cap`) is computed exactly by solving for the
//! multiplier of the equality constraint.

use crate::dual::{pow_gamma, Hyperparams, Penalty};
use crate::error::{PsvmError, Result};
use crate::matrix::Matrix;

/// Largest problem the oracle accepts.
pub const ORACLE_MAX_M: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Initial step size; `None` uses the inverse of a curvature estimate.
    pub step: Option<f64>,
    /// Stop once a projected step of the current size moves no coordinate by
    /// more than `tol`.
    pub tol: f64,
    pub max_steps: usize,
    /// Also stop once the objective gained less than `1e-14 * max(1, |f|)`
    /// over this many consecutive steps. Near-zero multipliers under
    /// `1 < gamma < 2` have unbounded curvature and creep towards zero.
    pub stall_window: usize,
    /// Upper bound on every multiplier. Required in hard-margin mode.
    pub cap: Option<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            step: None,
            tol: 1e-10,
            max_steps: 500_000,
            stall_window: 5_000,
            cap: None,
        }
    }
}

struct Problem<'a> {
    k: &'a Matrix,
    y: &'a [f64],
    penalty: Penalty,
    cap: Option<f64>,
}

impl Problem<'_> {
    /// `(Q a)_i = y_i sum_j K_ij y_j a_j`.
    fn q_times(&self, a: &[f64]) -> Vec<f64> {
        let ya: Vec<f64> = a.iter().zip(self.y).map(|(a, y)| a * y).collect();
        (0..a.len())
            .map(|i| {
                self.y[i]
                    * self
                        .k
                        .row(i)
                        .iter()
                        .zip(&ya)
                        .map(|(k, v)| k * v)
                        .sum::<f64>()
            })
            .collect()
    }

    fn objective_with(&self, a: &[f64], qa: &[f64]) -> f64 {
        let lin: f64 = a.iter().sum();
        let quad: f64 = a.iter().zip(qa).map(|(a, q)| a * q).sum();
        let pen = match self.penalty {
            Penalty::HardMargin => 0.0,
            Penalty::Smooth { gamma, theta } => {
                theta * a.iter().map(|&v| pow_gamma(v, gamma)).sum::<f64>()
            }
        };
        lin - pen - 0.5 * quad
    }

    fn objective(&self, a: &[f64]) -> f64 {
        self.objective_with(a, &self.q_times(a))
    }

    fn gradient_with(&self, a: &[f64], qa: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(qa)
            .map(|(&v, q)| {
                let pen = match self.penalty {
                    Penalty::HardMargin => 0.0,
                    Penalty::Smooth { gamma, theta } => theta * gamma * pow_gamma(v, gamma - 1.0),
                };
                1.0 - pen - q
            })
            .collect()
    }

    fn project(&self, v: &[f64]) -> Vec<f64> {
        project_feasible(v, self.y, self.cap)
    }
}

/// Euclidean projection onto `{0 <= a <= cap, sum a_i y_i = 0}`.
///
/// The solution is `a_i = clip(v_i - lambda y_i)` where `lambda` zeroes the
/// non-increasing piecewise-linear `h(lambda) = sum y_i clip(v_i - lambda y_i)`.
pub fn project_feasible(v: &[f64], y: &[f64], cap: Option<f64>) -> Vec<f64> {
    let hi_cap = cap.unwrap_or(f64::INFINITY);
    let clip = |x: f64| x.clamp(0.0, hi_cap);
    let h = |lambda: f64| -> f64 {
        v.iter()
            .zip(y)
            .map(|(&vi, &yi)| yi * clip(vi - lambda * yi))
            .sum()
    };
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda = 0.5 * (lo + hi);
    // Solve the linear piece containing lambda exactly.
    let (mut num, mut free) = (0.0, 0usize);
    for (&vi, &yi) in v.iter().zip(y) {
        let t = vi - lambda * yi;
        if t >= hi_cap {
            num += yi * hi_cap;
        } else if t > 0.0 {
            num += yi * vi;
            free += 1;
        }
    }
    if free > 0 {
        let exact = num / free as f64;
        if (exact - lambda).abs() <= 1e-9 * span {
            lambda = exact;
        }
    }
    v.iter()
        .zip(y)
        .map(|(&vi, &yi)| clip(vi - lambda * yi))
        .collect()
}

/// Largest eigenvalue of `Q` by power iteration, padded by 10%.
fn curvature_estimate(p: &Problem) -> f64 {
    let m = p.y.len();
    let mut v = vec![1.0 / (m as f64).sqrt(); m];
    let mut lam = 0.0;
    for _ in 0..100 {
        let w = p.q_times(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lam = norm;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    1.1 * lam
}

/// Maximizes the dual objective. Returns the multipliers and the objective.
pub fn reference_dual_solve(
    k: &Matrix,
    y: &[f64],
    hp: &Hyperparams,
    cfg: &OracleConfig,
) -> Result<(Vec<f64>, f64)> {
    let m = y.len();
    if m == 0 || m > ORACLE_MAX_M {
        return Err(PsvmError::invalid(format!(
            "reference solver handles 1..={ORACLE_MAX_M} points, got {m}"
        )));
    }
    if k.rows() != m || k.cols() != m {
        return Err(PsvmError::invalid("kernel matrix does not match labels"));
    }
    if !(cfg.tol > 0.0)
        || cfg.max_steps == 0
        || cfg.stall_window == 0
        || cfg.step.is_some_and(|s| !(s > 0.0))
    {
        return Err(PsvmError::invalid(
            "oracle step, tol, max_steps and stall_window must be positive",
        ));
    }
    if hp.is_hard_margin() && cfg.cap.is_none() {
        return Err(PsvmError::invalid(
            "hard-margin mode needs an explicit box cap in the reference solver",
        ));
    }
    let prob = Problem {
        k,
        y,
        penalty: hp.penalty,
        cap: cfg.cap,
    };
    let curv = curvature_estimate(&prob)
        + match hp.penalty {
            Penalty::HardMargin => 0.0,
            Penalty::Smooth { gamma, theta } => theta * gamma * (gamma - 1.0),
        };
    let mut t = cfg.step.unwrap_or(1.0 / curv.max(1e-12));

    let mut x = vec![0.0; m];
    let mut fx = prob.objective(&x);
    let mut z = x.clone();
    let mut momentum = 1.0f64;
    let mut last_improvement = f64::INFINITY;
    let mut window_start = (0usize, fx);

    for step in 0..cfg.max_steps {
        // Fixed-point residual at the current iterate.
        let qx = prob.q_times(&x);
        let gx = prob.gradient_with(&x, &qx);
        let probe: Vec<f64> = x.iter().zip(&gx).map(|(a, g)| a + t * g).collect();
        let px = prob.project(&probe);
        let resid = x
            .iter()
            .zip(&px)
            .fold(0.0f64, |r, (a, b)| r.max((a - b).abs()));
        if resid <= cfg.tol {
            return Ok((x, fx));
        }
        if step - window_start.0 >= cfg.stall_window {
            if fx - window_start.1 <= 1e-14 * fx.abs().max(1.0) {
                return Ok((x, fx));
            }
            window_start = (step, fx);
        }

        let qz = prob.q_times(&z);
        let fz = prob.objective_with(&z, &qz);
        let gz = prob.gradient_with(&z, &qz);
        let (cand, fc) = loop {
            let trial: Vec<f64> = z.iter().zip(&gz).map(|(a, g)| a + t * g).collect();
            let cand = prob.project(&trial);
            let fc = prob.objective(&cand);
            let (lin, sq) = cand
                .iter()
                .zip(&z)
                .zip(&gz)
                .fold((0.0, 0.0), |(l, s), ((c, zz), g)| {
                    (l + g * (c - zz), s + (c - zz) * (c - zz))
                });
            if fc >= fz + lin - sq / (2.0 * t) - 1e-15 * fz.abs().max(1.0) {
                break (cand, fc);
            }
            t *= 0.5;
            if t < 1e-300 {
                return Err(PsvmError::OracleFailure {
                    steps: step,
                    improvement: last_improvement,
                });
            }
        };
        if fc < fx {
            // Restart the momentum; the iterate stays put.
            momentum = 1.0;
            z = x.clone();
            continue;
        }
        let next_m = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_m;
        z = cand
            .iter()
            .zip(&x)
            .map(|(c, prev)| (c + beta * (c - prev)).max(0.0))
            .collect();
        momentum = next_m;
        last_improvement = fc - fx;
        x = cand;
        fx = fc;
        t *= 1.05;
    }
    Err(PsvmError::OracleFailure {
        steps: cfg.max_steps,
        improvement: last_improvement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::is_feasible;
    use approx::assert_abs_diff_eq;

    #[test]
    fn running_example() {
        let k = Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap();
        let hp = Hyperparams::new(2.0, 1.0).unwrap();
        let (a, obj) =
            reference_dual_solve(&k, &[1.0, -1.0], &hp, &OracleConfig::default()).unwrap();
        assert_abs_diff_eq!(a[0], 0.4, epsilon = 1e-9);
        assert_abs_diff_eq!(a[1], 0.4, epsilon = 1e-9);
        assert_abs_diff_eq!(obj, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn huge_theta_gives_zero() {
        let k = Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap();
        let hp = Hyperparams::new(2.0, 1.0)
            .unwrap()
            .with_penalty(Penalty::Smooth {
                gamma: 2.0,
                theta: 1e6,
            });
        let (a, obj) =
            reference_dual_solve(&k, &[1.0, -1.0], &hp, &OracleConfig::default()).unwrap();
        assert!(a.iter().all(|&v| v < 1e-6));
        assert!(obj.abs() < 1e-6);
    }

    #[test]
    fn projection_is_feasible_and_idempotent() {
        let y = [1.0, -1.0, 1.0, -1.0, -1.0];
        let v = [0.3, -2.0, 1.7, 0.9, 0.2];
        let p = project_feasible(&v, &y, None);
        assert!(is_feasible(&p, &y, 1e-12));
        let pp = project_feasible(&p, &y, None);
        for (a, b) in p.iter().zip(&pp) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let capped = project_feasible(&v, &y, Some(0.5));
        assert!(capped.iter().all(|&a| (0.0..=0.5).contains(&a)));
        assert!(is_feasible(&capped, &y, 1e-12));
    }

    #[test]
    fn hard_margin_needs_cap() {
        let k = Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap();
        let hp = Hyperparams::new(1.0, 1.0).unwrap();
        assert!(reference_dual_solve(&k, &[1.0, -1.0], &hp, &OracleConfig::default()).is_err());
        let cfg = OracleConfig {
            cap: Some(10.0),
            ..OracleConfig::default()
        };
        // max 2a - 2a^2 at a = 0.5
        let (a, obj) = reference_dual_solve(&k, &[1.0, -1.0], &hp, &cfg).unwrap();
        assert_abs_diff_eq!(a[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(obj, 0.5, epsilon = 1e-12);
    }
}
