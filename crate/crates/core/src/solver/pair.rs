//! The two-variable subproblem solved at every step.
//!
//! For a pair `(i, j)` with `c = a_i y_i + a_j y_j` fixed, the new `a_j` is
//! the zero of the strictly decreasing function
//!
//! `g(x) = eta (a_j - x) + y_j (E_i - E_j) - gt x^(gamma-1) + s gt (c y_i - s x)^(gamma-1)`
//!
//! where `s = y_i y_j` and `gt = gamma theta`, or one of the domain endpoints
//! when `g` does not change sign there. Note `c y_i - s x` is exactly the
//! implied new `a_i`.

use crate::dual::{pow_gamma, Penalty};
use crate::error::{PsvmError, Result};

/// Bisection stops once `|hi - lo| <= BISECTION_RTOL * max(1, hi)`.
pub const BISECTION_RTOL: f64 = 1e-12;
/// Maximum doublings used to close the bracket `[u, inf)`.
pub const MAX_EXPANSIONS: usize = 64;

/// How the zero of `g` is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootMode {
    /// `gamma = 2` (p = 2): `g` is linear.
    Analytic2,
    /// `gamma = 3` (p = 1.5): `g` is at most quadratic.
    Analytic15,
    /// Any other `gamma`: bisection.
    Numeric,
    /// Hard-margin mode: no penalty term, `g` is linear.
    Linear,
}

impl RootMode {
    pub fn for_penalty(penalty: &Penalty) -> Self {
        match penalty.gamma() {
            None => RootMode::Linear,
            Some(g) if g == 2.0 => RootMode::Analytic2,
            Some(g) if g == 3.0 => RootMode::Analytic15,
            Some(_) => RootMode::Numeric,
        }
    }
}

/// Feasible interval for the new `a_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// `y_i = y_j`: `[0, |c|]`.
    Closed { lo: f64, hi: f64 },
    /// `y_i != y_j`: `[u, inf)` with `u = max(0, -c y_i)`.
    Open { lo: f64 },
}

impl Domain {
    pub fn lo(&self) -> f64 {
        match *self {
            Domain::Closed { lo, .. } | Domain::Open { lo } => lo,
        }
    }
}

/// Everything needed to solve one pair update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSubproblem {
    pub alpha_i: f64,
    pub alpha_j: f64,
    pub y_i: f64,
    pub y_j: f64,
    pub eta: f64,
    /// `E_i - E_j`
    pub e_diff: f64,
    /// `gamma theta`; zero in hard-margin mode.
    pub gt: f64,
    /// `gamma`; unused when `gt = 0`.
    pub gamma: f64,
}

/// How the new `a_j` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    ClampLow,
    ClampHigh,
    Root,
    /// `eta = 0` and no penalty: `g` is constant, the pair is skipped.
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSolution {
    pub alpha_i: f64,
    pub alpha_j: f64,
    pub branch: Branch,
    /// `g` at the two ends of the root bracket, when a root was solved.
    pub g_bracket: Option<(f64, f64)>,
}

impl PairSubproblem {
    pub fn new(
        alpha_i: f64,
        alpha_j: f64,
        y_i: f64,
        y_j: f64,
        eta: f64,
        e_diff: f64,
        penalty: &Penalty,
    ) -> Self {
        let (gt, gamma) = match *penalty {
            Penalty::HardMargin => (0.0, 2.0),
            Penalty::Smooth { gamma, theta } => (gamma * theta, gamma),
        };
        Self {
            alpha_i,
            alpha_j,
            y_i,
            y_j,
            eta,
            e_diff,
            gt,
            gamma,
        }
    }

    #[inline]
    pub fn s(&self) -> f64 {
        self.y_i * self.y_j
    }

    /// `c = a_i y_i + a_j y_j`.
    #[inline]
    pub fn c(&self) -> f64 {
        self.alpha_i * self.y_i + self.alpha_j * self.y_j
    }

    /// `y_j (E_i - E_j)`.
    #[inline]
    pub fn d(&self) -> f64 {
        self.y_j * self.e_diff
    }

    #[inline]
    fn pen(&self, x: f64) -> f64 {
        if self.gt == 0.0 {
            0.0
        } else {
            self.gt * pow_gamma(x, self.gamma - 1.0)
        }
    }

    /// `Q = eta a_j + d - |c|^(gamma-1) gamma theta`.
    pub fn q(&self) -> f64 {
        self.eta * self.alpha_j + self.d() - self.pen(self.c().abs())
    }

    pub fn g(&self, x: f64) -> f64 {
        let s = self.s();
        let implied_i = (self.c() * self.y_i - s * x).max(0.0);
        self.eta * (self.alpha_j - x) + self.d() - self.pen(x) + s * self.pen(implied_i)
    }

    pub fn domain(&self) -> Domain {
        let c = self.c();
        if self.y_i == self.y_j {
            Domain::Closed {
                lo: 0.0,
                hi: c.abs(),
            }
        } else {
            Domain::Open {
                lo: (-c * self.y_i).max(0.0),
            }
        }
    }

    /// `a_i` implied by a new `a_j` through the conserved `c`.
    #[inline]
    pub fn implied_alpha_i(&self, alpha_j_new: f64) -> f64 {
        self.alpha_i + self.s() * (self.alpha_j - alpha_j_new)
    }

    /// Applies the clamp rules, solves for the root otherwise, and returns
    /// the new pair with both entries non-negative.
    pub fn solve(&self, mode: RootMode) -> Result<PairSolution> {
        if self.eta == 0.0 && self.gt == 0.0 {
            return Ok(PairSolution {
                alpha_i: self.alpha_i,
                alpha_j: self.alpha_j,
                branch: Branch::Skipped,
                g_bracket: None,
            });
        }
        let q = self.q();
        let domain = self.domain();
        let (x, branch, g_bracket) = match domain {
            Domain::Closed { lo, hi } => {
                let pc = self.pen(hi);
                if q <= -2.0 * pc {
                    (lo, Branch::ClampLow, None)
                } else if q >= self.eta * hi {
                    (hi, Branch::ClampHigh, None)
                } else {
                    let x = solve_g_root(self, mode, domain)?;
                    (x, Branch::Root, Some((self.g(lo), self.g(hi))))
                }
            }
            Domain::Open { lo } => {
                if q <= self.eta * lo {
                    (lo, Branch::ClampLow, None)
                } else {
                    let x = solve_g_root(self, mode, domain)?;
                    let far = 2.0 * x.max(lo) + 1.0;
                    (x, Branch::Root, Some((self.g(lo), self.g(far))))
                }
            }
        };
        Ok(self.finish(x, branch, g_bracket))
    }

    fn finish(&self, x: f64, branch: Branch, g_bracket: Option<(f64, f64)>) -> PairSolution {
        let mut alpha_j = x;
        let mut alpha_i = self.implied_alpha_i(x);
        if alpha_i < 0.0 {
            // Rounding pushed a_i past its boundary; use the boundary point.
            alpha_i = 0.0;
            alpha_j = self.alpha_j + self.s() * self.alpha_i;
        }
        PairSolution {
            alpha_i,
            alpha_j: alpha_j.max(0.0),
            branch,
            g_bracket,
        }
    }

    fn numeric_failure(&self, reason: impl Into<String>) -> PsvmError {
        PsvmError::NumericFailure {
            i: 0,
            j: 0,
            c: self.c(),
            q: self.q(),
            reason: reason.into(),
        }
    }
}

/// Zero of `g` inside `domain`. The caller has excluded the clamp cases, so
/// `g(lo) > 0` and `g` turns negative inside the domain.
pub fn solve_g_root(sub: &PairSubproblem, mode: RootMode, domain: Domain) -> Result<f64> {
    let lo = domain.lo();
    let x = match mode {
        RootMode::Numeric => return bisect(sub, domain),
        RootMode::Linear => {
            // eta > 0 here: eta = 0 without penalty was skipped by the caller.
            sub.alpha_j + sub.d() / sub.eta
        }
        RootMode::Analytic2 => {
            let theta = sub.gt / 2.0;
            (sub.eta * sub.alpha_j + sub.d() + 2.0 * theta * sub.c() * sub.y_j)
                / (sub.eta + 4.0 * theta)
        }
        RootMode::Analytic15 => solve_quadratic(sub, domain)?,
    };
    Ok(match domain {
        Domain::Closed { hi, .. } => x.clamp(lo, hi),
        Domain::Open { .. } => x.max(lo),
    })
}

/// `gamma = 3`: `g(x) = a0 + a1 x + a2 x^2` with
/// `a0 = eta a_j + d + 3 theta s c^2`, `a1 = -eta - 6 theta c y_i`,
/// `a2 = 3 theta (s - 1)`.
fn solve_quadratic(sub: &PairSubproblem, domain: Domain) -> Result<f64> {
    let theta = sub.gt / 3.0;
    let s = sub.s();
    let c = sub.c();
    let a0 = sub.eta * sub.alpha_j + sub.d() + 3.0 * theta * s * c * c;
    let a1 = -sub.eta - 6.0 * theta * c * sub.y_i;
    let a2 = 3.0 * theta * (s - 1.0);
    if a2 == 0.0 {
        if a1 == 0.0 {
            return Err(sub.numeric_failure("degenerate linear form of g"));
        }
        return Ok(-a0 / a1);
    }
    let disc = a1 * a1 - 4.0 * a2 * a0;
    if disc < 0.0 {
        return Err(sub.numeric_failure(format!("negative discriminant {disc:e}")));
    }
    let sq = disc.sqrt();
    let sign = if a1 >= 0.0 { 1.0 } else { -1.0 };
    let t = -0.5 * (a1 + sign * sq);
    let r1 = t / a2;
    let r2 = if t != 0.0 { a0 / t } else { r1 };
    let lo = domain.lo();
    let (hi, scale) = match domain {
        Domain::Closed { hi, .. } => (hi, hi.max(1.0)),
        Domain::Open { .. } => (f64::INFINITY, lo.max(1.0)),
    };
    let slack = 1e-9 * scale;
    let inside = |r: f64| r.is_finite() && r >= lo - slack && r <= hi + slack;
    match (inside(r1), inside(r2)) {
        (true, true) => Ok(if sub.g(r1).abs() <= sub.g(r2).abs() {
            r1
        } else {
            r2
        }),
        (true, false) => Ok(r1),
        (false, true) => Ok(r2),
        (false, false) => Err(sub.numeric_failure(format!(
            "quadratic roots {r1:e}, {r2:e} both outside [{lo:e}, {hi:e}]"
        ))),
    }
}

fn bisect(sub: &PairSubproblem, domain: Domain) -> Result<f64> {
    let mut lo = domain.lo();
    let mut hi = match domain {
        Domain::Closed { hi, .. } => hi,
        Domain::Open { .. } => {
            let mut hi = (2.0 * lo).max(1.0);
            let mut expansions = 0;
            while sub.g(hi) >= 0.0 {
                if expansions == MAX_EXPANSIONS {
                    return Err(sub.numeric_failure(format!(
                        "no sign change of g within {MAX_EXPANSIONS} doublings"
                    )));
                }
                lo = hi;
                hi *= 2.0;
                expansions += 1;
            }
            hi
        }
    };
    while hi - lo > BISECTION_RTOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sub.g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::derive_gamma_theta;
    use approx::assert_abs_diff_eq;

    fn smooth(p: f64, c: f64) -> Penalty {
        let (gamma, theta) = derive_gamma_theta(p, c).unwrap();
        Penalty::Smooth { gamma, theta }
    }

    #[test]
    fn running_example_pair() {
        // alpha = 0, E = (-1, 1), eta = 4, p = 2, C = 1
        let sub = PairSubproblem::new(0.0, 0.0, 1.0, -1.0, 4.0, -2.0, &smooth(2.0, 1.0));
        assert_eq!(sub.d(), 2.0);
        assert_eq!(sub.q(), 2.0);
        let sol = sub.solve(RootMode::Analytic2).unwrap();
        assert_abs_diff_eq!(sol.alpha_j, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(sol.alpha_i, 0.4, epsilon = 1e-15);
        let num = sub.solve(RootMode::Numeric).unwrap();
        assert_abs_diff_eq!(num.alpha_j, 0.4, epsilon = 1e-11);
    }

    #[test]
    fn kkt_satisfied_pair_is_noop() {
        let sub = PairSubproblem::new(0.0, 0.0, 1.0, -1.0, 2.0, 0.0, &smooth(1.5, 1.0));
        let sol = sub.solve(RootMode::Analytic15).unwrap();
        assert_eq!(sol.branch, Branch::ClampLow);
        assert_eq!((sol.alpha_i, sol.alpha_j), (0.0, 0.0));
    }

    #[test]
    fn same_label_high_clamp_moves_all_mass_to_j() {
        // Large positive d forces Q >= eta |c|.
        let sub = PairSubproblem::new(0.3, 0.2, 1.0, 1.0, 1.0, 10.0, &smooth(2.0, 1.0));
        assert!(sub.q() >= sub.eta * sub.c().abs());
        let sol = sub.solve(RootMode::Analytic2).unwrap();
        assert_eq!(sol.branch, Branch::ClampHigh);
        assert_eq!(sol.alpha_i, 0.0);
        assert_abs_diff_eq!(sol.alpha_j, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_theta_is_classic_smo_step() {
        let pen = Penalty::Smooth {
            gamma: 2.0,
            theta: 0.0,
        };
        let sub = PairSubproblem::new(1.0, 0.5, 1.0, -1.0, 2.0, 0.6, &pen);
        let sol = sub.solve(RootMode::Analytic2).unwrap();
        assert_abs_diff_eq!(sol.alpha_j, 0.5 - 0.6 / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn hard_margin_degenerate_pair_is_skipped() {
        let sub = PairSubproblem::new(0.2, 0.1, 1.0, -1.0, 0.0, 0.3, &Penalty::HardMargin);
        assert_eq!(sub.solve(RootMode::Linear).unwrap().branch, Branch::Skipped);
    }

    #[test]
    fn quadratic_and_bisection_agree() {
        let pen = smooth(1.5, 0.7);
        for &(ai, aj, yi, yj, eta, ed) in &[
            (0.2, 0.9, 1.0, -1.0, 1.3, -0.8),
            (0.0, 0.0, -1.0, 1.0, 0.5, 2.0),
            (1.5, 0.1, 1.0, 1.0, 2.0, 0.4),
            (0.4, 0.4, -1.0, -1.0, 0.0, -1.0),
        ] {
            let sub = PairSubproblem::new(ai, aj, yi, yj, eta, ed, &pen);
            let a = sub.solve(RootMode::Analytic15).unwrap();
            let n = sub.solve(RootMode::Numeric).unwrap();
            assert_abs_diff_eq!(a.alpha_j, n.alpha_j, epsilon = 1e-9);
        }
    }
}
