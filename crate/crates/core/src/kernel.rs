//! Kernel functions and the kernel-row store used by the solver.
//!
//! Analytic kernels (linear, Gaussian) are evaluated from feature vectors.
//! A precomputed kernel is index-addressed: it only exists as an `m x m`
//! matrix over a fixed training set and cannot score unseen points.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{PsvmError, Result};
use crate::matrix::Matrix;

/// Tolerance for kernel symmetry and for `eta >= 0` checks.
pub const PSD_TOL: f64 = 1e-9;

/// Training sets up to this many rows get a fully materialized kernel matrix.
pub const DEFAULT_FULL_MATRIX_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Linear,
    /// `exp(-|a - b|^2 / (2 sigma^2))`
    Gaussian {
        sigma: f64,
    },
    Precomputed(Arc<PrecomputedKernel>),
}

/// Validated square kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedKernel {
    matrix: Matrix,
}

impl PrecomputedKernel {
    pub fn new(matrix: Matrix) -> Result<Self> {
        let m = matrix.rows();
        if m == 0 || matrix.cols() != m {
            return Err(PsvmError::invalid(format!(
                "precomputed kernel must be square and non-empty, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        for i in 0..m {
            for j in 0..i {
                let (a, b) = (matrix.get(i, j), matrix.get(j, i));
                if (a - b).abs() > PSD_TOL {
                    return Err(PsvmError::invalid(format!(
                        "precomputed kernel is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                eta(&matrix, i, j)?;
            }
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }
}

impl Kernel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(PsvmError::invalid(format!(
                "gaussian sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(Kernel::Gaussian { sigma })
    }

    pub fn precomputed(matrix: Matrix) -> Result<Self> {
        Ok(Kernel::Precomputed(Arc::new(PrecomputedKernel::new(
            matrix,
        )?)))
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, Kernel::Precomputed(_))
    }

    /// Evaluates the kernel on two feature vectors.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(PsvmError::invalid(format!(
                "kernel arguments differ in dimension: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        match self {
            Kernel::Precomputed(_) => Err(PsvmError::invalid(
                "precomputed kernels are index-addressed and cannot evaluate feature vectors",
            )),
            _ => Ok(self.eval_unchecked(a, b)),
        }
    }

    /// Kernel value without dimension checks. Precomputed kernels return NaN.
    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => dot(a, b),
            Kernel::Gaussian { sigma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            Kernel::Precomputed(_) => f64::NAN,
        }
    }
}

/// Free-function form of [`Kernel::eval`].
pub fn kernel_eval(kernel: &Kernel, a: &[f64], b: &[f64]) -> Result<f64> {
    kernel.eval(a, b)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full `m x m` kernel matrix over the rows of `x`.
///
/// Only the lower triangle is evaluated; the upper triangle is mirrored so the
/// result is exactly symmetric.
pub fn kernel_matrix(kernel: &Kernel, x: &Matrix) -> Result<Matrix> {
    let m = x.rows();
    if m == 0 {
        return Err(PsvmError::invalid("kernel matrix needs at least one row"));
    }
    if let Kernel::Precomputed(pk) = kernel {
        if pk.matrix().rows() != m {
            return Err(PsvmError::invalid(format!(
                "precomputed kernel has {} rows, data has {m}",
                pk.matrix().rows()
            )));
        }
        return Ok(pk.matrix().clone());
    }
    let lower: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (0..=i)
                .map(|j| kernel.eval_unchecked(xi, x.row(j)))
                .collect()
        })
        .collect();
    let mut k = Matrix::zeros(m, m);
    for (i, row) in lower.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    Ok(k)
}

/// Bandwidth rule `2 sigma^2 = M * Var[X]`, with the variance taken over all
/// `m * M` entries of `x`.
pub fn default_gaussian_sigma(x: &Matrix) -> Result<f64> {
    let n = x.as_slice().len();
    if n == 0 {
        return Err(PsvmError::DegenerateData("empty feature matrix".into()));
    }
    let mean = x.as_slice().iter().sum::<f64>() / n as f64;
    let var = x
        .as_slice()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n as f64;
    if !(var > 0.0) {
        return Err(PsvmError::DegenerateData(
            "feature matrix has zero variance; gaussian bandwidth undefined".into(),
        ));
    }
    Ok((x.cols() as f64 * var / 2.0).sqrt())
}

#[inline]
fn eta_from(kii: f64, kjj: f64, kij: f64, i: usize, j: usize) -> Result<f64> {
    let v = kii + kjj - 2.0 * kij;
    if v >= 0.0 {
        Ok(v)
    } else if v >= -PSD_TOL {
        Ok(0.0)
    } else {
        Err(PsvmError::NonPsdKernel { i, j, value: v })
    }
}

/// Pair curvature `K_ii + K_jj - 2 K_ij`, clamped to zero within [`PSD_TOL`].
pub fn eta(k: &Matrix, i: usize, j: usize) -> Result<f64> {
    if i >= k.rows() || j >= k.rows() {
        return Err(PsvmError::invalid(format!(
            "eta index out of range: ({i}, {j}) for a {}x{} kernel",
            k.rows(),
            k.cols()
        )));
    }
    eta_from(k.get(i, i), k.get(j, j), k.get(i, j), i, j)
}

/// Kernel rows for one training problem.
///
/// Small problems keep the whole matrix; larger ones compute rows on demand
/// and keep the most recently used ones. Not shared between threads: each
/// solver owns its store.
pub struct KernelStore {
    diag: Vec<f64>,
    backing: Backing,
}

enum Backing {
    Full(Vec<Arc<[f64]>>),
    Lazy {
        kernel: Kernel,
        x: Matrix,
        cache: RowCache,
    },
}

impl KernelStore {
    /// Chooses full materialization when `x.rows() <= full_cap`, otherwise a
    /// row cache holding up to `cache_rows` rows.
    pub fn new(kernel: &Kernel, x: &Matrix, full_cap: usize, cache_rows: usize) -> Result<Self> {
        let m = x.rows();
        if m == 0 {
            return Err(PsvmError::invalid("kernel store needs at least one row"));
        }
        if !kernel.is_analytic() || m <= full_cap {
            let k = kernel_matrix(kernel, x)?;
            return Ok(Self::from_matrix_unchecked(&k));
        }
        let diag = (0..m)
            .map(|i| kernel.eval_unchecked(x.row(i), x.row(i)))
            .collect();
        Ok(Self {
            diag,
            backing: Backing::Lazy {
                kernel: kernel.clone(),
                x: x.clone(),
                cache: RowCache::new(cache_rows.max(2)),
            },
        })
    }

    /// Wraps an explicit kernel matrix after validating it.
    pub fn from_matrix(k: &Matrix) -> Result<Self> {
        PrecomputedKernel::new(k.clone())?;
        Ok(Self::from_matrix_unchecked(k))
    }

    fn from_matrix_unchecked(k: &Matrix) -> Self {
        let m = k.rows();
        let rows = (0..m).map(|i| Arc::from(k.row(i))).collect();
        Self {
            diag: (0..m).map(|i| k.get(i, i)).collect(),
            backing: Backing::Full(rows),
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn is_full(&self) -> bool {
        matches!(self.backing, Backing::Full(_))
    }

    #[inline]
    pub fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Row `i` of the kernel matrix.
    pub fn row(&mut self, i: usize) -> Arc<[f64]> {
        match &mut self.backing {
            Backing::Full(rows) => rows[i].clone(),
            Backing::Lazy { kernel, x, cache } => cache.get_or_insert(i, || {
                let xi = x.row(i);
                (0..x.rows())
                    .map(|k| kernel.eval_unchecked(xi, x.row(k)))
                    .collect()
            }),
        }
    }

    pub fn eta(&mut self, i: usize, j: usize) -> Result<f64> {
        let kij = self.row(i)[j];
        eta_from(self.diag[i], self.diag[j], kij, i, j)
    }
}

/// Least-recently-used cache of kernel rows.
struct RowCache {
    capacity: usize,
    clock: u64,
    rows: HashMap<usize, (Arc<[f64]>, u64)>,
}

impl RowCache {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            clock: 0,
            rows: HashMap::new(),
        }
    }

    fn get_or_insert(&mut self, i: usize, compute: impl FnOnce() -> Vec<f64>) -> Arc<[f64]> {
        self.clock += 1;
        if let Some((row, stamp)) = self.rows.get_mut(&i) {
            *stamp = self.clock;
            return row.clone();
        }
        if self.rows.len() >= self.capacity {
            if let Some(&oldest) = self
                .rows
                .iter()
                .min_by_key(|(_, (_, stamp))| *stamp)
                .map(|(k, _)| k)
            {
                self.rows.remove(&oldest);
            }
        }
        let row: Arc<[f64]> = compute().into();
        self.rows.insert(i, (row.clone(), self.clock));
        row
    }
}

/// Kernel choice before it is bound to training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    /// Gaussian kernel; `None` derives sigma from the training features via
    /// [`default_gaussian_sigma`].
    Gaussian(Option<f64>),
}

impl KernelSpec {
    pub fn resolve(&self, x: &Matrix) -> Result<Kernel> {
        match *self {
            KernelSpec::Linear => Ok(Kernel::Linear),
            KernelSpec::Gaussian(Some(sigma)) => Kernel::gaussian(sigma),
            KernelSpec::Gaussian(None) => Kernel::gaussian(default_gaussian_sigma(x)?),
        }
    }
}

impl std::str::FromStr for KernelSpec {
    type Err = PsvmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(KernelSpec::Linear),
            "gaussian" | "rbf" => Ok(KernelSpec::Gaussian(None)),
            _ => Err(PsvmError::invalid(format!(
                "unknown kernel {s:?}, expected linear or gaussian"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_eval_is_dot_product() {
        assert_eq!(Kernel::Linear.eval(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
    }

    #[test]
    fn gaussian_eval_values() {
        let k = Kernel::gaussian(1.0).unwrap();
        assert_eq!(k.eval(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        // exp(-|(0,0)-(2,0)|^2 / 2) = exp(-2)
        assert_abs_diff_eq!(
            k.eval(&[0.0, 0.0], &[2.0, 0.0]).unwrap(),
            0.135_335_283_236_612_7,
            epsilon = 1e-15
        );
    }

    #[test]
    fn eval_rejects_dimension_mismatch_and_precomputed() {
        assert!(matches!(
            Kernel::Linear.eval(&[1.0], &[1.0, 2.0]),
            Err(PsvmError::InvalidInput(_))
        ));
        let pk = Kernel::precomputed(Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        assert!(pk.eval(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn gaussian_sigma_must_be_positive() {
        assert!(Kernel::gaussian(0.0).is_err());
        assert!(Kernel::gaussian(-1.0).is_err());
        assert!(Kernel::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn kernel_matrix_examples() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let k = kernel_matrix(&Kernel::Linear, &x).unwrap();
        assert_eq!(k.as_slice(), &[1.0, 0.0, 0.0, 1.0]);

        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0]]).unwrap();
        let k = kernel_matrix(&Kernel::Linear, &x).unwrap();
        assert_eq!(k.as_slice(), &[2.0, 4.0, 4.0, 8.0]);

        let x = Matrix::from_rows(&[[0.1, 5.0], [2.0, -1.0], [3.0, 3.0]]).unwrap();
        let k = kernel_matrix(&Kernel::gaussian(0.7).unwrap(), &x).unwrap();
        for i in 0..3 {
            assert_eq!(k.get(i, i), 1.0);
        }
    }

    #[test]
    fn bandwidth_rule() {
        // M = 2, flattened variance 1
        let x = Matrix::from_rows(&[[1.0, -1.0], [1.0, -1.0]]).unwrap();
        assert_abs_diff_eq!(default_gaussian_sigma(&x).unwrap(), 1.0, epsilon = 1e-15);
        // M = 8, flattened variance 1
        let row = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let x = Matrix::from_rows(&[row, row]).unwrap();
        assert_abs_diff_eq!(default_gaussian_sigma(&x).unwrap(), 2.0, epsilon = 1e-15);

        let flat = Matrix::from_rows(&[[3.0, 3.0], [3.0, 3.0]]).unwrap();
        assert!(matches!(
            default_gaussian_sigma(&flat),
            Err(PsvmError::DegenerateData(_))
        ));
    }

    #[test]
    fn eta_examples() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let k = kernel_matrix(&Kernel::Linear, &x).unwrap();
        assert_eq!(eta(&k, 0, 0).unwrap(), 0.0);
        assert_eq!(eta(&k, 0, 1).unwrap(), 2.0);

        let g = kernel_matrix(&Kernel::gaussian(1.0).unwrap(), &x).unwrap();
        assert_abs_diff_eq!(
            eta(&g, 0, 1).unwrap(),
            2.0 - 2.0 * g.get(0, 1),
            epsilon = 0.0
        );
        assert!(eta(&g, 0, 1).unwrap() > 0.0);

        let bad = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(
            eta(&bad, 0, 1),
            Err(PsvmError::NonPsdKernel { .. })
        ));
        assert!(Kernel::precomputed(bad).is_err());
    }

    #[test]
    fn precomputed_rejects_asymmetry() {
        let m = Matrix::from_rows(&[[1.0, 0.5], [0.4, 1.0]]).unwrap();
        assert!(Kernel::precomputed(m).is_err());
    }

    #[test]
    fn lazy_store_matches_full_store() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos(), i as f64 / 5.0])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let kern = Kernel::gaussian(0.9).unwrap();
        let mut full = KernelStore::new(&kern, &x, 100, 4).unwrap();
        let mut lazy = KernelStore::new(&kern, &x, 4, 3).unwrap();
        assert!(full.is_full());
        assert!(!lazy.is_full());
        for pass in 0..3 {
            for i in (0..12).rev().step_by(pass + 1) {
                assert_eq!(&*full.row(i), &*lazy.row(i));
                assert_eq!(full.diag(i), lazy.diag(i));
            }
        }
        assert_eq!(full.eta(2, 7).unwrap(), lazy.eta(2, 7).unwrap());
    }
}
