//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::path::PathBuf;

use psvm::bench::DATA_DIR_ENV;

/// Benchmark data directory: `PSVM_DATA_DIR` or the workspace `data/`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")))
}

/// Textbook SMO step without an upper box: move `a_j` to the unconstrained
/// maximizer and clip it to the segment that keeps both multipliers >= 0.
pub fn classic_smo_step(
    a_i: f64,
    a_j: f64,
    y_i: f64,
    y_j: f64,
    eta: f64,
    e_i: f64,
    e_j: f64,
) -> (f64, f64) {
    let (lo, hi) = if y_i != y_j {
        ((a_j - a_i).max(0.0), f64::INFINITY)
    } else {
        (0.0, a_i + a_j)
    };
    let raw = a_j + y_j * (e_i - e_j) / eta;
    let new_j = raw.clamp(lo, hi);
    let new_i = a_i + y_i * y_j * (a_j - new_j);
    (new_i, new_j)
}

/// Maximizes `f` over `[lo, hi]` on a uniform grid. Returns the argmax.
pub fn grid_argmax(lo: f64, hi: f64, step: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (lo, f(lo));
    for k in 1..=n {
        let x = lo + k as f64 * step;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best.0
}
