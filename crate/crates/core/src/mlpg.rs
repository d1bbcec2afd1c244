//! Maximum-likelihood parameter generation for a single F0 stream.
//!
//! Given per-frame means of the static, delta and delta-delta features and a
//! fixed (global) standard deviation per stream, the smoothest consistent
//! static trajectory is
//!
//! ```text
//! c = argmin_c  sum_s || W_s c - mu_s ||^2 / sigma_s^2
//! ```
//!
//! with `W_0 = I` and `W_1`, `W_2` the delta windows used by
//! [`compute_deltas`](crate::f0::compute_deltas), edges replicated. The normal
//! matrix `W^T S^-1 W` is pentadiagonal, so the solve is a bandwidth-2
//! Cholesky.
//!
//! ```
//! use intonation::f0::{compute_deltas, NormStats};
//! use intonation::mlpg::mlpg;
//!
//! let trajectory = [0.0, 0.3, 0.5, 0.4, -0.2];
//! let means = compute_deltas(&trajectory);
//! let unit = NormStats { mean: 0.0, std: 1.0, global_std: [1.0; 3] };
//! let c = mlpg(means.view(), &unit).unwrap();
//! for (a, b) in c.iter().zip(trajectory) {
//!     assert!((a - b).abs() < 1e-10);
//! }
//! ```

use ndarray::ArrayView2;

use crate::banded::SymBanded;
use crate::f0::{F0Error, NormStats};

/// Bandwidth of `W^T W` for the +-1 frame windows.
pub const BANDWIDTH: usize = 2;

/// Coefficients of row `t` of window `stream` as `(frame, weight)` pairs,
/// with replicated edges folded in.
pub fn window_row(stream: usize, t: usize, len: usize) -> Vec<(usize, f64)> {
    let prev = t.saturating_sub(1);
    let next = (t + 1).min(len - 1);
    let raw: [(usize, f64); 3] = match stream {
        0 => [(t, 1.0), (t, 0.0), (t, 0.0)],
        1 => [(prev, -0.5), (t, 0.0), (next, 0.5)],
        2 => [(prev, 1.0), (t, -2.0), (next, 1.0)],
        _ => panic!("stream index {stream} out of range"),
    };
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(3);
    for (frame, w) in raw {
        match merged.iter_mut().find(|(f, _)| *f == frame) {
            Some(slot) => slot.1 += w,
            None => merged.push((frame, w)),
        }
    }
    merged.retain(|(_, w)| *w != 0.0);
    merged
}

/// Assemble `(W^T S^-1 W, W^T S^-1 mu)` for T x 3 means and per-stream stds.
pub fn normal_equations(means: ArrayView2<'_, f64>, stds: [f64; 3]) -> (SymBanded, Vec<f64>) {
    let len = means.nrows();
    let mut a = SymBanded::zeros(len, BANDWIDTH);
    let mut b = vec![0.0; len];
    for (s, std) in stds.iter().enumerate() {
        let precision = 1.0 / (std * std);
        for t in 0..len {
            let row = window_row(s, t, len);
            let mu = means[[t, s]];
            for (i, &(fi, wi)) in row.iter().enumerate() {
                b[fi] += precision * wi * mu;
                for &(fj, wj) in &row[..=i] {
                    // frames within a row are distinct, so each unordered pair is visited once
                    a.add(fi, fj, precision * wi * wj);
                }
            }
        }
    }
    (a, b)
}

/// Static trajectory from T x 3 feature means using the global stds in
/// `stats`.
pub fn mlpg(means: ArrayView2<'_, f64>, stats: &NormStats) -> Result<Vec<f64>, F0Error> {
    if means.nrows() == 0 || means.ncols() != 3 {
        return Err(F0Error::InvalidContour(format!(
            "MLPG needs T x 3 means with T >= 1, got {:?}",
            means.shape()
        )));
    }
    if stats.global_std.iter().any(|s| !(*s > 0.0)) {
        return Err(F0Error::SingularSystem(0));
    }
    let (a, b) = normal_equations(means, stats.global_std);
    let chol = a.factor().map_err(F0Error::SingularSystem)?;
    Ok(chol.solve(&b))
}
