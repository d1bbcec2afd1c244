//! Cholesky factorization and solve for symmetric positive-definite banded
//! matrices.

/// Symmetric banded matrix stored by its lower band: `band[i][k] = A[i][i-k]`
/// for `k = 0..=bandwidth`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBanded {
    n: usize,
    bandwidth: usize,
    band: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            band: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    fn idx(&self, i: usize, k: usize) -> usize {
        i * (self.bandwidth + 1) + k
    }

    /// `A[i][j]` for any `i, j`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let k = hi - lo;
        if k > self.bandwidth {
            0.0
        } else {
            self.band[self.idx(hi, k)]
        }
    }

    /// Add `v` to both `A[i][j]` and `A[j][i]` (once when `i == j`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let k = hi - lo;
        assert!(k <= self.bandwidth, "entry ({i},{j}) outside the band");
        let idx = self.idx(hi, k);
        self.band[idx] += v;
    }

    /// In-place banded Cholesky, `A = L L^T`. Returns the index of the
    /// first non-positive pivot on failure.
    pub fn factor(mut self) -> Result<BandedCholesky, usize> {
        let p = self.bandwidth;
        for i in 0..self.n {
            let j0 = i.saturating_sub(p);
            for j in j0..=i {
                // L[i][j] = (A[i][j] - sum_{m<j} L[i][m] L[j][m]) / L[j][j]
                let mut s = self.band[self.idx(i, i - j)];
                let m0 = j0.max(j.saturating_sub(p));
                for m in m0..j {
                    s -= self.band[self.idx(i, i - m)] * self.band[self.idx(j, j - m)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(i);
                    }
                    let idx = self.idx(i, 0);
                    self.band[idx] = s.sqrt();
                } else {
                    let idx = self.idx(i, i - j);
                    self.band[idx] = s / self.band[self.idx(j, 0)];
                }
            }
        }
        Ok(BandedCholesky { factor: self })
    }
}

/// Lower-triangular banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    factor: SymBanded,
}

impl BandedCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let (n, p) = (l.n, l.bandwidth);
        assert_eq!(rhs.len(), n, "rhs length");
        // forward: L y = b
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for m in i.saturating_sub(p)..i {
                s -= l.band[l.idx(i, i - m)] * y[m];
            }
            y[i] = s / l.band[l.idx(i, 0)];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for m in i + 1..(i + p + 1).min(n) {
                s -= l.band[l.idx(m, m - i)] * y[m];
            }
            y[i] = s / l.band[l.idx(i, 0)];
        }
        y
    }
}
