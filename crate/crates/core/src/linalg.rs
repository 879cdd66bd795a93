//! Dense solves for the tiny `m × m` systems arising from constraints
//! (Gram matrices and Newton matrices). Row-major storage.

/// Cholesky factorization `G = L Lᵀ` of a symmetric positive-definite
/// matrix. Fails when the smallest pivot drops below `rel_tol` times the
/// largest one.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub(crate) fn new(a: &[f64], dim: usize, rel_tol: f64) -> Option<Self> {
        debug_assert_eq!(a.len(), dim * dim);
        let mut lower = vec![0.0; dim * dim];
        let mut pivots = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut diag = a[j * dim + j];
            for k in 0..j {
                diag -= lower[j * dim + k] * lower[j * dim + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return None;
            }
            pivots.push(diag);
            let ljj = diag.sqrt();
            lower[j * dim + j] = ljj;
            for i in (j + 1)..dim {
                let mut s = a[i * dim + j];
                for k in 0..j {
                    s -= lower[i * dim + k] * lower[j * dim + k];
                }
                lower[i * dim + j] = s / ljj;
            }
        }
        let max = pivots.iter().copied().fold(0.0, f64::max);
        let min = pivots.iter().copied().fold(f64::INFINITY, f64::min);
        if dim > 0 && min <= rel_tol * max {
            return None;
        }
        Some(Self { dim, lower })
    }

    /// `log det G = 2 Σ log L_ii`.
    pub(crate) fn log_det(&self) -> f64 {
        (0..self.dim).map(|i| self.lower[i * self.dim + i].ln()).sum::<f64>() * 2.0
    }

    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let l = &self.lower;
        let mut z = rhs.to_vec();
        for i in 0..n {
            for k in 0..i {
                z[i] -= l[i * n + k] * z[k];
            }
            z[i] /= l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                z[i] -= l[k * n + i] * z[k];
            }
            z[i] /= l[i * n + i];
        }
        z
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` if a pivot magnitude is at or below `abs_tol`.
pub(crate) fn lu_solve(a: &[f64], dim: usize, b: &[f64], abs_tol: f64) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), dim * dim);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..dim {
        let (piv, piv_abs) = (col..dim)
            .map(|r| (r, m[r * dim + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(piv_abs > abs_tol) || !piv_abs.is_finite() {
            return None;
        }
        if piv != col {
            for k in 0..dim {
                m.swap(col * dim + k, piv * dim + k);
            }
            x.swap(col, piv);
        }
        let p = m[col * dim + col];
        for r in (col + 1)..dim {
            let f = m[r * dim + col] / p;
            if f != 0.0 {
                for k in col..dim {
                    m[r * dim + k] -= f * m[col * dim + k];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for i in (0..dim).rev() {
        let mut s = x[i];
        for k in (i + 1)..dim {
            s -= m[i * dim + k] * x[k];
        }
        x[i] = s / m[i * dim + i];
    }
    Some(x)
}
