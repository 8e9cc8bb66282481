//! Small dense linear algebra: symmetric eigendecomposition (cyclic Jacobi),
//! column-pivoted Householder QR least squares, and Lawson-Hanson NNLS.
//!
//! Problem sizes here are tiny (local polynomial moment matrices are at most
//! 5x5, covariate designs rarely exceed a few hundred columns), so clarity
//! wins over blocking.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }
}

impl core::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigendecomposition `A = V diag(values) V'` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `k` holds the eigenvector for `values[k]`.
    pub vectors: Mat,
}

impl SymEigen {
    /// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
    pub fn new(a: &Mat) -> Self {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut m = a.clone();
        let mut v = Mat::identity(n);
        for _sweep in 0..100 {
            let mut off = 0.0;
            let mut diag = 0.0;
            for i in 0..n {
                diag += m[(i, i)] * m[(i, i)];
                for j in (i + 1)..n {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
            if off <= 1e-30 * diag || off == 0.0 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = m[(p, p)];
                    let aqq = m[(q, q)];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkq = m[(k, q)];
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mqk = m[(q, k)];
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let values = (0..n).map(|i| m[(i, i)]).collect();
        SymEigen { values, vectors: v }
    }

    /// `max |lambda| / min |lambda|`; infinite when an eigenvalue is
    /// non-positive.
    pub fn condition(&self) -> f64 {
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        let min = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.values.len();
        let mut x = vec![0.0; n];
        for k in 0..n {
            let mut proj = 0.0;
            for i in 0..n {
                proj += self.vectors[(i, k)] * b[i];
            }
            let coef = proj / self.values[k];
            for i in 0..n {
                x[i] += coef * self.vectors[(i, k)];
            }
        }
        x
    }
}

impl SymEigen {
    /// Minimum-norm solution of `A x = b` discarding eigenvalues below
    /// `rel_tol * max |lambda|`.
    pub fn pinv_solve(&self, b: &[f64], rel_tol: f64) -> Vec<f64> {
        let n = self.values.len();
        let max = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut x = vec![0.0; n];
        for k in 0..n {
            let lam = self.values[k];
            if lam.abs() <= rel_tol * max || lam == 0.0 {
                continue;
            }
            let proj: f64 = (0..n).map(|i| self.vectors[(i, k)] * b[i]).sum();
            let coef = proj / lam;
            for i in 0..n {
                x[i] += coef * self.vectors[(i, k)];
            }
        }
        x
    }

    /// `V' b`.
    pub fn project(&self, b: &[f64]) -> Vec<f64> {
        let n = self.values.len();
        (0..n)
            .map(|k| (0..n).map(|i| self.vectors[(i, k)] * b[i]).sum())
            .collect()
    }
}

/// Solution of a (possibly rank-deficient) least squares problem.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub coef: Vec<f64>,
    pub rank: usize,
    /// `|R_00| / |R_kk|` over the retained pivots.
    pub condition: f64,
}

/// Minimum-norm-in-the-pivoted-sense least squares `min ||A x - b||` via
/// Householder QR with column pivoting. Columns whose pivot falls below
/// `rel_tol * |R_00|` are treated as dependent and get coefficient zero.
pub fn lstsq(a: &Mat, b: &[f64], rel_tol: f64) -> LstsqSolution {
    let (m, n) = (a.rows, a.cols);
    assert_eq!(b.len(), m);
    // Column-major working copy: QR touches columns.
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| a[(i, j)]).collect())
        .collect();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    let kmax = m.min(n);
    let mut rdiag = Vec::with_capacity(kmax);
    let mut rank = 0;
    for k in 0..kmax {
        // Pivot: largest remaining column norm (recomputed exactly; n is small).
        let mut best = k;
        for j in k..n {
            norms[j] = cols[j][k..].iter().map(|v| v * v).sum();
            if norms[j] > norms[best] {
                best = j;
            }
        }
        cols.swap(k, best);
        norms.swap(k, best);
        perm.swap(k, best);
        let alpha = norms[k].sqrt();
        if k > 0 && alpha <= rel_tol * rdiag[0] {
            break;
        }
        if alpha == 0.0 {
            break;
        }
        let x0 = cols[k][k];
        let sign = if x0 >= 0.0 { 1.0 } else { -1.0 };
        let r_kk = -sign * alpha;
        // Householder vector u = x - r_kk e_k, stored in place.
        let mut u: Vec<f64> = cols[k][k..].to_vec();
        u[0] -= r_kk;
        let unorm2 = dot(&u, &u);
        if unorm2 > 0.0 {
            for col in cols.iter_mut().skip(k + 1) {
                let s = 2.0 * dot(&u, &col[k..]) / unorm2;
                for (ci, ui) in col[k..].iter_mut().zip(&u) {
                    *ci -= s * ui;
                }
            }
            let s = 2.0 * dot(&u, &rhs[k..]) / unorm2;
            for (ri, ui) in rhs[k..].iter_mut().zip(&u) {
                *ri -= s * ui;
            }
        }
        cols[k][k] = r_kk;
        for v in cols[k][k + 1..].iter_mut() {
            *v = 0.0;
        }
        rdiag.push(alpha);
        rank = k + 1;
    }
    // Back substitution on the leading rank x rank block.
    let mut z = vec![0.0; rank];
    for k in (0..rank).rev() {
        let mut s = rhs[k];
        for j in (k + 1)..rank {
            s -= cols[j][k] * z[j];
        }
        z[k] = s / cols[k][k];
    }
    let mut coef = vec![0.0; n];
    for k in 0..rank {
        coef[perm[k]] = z[k];
    }
    let condition = if rank == 0 {
        f64::INFINITY
    } else {
        rdiag[0] / rdiag[rank - 1]
    };
    LstsqSolution {
        coef,
        rank,
        condition,
    }
}

/// Weighted least squares: rows scaled by `sqrt(w_i)`; rows with zero weight
/// are dropped.
pub fn weighted_lstsq(design: &Mat, y: &[f64], w: &[f64], rel_tol: f64) -> LstsqSolution {
    let keep: Vec<usize> = (0..design.rows).filter(|&i| w[i] > 0.0).collect();
    let mut a = Mat::zeros(keep.len(), design.cols);
    let mut b = vec![0.0; keep.len()];
    for (r, &i) in keep.iter().enumerate() {
        let s = w[i].sqrt();
        for j in 0..design.cols {
            a[(r, j)] = s * design[(i, j)];
        }
        b[r] = s * y[i];
    }
    lstsq(&a, &b, rel_tol)
}

/// Lawson-Hanson non-negative least squares `min ||A x - b||, x >= 0`.
pub fn nnls(a: &Mat, b: &[f64]) -> Vec<f64> {
    let n = a.cols;
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let residual = |x: &[f64]| -> Vec<f64> {
        let ax = a.mul_vec(x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    };
    let grad = |r: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| (0..a.rows).map(|i| a[(i, j)] * r[i]).sum())
            .collect()
    };
    let tol = 1e-12 * (1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max));
    for _outer in 0..(3 * n + 10) {
        let w = grad(&residual(&x));
        let cand = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        match cand {
            Some(j) if w[j] > tol => passive[j] = true,
            _ => break,
        }
        for _inner in 0..(3 * n + 10) {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let mut sub = Mat::zeros(a.rows, idx.len());
            for i in 0..a.rows {
                for (c, &j) in idx.iter().enumerate() {
                    sub[(i, c)] = a[(i, j)];
                }
            }
            let z = lstsq(&sub, b, 1e-13).coef;
            if z.iter().all(|&v| v > 0.0) {
                for (c, &j) in idx.iter().enumerate() {
                    x[j] = z[c];
                }
                break;
            }
            let mut step = 1.0;
            for (c, &j) in idx.iter().enumerate() {
                if z[c] <= 0.0 {
                    let denom = x[j] - z[c];
                    if denom > 0.0 {
                        step = step.min(x[j] / denom);
                    }
                }
            }
            for (c, &j) in idx.iter().enumerate() {
                x[j] += step * (z[c] - x[j]);
                if x[j] <= 1e-15 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    x
}
