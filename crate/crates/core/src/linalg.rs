//! Small dense linear algebra: pivoted Householder QR and symmetric Jacobi
//! eigendecomposition.
//!
//! The estimation path only ever factors the low-dimensional design that
//! remains after fixed-effect absorption (a handful of columns), so a
//! simple column-major matrix with an O(mn²) QR is all that is needed.
//! Fixed effects themselves are never materialized as dummies outside of
//! test oracles.

use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, hypot, sqrt};

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from column vectors, which must share a length.
    pub fn from_cols(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            assert_eq!(c.len(), rows, "ragged columns");
            data.extend_from_slice(c);
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Append a column on the right.
    pub fn push_col(&mut self, col: &[f64]) {
        if self.cols == 0 && self.rows == 0 {
            self.rows = col.len();
        }
        assert_eq!(col.len(), self.rows);
        self.data.extend_from_slice(col);
        self.cols += 1;
    }

    /// Keep only the rows selected by `mask` (true = keep).
    pub fn filter_rows(&self, mask: &[bool]) -> Mat {
        assert_eq!(mask.len(), self.rows);
        let kept = mask.iter().filter(|&&m| m).count();
        let mut out = Mat::zeros(kept, self.cols);
        for j in 0..self.cols {
            let src = self.col(j);
            let dst = out.col_mut(j);
            let mut r = 0;
            for (i, &m) in mask.iter().enumerate() {
                if m {
                    dst[r] = src[i];
                    r += 1;
                }
            }
        }
        out
    }

    /// y = A x.
    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for j in 0..self.cols {
            let c = self.col(j);
            let xj = x[j];
            for i in 0..self.rows {
                y[i] += c[i] * xj;
            }
        }
        y
    }

    /// y = Aᵀ x.
    pub fn t_mat_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for j in 0..self.cols {
            let c = self.col(j);
            let mut s = 0.0;
            for i in 0..self.rows {
                s += c[i] * x[i];
            }
            y[j] = s;
        }
        y
    }

    /// C = A B.
    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            for k in 0..self.cols {
                let b = other.get(k, j);
                if b == 0.0 {
                    continue;
                }
                let a_col = self.col(k);
                let o_col = out.col_mut(j);
                for i in 0..self.rows {
                    o_col[i] += a_col[i] * b;
                }
            }
        }
        out
    }

    /// A ← A + s·B, elementwise.
    pub fn add_scaled(&mut self, other: &Mat, s: f64) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// A ← s·A.
    pub fn scale(&mut self, s: f64) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }

    /// C = Aᵀ A.
    pub fn gram(&self) -> Mat {
        let k = self.cols;
        let mut g = Mat::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let ca = self.col(a);
                let cb = self.col(b);
                let mut s = 0.0;
                for i in 0..self.rows {
                    s += ca[i] * cb[i];
                }
                g.set(a, b, s);
                g.set(b, a, s);
            }
        }
        g
    }
}

/// Pivoted Householder QR factorization of an m×n matrix (m ≥ n not
/// required; rank is capped at min(m, n)).
pub struct PivotedQr {
    /// Householder vectors below the diagonal, R on and above.
    qr: Mat,
    tau: Vec<f64>,
    /// Column permutation: factored column k came from original `jpvt[k]`.
    jpvt: Vec<usize>,
    /// Numerical rank at the relative tolerance used during factorization.
    rank: usize,
}

/// Relative tolerance for rank decisions in the pivoted QR.
const RANK_REL_TOL: f64 = 1e-10;

pub fn qr_decompose(x: &Mat) -> PivotedQr {
    let m = x.rows();
    let n = x.cols();
    let kmax = m.min(n);
    let mut qr = x.clone();
    let mut tau = vec![0.0; kmax];
    let mut jpvt: Vec<usize> = (0..n).collect();

    let col_norm = |qr: &Mat, j: usize, from: usize| -> f64 {
        let c = qr.col(j);
        let mut s = 0.0;
        for &v in &c[from..] {
            s += v * v;
        }
        sqrt(s)
    };

    let mut max_diag = 0.0f64;
    let mut rank = kmax;
    for k in 0..kmax {
        // Pivot: bring the column with the largest trailing norm to position k.
        let mut best = k;
        let mut best_norm = col_norm(&qr, k, k);
        for j in (k + 1)..n {
            let nj = col_norm(&qr, j, k);
            if nj > best_norm {
                best = j;
                best_norm = nj;
            }
        }
        if best != k {
            jpvt.swap(k, best);
            for i in 0..m {
                let a = qr.get(i, k);
                let b = qr.get(i, best);
                qr.set(i, k, b);
                qr.set(i, best, a);
            }
        }

        if k == 0 {
            max_diag = best_norm;
        }
        if best_norm <= RANK_REL_TOL * max_diag || best_norm == 0.0 {
            rank = k;
            break;
        }

        // Householder reflector for column k.
        let alpha = qr.get(k, k);
        let norm = best_norm;
        let beta = if alpha >= 0.0 { -norm } else { norm };
        let mut v0 = alpha - beta;
        // Scale the reflector so v[k] = 1.
        let t = -v0 / beta;
        for i in (k + 1)..m {
            let v = qr.get(i, k) / v0;
            qr.set(i, k, v);
        }
        tau[k] = t;
        qr.set(k, k, beta);
        v0 = 1.0;
        let _ = v0;

        // Apply reflector to trailing columns.
        for j in (k + 1)..n {
            let mut s = qr.get(k, j);
            for i in (k + 1)..m {
                s += qr.get(i, k) * qr.get(i, j);
            }
            s *= t;
            let prev = qr.get(k, j);
            qr.set(k, j, prev - s);
            for i in (k + 1)..m {
                let prev = qr.get(i, j);
                qr.set(i, j, prev - s * qr.get(i, k));
            }
        }
    }

    PivotedQr {
        qr,
        tau,
        jpvt,
        rank,
    }
}

impl PivotedQr {
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Original indices of columns rejected as numerically collinear.
    pub fn collinear_columns(&self) -> Vec<usize> {
        let mut dropped: Vec<usize> = self.jpvt[self.rank..].to_vec();
        dropped.sort_unstable();
        dropped
    }

    /// Apply Qᵀ to a vector in place.
    fn apply_qt(&self, y: &mut [f64]) {
        let m = self.qr.rows();
        for k in 0..self.rank {
            let mut s = y[k];
            for i in (k + 1)..m {
                s += self.qr.get(i, k) * y[i];
            }
            s *= self.tau[k];
            y[k] -= s;
            for i in (k + 1)..m {
                y[i] -= s * self.qr.get(i, k);
            }
        }
    }

    /// Least-squares solve min ‖Xβ − y‖. Requires full column rank.
    /// Coefficients are returned in the original column order.
    pub fn solve(&self, y: &[f64]) -> Option<Vec<f64>> {
        let n = self.qr.cols();
        if self.rank < n {
            return None;
        }
        let mut work = y.to_vec();
        self.apply_qt(&mut work);
        // Back-substitution on R.
        let mut z = vec![0.0; n];
        for k in (0..n).rev() {
            let mut s = work[k];
            for j in (k + 1)..n {
                s -= self.qr.get(k, j) * z[j];
            }
            z[k] = s / self.qr.get(k, k);
        }
        let mut beta = vec![0.0; n];
        for k in 0..n {
            beta[self.jpvt[k]] = z[k];
        }
        Some(beta)
    }

    /// (XᵀX)⁻¹ from the factorization. Requires full column rank.
    pub fn xtx_inverse(&self) -> Option<Mat> {
        let n = self.qr.cols();
        if self.rank < n {
            return None;
        }
        // R⁻¹ by back-substitution on the identity.
        let mut rinv = Mat::zeros(n, n);
        for col in 0..n {
            let mut z = vec![0.0; n];
            for k in (0..=col).rev() {
                let mut s = if k == col { 1.0 } else { 0.0 };
                for j in (k + 1)..=col {
                    s -= self.qr.get(k, j) * z[j];
                }
                z[k] = s / self.qr.get(k, k);
            }
            for k in 0..n {
                rinv.set(k, col, z[k]);
            }
        }
        // (XᵀX)⁻¹ = P R⁻¹ R⁻ᵀ Pᵀ.
        let mut inv = Mat::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let mut s = 0.0;
                for j in a.max(b)..n {
                    s += rinv.get(a, j) * rinv.get(b, j);
                }
                inv.set(self.jpvt[a], self.jpvt[b], s);
                inv.set(self.jpvt[b], self.jpvt[a], s);
            }
        }
        Some(inv)
    }
}

/// Symmetric eigendecomposition by the cyclic Jacobi method.
///
/// Returns eigenvalues (ascending) and the orthogonal matrix of
/// eigenvectors as columns, so A = V diag(λ) Vᵀ.
pub fn sym_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "matrix must be square");
    let mut m = a.clone();
    let mut v = Mat::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.get(p, q) * m.get(p, q);
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if fabs(apq) < 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + hypot(1.0, theta))
                } else {
                    -1.0 / (-theta + hypot(1.0, theta))
                };
                let c = 1.0 / hypot(1.0, t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let eig: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    order.sort_by(|&a, &b| eig[a].partial_cmp(&eig[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vectors.set(i, new_j, v.get(i, old_j));
        }
    }
    (values, vectors)
}

/// Replace a symmetric matrix with its nearest PSD version by flooring
/// negative eigenvalues at zero. Returns whether truncation was applied.
pub fn truncate_psd(a: &Mat) -> (Mat, bool) {
    let (vals, vecs) = sym_eigen(a);
    let n = a.rows();
    let scale = vals
        .iter()
        .fold(0.0f64, |acc, &v| if fabs(v) > acc { fabs(v) } else { acc });
    let truncated = vals.iter().any(|&v| v < -1e-12 * scale.max(1e-300));
    if !truncated {
        return (a.clone(), false);
    }
    let mut out = Mat::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = vecs.get(i, k);
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                let add = lam * vik * vecs.get(j, k);
                let prev = out.get(i, j);
                out.set(i, j, prev + add);
            }
        }
    }
    (out, true)
}

/// Quadratic form bᵀ A⁻¹ b via eigendecomposition, guarding tiny
/// eigenvalues. Used for joint Wald statistics. Returns None if A has no
/// usable spectrum.
pub fn quad_form_inv(a: &Mat, b: &[f64]) -> Option<f64> {
    let (vals, vecs) = sym_eigen(a);
    let n = a.rows();
    let max = vals
        .iter()
        .fold(0.0f64, |acc, &v| if v > acc { v } else { acc });
    if max <= 0.0 {
        return None;
    }
    let tol = max * 1e-12;
    let mut total = 0.0;
    for k in 0..n {
        if vals[k] <= tol {
            continue;
        }
        let mut proj = 0.0;
        for i in 0..n {
            proj += vecs.get(i, k) * b[i];
        }
        total += proj * proj / vals[k];
    }
    Some(total)
}
