//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! All routines tolerate empty (zero-row or zero-column) operands, which
//! show up whenever a descriptor system has no algebraic part or no
//! dynamic part.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Thin singular value decomposition `m = u diag(s) v^T` with `s`
/// descending, `u` of size `rows x k`, `v` of size `cols x k`,
/// `k = min(rows, cols)`. Columns of `u` belonging to zero singular values
/// are an orthonormal completion.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

/// One-sided Jacobi SVD.
pub fn svd(m: &Mat) -> Svd {
    let (rows, cols) = m.shape();
    if rows < cols {
        let t = svd(&m.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let mut w = m.clone();
    let mut v = Mat::identity(cols, cols);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (w.column(p), w.column(q));
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for mat in [&mut w, &mut v] {
                    for i in 0..mat.nrows() {
                        let (a, b) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * a - sn * b;
                        mat[(i, q)] = sn * a + c * b;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> = (0..cols).map(|j| (w.column(j).norm(), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let smax = order.first().map(|o| o.0).unwrap_or(0.0);
    let tiny = smax * f64::EPSILON * rows.max(1) as f64;
    let mut u = Mat::zeros(rows, cols);
    let mut vs = Mat::zeros(cols, cols);
    let mut s = Vec::with_capacity(cols);
    let mut filled = 0;
    for (k, &(sigma, j)) in order.iter().enumerate() {
        vs.set_column(k, &v.column(j));
        s.push(sigma);
        if sigma > tiny {
            u.set_column(k, &(w.column(j) / sigma));
            filled = k + 1;
        }
    }
    // Complete u by Gram-Schmidt against unit vectors.
    let mut e = 0;
    for k in filled..cols {
        while e < rows {
            let mut cand = Vector::zeros(rows);
            cand[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for j in 0..k {
                    let proj = u.column(j).dot(&cand);
                    cand -= u.column(j) * proj;
                }
            }
            let nrm = cand.norm();
            if nrm > 1e-8 {
                u.set_column(k, &(cand / nrm));
                break;
            }
        }
    }
    Svd { u, s, v: vs }
}

impl Svd {
    /// Minimum-norm least-squares solution, dropping singular values
    /// `<= eps`.
    pub fn solve(&self, b: &Vector, eps: f64) -> Vector {
        let mut x = Vector::zeros(self.v.nrows());
        for (k, &sigma) in self.s.iter().enumerate() {
            if sigma > eps {
                x += self.v.column(k) * (self.u.column(k).dot(b) / sigma);
            }
        }
        x
    }
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    svd(m).s
}

/// Largest singular value. Zero for empty matrices.
pub fn norm2(m: &Mat) -> f64 {
    singular_values(m).first().cloned().unwrap_or(0.0)
}

pub fn frobenius(m: &Mat) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.norm()
    }
}

pub fn sup_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// 2-norm condition number; `f64::INFINITY` for singular input.
pub fn condition(m: &Mat) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = singular_values(m);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Result of a thresholded SVD of an `m x n` matrix.
pub struct RankSplit {
    pub rank: usize,
    /// Orthonormal basis of the column space (`m x rank`).
    pub range: Mat,
    /// Orthonormal basis of the left null space (`m x (m - rank)`).
    pub left_null: Mat,
    /// Orthonormal basis of the kernel (`n x (n - rank)`).
    pub kernel: Mat,
    pub singular_values: Vec<f64>,
    pub threshold: f64,
}

/// Thresholded SVD: singular values `<= rel_tol * sigma_max` count as zero.
///
/// Rectangular input is padded with zeros to a square matrix so that full
/// orthonormal complements are available.
pub fn rank_split(m: &Mat, rel_tol: f64) -> RankSplit {
    let (rows, cols) = m.shape();
    let k = rows.max(cols);
    if k == 0 {
        return RankSplit {
            rank: 0,
            range: Mat::zeros(rows, 0),
            left_null: Mat::zeros(rows, rows),
            kernel: Mat::zeros(cols, cols),
            singular_values: Vec::new(),
            threshold: 0.0,
        };
    }
    let mut padded = Mat::zeros(k, k);
    padded.view_mut((0, 0), (rows, cols)).copy_from(m);
    let dec = svd(&padded);
    let sv = dec.s.clone();
    let smax = sv.first().cloned().unwrap_or(0.0);
    let threshold = rel_tol * smax;
    let rank = if smax == 0.0 {
        0
    } else {
        sv.iter().filter(|s| **s > threshold).count()
    };
    let range = canonical_signs(dec.u.view((0, 0), (rows, rank)).into_owned());
    // Right vectors of the transpose give the left null space; padding rows
    // beyond `rows` carry no weight.
    let left = svd(&padded.transpose()).v;
    let left_null = orthonormal_columns(&left.view((0, rank), (rows, k - rank)).into_owned(), rows - rank);
    let kernel = orthonormal_columns(&dec.v.view((0, rank), (cols, k - rank)).into_owned(), cols - rank);
    RankSplit {
        rank,
        range,
        left_null,
        kernel,
        singular_values: sv,
        threshold,
    }
}

/// Orthonormal basis of the column space of `m`, keeping the `keep`
/// dominant directions.
pub fn orthonormal_columns(m: &Mat, keep: usize) -> Mat {
    let rows = m.nrows();
    if keep == 0 || m.ncols() == 0 {
        return Mat::zeros(rows, 0);
    }
    let u = svd(m).u;
    canonical_signs(u.view((0, 0), (rows, keep)).into_owned())
}

/// Flip column signs so that each column's largest-magnitude entry is
/// positive. Makes SVD-derived bases reproducible.
pub fn canonical_signs(mut m: Mat) -> Mat {
    for mut col in m.column_iter_mut() {
        let pivot = col
            .iter()
            .cloned()
            .fold(0.0_f64, |acc, v| if v.abs() > acc.abs() + 1e-14 { v } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    m
}

/// Solve `a x = b` with partial-pivot LU; errors on numerical singularity.
pub fn solve(a: &Mat, b: &Mat, what: &str) -> Result<Mat> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} system with {} right-hand-side rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, b.ncols()));
    }
    let lu = a.clone().lu();
    lu.solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::AssumptionViolated(format!("{what}: singular linear system")))
}

/// Solve `x a = b`, i.e. `a^T x^T = b^T`.
pub fn solve_right(b: &Mat, a: &Mat, what: &str) -> Result<Mat> {
    Ok(solve(&a.transpose(), &b.transpose(), what)?.transpose())
}

/// Smallest eigenvalue of a symmetric matrix (`+inf` if empty).
pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Relative symmetry defect `|m - m^T| / max(|m|, tiny)`.
pub fn asymmetry(m: &Mat) -> f64 {
    let n = frobenius(m);
    if n == 0.0 {
        0.0
    } else {
        frobenius(&(m - m.transpose())) / n
    }
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Mat::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

pub fn hstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn vstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.ncols(), b.ncols());
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}
