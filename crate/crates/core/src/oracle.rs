//! Direct transcription of the optimal control problem for small instances.
//!
//! The control is piecewise linear on a uniform grid, `x1` follows the
//! trapezoidal rule, `x0 = -Bt0 u` is eliminated and the cost uses the
//! trapezoidal quadrature. The resulting equality-constrained QP in the
//! nodal controls is solved through its KKT system.

use serde::Serialize;

use crate::control::ControlSignal;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{solve, svd, symmetrize, Mat, Vector};
use crate::weierstrass::{QuadraticWeights, WeierstrassForm};

pub const MAX_UNKNOWNS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub n_steps: usize,
    pub tol_consist: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            n_steps: 400,
            tol_consist: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub control: ControlSignal,
    pub cost: f64,
    pub diagnostics: OracleDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleDiagnostics {
    pub n_steps: usize,
    pub unknowns: usize,
    /// Relative residual of the KKT solve.
    pub kkt_residual: f64,
    /// `|(x_i)_0 + Bt0 u(0)|` at the minimizer.
    pub consistency_residual: f64,
}

pub fn direct_transcription(
    wf: &WeierstrassForm,
    w: &QuadraticWeights,
    x_i: &Vector,
    opts: &OracleOptions,
) -> Result<OracleSolution> {
    let n = opts.n_steps;
    if n == 0 {
        return Err(Error::InvalidParameter("n_steps must be positive".into()));
    }
    let (r, m) = (wf.rank_1(), wf.n_u());
    let unknowns = m * (n + 1) + r * n;
    if unknowns > MAX_UNKNOWNS {
        return Err(Error::TooLarge {
            unknowns,
            limit: MAX_UNKNOWNS,
        });
    }
    if x_i.len() != wf.n_x() {
        return Err(Error::DimensionMismatch(format!(
            "x_i has {} entries, expected {}",
            x_i.len(),
            wf.n_x()
        )));
    }
    let h = w.t_f / n as f64;
    let nu = m * (n + 1);

    let eye = Mat::identity(r, r);
    let implicit = &eye - &wf.at1 * (0.5 * h);
    let prop = solve(&implicit, &(&eye + &wf.at1 * (0.5 * h)), "I - h/2 At1")?;
    let gamma = solve(&implicit, &(&wf.bt1 * (0.5 * h)), "I - h/2 At1")?;

    let x0_map = &wf.basis_x0 * &wf.bt0;
    let q11 = wf.basis_x1.transpose() * &w.q * &wf.basis_x1;
    let q1u = -(wf.basis_x1.transpose() * &w.q * &x0_map);
    let quu = x0_map.transpose() * &w.q * &x0_map + &w.r;

    // x1_k = f_k + g_k U, with only the first (k + 1) m columns of g_k nonzero.
    let c = wf.x1_coords(x_i);
    let mut f = c.clone();
    let mut g = Mat::zeros(r, nu);
    let mut hess = Mat::zeros(nu, nu);
    let mut lin = Vector::zeros(nu);
    let mut constant = 0.0;
    for k in 0..=n {
        if k > 0 {
            let cols = (k + 1) * m;
            let prev = g.columns(0, k * m).clone_owned();
            g.columns_mut(0, k * m).copy_from(&(&prop * prev));
            f = &prop * &f;
            for j in [k - 1, k] {
                let mut block = g.columns_mut(j * m, m);
                block += &gamma;
            }
            debug_assert!(cols <= nu);
        }
        let wk = if k == 0 || k == n { 0.5 * h } else { h };
        let cols = (k + 1) * m;
        let gk = g.columns(0, cols);
        let q_gk = &q11 * gk;
        let mut hv = hess.view_mut((0, 0), (cols, cols));
        hv += gk.transpose() * &q_gk * wk;
        let cross = gk.transpose() * &q1u * wk;
        let mut col_block = hess.view_mut((0, k * m), (cols, m));
        col_block += &cross;
        let mut row_block = hess.view_mut((k * m, 0), (m, cols));
        row_block += cross.transpose();
        let mut diag = hess.view_mut((k * m, k * m), (m, m));
        diag += &quu * wk;

        let qf = &q11 * &f;
        let mut lv = lin.rows_mut(0, cols);
        lv += gk.transpose() * &qf * wk;
        let mut lu = lin.rows_mut(k * m, m);
        lu += q1u.transpose() * &f * wk;
        constant += wk * f.dot(&qf);
    }

    // Terminal term on x(t_f) = X1 x1_N - X0 Bt0 u_N.
    let mut terminal = Mat::zeros(wf.n_x(), nu);
    terminal.copy_from(&(&wf.basis_x1 * &g));
    {
        let mut last = terminal.columns_mut(n * m, m);
        last -= &x0_map;
    }
    let xf0 = &wf.basis_x1 * &f;
    hess += terminal.transpose() * &w.g * &terminal;
    lin += terminal.transpose() * &w.g * &xf0;
    constant += xf0.dot(&(&w.g * &xf0));
    let hess = symmetrize(&hess);

    // Consistency Bt0 u_0 = -(x_i)_0, reduced to its independent rows.
    let x0 = wf.x0_coords(x_i);
    let (cons, rhs) = consistency_rows(&wf.bt0, &x0, opts.tol_consist)?;
    let nc = cons.nrows();

    let dim = nu + nc;
    let mut kkt = Mat::zeros(dim, dim);
    kkt.view_mut((0, 0), (nu, nu)).copy_from(&hess);
    kkt.view_mut((nu, 0), (nc, m)).copy_from(&cons);
    kkt.view_mut((0, nu), (m, nc)).copy_from(&cons.transpose());
    let mut b = Vector::zeros(dim);
    b.rows_mut(0, nu).copy_from(&(-&lin));
    b.rows_mut(nu, nc).copy_from(&rhs);
    let sol = kkt.clone().lu().solve(&b).ok_or(Error::SingularKkt)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularKkt);
    }
    let kkt_residual = (&kkt * &sol - &b).norm() / (kkt.norm() * sol.norm() + b.norm()).max(f64::MIN_POSITIVE);

    let u = sol.rows(0, nu).clone_owned();
    let cost = (u.dot(&(&hess * &u)) + 2.0 * lin.dot(&u) + constant).max(0.0);
    let values: Vec<Vector> = (0..=n).map(|k| u.rows(k * m, m).clone_owned()).collect();
    let consistency_residual = (&x0 + &wf.bt0 * &values[0]).norm();
    let grid = TimeGrid::uniform(0.0, w.t_f, n + 1)?;
    Ok(OracleSolution {
        control: ControlSignal::from_values(grid, values)?,
        cost,
        diagnostics: OracleDiagnostics {
            n_steps: n,
            unknowns,
            kkt_residual,
            consistency_residual,
        },
    })
}

fn consistency_rows(bt0: &Mat, x0: &Vector, tol: f64) -> Result<(Mat, Vector)> {
    let m = bt0.ncols();
    if bt0.nrows() == 0 {
        return Ok((Mat::zeros(0, m), Vector::zeros(0)));
    }
    let dec = svd(bt0);
    let smax = dec.s.first().cloned().unwrap_or(0.0);
    let keep: Vec<usize> = (0..dec.s.len()).filter(|&i| dec.s[i] > 1e-12 * smax.max(1.0)).collect();
    let mut cons = Mat::zeros(keep.len(), m);
    let mut rhs = Vector::zeros(keep.len());
    let mut projected = Vector::zeros(x0.len());
    for (row, &i) in keep.iter().enumerate() {
        let ui = dec.u.column(i);
        cons.row_mut(row).copy_from(&(dec.v.column(i).transpose() * dec.s[i]));
        let coef = ui.dot(x0);
        rhs[row] = -coef;
        projected += ui * coef;
    }
    let residual = (x0 - projected).norm();
    if residual > tol * x0.norm().max(1.0) {
        return Err(Error::InconsistentInitialData { residual });
    }
    Ok((cons, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{compute_projectors, DescriptorSystem, PencilOptions};
    use crate::weierstrass::decompose;

    fn scalar(q: Mat) -> (WeierstrassForm, QuadraticWeights) {
        let sys = DescriptorSystem::new(
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            Mat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
            Mat::from_row_slice(2, 1, &[1.0, 1.0]),
        )
        .unwrap();
        let opts = PencilOptions::default();
        let proj = compute_projectors(&sys, &opts).unwrap();
        let wf = decompose(&sys, &proj, opts.tol_proj, opts.cond_max).unwrap();
        let w = QuadraticWeights::new(q, Mat::identity(1, 1), Mat::zeros(2, 2), 6.0).unwrap();
        (wf, w)
    }

    #[test]
    fn zero_weights_give_zero_control() {
        let (wf, w) = scalar(Mat::zeros(2, 2));
        let x_i = Vector::from_vec(vec![1.0, 0.0]);
        let sol = direct_transcription(&wf, &w, &x_i, &OracleOptions { n_steps: 50, ..Default::default() }).unwrap();
        assert!(sol.cost.abs() < 1e-14);
        assert!(sol.control.sup_norm() < 1e-12);
    }

    #[test]
    fn consistency_imposed() {
        let (wf, w) = scalar(Mat::identity(2, 2));
        let x_i = Vector::from_vec(vec![1.0, 0.3]);
        let sol = direct_transcription(&wf, &w, &x_i, &OracleOptions { n_steps: 100, ..Default::default() }).unwrap();
        assert!(sol.diagnostics.consistency_residual < 1e-12);
        assert!(sol.diagnostics.kkt_residual < 1e-12);
    }

    #[test]
    fn cost_converges_under_refinement() {
        let (wf, w) = scalar(Mat::identity(2, 2));
        let x_i = Vector::from_vec(vec![1.0, 0.0]);
        let costs: Vec<f64> = [50, 100, 200, 400]
            .iter()
            .map(|&n| {
                direct_transcription(&wf, &w, &x_i, &OracleOptions { n_steps: n, ..Default::default() })
                    .unwrap()
                    .cost
            })
            .collect();
        let d1 = (costs[1] - costs[2]).abs();
        let d2 = (costs[2] - costs[3]).abs();
        assert!(d2 < 0.5 * d1, "{costs:?}");
    }

    #[test]
    fn size_guard() {
        let (wf, w) = scalar(Mat::identity(2, 2));
        let x_i = Vector::from_vec(vec![1.0, 0.0]);
        let err = direct_transcription(&wf, &w, &x_i, &OracleOptions { n_steps: 20_000, ..Default::default() });
        assert!(matches!(err, Err(Error::TooLarge { .. })));
    }
}
