//! Restricted operators in Weierstrass coordinates and the quadratic
//! weights split along the same decomposition.
//!
//! With `x = X1 c1 + X0 c0` the dynamics decouple into
//!
//! ```text
//! d/dt c1 = At1 c1 + Bt1 u,      c0 = -Bt0 u,
//! ```
//!
//! where `At1 = E1^{-1} A1`, `Bt1 = E1^{-1} B1`, `Bt0 = A0^{-1} B0`.

use serde::{Deserialize, Serialize};

use crate::descriptor::{DescriptorSystem, SpectralProjectors};
use crate::error::{Error, Result};
use crate::linalg::{self, frobenius, min_eigenvalue, norm2, solve, Mat, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct WeierstrassForm {
    pub basis_x1: Mat,
    pub basis_x0: Mat,
    pub basis_z1: Mat,
    pub basis_z0: Mat,
    /// Coordinate maps `X -> X1`, `X -> X0`, `Z -> Z1`, `Z -> Z0`.
    pub sx1: Mat,
    pub sx0: Mat,
    pub sz1: Mat,
    pub sz0: Mat,
    pub e1: Mat,
    pub a1: Mat,
    pub a0: Mat,
    pub b1: Mat,
    pub b0: Mat,
    pub at1: Mat,
    pub bt1: Mat,
    pub bt0: Mat,
    /// Relative error of reassembling `E`, `A`, `B` from the blocks.
    pub reconstruction_residual: f64,
}

impl WeierstrassForm {
    pub fn rank_1(&self) -> usize {
        self.e1.nrows()
    }

    pub fn n_x(&self) -> usize {
        self.basis_x1.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b1.ncols()
    }

    pub fn p_x1(&self) -> Mat {
        &self.basis_x1 * &self.sx1
    }

    pub fn p_x0(&self) -> Mat {
        &self.basis_x0 * &self.sx0
    }

    pub fn p_z1(&self) -> Mat {
        &self.basis_z1 * &self.sz1
    }

    pub fn x1_coords(&self, x: &Vector) -> Vector {
        &self.sx1 * x
    }

    pub fn x0_coords(&self, x: &Vector) -> Vector {
        &self.sx0 * x
    }

    pub fn lift(&self, c1: &Vector, c0: &Vector) -> Vector {
        &self.basis_x1 * c1 + &self.basis_x0 * c0
    }
}

/// Restrict `sys` to the subspaces of `proj`.
pub fn decompose(
    sys: &DescriptorSystem,
    proj: &SpectralProjectors,
    tol_proj: f64,
    cond_max: f64,
) -> Result<WeierstrassForm> {
    let b = &proj.bases;
    if b.x1.nrows() != sys.n_x() || b.z1.nrows() != sys.n_z() {
        return Err(Error::DimensionMismatch(
            "projectors do not match the system dimensions".into(),
        ));
    }
    let (sx1, sx0, sz1, sz0) = (b.sx1(), b.sx0(), b.sz1(), b.sz0());
    let (e, a, bm) = (sys.e(), sys.a(), sys.b());

    let norm_e = norm2(e);
    let e0 = norm2(&(e * &b.x0));
    if e0 > tol_proj * norm_e {
        return Err(Error::AssumptionViolated(format!(
            "E does not vanish on X0: |E X0| = {e0:.3e}"
        )));
    }

    let e1 = &sz1 * e * &b.x1;
    let a1 = &sz1 * a * &b.x1;
    let a0 = &sz0 * a * &b.x0;
    let b1 = &sz1 * bm;
    let b0 = &sz0 * bm;

    let c_e1 = linalg::condition(&e1);
    if !(c_e1 <= cond_max) {
        return Err(Error::AssumptionViolated(format!(
            "E1 is numerically singular (condition {c_e1:.3e})"
        )));
    }
    let c_a0 = linalg::condition(&a0);
    if !(c_a0 <= cond_max) {
        return Err(Error::AssumptionViolated(format!(
            "A0 is numerically singular (condition {c_a0:.3e})"
        )));
    }

    let at1 = solve(&e1, &a1, "E1")?;
    let bt1 = solve(&e1, &b1, "E1")?;
    let bt0 = solve(&a0, &b0, "A0").map_err(|_| Error::SingularA0)?;

    let e_rec = &b.z1 * &e1 * &sx1;
    let a_rec = &b.z1 * &a1 * &sx1 + &b.z0 * &a0 * &sx0;
    let b_rec = &b.z1 * &b1 + &b.z0 * &b0;
    let rel = |x: &Mat, y: &Mat| {
        let s = frobenius(y);
        let d = frobenius(&(x - y));
        if s > 0.0 {
            d / s
        } else {
            d
        }
    };
    let reconstruction_residual = rel(&e_rec, e).max(rel(&a_rec, a)).max(rel(&b_rec, bm));
    if !(reconstruction_residual <= tol_proj) {
        return Err(Error::AssumptionViolated(format!(
            "block reconstruction error {reconstruction_residual:.3e} exceeds {tol_proj:.1e}"
        )));
    }

    Ok(WeierstrassForm {
        basis_x1: b.x1.clone(),
        basis_x0: b.x0.clone(),
        basis_z1: b.z1.clone(),
        basis_z0: b.z0.clone(),
        sx1,
        sx0,
        sz1,
        sz0,
        e1,
        a1,
        a0,
        b1,
        b0,
        at1,
        bt1,
        bt0,
        reconstruction_residual,
    })
}

/// `J = <x(t_f), G x(t_f)> + int_0^{t_f} <x, Q x> + <u, R u> dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticWeights {
    pub q: Mat,
    pub r: Mat,
    pub g: Mat,
    pub t_f: f64,
}

/// Smallest admissible eigenvalue of `R` relative to `max(1, |R|)`.
pub const EPS_R: f64 = 1e-12;

impl QuadraticWeights {
    pub fn new(q: Mat, r: Mat, g: Mat, t_f: f64) -> Result<Self> {
        if !(t_f > 0.0 && t_f.is_finite()) {
            return Err(Error::InvalidWeights(format!("t_f must be positive, got {t_f}")));
        }
        for (name, m) in [("Q", &q), ("R", &r), ("G", &g)] {
            if !m.is_square() {
                return Err(Error::InvalidWeights(format!("{name} is not square")));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidWeights(format!("{name} has non-finite entries")));
            }
            let asym = linalg::asymmetry(m);
            if asym > 1e-12 {
                return Err(Error::InvalidWeights(format!(
                    "{name} is not symmetric (relative defect {asym:.3e})"
                )));
            }
        }
        if q.nrows() != g.nrows() {
            return Err(Error::InvalidWeights("Q and G differ in size".into()));
        }
        for (name, m) in [("Q", &q), ("G", &g)] {
            let lmin = min_eigenvalue(m);
            if lmin < -1e-10 * frobenius(m).max(1.0) {
                return Err(Error::InvalidWeights(format!(
                    "{name} is not positive semidefinite (min eigenvalue {lmin:.3e})"
                )));
            }
        }
        let r_min = min_eigenvalue(&r);
        if !(r_min >= EPS_R * frobenius(&r).max(1.0)) {
            return Err(Error::InvalidWeights(format!(
                "R is not positive definite (min eigenvalue {r_min:.3e})"
            )));
        }
        Ok(Self { q, r, g, t_f })
    }

    pub fn check_dimensions(&self, sys: &DescriptorSystem) -> Result<()> {
        if self.q.nrows() != sys.n_x() || self.r.nrows() != sys.n_u() {
            return Err(Error::DimensionMismatch(format!(
                "weights are for n_x = {}, n_u = {} but the system has n_x = {}, n_u = {}",
                self.q.nrows(),
                self.r.nrows(),
                sys.n_x(),
                sys.n_u()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    /// `|P_X1^T G P_X0|` (equal to its transpose by symmetry of `G`).
    pub g_cross: f64,
    /// `|P_X0^T G P_X0|`.
    pub g_algebraic: f64,
    /// `|P_X0^T Q P_X1|`.
    pub q_cross: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CompatibilityReport {
    /// Name of the first clause that fails, if any.
    pub fn failed_clause(&self) -> Option<&'static str> {
        if self.pass {
            None
        } else if self.g_cross > self.threshold {
            Some("G couples X1 and X0")
        } else if self.g_algebraic > self.threshold {
            Some("G does not vanish on X0")
        } else {
            Some("Q couples X1 and X0")
        }
    }
}

pub fn check_weight_compatibility(
    w: &QuadraticWeights,
    p_x1: &Mat,
    p_x0: &Mat,
    tol_weights: f64,
) -> CompatibilityReport {
    let g_cross = norm2(&(p_x1.transpose() * &w.g * p_x0));
    let g_algebraic = norm2(&(p_x0.transpose() * &w.g * p_x0));
    let q_cross = norm2(&(p_x0.transpose() * &w.q * p_x1));
    let threshold = tol_weights * (norm2(&w.g) + norm2(&w.q));
    let pass = g_cross <= threshold && g_algebraic <= threshold && q_cross <= threshold;
    CompatibilityReport {
        g_cross,
        g_algebraic,
        q_cross,
        threshold,
        pass,
    }
}

/// Weights as quadratic forms in `(c1, c0)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitWeights {
    pub q1: Mat,
    pub q0: Mat,
    pub g1: Mat,
    pub r: Mat,
    /// `R + Bt0^T Q0 Bt0`.
    pub rt: Mat,
}

pub fn split_weights(
    w: &QuadraticWeights,
    wf: &WeierstrassForm,
    tol_weights: f64,
) -> Result<SplitWeights> {
    if w.q.nrows() != wf.n_x() || w.r.nrows() != wf.n_u() {
        return Err(Error::DimensionMismatch("weights do not match the form".into()));
    }
    let report = check_weight_compatibility(w, &wf.p_x1(), &wf.p_x0(), tol_weights);
    if let Some(clause) = report.failed_clause() {
        return Err(Error::IncompatibleWeights(format!(
            "{clause} (cross {:.3e}/{:.3e}/{:.3e} > {:.3e})",
            report.g_cross, report.g_algebraic, report.q_cross, report.threshold
        )));
    }
    let (v1, v0) = (&wf.basis_x1, &wf.basis_x0);
    let q1 = linalg::symmetrize(&(v1.transpose() * &w.q * v1));
    let q0 = linalg::symmetrize(&(v0.transpose() * &w.q * v0));
    let g1 = linalg::symmetrize(&(v1.transpose() * &w.g * v1));
    let rt = linalg::symmetrize(&(&w.r + wf.bt0.transpose() * &q0 * &wf.bt0));
    Ok(SplitWeights {
        q1,
        q0,
        g1,
        r: w.r.clone(),
        rt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{compute_projectors, PencilOptions};

    fn scalar_system() -> DescriptorSystem {
        DescriptorSystem::new(
            Mat::from_row_slice(2, 2, &[1., 0., 0., 0.]),
            Mat::from_row_slice(2, 2, &[-1., 0., 0., -2.]),
            Mat::from_row_slice(2, 1, &[1., 1.]),
        )
        .unwrap()
    }

    fn form(sys: &DescriptorSystem) -> WeierstrassForm {
        let p = compute_projectors(sys, &PencilOptions::default()).unwrap();
        decompose(sys, &p, 1e-8, 1e12).unwrap()
    }

    #[test]
    fn scalar_blocks() {
        let wf = form(&scalar_system());
        assert!((wf.at1[(0, 0)] + 1.0).abs() < 1e-14);
        assert!((wf.bt1[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((wf.bt0[(0, 0)] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn ode_has_empty_algebraic_part() {
        let sys = DescriptorSystem::new(
            Mat::identity(3, 3),
            Mat::from_row_slice(3, 3, &[-1., 1., 0., 0., -2., 0., 0.5, 0., -1.]),
            Mat::from_row_slice(3, 1, &[1., 0., 1.]),
        )
        .unwrap();
        let wf = form(&sys);
        assert_eq!(wf.rank_1(), 3);
        assert_eq!(wf.a0.shape(), (0, 0));
        assert_eq!(wf.bt0.shape(), (0, 1));
        let lhs = &wf.basis_z1 * &wf.e1 * &wf.sx1;
        assert!((lhs - Mat::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn split_of_scalar_weights() {
        let sys = scalar_system();
        let wf = form(&sys);
        let w = QuadraticWeights::new(Mat::identity(2, 2), Mat::identity(1, 1), Mat::zeros(2, 2), 6.0)
            .unwrap();
        let sw = split_weights(&w, &wf, 1e-8).unwrap();
        assert!((sw.q0[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((sw.rt[(0, 0)] - 1.25).abs() < 1e-14);

        let zero = QuadraticWeights::new(Mat::zeros(2, 2), Mat::identity(1, 1), Mat::zeros(2, 2), 1.0)
            .unwrap();
        let sw = split_weights(&zero, &wf, 1e-8).unwrap();
        assert_eq!(sw.q1.norm() + sw.q0.norm(), 0.0);
        assert_eq!(sw.rt, sw.r);
    }

    #[test]
    fn all_ones_q_is_incompatible() {
        let sys = scalar_system();
        let wf = form(&sys);
        let w = QuadraticWeights::new(Mat::from_element(2, 2, 1.0), Mat::identity(1, 1), Mat::zeros(2, 2), 1.0)
            .unwrap();
        let rep = check_weight_compatibility(&w, &wf.p_x1(), &wf.p_x0(), 1e-8);
        assert!(!rep.pass);
        assert!(rep.q_cross > 0.5);
        assert!(matches!(split_weights(&w, &wf, 1e-8), Err(Error::IncompatibleWeights(_))));
    }

    #[test]
    fn g_on_algebraic_part_is_incompatible() {
        let wf = form(&scalar_system());
        let w = QuadraticWeights::new(
            Mat::zeros(2, 2),
            Mat::identity(1, 1),
            Mat::from_row_slice(2, 2, &[0., 0., 0., 1.]),
            1.0,
        )
        .unwrap();
        let rep = check_weight_compatibility(&w, &wf.p_x1(), &wf.p_x0(), 1e-8);
        assert_eq!(rep.failed_clause(), Some("G does not vanish on X0"));
    }

    #[test]
    fn weight_validation() {
        let i = Mat::identity(2, 2);
        let r = Mat::identity(1, 1);
        assert!(QuadraticWeights::new(i.clone(), r.clone(), i.clone(), 0.0).is_err());
        assert!(QuadraticWeights::new(-&i, r.clone(), i.clone(), 1.0).is_err());
        assert!(QuadraticWeights::new(i.clone(), Mat::zeros(1, 1), i.clone(), 1.0).is_err());
        let asym = Mat::from_row_slice(2, 2, &[1., 0.5, 0., 1.]);
        assert!(QuadraticWeights::new(asym, r, i, 1.0).is_err());
    }
}
