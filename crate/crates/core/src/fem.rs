//! Linear finite elements for the coupled parabolic-elliptic system on
//! `(0, 1)` with Neumann boundary conditions:
//!
//! ```text
//! w_t = w_xx - rho w + alpha v + u(t)
//! 0   = v_xx - gamma v + beta w + u(t)
//! ```
//!
//! The state is `x = [w; v]` at the mesh nodes, so `E = blockdiag(M, 0)`.

use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorSystem;
use crate::error::{Error, Result};
use crate::linalg::{block_diag, solve, Mat, Vector};
use crate::weierstrass::QuadraticWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicEllipticParams {
    pub rho: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_elements: usize,
    pub t_f: f64,
}

impl Default for ParabolicEllipticParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            gamma: 2.0,
            alpha: 2.0,
            beta: 2.0,
            n_elements: 27,
            t_f: 6.0,
        }
    }
}

impl ParabolicEllipticParams {
    pub fn n_nodes(&self) -> usize {
        self.n_elements + 1
    }

    pub fn mesh(&self) -> Vec<f64> {
        let h = 1.0 / self.n_elements as f64;
        (0..self.n_nodes()).map(|j| j as f64 * h).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_elements == 0 {
            return Err(Error::InvalidParameter("n_elements must be positive".into()));
        }
        if ![self.rho, self.gamma, self.alpha, self.beta, self.t_f]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        if !(self.t_f > 0.0) {
            return Err(Error::InvalidParameter("t_f must be positive".into()));
        }
        Ok(())
    }
}

/// Mass matrix, stiffness matrix and load vector of the constant function.
pub fn mass_stiffness_load(n_elements: usize) -> (Mat, Mat, Vector) {
    let n = n_elements + 1;
    let h = 1.0 / n_elements as f64;
    let mut m = Mat::zeros(n, n);
    let mut k = Mat::zeros(n, n);
    let mut l = Vector::zeros(n);
    for e in 0..n_elements {
        let idx = [e, e + 1];
        let me = [[2.0, 1.0], [1.0, 2.0]];
        let ke = [[1.0, -1.0], [-1.0, 1.0]];
        for a in 0..2 {
            l[idx[a]] += 0.5 * h;
            for b in 0..2 {
                m[(idx[a], idx[b])] += h / 6.0 * me[a][b];
                k[(idx[a], idx[b])] += ke[a][b] / h;
            }
        }
    }
    (m, k, l)
}

#[derive(Debug, Clone)]
pub struct Assembled {
    pub system: DescriptorSystem,
    pub weights: QuadraticWeights,
    pub x_i: Vector,
    pub mass: Mat,
    pub stiffness: Mat,
    pub load: Vector,
}

pub fn assemble(params: &ParabolicEllipticParams) -> Result<Assembled> {
    params.validate()?;
    let n = params.n_nodes();
    let (m, k, l) = mass_stiffness_load(params.n_elements);
    let elliptic = &k + &m * params.gamma;
    if elliptic.clone().lu().solve(&Mat::identity(n, n)).is_none()
        || crate::linalg::condition(&elliptic) > 1e14
    {
        return Err(Error::SingularElliptic);
    }

    let e = block_diag(&m, &Mat::zeros(n, n));
    let mut a = Mat::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&(-&k - &m * params.rho));
    a.view_mut((0, n), (n, n)).copy_from(&(&m * params.alpha));
    a.view_mut((n, 0), (n, n)).copy_from(&(&m * params.beta));
    a.view_mut((n, n), (n, n)).copy_from(&(-&elliptic));
    let mut b = Mat::zeros(2 * n, 1);
    b.view_mut((0, 0), (n, 1)).copy_from(&l);
    b.view_mut((n, 0), (n, 1)).copy_from(&l);
    let system = DescriptorSystem::new(e, a, b)?;

    let q = block_diag(&m, &Mat::zeros(n, n));
    let weights = QuadraticWeights::new(q, Mat::identity(1, 1), Mat::zeros(2 * n, 2 * n), params.t_f)?;

    let w0 = Vector::from_iterator(n, params.mesh().iter().map(|x| (std::f64::consts::PI * x).sin()));
    let v0 = solve(&elliptic, &Mat::from_column_slice(n, 1, (&m * &w0 * params.beta).as_slice()), "K + gamma M")
        .map_err(|_| Error::SingularElliptic)?;
    let mut x_i = Vector::zeros(2 * n);
    x_i.rows_mut(0, n).copy_from(&w0);
    x_i.rows_mut(n, n).copy_from(&v0.column(0));

    Ok(Assembled {
        system,
        weights,
        x_i,
        mass: m,
        stiffness: k,
        load: l,
    })
}

/// Largest eigenvalue of the reduced generator
/// `M^{-1}(-K - rho M + alpha beta M (K + gamma M)^{-1} M)`.
pub fn instability_indicator(params: &ParabolicEllipticParams) -> Result<f64> {
    params.validate()?;
    let n = params.n_nodes();
    let (m, k, _) = mass_stiffness_load(params.n_elements);
    let elliptic = &k + &m * params.gamma;
    let coupled = solve(&elliptic, &m, "K + gamma M").map_err(|_| Error::SingularElliptic)?;
    let s = -&k - &m * params.rho + &m * coupled * (params.alpha * params.beta);
    let s = crate::linalg::symmetrize(&s);
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("mass matrix not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&Mat::identity(n, n))
        .ok_or_else(|| Error::InvalidParameter("singular Cholesky factor".into()))?;
    let reduced = crate::linalg::symmetrize(&(&linv * s * linv.transpose()));
    Ok(reduced
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrices_have_expected_structure() {
        let (m, k, l) = mass_stiffness_load(8);
        let ones = Vector::from_element(9, 1.0);
        assert!((ones.dot(&(&m * &ones)) - 1.0).abs() < 1e-14);
        assert!((&k * &ones).amax() < 1e-12);
        assert!((l.sum() - 1.0).abs() < 1e-14);
        assert!((&m - m.transpose()).norm() == 0.0);
        assert!(m.clone().cholesky().is_some());
    }

    #[test]
    fn default_dimensions() {
        let a = assemble(&ParabolicEllipticParams::default()).unwrap();
        assert_eq!(a.system.n_x(), 56);
        assert_eq!(a.system.n_u(), 1);
    }

    #[test]
    fn growth_rate_of_constant_mode() {
        let rate = instability_indicator(&ParabolicEllipticParams::default()).unwrap();
        assert!((rate - 1.0).abs() < 1e-10, "{rate}");
        let decoupled = ParabolicEllipticParams {
            alpha: 0.0,
            ..Default::default()
        };
        assert!((instability_indicator(&decoupled).unwrap() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn singular_elliptic_operator() {
        let p = ParabolicEllipticParams {
            gamma: 0.0,
            ..Default::default()
        };
        assert!(matches!(assemble(&p), Err(Error::SingularElliptic)));
    }
}
