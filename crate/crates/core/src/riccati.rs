//! Riccati operators: the projected DRE on `X1`, the algebraic `Pi0`, their
//! lifts to the original coordinates and the projection-free residual.
//!
//! The projected DRE
//!
//! ```text
//! -d/dt Pi1 = Pi1 At1 + At1^T Pi1 - Pi1 S Pi1 + Q1,   Pi1(t_f) = G1,
//! S = Bt1 Rt^{-1} Bt1^T
//! ```
//!
//! is stepped backward with its exact flow map. Over a step of length `h`
//! the map has the form
//!
//! ```text
//! Pi(t - h) = Q_h + Phi_h^T Pi(t) (I + S_h Pi(t))^{-1} Phi_h
//! ```
//!
//! with `(Phi_h, S_h, Q_h)` obtained from the Hamiltonian matrix
//! exponential on a short base step and then doubled. This stays
//! accurate for stiff `At1` (fine finite-element meshes), where explicit
//! Runge-Kutta steps would be limited by stability.

use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorSystem;
use crate::error::{Error, Result};
use crate::grid::{HermiteSeries, TimeGrid};
use crate::linalg::{frobenius, norm2, solve, solve_right, symmetrize, Mat};
use crate::parallel::{map_indexed, try_map_indexed, Execution};
use crate::weierstrass::{QuadraticWeights, SplitWeights, WeierstrassForm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DreOptions {
    /// Bound on the scaled midpoint residual; exceeding it is reported in
    /// [`DreDiagnostics::within_tolerance`].
    pub tol_dre: f64,
    /// Largest `|H| h` for the base matrix exponential.
    pub base_step_norm: f64,
}

impl Default for DreOptions {
    fn default() -> Self {
        Self {
            tol_dre: 1e-6,
            base_step_norm: 0.5,
        }
    }
}

/// Backward flow map `Pi -> Q + Phi^T Pi (I + S Pi)^{-1} Phi`.
#[derive(Debug, Clone)]
struct FlowMap {
    phi: Mat,
    s: Mat,
    q: Mat,
}

impl FlowMap {
    fn base(at: &Mat, s: &Mat, q: &Mat, h: f64) -> Result<Self> {
        let r = at.nrows();
        let mut hm = Mat::zeros(2 * r, 2 * r);
        hm.view_mut((0, 0), (r, r)).copy_from(&(at * -h));
        hm.view_mut((0, r), (r, r)).copy_from(&(s * h));
        hm.view_mut((r, 0), (r, r)).copy_from(&(q * h));
        hm.view_mut((r, r), (r, r)).copy_from(&(at.transpose() * h));
        let ex = hm.exp();
        let a = ex.view((0, 0), (r, r)).into_owned();
        let b = ex.view((0, r), (r, r)).into_owned();
        let c = ex.view((r, 0), (r, r)).into_owned();
        let phi = solve(&a, &Mat::identity(r, r), "flow map")
            .map_err(|_| Error::IntegrationFailure("singular base flow block".into()))?;
        let s_h = symmetrize(&(&phi * &b));
        let q_h = symmetrize(&(&c * &phi));
        Ok(Self { phi, s: s_h, q: q_h })
    }

    /// `self` applied first, then `next`.
    fn then(&self, next: &FlowMap) -> Result<FlowMap> {
        let r = self.phi.nrows();
        let m = Mat::identity(r, r) + &next.s * &self.q;
        let w_phi = solve(&m, &next.phi, "flow composition")?;
        let w_s = solve(&m, &next.s, "flow composition")?;
        let phi = &self.phi * &w_phi;
        let s = symmetrize(&(&self.s + &self.phi * w_s * self.phi.transpose()));
        let q = symmetrize(&(&next.q + next.phi.transpose() * &self.q * &w_phi));
        Ok(FlowMap { phi, s, q })
    }

    fn apply(&self, pi: &Mat) -> Result<Mat> {
        let r = pi.nrows();
        let m = Mat::identity(r, r) + &self.s * pi;
        let x = solve_right(pi, &m, "flow application")
            .map_err(|_| Error::IntegrationFailure("Riccati flow map became singular".into()))?;
        Ok(symmetrize(&(&self.q + self.phi.transpose() * x * &self.phi)))
    }
}

struct FlowCache<'a> {
    at: &'a Mat,
    s: &'a Mat,
    q: &'a Mat,
    norm_h: f64,
    base_step_norm: f64,
    maps: Vec<(f64, FlowMap)>,
}

impl<'a> FlowCache<'a> {
    fn new(at: &'a Mat, s: &'a Mat, q: &'a Mat, base_step_norm: f64) -> Self {
        let norm_h = frobenius(at) * 2.0f64.sqrt() + frobenius(s) + frobenius(q);
        Self {
            at,
            s,
            q,
            norm_h,
            base_step_norm,
            maps: Vec::new(),
        }
    }

    fn build(&self, h: f64) -> Result<FlowMap> {
        let mut doublings = 0u32;
        while self.norm_h * h / 2f64.powi(doublings as i32) > self.base_step_norm && doublings < 60 {
            doublings += 1;
        }
        let mut map = FlowMap::base(self.at, self.s, self.q, h / 2f64.powi(doublings as i32))?;
        for _ in 0..doublings {
            map = map.then(&map)?;
        }
        Ok(map)
    }

    fn get(&mut self, h: f64) -> Result<&FlowMap> {
        let pos = self.maps.iter().position(|(k, _)| (k - h).abs() <= 1e-12 * h);
        let idx = match pos {
            Some(i) => i,
            None => {
                let m = self.build(h)?;
                self.maps.push((h, m));
                self.maps.len() - 1
            }
        };
        Ok(&self.maps[idx].1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DreDiagnostics {
    /// Largest scaled `|(Pi(m + d) - Pi(m - d))/(2d) - f(Pi(m))|` over interval
    /// midpoints `m`, with `d = min(h/32, 1e-3/|H|)` for the Hamiltonian `H`.
    pub midpoint_residual: f64,
    /// Largest scaled difference between the Hermite interpolant and the
    /// exact flow at interval midpoints.
    pub interpolation_error: f64,
    pub within_tolerance: bool,
}

/// Samples of `Pi1` on a grid, with right-hand-side slopes.
#[derive(Debug, Clone)]
pub struct ProjectedRiccati {
    pub series: HermiteSeries<Mat>,
    pub diagnostics: DreDiagnostics,
}

impl ProjectedRiccati {
    pub fn grid(&self) -> &TimeGrid {
        &self.series.grid
    }

    pub fn pi1(&self) -> &[Mat] {
        &self.series.values
    }
}

/// `d/dt Pi = -Pi At - At^T Pi + Pi S Pi - Q`.
pub fn dre_rhs(pi: &Mat, at: &Mat, s: &Mat, q: &Mat) -> Mat {
    let pa = pi * at;
    symmetrize(&(-&pa - pa.transpose() + pi * s * pi - q))
}

pub fn riccati_s(wf: &WeierstrassForm, sw: &SplitWeights) -> Result<Mat> {
    let x = solve(&sw.rt, &wf.bt1.transpose(), "Rt")?;
    Ok(symmetrize(&(&wf.bt1 * x)))
}

pub fn solve_projected_dre(
    wf: &WeierstrassForm,
    sw: &SplitWeights,
    grid: &TimeGrid,
    opts: &DreOptions,
    exec: Execution,
) -> Result<ProjectedRiccati> {
    let r = wf.rank_1();
    let s = riccati_s(wf, sw)?;
    let (at, q1) = (&wf.at1, &sw.q1);
    let n = grid.len();
    let mut values = vec![Mat::zeros(r, r); n];
    values[n - 1] = sw.g1.clone();
    let mut cache = FlowCache::new(at, &s, q1, opts.base_step_norm);
    for k in (0..n - 1).rev() {
        let h = grid.spacing(k);
        let next = cache.get(h)?.apply(&values[k + 1])?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationFailure(format!(
                "Riccati solution blew up at t = {}",
                grid.nodes()[k]
            )));
        }
        values[k] = next;
    }
    let slopes = map_indexed(exec, n, |k| dre_rhs(&values[k], at, &s, q1));
    let series = HermiteSeries::new(grid.clone(), values, slopes)?;

    // Each midpoint is probed with a centred difference of the exact flow
    // over `[mid - d, mid + d]`, `d` small against both `h` and the fastest
    // time scale of the flow.
    let mut half_cache = FlowCache::new(at, &s, q1, opts.base_step_norm);
    let norm_h = half_cache.norm_h;
    let probe = |h: f64| (h / 32.0).min(1e-3 / norm_h.max(f64::MIN_POSITIVE));
    let mut maps = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let h = grid.spacing(k);
        let delta = probe(h);
        maps.push([
            half_cache.get(0.5 * h - delta)?.clone(),
            half_cache.get(delta)?.clone(),
        ]);
    }
    let per_interval = try_map_indexed(exec, n - 1, |k| -> Result<(f64, f64)> {
        let (t0, t1) = (grid.nodes()[k], grid.nodes()[k + 1]);
        let delta = probe(t1 - t0);
        let [to_upper, step] = &maps[k];
        let upper = to_upper.apply(&series.values[k + 1])?;
        let mid = step.apply(&upper)?;
        let lower = step.apply(&mid)?;
        let f_mid = dre_rhs(&mid, at, &s, q1);
        let fd = (&upper - &lower) / (2.0 * delta);
        let res = frobenius(&(fd - &f_mid)) / (1.0 + frobenius(&f_mid));
        let interp = series.eval(0.5 * (t0 + t1));
        let ie = frobenius(&(interp - &mid)) / (1.0 + frobenius(&mid));
        Ok((res, ie))
    })?;
    let midpoint_residual = per_interval.iter().map(|p| p.0).fold(0.0, f64::max);
    let interpolation_error = per_interval.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(ProjectedRiccati {
        series,
        diagnostics: DreDiagnostics {
            midpoint_residual,
            interpolation_error,
            within_tolerance: midpoint_residual <= opts.tol_dre,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraicPi0 {
    /// `-A0^{-T} Q0` in `X0`/`Z0` coordinates.
    pub pi0: Mat,
    /// `Pi0` lifted to an `n_z x n_x` operator.
    pub pit0: Mat,
    /// `|A^T Pit0 + Q P_X0| / max(|Q|, 1)`.
    pub residual: f64,
}

pub fn solve_algebraic_pi0(
    sys: &DescriptorSystem,
    wf: &WeierstrassForm,
    sw: &SplitWeights,
    w: &QuadraticWeights,
) -> Result<AlgebraicPi0> {
    let pi0 = -solve(&wf.a0.transpose(), &sw.q0, "A0^T").map_err(|_| Error::SingularA0)?;
    let pit0 = wf.sz0.transpose() * &pi0 * &wf.sx0;
    let res = sys.a().transpose() * &pit0 + &w.q * wf.p_x0();
    let residual = norm2(&res) / norm2(&w.q).max(1.0);
    Ok(AlgebraicPi0 { pi0, pit0, residual })
}

/// `Pi1`, `Pi0` and their lifts `Pit1(t)`, `Pit0`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub projected: ProjectedRiccati,
    pub pit1: HermiteSeries<Mat>,
    pub pi0: Mat,
    pub pit0: Mat,
    pub pi0_residual: f64,
    /// `E1^{-1} S_Z1`, so that `Pit1 = L^T Pi1 L`.
    pub lift: Mat,
}

impl RiccatiSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.pit1.grid
    }

    pub fn pi1_at(&self, t: f64) -> Mat {
        symmetrize(&self.projected.series.eval(t))
    }

    pub fn pit1_at(&self, t: f64) -> Mat {
        symmetrize(&self.pit1.eval(t))
    }

    pub fn pit1_derivative(&self, t: f64) -> Mat {
        symmetrize(&self.pit1.derivative(t))
    }

    /// `<E x, Pit1(t) E x>`.
    pub fn cost_to_go(&self, sys: &DescriptorSystem, t: f64, x: &crate::linalg::Vector) -> f64 {
        let ex = sys.e() * x;
        ex.dot(&(self.pit1_at(t) * &ex))
    }
}

pub fn lift_projection_free(
    projected: ProjectedRiccati,
    wf: &WeierstrassForm,
    pi0: AlgebraicPi0,
    exec: Execution,
) -> Result<RiccatiSolution> {
    let lift = solve(&wf.e1, &wf.sz1, "E1")?;
    let lt = lift.transpose();
    let n = projected.series.grid.len();
    let lifted = try_map_indexed(exec, n, |k| -> Result<(Mat, Mat)> {
        let v = symmetrize(&(&lt * &projected.series.values[k] * &lift));
        let d = symmetrize(&(&lt * &projected.series.slopes[k] * &lift));
        Ok((v, d))
    })?;
    let (values, slopes): (Vec<Mat>, Vec<Mat>) = lifted.into_iter().unzip();
    let pit1 = HermiteSeries::new(projected.series.grid.clone(), values, slopes)?;
    Ok(RiccatiSolution {
        projected,
        pit1,
        pi0: pi0.pi0,
        pit0: pi0.pit0,
        pi0_residual: pi0.residual,
        lift,
    })
}

/// Projected DRE, algebraic equation and lift in one call.
pub fn solve_riccati(
    sys: &DescriptorSystem,
    wf: &WeierstrassForm,
    sw: &SplitWeights,
    w: &QuadraticWeights,
    grid: &TimeGrid,
    opts: &DreOptions,
    exec: Execution,
) -> Result<RiccatiSolution> {
    let projected = solve_projected_dre(wf, sw, grid, opts, exec)?;
    let pi0 = solve_algebraic_pi0(sys, wf, sw, w)?;
    lift_projection_free(projected, wf, pi0, exec)
}

/// Residuals of the projection-free Riccati equation
///
/// ```text
/// d/dt(E^T Z E) + E^T Z A + A^T Z E - E^T Z B R^{-1} B^T Z E
///     - E^T Z B R^{-1} B^T Pit0 + Q P_X1 = 0
/// ```
///
/// at one time, each divided by `1 + max term norm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionFreeResidual {
    pub t: f64,
    /// `Z = Pit1`, residual operator norm over all of `X`.
    pub full: f64,
    /// `Z = Pit1`, residual restricted to states with `c0 = -Bt0 u_opt`.
    pub on_closed_loop: f64,
    /// `Z = Pit1 + S_Z1^T Z2 S_Z0` with `Z2` from [`solve_z2`], over all of `X`.
    pub with_z2: f64,
    pub scale: f64,
}

fn equation_residual(
    sys: &DescriptorSystem,
    w: &QuadraticWeights,
    p_x1: &Mat,
    pit0: &Mat,
    z: &Mat,
    dz: &Mat,
) -> Result<(Mat, f64)> {
    let (e, a, b) = (sys.e(), sys.a(), sys.b());
    let et_z = e.transpose() * z;
    let d = e.transpose() * dz * e;
    let t1 = &et_z * a;
    let t2 = a.transpose() * z * e;
    let bt_z_e = b.transpose() * z * e;
    let rinv_bt_z_e = solve(&w.r, &bt_z_e, "R")?;
    let rinv_bt_pit0 = solve(&w.r, &(b.transpose() * pit0), "R")?;
    let et_z_b = &et_z * b;
    let t3 = &et_z_b * rinv_bt_z_e;
    let t4 = &et_z_b * rinv_bt_pit0;
    let t5 = &w.q * p_x1;
    let scale = 1.0
        + [&d, &t1, &t2, &t3, &t4, &t5]
            .iter()
            .map(|m| norm2(m))
            .fold(0.0, f64::max);
    Ok((d + t1 + t2 - t3 - t4 + t5, scale))
}

/// `Z2` solving `Z2 (A0 - B0 R^{-1} B0^T Pi0) = Z1 B1 R^{-1} B0^T Pi0`
/// with `Z1 = E1^{-T} Pi1(t) E1^{-1}`.
pub fn solve_z2(rs: &RiccatiSolution, wf: &WeierstrassForm, r: &Mat, t: f64) -> Result<Mat> {
    let e1_inv = solve(&wf.e1, &Mat::identity(wf.rank_1(), wf.rank_1()), "E1")?;
    let z1 = e1_inv.transpose() * rs.pi1_at(t) * &e1_inv;
    let rinv_b0t_pi0 = solve(r, &(wf.b0.transpose() * &rs.pi0), "R")?;
    let lhs_op = &wf.a0 - &wf.b0 * &rinv_b0t_pi0;
    let rhs = z1 * &wf.b1 * &rinv_b0t_pi0;
    solve_right(&rhs, &lhs_op, "Z2 operator")
}

pub fn projection_free_residual(
    rs: &RiccatiSolution,
    sys: &DescriptorSystem,
    w: &QuadraticWeights,
    wf: &WeierstrassForm,
    sw: &SplitWeights,
    t: f64,
) -> Result<ProjectionFreeResidual> {
    let grid = rs.grid();
    if !grid.contains_interior(t) {
        return Err(Error::OutOfGrid {
            t,
            t0: grid.t0(),
            tf: grid.tf(),
        });
    }
    let p_x1 = wf.p_x1();
    let z = rs.pit1_at(t);
    let dz = rs.pit1_derivative(t);
    let (res, scale) = equation_residual(sys, w, &p_x1, &rs.pit0, &z, &dz)?;
    let full = norm2(&res) / scale;

    // States on the closed-loop manifold: x = X1 c1 + X0 Bt0 Rt^{-1} Bt1^T Pi1 c1.
    let gain = solve(&sw.rt, &(wf.bt1.transpose() * rs.pi1_at(t)), "Rt")?;
    let manifold = &wf.basis_x1 + &wf.basis_x0 * &wf.bt0 * gain;
    let on_closed_loop = if manifold.ncols() == 0 {
        0.0
    } else {
        norm2(&(&res * &manifold)) / (scale * norm2(&manifold))
    };

    let z2 = solve_z2(rs, wf, &sw.r, t)?;
    let completion = wf.sz1.transpose() * z2 * &wf.sz0;
    let (res2, scale2) = equation_residual(sys, w, &p_x1, &rs.pit0, &(z + completion), &dz)?;
    Ok(ProjectionFreeResidual {
        t,
        full,
        on_closed_loop,
        with_z2: norm2(&res2) / scale2,
        scale,
    })
}

/// Terminal condition check `|E^T Pit1(t_f) E - G| / max(|G|, 1)`.
pub fn terminal_residual(rs: &RiccatiSolution, sys: &DescriptorSystem, w: &QuadraticWeights) -> f64 {
    let last = rs.pit1.values.last().expect("non-empty grid");
    norm2(&(sys.e().transpose() * last * sys.e() - &w.g)) / norm2(&w.g).max(1.0)
}

/// General solution `Z(t) = Pit1(t) + S_Z1^T Z2(t) S_Z0 + S_Z0^T Z4(t) S_Z0`
/// at every node. `z2` / `z4` hold one matrix per node or a single
/// constant; an empty slice means zero.
pub fn perturb_general_solution(
    rs: &RiccatiSolution,
    wf: &WeierstrassForm,
    z2: &[Mat],
    z4: &[Mat],
) -> Result<Vec<Mat>> {
    let n = rs.grid().len();
    let (r, m) = (wf.rank_1(), wf.sz0.nrows());
    let pick = |v: &[Mat], k: usize, shape: (usize, usize), name: &str| -> Result<Option<Mat>> {
        let mat = match v.len() {
            0 => return Ok(None),
            1 => &v[0],
            l if l == n => &v[k],
            l => {
                return Err(Error::DimensionMismatch(format!(
                    "{name}: expected 1 or {n} matrices, got {l}"
                )))
            }
        };
        if mat.shape() != shape {
            return Err(Error::DimensionMismatch(format!(
                "{name} has shape {:?}, expected {shape:?}",
                mat.shape()
            )));
        }
        Ok(Some(mat.clone()))
    };
    (0..n)
        .map(|k| {
            let mut zt = rs.pit1.values[k].clone();
            if let Some(z2k) = pick(z2, k, (r, m), "Z2")? {
                zt += wf.sz1.transpose() * z2k * &wf.sz0;
            }
            if let Some(z4k) = pick(z4, k, (m, m), "Z4")? {
                zt += wf.sz0.transpose() * z4k * &wf.sz0;
            }
            Ok(zt)
        })
        .collect()
}
