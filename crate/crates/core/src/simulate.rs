//! Open- and closed-loop simulation in Weierstrass coordinates and cost
//! evaluation.
//!
//! The dynamic sub-state `c1` is integrated with BDF2; the algebraic
//! sub-state is eliminated exactly at every node as `c0 = -Bt0 u`.

use serde::{Deserialize, Serialize};

use crate::control::{ControlSignal, GainSchedule};
use crate::error::{Error, Result};
use crate::grid::{HermiteSeries, TimeGrid};
use crate::linalg::{condition, solve, Mat, Vector};
use crate::stiff::{integrate, Bdf2Options, OdeSystem};
use crate::weierstrass::{QuadraticWeights, WeierstrassForm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub bdf: Bdf2Options,
    pub tol_consist: f64,
    /// Largest admissible condition number of the closed-loop coupling.
    pub cond_max: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            bdf: Bdf2Options::default(),
            tol_consist: 1e-9,
            cond_max: 1e12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub x: Vec<Vector>,
    pub x1c: Vec<Vector>,
    pub x0c: Vec<Vector>,
    pub u: Vec<Vector>,
    /// `|(x_i)_0 + Bt0 u(0)|` for the supplied initial state. Non-zero only
    /// in closed loop, where `u(0)` is dictated by the feedback and the
    /// algebraic sub-state is re-initialised.
    pub initial_gap: f64,
    pub cost: Option<f64>,
}

impl Trajectory {
    pub fn with_cost(mut self, w: &QuadraticWeights) -> Self {
        self.cost = Some(evaluate_cost(&self, w));
        self
    }

    /// Largest `|c0 + Bt0 u| / (1 + |u|)` over the nodes.
    pub fn consistency_residual(&self, wf: &WeierstrassForm) -> f64 {
        self.x0c
            .iter()
            .zip(&self.u)
            .map(|(c0, u)| (c0 + &wf.bt0 * u).norm() / (1.0 + u.norm()))
            .fold(0.0, f64::max)
    }

    /// Largest `|x - X1 c1 - X0 c0|` over the nodes.
    pub fn reconstruction_residual(&self, wf: &WeierstrassForm) -> f64 {
        self.x
            .iter()
            .zip(self.x1c.iter().zip(&self.x0c))
            .map(|(x, (c1, c0))| (x - wf.lift(c1, c0)).norm())
            .fold(0.0, f64::max)
    }

    pub fn control(&self) -> Result<ControlSignal> {
        ControlSignal::from_values(self.grid.clone(), self.u.clone())
    }
}

pub(crate) struct OpenLoop<'a> {
    pub wf: &'a WeierstrassForm,
    pub u: &'a ControlSignal,
}

impl OdeSystem for OpenLoop<'_> {
    fn dim(&self) -> usize {
        self.wf.rank_1()
    }
    fn rhs(&self, t: f64, y: &Vector) -> Vector {
        &self.wf.at1 * y + &self.wf.bt1 * self.u.eval(t)
    }
    fn jacobian(&self, _t: f64, _y: &Vector) -> Mat {
        self.wf.at1.clone()
    }
    fn constant_jacobian(&self) -> bool {
        true
    }
}

fn assemble(
    wf: &WeierstrassForm,
    grid: &TimeGrid,
    x1c: Vec<Vector>,
    u: Vec<Vector>,
    initial_gap: f64,
) -> Trajectory {
    let x0c: Vec<Vector> = u.iter().map(|uk| -(&wf.bt0 * uk)).collect();
    let x = x1c.iter().zip(&x0c).map(|(c1, c0)| wf.lift(c1, c0)).collect();
    Trajectory {
        grid: grid.clone(),
        x,
        x1c,
        x0c,
        u,
        initial_gap,
        cost: None,
    }
}

/// Simulate under a prescribed input. `u(0)` must be consistent with the
/// algebraic part of `x_i`.
pub fn simulate_open_loop(
    wf: &WeierstrassForm,
    u: &ControlSignal,
    x_i: &Vector,
    grid: &TimeGrid,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if x_i.len() != wf.n_x() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, expected {}",
            x_i.len(),
            wf.n_x()
        )));
    }
    if u.n_u() != wf.n_u() {
        return Err(Error::DimensionMismatch(format!(
            "control has {} channels, expected {}",
            u.n_u(),
            wf.n_u()
        )));
    }
    let u0 = u.eval(grid.t0());
    let residual = (wf.x0_coords(x_i) + &wf.bt0 * &u0).norm();
    let tolerance = opts.tol_consist * (1.0 + x_i.norm());
    if residual > tolerance {
        return Err(Error::InconsistentInput { residual, tolerance });
    }
    let ode = OpenLoop { wf, u };
    let (x1c, _) = integrate(&ode, grid, &wf.x1_coords(x_i), &opts.bdf)?;
    let us = grid.nodes().iter().map(|&t| u.eval(t)).collect();
    Ok(assemble(wf, grid, x1c, us, 0.0))
}

struct ClosedLoop<'a> {
    wf: &'a WeierstrassForm,
    /// `K(t) X1`.
    k_x1: HermiteSeries<Mat>,
    /// `I - K(t) X0 Bt0`.
    coupling: HermiteSeries<Mat>,
}

impl ClosedLoop<'_> {
    /// `u = -(I - K X0 Bt0)^{-1} K X1 c1`, i.e. the feedback with the
    /// algebraic sub-state eliminated.
    fn gain(&self, t: f64) -> Result<Mat> {
        solve(&self.coupling.eval(t), &(-self.k_x1.eval(t)), "closed-loop coupling")
    }
}

impl OdeSystem for ClosedLoop<'_> {
    fn dim(&self) -> usize {
        self.wf.rank_1()
    }
    fn rhs(&self, t: f64, y: &Vector) -> Vector {
        let g = self.gain(t).unwrap_or_else(|_| Mat::from_element(self.wf.n_u(), y.len(), f64::NAN));
        (&self.wf.at1 + &self.wf.bt1 * g) * y
    }
    fn jacobian(&self, t: f64, _y: &Vector) -> Mat {
        let g = self
            .gain(t)
            .unwrap_or_else(|_| Mat::from_element(self.wf.n_u(), self.wf.rank_1(), f64::NAN));
        &self.wf.at1 + &self.wf.bt1 * g
    }
}

/// Simulate `u = -K(t) x` from `x_i`.
///
/// The feedback fixes `u(0)`; when `(x_i)_0 != -Bt0 u(0)` the algebraic
/// sub-state is re-initialised (recorded in [`Trajectory::initial_gap`]).
pub fn simulate_closed_loop(
    wf: &WeierstrassForm,
    gains: &GainSchedule,
    x_i: &Vector,
    grid: &TimeGrid,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if x_i.len() != wf.n_x() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, expected {}",
            x_i.len(),
            wf.n_x()
        )));
    }
    let g = &gains.series;
    let n_u = wf.n_u();
    let x0_bt0 = &wf.basis_x0 * &wf.bt0;
    let map = |ms: &[Mat], f: &dyn Fn(&Mat) -> Mat| ms.iter().map(f).collect::<Vec<_>>();
    let k_x1 = HermiteSeries::new(
        g.grid.clone(),
        map(&g.values, &|k| k * &wf.basis_x1),
        map(&g.slopes, &|k| k * &wf.basis_x1),
    )?;
    let coupling = HermiteSeries::new(
        g.grid.clone(),
        map(&g.values, &|k| Mat::identity(n_u, n_u) - k * &x0_bt0),
        map(&g.slopes, &|k| -(k * &x0_bt0)),
    )?;
    for c in &coupling.values {
        let cond = condition(c);
        if !(cond <= opts.cond_max) {
            return Err(Error::SingularClosedLoopCoupling { condition: cond });
        }
    }
    let ode = ClosedLoop { wf, k_x1, coupling };
    let c1_0 = wf.x1_coords(x_i);
    let (x1c, _) = integrate(&ode, grid, &c1_0, &opts.bdf)?;
    let us = grid
        .nodes()
        .iter()
        .zip(&x1c)
        .map(|(&t, c1)| Ok(ode.gain(t)? * c1))
        .collect::<Result<Vec<Vector>>>()?;
    let initial_gap = (wf.x0_coords(x_i) + &wf.bt0 * &us[0]).norm();
    Ok(assemble(wf, grid, x1c, us, initial_gap))
}

/// Quadrature weights on a (possibly non-uniform) grid: composite Simpson
/// on interval pairs, with the quadratic through the last three nodes for
/// a leftover interval.
pub fn simpson_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    if n == 2 {
        let h = nodes[1] - nodes[0];
        return vec![0.5 * h, 0.5 * h];
    }
    let intervals = n - 1;
    let paired = intervals - intervals % 2;
    let mut k = 0;
    while k < paired {
        let (h0, h1) = (nodes[k + 1] - nodes[k], nodes[k + 2] - nodes[k + 1]);
        let s = (h0 + h1) / 6.0;
        w[k] += s * (2.0 - h1 / h0);
        w[k + 1] += s * (h0 + h1) * (h0 + h1) / (h0 * h1);
        w[k + 2] += s * (2.0 - h0 / h1);
        k += 2;
    }
    if paired < intervals {
        let (h0, h1) = (nodes[n - 2] - nodes[n - 3], nodes[n - 1] - nodes[n - 2]);
        w[n - 3] += -h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
        w[n - 2] += h1 * (h1 + 3.0 * h0) / (6.0 * h0);
        w[n - 1] += h1 * (2.0 * h1 + 3.0 * h0) / (6.0 * (h0 + h1));
    }
    w
}

pub fn evaluate_cost(traj: &Trajectory, w: &QuadraticWeights) -> f64 {
    let weights = simpson_weights(traj.grid.nodes());
    let running: f64 = traj
        .x
        .iter()
        .zip(&traj.u)
        .zip(&weights)
        .map(|((x, u), wk)| wk * (x.dot(&(&w.q * x)) + u.dot(&(&w.r * u))))
        .sum();
    let xf = traj.x.last().expect("non-empty trajectory");
    (running + xf.dot(&(&w.g * xf))).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartDeviation {
    /// Node at which the closed loop was restarted.
    pub t_restart: f64,
    pub x1: f64,
    pub x0: f64,
}

impl RestartDeviation {
    pub fn max(&self) -> f64 {
        self.x1.max(self.x0)
    }
}

/// Restart the closed loop from `traj` at the grid node nearest `t0` and
/// measure the sup-norm deviation of both sub-states over the tail.
pub fn optimality_restart_deviation(
    traj: &Trajectory,
    t0: f64,
    wf: &WeierstrassForm,
    gains: &GainSchedule,
    opts: &SimOptions,
) -> Result<RestartDeviation> {
    let grid = &traj.grid;
    if !(t0 >= grid.t0() && t0 < grid.tf()) {
        return Err(Error::OutOfGrid {
            t: t0,
            t0: grid.t0(),
            tf: grid.tf(),
        });
    }
    let k = grid
        .nodes()
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t0).abs().total_cmp(&(b.1 - t0).abs()))
        .map(|(i, _)| i)
        .expect("non-empty grid")
        .min(grid.len() - 2);
    let tail = TimeGrid::new(grid.nodes()[k..].to_vec())?;
    let restarted = simulate_closed_loop(wf, gains, &traj.x[k], &tail, opts)?;
    let sup = |a: &[Vector], b: &[Vector]| {
        a.iter()
            .zip(b)
            .map(|(p, q)| (p - q).amax())
            .fold(0.0, f64::max)
    };
    Ok(RestartDeviation {
        t_restart: grid.nodes()[k],
        x1: sup(&restarted.x1c, &traj.x1c[k..]),
        x0: sup(&restarted.x0c, &traj.x0c[k..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_for_cubics_on_even_grids() {
        let nodes = [0.0, 0.1, 0.3, 0.4, 0.7];
        let w = simpson_weights(&nodes);
        let f = |t: f64| 3.0 * t * t - t + 1.0;
        let q: f64 = nodes.iter().zip(&w).map(|(t, wk)| wk * f(*t)).sum();
        let exact = 0.7f64.powi(3) - 0.5 * 0.49 + 0.7;
        assert!((q - exact).abs() < 1e-14);
    }

    #[test]
    fn odd_interval_count_is_exact_for_quadratics() {
        let nodes = [0.0, 0.5, 1.0, 1.5];
        let w = simpson_weights(&nodes);
        let q: f64 = nodes.iter().zip(&w).map(|(t, wk)| wk * t * t).sum();
        assert!((q - 1.125).abs() < 1e-14);
        let c: f64 = w.iter().sum();
        assert!((c - 1.5).abs() < 1e-14);
    }
}
