//! Feedback synthesis, admissibility, the variational gradient `z_u` and
//! the fixed-point characterisation of the optimal control.

use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorSystem;
use crate::error::{Error, Result};
use crate::grid::{HermiteSeries, TimeGrid};
use crate::linalg::{solve, sup_norm, Mat, Vector};
use crate::parallel::{map_indexed, Execution};
use crate::riccati::RiccatiSolution;
use crate::simulate::{evaluate_cost, simpson_weights, simulate_open_loop, OpenLoop, SimOptions, Trajectory};
use crate::stiff::{integrate, OdeSystem};
use crate::weierstrass::{QuadraticWeights, SplitWeights, WeierstrassForm};

/// `K(t) = R^{-1} B^T (Pit0 + Pit1(t) E)`, so that `u = -K(t) x`.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    pub series: HermiteSeries<Mat>,
}

impl GainSchedule {
    pub fn grid(&self) -> &TimeGrid {
        &self.series.grid
    }

    pub fn at(&self, t: f64) -> Mat {
        self.series.eval(t)
    }
}

pub fn feedback_gain(
    rs: &RiccatiSolution,
    sys: &DescriptorSystem,
    w: &QuadraticWeights,
    exec: Execution,
) -> Result<GainSchedule> {
    let rinv_bt = solve(&w.r, &sys.b().transpose(), "R")?;
    let constant = &rinv_bt * &rs.pit0;
    let e = sys.e();
    let n = rs.grid().len();
    let values = map_indexed(exec, n, |k| &constant + &rinv_bt * &rs.pit1.values[k] * e);
    let slopes = map_indexed(exec, n, |k| &rinv_bt * &rs.pit1.slopes[k] * e);
    Ok(GainSchedule {
        series: HermiteSeries::new(rs.grid().clone(), values, slopes)?,
    })
}

/// Gains at the nodes from any per-node solution `Z` of the projection-free
/// equation; slopes are finite differences.
pub fn feedback_gain_from(
    z: &[Mat],
    grid: &TimeGrid,
    pit0: &Mat,
    sys: &DescriptorSystem,
    w: &QuadraticWeights,
) -> Result<GainSchedule> {
    let rinv_bt = solve(&w.r, &sys.b().transpose(), "R")?;
    let values: Vec<Mat> = z.iter().map(|zk| &rinv_bt * (pit0 + zk * sys.e())).collect();
    Ok(GainSchedule {
        series: HermiteSeries::from_values(grid.clone(), values)?,
    })
}

#[derive(Debug, Clone)]
pub struct ControlSignal {
    pub series: HermiteSeries<Vector>,
}

impl ControlSignal {
    pub fn new(grid: TimeGrid, values: Vec<Vector>, slopes: Vec<Vector>) -> Result<Self> {
        Self::check(&values)?;
        Ok(Self {
            series: HermiteSeries::new(grid, values, slopes)?,
        })
    }

    pub fn from_values(grid: TimeGrid, values: Vec<Vector>) -> Result<Self> {
        Self::check(&values)?;
        Ok(Self {
            series: HermiteSeries::from_values(grid, values)?,
        })
    }

    pub fn zeros(grid: TimeGrid, n_u: usize) -> Self {
        let n = grid.len();
        Self {
            series: HermiteSeries::new(grid, vec![Vector::zeros(n_u); n], vec![Vector::zeros(n_u); n])
                .expect("matching lengths"),
        }
    }

    fn check(values: &[Vector]) -> Result<()> {
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidParameter("control has non-finite values".into()));
        }
        if let Some(first) = values.first() {
            if values.iter().any(|v| v.len() != first.len()) {
                return Err(Error::DimensionMismatch("control channels differ between nodes".into()));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.series.grid
    }

    pub fn values(&self) -> &[Vector] {
        &self.series.values
    }

    pub fn n_u(&self) -> usize {
        self.series.values[0].len()
    }

    pub fn eval(&self, t: f64) -> Vector {
        self.series.eval(t)
    }

    /// Largest absolute node value.
    pub fn sup_norm(&self) -> f64 {
        self.series.values.iter().map(sup_norm).fold(0.0, f64::max)
    }

    /// Node-wise sup-norm distance; the grids must agree.
    pub fn sup_distance(&self, other: &ControlSignal) -> Result<f64> {
        same_grid(self.grid(), other.grid())?;
        Ok(self
            .series
            .values
            .iter()
            .zip(&other.series.values)
            .map(|(a, b)| sup_norm(&(a - b)))
            .fold(0.0, f64::max))
    }

    pub fn add(&self, other: &ControlSignal) -> Result<ControlSignal> {
        same_grid(self.grid(), other.grid())?;
        let s = &self.series;
        let o = &other.series;
        ControlSignal::new(
            s.grid.clone(),
            s.values.iter().zip(&o.values).map(|(a, b)| a + b).collect(),
            s.slopes.iter().zip(&o.slopes).map(|(a, b)| a + b).collect(),
        )
    }
}

fn same_grid(a: &TimeGrid, b: &TimeGrid) -> Result<()> {
    let scale = (a.tf() - a.t0()).abs().max(1.0);
    if a.len() != b.len()
        || a
            .nodes()
            .iter()
            .zip(b.nodes())
            .any(|(x, y)| (x - y).abs() > 1e-12 * scale)
    {
        return Err(Error::GridMismatch(format!(
            "grids with {} and {} nodes on [{}, {}] / [{}, {}]",
            a.len(),
            b.len(),
            a.t0(),
            a.tf(),
            b.t0(),
            b.tf()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// `|(x_i)_0 + Bt0 u(0)|` in `X0` coordinates.
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub fn check_admissible(
    u0: &Vector,
    x_i: &Vector,
    wf: &WeierstrassForm,
    tol_consist: f64,
) -> ConsistencyReport {
    let residual = (wf.x0_coords(x_i) + &wf.bt0 * u0).norm();
    let threshold = tol_consist * (1.0 + x_i.norm());
    ConsistencyReport {
        residual,
        threshold,
        pass: residual <= threshold,
    }
}

/// Backward adjoint `lambda' = -At1^T lambda - Q1 x1(t)`,
/// `lambda(t_f) = G1 x1(t_f)`, written in reversed time.
struct Adjoint<'a> {
    at1_t: Mat,
    q1: &'a Mat,
    x1: &'a HermiteSeries<Vector>,
    tf: f64,
}

impl OdeSystem for Adjoint<'_> {
    fn dim(&self) -> usize {
        self.at1_t.nrows()
    }
    fn rhs(&self, tau: f64, y: &Vector) -> Vector {
        &self.at1_t * y + self.q1 * self.x1.eval(self.tf - tau)
    }
    fn jacobian(&self, _t: f64, _y: &Vector) -> Mat {
        self.at1_t.clone()
    }
    fn constant_jacobian(&self) -> bool {
        true
    }
}

fn reversed(grid: &TimeGrid) -> Result<TimeGrid> {
    let tf = grid.tf();
    let mut nodes: Vec<f64> = grid.nodes().iter().rev().map(|t| tf - t).collect();
    nodes[0] = 0.0;
    TimeGrid::new(nodes)
}

/// Adjoint state at the grid nodes for the dynamic trajectory `x1c`
/// driven by `u`.
fn adjoint(
    x1c: &[Vector],
    u: &ControlSignal,
    grid: &TimeGrid,
    wf: &WeierstrassForm,
    sw: &SplitWeights,
    opts: &SimOptions,
) -> Result<Vec<Vector>> {
    let slopes = grid
        .nodes()
        .iter()
        .zip(x1c)
        .map(|(&t, c1)| &wf.at1 * c1 + &wf.bt1 * u.eval(t))
        .collect();
    let x1 = HermiteSeries::new(grid.clone(), x1c.to_vec(), slopes)?;
    let ode = Adjoint {
        at1_t: wf.at1.transpose(),
        q1: &sw.q1,
        x1: &x1,
        tf: grid.tf(),
    };
    let lam_f = &sw.g1 * x1c.last().expect("non-empty");
    let (mut lam, _) = integrate(&ode, &reversed(grid)?, &lam_f, &opts.bdf)?;
    lam.reverse();
    Ok(lam)
}

/// `z_u(t) = 2 [Bt1^T lambda(t) - Bt0^T Q0 x0(t) + R u(t)]`.
pub fn variation_gradient(
    u: &ControlSignal,
    traj: &Trajectory,
    wf: &WeierstrassForm,
    sw: &SplitWeights,
    opts: &SimOptions,
) -> Result<ControlSignal> {
    same_grid(u.grid(), &traj.grid)?;
    let lam = adjoint(&traj.x1c, u, &traj.grid, wf, sw, opts)?;
    let z = lam
        .iter()
        .zip(&traj.x0c)
        .zip(u.values())
        .map(|((l, c0), uk)| (wf.bt1.transpose() * l - wf.bt0.transpose() * (&sw.q0 * c0) + &sw.r * uk) * 2.0)
        .collect();
    ControlSignal::from_values(traj.grid.clone(), z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationIdentity {
    /// `J(u + h) - J(u)` from two simulations.
    pub lhs: f64,
    /// `int <z_u, h> + <phi h(t_f), G phi h(t_f)> + int <phi h, Q phi h> + <h, R h>`.
    pub rhs: f64,
    pub gap: f64,
}

/// Compare the exact cost difference against the variation formula.
pub fn variation_identity_check(
    u: &ControlSignal,
    h: &ControlSignal,
    x_i: &Vector,
    wf: &WeierstrassForm,
    sw: &SplitWeights,
    w: &QuadraticWeights,
    opts: &SimOptions,
) -> Result<VariationIdentity> {
    same_grid(u.grid(), h.grid())?;
    let h0 = h.eval(h.grid().t0());
    let residual = (&wf.bt0 * &h0).norm();
    if residual > opts.tol_consist * (1.0 + h0.norm()) {
        return Err(Error::InadmissibleVariation { residual });
    }
    let grid = u.grid();
    let base = simulate_open_loop(wf, u, x_i, grid, opts)?;
    let perturbed = simulate_open_loop(wf, &u.add(h)?, x_i, grid, opts)?;
    let lhs = evaluate_cost(&perturbed, w) - evaluate_cost(&base, w);

    let z = variation_gradient(u, &base, wf, sw, opts)?;
    let phi = simulate_open_loop(wf, h, &Vector::zeros(wf.n_x()), grid, opts)?;
    let weights = simpson_weights(grid.nodes());
    let linear: f64 = z
        .values()
        .iter()
        .zip(h.values())
        .zip(&weights)
        .map(|((zk, hk), wk)| wk * zk.dot(hk))
        .sum();
    let quadratic = evaluate_cost(&phi, w);
    let rhs = linear + quadratic;
    Ok(VariationIdentity {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PicardMode {
    /// `u <- F(u)`.
    Plain,
    /// Anderson mixing over the full iteration history.
    Anderson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub max_iter: usize,
    pub tol_fp: f64,
    pub mode: PicardMode,
    pub sim: SimOptions,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_fp: 1e-8,
            mode: PicardMode::Anderson,
            // Fixed steps keep F affine in u; adaptive step selection makes it
            // non-smooth at the level of the local error.
            sim: SimOptions {
                bdf: crate::stiff::Bdf2Options::fixed(8),
                ..SimOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct PicardResult {
    pub control: ControlSignal,
    pub iterations: usize,
    /// `|F(u) - u|_inf` at the returned iterate.
    pub last_step: f64,
}

/// `(F u)(t) = -Rt^{-1} Bt1^T lambda(t; u)` at the grid nodes.
pub fn fixed_point_map(
    u: &ControlSignal,
    x_i: &Vector,
    wf: &WeierstrassForm,
    sw: &SplitWeights,
    opts: &SimOptions,
) -> Result<ControlSignal> {
    let grid = u.grid();
    let ode = OpenLoop { wf, u };
    let (x1c, _) = integrate(&ode, grid, &wf.x1_coords(x_i), &opts.bdf)?;
    let lam = adjoint(&x1c, u, grid, wf, sw, opts)?;
    let gain = solve(&sw.rt, &wf.bt1.transpose(), "Rt")?;
    let values = lam.iter().map(|l| -(&gain * l)).collect();
    ControlSignal::from_values(grid.clone(), values)
}

fn flatten(u: &ControlSignal) -> Vector {
    let n_u = u.n_u();
    let vals = u.values();
    Vector::from_iterator(vals.len() * n_u, vals.iter().flat_map(|v| v.iter().cloned()))
}

fn unflatten(v: &Vector, grid: &TimeGrid, n_u: usize) -> Result<ControlSignal> {
    let values = (0..grid.len())
        .map(|k| v.rows(k * n_u, n_u).into_owned())
        .collect();
    ControlSignal::from_values(grid.clone(), values)
}

/// Fixed point of `F` on `grid`, which is the optimal control.
///
/// Requires that some admissible control exists, i.e. `(x_i)_0` lies in
/// the range of `Bt0`.
pub fn picard_solve(
    wf: &WeierstrassForm,
    sw: &SplitWeights,
    x_i: &Vector,
    grid: &TimeGrid,
    opts: &PicardOptions,
) -> Result<PicardResult> {
    let c0 = wf.x0_coords(x_i);
    if !c0.is_empty() {
        let ls = crate::linalg::svd(&wf.bt0);
        let u0 = ls.solve(&(-&c0), 1e-12 * ls.s.first().cloned().unwrap_or(0.0).max(f64::MIN_POSITIVE));
        let residual = (&c0 + &wf.bt0 * u0).norm();
        if residual > opts.sim.tol_consist * (1.0 + x_i.norm()) {
            return Err(Error::InconsistentInitialData { residual });
        }
    }

    let n_u = wf.n_u();
    let mut u = ControlSignal::zeros(grid.clone(), n_u);
    let mut history_f: Vec<Vector> = Vec::new();
    let mut history_g: Vec<Vector> = Vec::new();
    let mut last_step = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let fu = fixed_point_map(&u, x_i, wf, sw, &opts.sim)?;
        let g = flatten(&fu);
        let x = flatten(&u);
        let f = &g - &x;
        last_step = sup_norm(&f);
        let scale = sup_norm(&g).max(1.0);
        if last_step <= opts.tol_fp * scale {
            return Ok(PicardResult {
                control: fu,
                iterations: it,
                last_step,
            });
        }
        let next = match opts.mode {
            PicardMode::Plain => g,
            PicardMode::Anderson => {
                history_f.push(f.clone());
                history_g.push(g.clone());
                let m = history_f.len() - 1;
                if m == 0 {
                    g
                } else {
                    let mut df = Mat::zeros(f.len(), m);
                    let mut dg = Mat::zeros(f.len(), m);
                    for j in 0..m {
                        df.set_column(j, &(&history_f[j + 1] - &history_f[j]));
                        dg.set_column(j, &(&history_g[j + 1] - &history_g[j]));
                    }
                    let ls = crate::linalg::svd(&df);
                    let gamma = ls.solve(&f, 1e-13 * ls.s[0]);
                    &g - dg * gamma
                }
            }
        };
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NoConvergence {
                iterations: it,
                last_step,
            });
        }
        u = unflatten(&next, grid, n_u)?;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        last_step,
    })
}

/// `<E x_i, Pit1(0) E x_i>`.
pub fn minimum_cost(rs: &RiccatiSolution, sys: &DescriptorSystem, x_i: &Vector) -> f64 {
    rs.cost_to_go(sys, rs.grid().t0(), x_i).max(0.0)
}
