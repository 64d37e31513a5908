//! Variable-step BDF2 with Newton iterations for stiff ODEs `y' = f(t, y)`.
//!
//! The first step is implicit Euler. Steps always land on the nodes of
//! the output grid. In [`StepControl::Fixed`] mode every grid interval is
//! split into the same number of substeps, so the discrete solution is an
//! affine function of the data for linear problems.

use nalgebra::LU;
use nalgebra::Dyn;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{Mat, Vector};

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &Vector) -> Vector;
    fn jacobian(&self, t: f64, y: &Vector) -> Mat;
    /// When true the Jacobian is evaluated once and reused for every step.
    fn constant_jacobian(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepControl {
    Adaptive,
    /// Uniform substeps per output interval.
    Fixed { substeps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bdf2Options {
    pub rtol: f64,
    pub atol: f64,
    pub control: StepControl,
    /// Newton stops once the weighted update norm drops below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_steps: usize,
}

impl Default for Bdf2Options {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            control: StepControl::Adaptive,
            newton_tol: 1e-6,
            max_newton: 8,
            max_steps: 2_000_000,
        }
    }
}

impl Bdf2Options {
    pub fn fixed(substeps: usize) -> Self {
        Self {
            control: StepControl::Fixed { substeps },
            ..Self::default()
        }
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Bdf2Stats {
    pub steps: usize,
    pub rejected: usize,
    pub factorizations: usize,
    pub jacobians: usize,
}

struct Newton<'a, S: OdeSystem> {
    sys: &'a S,
    opts: &'a Bdf2Options,
    jac: Option<Mat>,
    jac_fresh: bool,
    lu: Option<(f64, LU<f64, Dyn, Dyn>)>,
    stats: Bdf2Stats,
}

impl<'a, S: OdeSystem> Newton<'a, S> {
    fn weighted_norm(&self, v: &Vector, scale: &Vector) -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        let s: f64 = v
            .iter()
            .zip(scale.iter())
            .map(|(x, w)| {
                let r = x / (self.opts.atol + self.opts.rtol * w);
                r * r
            })
            .sum();
        (s / v.len() as f64).sqrt()
    }

    fn refresh_jacobian(&mut self, t: f64, y: &Vector) {
        self.jac = Some(self.sys.jacobian(t, y));
        self.jac_fresh = true;
        self.lu = None;
        self.stats.jacobians += 1;
    }

    /// Solve `y - gh f(t, y) = psi` starting from `guess`.
    fn solve(&mut self, t: f64, gh: f64, psi: &Vector, guess: Vector) -> Option<Vector> {
        let n = guess.len();
        if n == 0 {
            return Some(guess);
        }
        if self.jac.is_none() {
            self.refresh_jacobian(t, &guess);
        }
        let mut retried = false;
        loop {
            let stale = match &self.lu {
                Some((g, _)) => (g - gh).abs() > 1e-12 * gh.abs(),
                None => true,
            };
            if stale {
                let m = Mat::identity(n, n) - self.jac.as_ref().expect("jacobian set") * gh;
                self.lu = Some((gh, m.lu()));
                self.stats.factorizations += 1;
            }
            let mut y = guess.clone();
            let mut prev = f64::INFINITY;
            let mut ok = false;
            for _ in 0..self.opts.max_newton {
                let g = &y - self.sys.rhs(t, &y) * gh - psi;
                let delta = match self.lu.as_ref().expect("factorized").1.solve(&(-g)) {
                    Some(d) if d.iter().all(|v| v.is_finite()) => d,
                    _ => break,
                };
                y += &delta;
                let scale = y.abs();
                let dn = self.weighted_norm(&delta, &scale);
                let at_roundoff = delta.amax() <= 16.0 * f64::EPSILON * y.amax();
                if dn <= self.opts.newton_tol || at_roundoff {
                    ok = true;
                    break;
                }
                if dn > 0.9 * prev {
                    break;
                }
                prev = dn;
            }
            if ok {
                if !self.sys.constant_jacobian() {
                    self.jac_fresh = false;
                }
                return Some(y);
            }
            if retried || self.jac_fresh {
                return None;
            }
            self.refresh_jacobian(t, &guess);
            retried = true;
        }
    }
}

/// Integrate from `y0` at `grid.t0()` and return the solution at every
/// grid node.
pub fn integrate<S: OdeSystem>(
    sys: &S,
    grid: &TimeGrid,
    y0: &Vector,
    opts: &Bdf2Options,
) -> Result<(Vec<Vector>, Bdf2Stats)> {
    if y0.len() != sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial value has length {}, system dimension is {}",
            y0.len(),
            sys.dim()
        )));
    }
    let mut newton = Newton {
        sys,
        opts,
        jac: None,
        jac_fresh: false,
        lu: None,
        stats: Bdf2Stats::default(),
    };
    let nodes = grid.nodes();
    let mut out = Vec::with_capacity(nodes.len());
    out.push(y0.clone());

    let mut t = nodes[0];
    let mut y = y0.clone();
    let mut f = sys.rhs(t, &y);
    // (t_{n-1}, y_{n-1}) once a step has been taken.
    let mut prev: Option<(f64, Vector)> = None;
    let span = grid.tf() - grid.t0();
    let mut h = match opts.control {
        StepControl::Fixed { substeps } => grid.spacing(0) / substeps.max(1) as f64,
        StepControl::Adaptive => (1e-4 * span).min(grid.spacing(0)),
    };

    for (k, &target) in nodes.iter().enumerate().skip(1) {
        if let StepControl::Fixed { substeps } = opts.control {
            h = (target - nodes[k - 1]) / substeps.max(1) as f64;
        }
        let mut sub = 0usize;
        while t < target {
            if newton.stats.steps >= opts.max_steps {
                return Err(Error::IntegrationFailure(format!(
                    "step budget of {} exhausted at t = {t}",
                    opts.max_steps
                )));
            }
            let remaining = target - t;
            let last = match opts.control {
                StepControl::Fixed { substeps } => {
                    sub += 1;
                    sub >= substeps.max(1)
                }
                StepControl::Adaptive => {
                    if h >= remaining * (1.0 - 1e-10) {
                        true
                    } else {
                        if 2.0 * h > remaining {
                            h = 0.5 * remaining;
                        }
                        false
                    }
                }
            };
            let step = if last { remaining } else { h };
            if step <= 1e-14 * span.max(t.abs()) {
                return Err(Error::IntegrationFailure(format!("step size underflow at t = {t}")));
            }
            let t_new = t + step;

            let (y_new, err) = match &prev {
                None => {
                    let guess = &y + &f * step;
                    match newton.solve(t_new, step, &y, guess.clone()) {
                        Some(yn) => {
                            let e = (&yn - &guess) * 0.5;
                            (Some(yn), e)
                        }
                        None => (None, Vector::zeros(0)),
                    }
                }
                Some((t_old, y_old)) => {
                    let h_old = t - t_old;
                    let w = step / h_old;
                    let a = (1.0 + w) * (1.0 + w) / (1.0 + 2.0 * w);
                    let b = w * w / (1.0 + 2.0 * w);
                    let gamma = (1.0 + w) / (1.0 + 2.0 * w);
                    let psi = &y * a - y_old * b;
                    let c = (y_old - &y + &f * h_old) / (h_old * h_old);
                    let pred = &y + &f * step + c * (step * step);
                    match newton.solve(t_new, gamma * step, &psi, pred.clone()) {
                        Some(yn) => {
                            let e = (&yn - &pred) * ((1.0 + w) / (2.0 + 3.0 * w));
                            (Some(yn), e)
                        }
                        None => (None, Vector::zeros(0)),
                    }
                }
            };

            let Some(y_new) = y_new else {
                match opts.control {
                    StepControl::Fixed { .. } => return Err(Error::NewtonFailure { t: t_new }),
                    StepControl::Adaptive => {
                        newton.stats.rejected += 1;
                        h = 0.25 * step;
                        continue;
                    }
                }
            };
            if !y_new.iter().all(|v| v.is_finite()) {
                return Err(Error::IntegrationFailure(format!("non-finite state at t = {t_new}")));
            }

            if opts.control == StepControl::Adaptive {
                let scale = y.abs().sup(&y_new.abs());
                let en = newton.weighted_norm(&err, &scale);
                let factor = if en == 0.0 {
                    2.0
                } else {
                    (0.9 * en.powf(-1.0 / 3.0)).clamp(0.2, 2.0)
                };
                if en > 1.0 {
                    newton.stats.rejected += 1;
                    h = step * factor.min(0.9);
                    continue;
                }
                let base = if last { h.max(step) } else { step };
                h = (base * factor).min(2.0 * step);
            }

            newton.stats.steps += 1;
            prev = Some((t, std::mem::replace(&mut y, y_new)));
            t = if last { target } else { t_new };
            f = sys.rhs(t, &y);
        }
        out.push(y.clone());
    }
    Ok((out, newton.stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        a: Mat,
        forcing: fn(f64) -> Vector,
    }

    impl OdeSystem for Linear {
        fn dim(&self) -> usize {
            self.a.nrows()
        }
        fn rhs(&self, t: f64, y: &Vector) -> Vector {
            &self.a * y + (self.forcing)(t)
        }
        fn jacobian(&self, _t: f64, _y: &Vector) -> Mat {
            self.a.clone()
        }
        fn constant_jacobian(&self) -> bool {
            true
        }
    }

    fn zero(_: f64) -> Vector {
        Vector::zeros(2)
    }

    #[test]
    fn stiff_decay_adaptive() {
        let sys = Linear {
            a: Mat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0e4]),
            forcing: zero,
        };
        let grid = TimeGrid::uniform(0.0, 2.0, 21).unwrap();
        let y0 = Vector::from_vec(vec![1.0, 1.0]);
        let (ys, stats) = integrate(&sys, &grid, &y0, &Bdf2Options::default()).unwrap();
        for (t, y) in grid.nodes().iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-6, "t={t} y={}", y[0]);
            assert!(y[1].abs() < 1e-7 || *t == 0.0);
        }
        assert!(stats.steps < 20_000, "{stats:?}");
    }

    #[test]
    fn fixed_mode_converges_second_order() {
        fn forcing(t: f64) -> Vector {
            Vector::from_vec(vec![t.sin(), 0.0])
        }
        let sys = Linear {
            a: Mat::from_row_slice(2, 2, &[-2.0, 1.0, 0.0, -0.5]),
            forcing,
        };
        let y0 = Vector::from_vec(vec![0.3, 1.0]);
        let grid = TimeGrid::uniform(0.0, 1.0, 11).unwrap();
        let reference = integrate(&sys, &grid, &y0, &Bdf2Options::default().with_tolerances(1e-12, 1e-14))
            .unwrap()
            .0;
        let err = |m: usize| {
            let ys = integrate(&sys, &grid, &y0, &Bdf2Options::fixed(m)).unwrap().0;
            (&ys[10] - &reference[10]).norm()
        };
        let ratio = err(20) / err(40);
        assert!(ratio > 3.3 && ratio < 4.7, "ratio {ratio}");
    }

    #[test]
    fn dimension_checked() {
        let sys = Linear {
            a: Mat::identity(2, 2),
            forcing: zero,
        };
        let grid = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
        assert!(integrate(&sys, &grid, &Vector::zeros(3), &Bdf2Options::default()).is_err());
    }
}
