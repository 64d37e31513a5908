//! Time grids and piecewise-cubic Hermite dense output.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing time samples covering `[t0, t_f]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidGrid("need at least two nodes".into()));
        }
        if nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite node".into()));
        }
        if let Some(w) = nodes.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "nodes not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { nodes })
    }

    /// `n_nodes` equally spaced samples, endpoints included exactly.
    pub fn uniform(t0: f64, tf: f64, n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 || !(tf > t0) {
            return Err(Error::InvalidGrid(format!(
                "uniform grid needs t_f > t0 and >= 2 nodes (got [{t0}, {tf}], {n_nodes})"
            )));
        }
        let h = (tf - t0) / (n_nodes - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_nodes).map(|k| t0 + h * k as f64).collect();
        nodes[n_nodes - 1] = tf;
        Self::new(nodes)
    }

    pub fn t0(&self) -> f64 {
        self.nodes[0]
    }

    pub fn tf(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn spacing(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    /// Index `k` of the interval `[t_k, t_{k+1}]` containing `t` (clamped).
    pub fn interval(&self, t: f64) -> usize {
        let n = self.nodes.len();
        let k = self.nodes.partition_point(|&x| x <= t);
        k.saturating_sub(1).min(n - 2)
    }

    pub fn contains_interior(&self, t: f64) -> bool {
        t > self.t0() && t < self.tf()
    }

    /// Index of the node equal to `t` within `tol`, if any.
    pub fn node_index(&self, t: f64, tol: f64) -> Option<usize> {
        self.nodes.iter().position(|&x| (x - t).abs() <= tol)
    }

    /// The tail of the grid starting at `t`, with `t` inserted as first node
    /// when it is not already a node.
    pub fn tail_from(&self, t: f64) -> Result<TimeGrid> {
        if !(t >= self.t0() && t < self.tf()) {
            return Err(Error::OutOfGrid {
                t,
                t0: self.t0(),
                tf: self.tf(),
            });
        }
        let scale = (self.tf() - self.t0()).abs().max(1.0);
        let mut nodes = vec![t];
        nodes.extend(self.nodes.iter().cloned().filter(|&x| x > t + 1e-12 * scale));
        TimeGrid::new(nodes)
    }
}

fn basis(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    ]
}

fn basis_derivative(s: f64, h: f64) -> [f64; 4] {
    let s2 = s * s;
    [
        (6.0 * s2 - 6.0 * s) / h,
        3.0 * s2 - 4.0 * s + 1.0,
        (-6.0 * s2 + 6.0 * s) / h,
        3.0 * s2 - 2.0 * s,
    ]
}

/// Node values plus slopes, evaluated by piecewise-cubic Hermite
/// interpolation. `T` is a vector or matrix type.
#[derive(Debug, Clone)]
pub struct HermiteSeries<T> {
    pub grid: TimeGrid,
    pub values: Vec<T>,
    pub slopes: Vec<T>,
}

impl<T> HermiteSeries<T>
where
    T: Clone + Add<T, Output = T>,
    for<'a> &'a T: Mul<f64, Output = T>,
{
    pub fn new(grid: TimeGrid, values: Vec<T>, slopes: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() || slopes.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} nodes but {} values / {} slopes",
                grid.len(),
                values.len(),
                slopes.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            slopes,
        })
    }

    /// Build with slopes from second-order finite differences.
    pub fn from_values(grid: TimeGrid, values: Vec<T>) -> Result<Self>
    where
        T: std::ops::Sub<T, Output = T>,
    {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} nodes but {} values",
                grid.len(),
                values.len()
            )));
        }
        let slopes = finite_difference_slopes(grid.nodes(), &values);
        Self::new(grid, values, slopes)
    }

    pub fn eval(&self, t: f64) -> T {
        let k = self.grid.interval(t);
        let (t0, t1) = (self.grid.nodes()[k], self.grid.nodes()[k + 1]);
        let h = t1 - t0;
        let b = basis((t - t0) / h);
        &self.values[k] * b[0]
            + &self.slopes[k] * (b[1] * h)
            + &self.values[k + 1] * b[2]
            + &self.slopes[k + 1] * (b[3] * h)
    }

    pub fn derivative(&self, t: f64) -> T {
        let k = self.grid.interval(t);
        let (t0, t1) = (self.grid.nodes()[k], self.grid.nodes()[k + 1]);
        let h = t1 - t0;
        let b = basis_derivative((t - t0) / h, h);
        &self.values[k] * b[0]
            + &self.slopes[k] * b[1]
            + &self.values[k + 1] * b[2]
            + &self.slopes[k + 1] * b[3]
    }
}

/// Slopes of the quadratic through each node and its neighbours.
fn finite_difference_slopes<T>(t: &[f64], y: &[T]) -> Vec<T>
where
    T: Clone + Add<T, Output = T>,
    for<'a> &'a T: Mul<f64, Output = T>,
{
    let n = t.len();
    if n == 2 {
        let h = t[1] - t[0];
        let m = &y[1] * (1.0 / h) + &y[0] * (-1.0 / h);
        return vec![m.clone(), m];
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let m = if i == 0 {
            let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
            &y[0] * (-(2.0 * h1 + h2) / (h1 * (h1 + h2)))
                + &y[1] * ((h1 + h2) / (h1 * h2))
                + &y[2] * (-h1 / (h2 * (h1 + h2)))
        } else if i == n - 1 {
            let (ha, hb) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
            &y[n - 3] * (hb / (ha * (ha + hb)))
                + &y[n - 2] * (-(ha + hb) / (ha * hb))
                + &y[n - 1] * ((2.0 * hb + ha) / (hb * (ha + hb)))
        } else {
            let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
            let d = h0 * h1 * (h0 + h1);
            &y[i + 1] * (h0 * h0 / d) + &y[i - 1] * (-h1 * h1 / d) + &y[i] * ((h1 * h1 - h0 * h0) / d)
        };
        out.push(m);
    }
    out
}
