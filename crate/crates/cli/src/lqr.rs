//! Classic LQR comparison for problems with `E = I`.

use nalgebra::DMatrix;
use pdae_lq::pipeline::Pipeline;
use serde::Serialize;

/// Agreement between the pipeline and the standard Riccati equation
/// `-P' = A^T P + P A - P B R^{-1} B^T P + Q`, `P(t_f) = G`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LqrAgreement {
    /// Largest `|K_pipe - R^{-1} B^T P| / max_t |R^{-1} B^T P|` over the nodes.
    pub gain_rel_error: f64,
    /// `|J_min - x_i^T P(0) x_i| / x_i^T P(0) x_i`.
    pub cost_rel_error: f64,
    pub substeps: usize,
}

/// `None` unless `E` is the identity.
pub fn compare(pl: &Pipeline, substeps: usize) -> Option<LqrAgreement> {
    let n = pl.system.n_x();
    if pl.system.e() != &DMatrix::identity(n, n) {
        return None;
    }
    let (a, b) = (pl.system.a(), pl.system.b());
    let w = &pl.weights;
    let rinv = w.r.clone().try_inverse()?;
    let s = b * &rinv * b.transpose();
    let rhs = |p: &DMatrix<f64>| a.transpose() * p + p * a - p * &s * p + &w.q;

    // Backward RK4 in reversed time, stored at the pipeline nodes.
    let nodes = pl.grid.nodes();
    let mut p = w.g.clone();
    let mut values = vec![DMatrix::zeros(n, n); nodes.len()];
    values[nodes.len() - 1] = p.clone();
    for k in (0..nodes.len() - 1).rev() {
        let h = (nodes[k + 1] - nodes[k]) / substeps as f64;
        for _ in 0..substeps {
            let k1 = rhs(&p);
            let k2 = rhs(&(&p + &k1 * (0.5 * h)));
            let k3 = rhs(&(&p + &k2 * (0.5 * h)));
            let k4 = rhs(&(&p + &k3 * h));
            p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        values[k] = p.clone();
    }

    let gains: Vec<DMatrix<f64>> = values.iter().map(|p| &rinv * b.transpose() * p).collect();
    let scale = gains.iter().map(|g| g.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let gain_rel_error = gains
        .iter()
        .zip(&pl.gains.series.values)
        .map(|(g, k)| (k - g).norm() / scale)
        .fold(0.0, f64::max);
    let j_ref = pl.x_i.dot(&(&values[0] * &pl.x_i));
    let cost_rel_error = (pl.minimum_cost() - j_ref).abs() / j_ref.abs().max(f64::MIN_POSITIVE);
    Some(LqrAgreement {
        gain_rel_error,
        cost_rel_error,
        substeps,
    })
}
