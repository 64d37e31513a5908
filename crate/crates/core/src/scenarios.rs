//! Built-in problem instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::descriptor::DescriptorSystem;
use crate::error::Result;
use crate::fem::{assemble, ParabolicEllipticParams};
use crate::linalg::{norm2, Mat, Vector};
use crate::weierstrass::QuadraticWeights;

#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub system: DescriptorSystem,
    pub weights: QuadraticWeights,
    pub x_i: Vector,
    /// Present for the finite-element problem.
    pub fem: Option<ParabolicEllipticParams>,
}

pub const NAMES: [&str; 4] = ["paper-example", "scalar", "scalar-dynamic-weight", "lqr-reduction"];

pub fn by_name(name: &str) -> Option<Result<Problem>> {
    match name {
        "paper-example" => Some(parabolic_elliptic(&ParabolicEllipticParams::default())),
        "scalar" => Some(scalar(true)),
        "scalar-dynamic-weight" => Some(scalar(false)),
        "lqr-reduction" => Some(lqr_reduction(0x5EED, 0)),
        _ => None,
    }
}

pub fn parabolic_elliptic(params: &ParabolicEllipticParams) -> Result<Problem> {
    let a = assemble(params)?;
    Ok(Problem {
        name: "paper-example".into(),
        system: a.system,
        weights: a.weights,
        x_i: a.x_i,
        fem: Some(*params),
    })
}

/// `x1' = -x1 + u`, `0 = -2 x0 + u` on `[0, 6]` with `R = 1`, `G = 0`,
/// `x_i = (1, 0)`. The algebraic component is penalised when
/// `penalise_algebraic` holds (`Q = I`), otherwise `Q = diag(1, 0)`.
pub fn scalar(penalise_algebraic: bool) -> Result<Problem> {
    let system = DescriptorSystem::new(
        Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        Mat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
        Mat::from_row_slice(2, 1, &[1.0, 1.0]),
    )?;
    let q = Mat::from_diagonal(&Vector::from_vec(vec![1.0, if penalise_algebraic { 1.0 } else { 0.0 }]));
    let weights = QuadraticWeights::new(q, Mat::identity(1, 1), Mat::zeros(2, 2), 6.0)?;
    Ok(Problem {
        name: if penalise_algebraic { "scalar" } else { "scalar-dynamic-weight" }.into(),
        system,
        weights,
        x_i: Vector::from_vec(vec![1.0, 0.0]),
        fem: None,
    })
}

/// `E = I` instance with `n_x = 4`, `n_u = 2`, a random stable `A`, random
/// PSD `Q`, `G`, `R = I` and `t_f = 2`.
pub fn lqr_reduction(seed: u64, index: u64) -> Result<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let (n, m) = (4, 2);
    let mut draw = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    let raw = draw(n, n);
    let a = &raw - Mat::identity(n, n) * (norm2(&raw) + 0.5);
    let b = draw(n, m);
    let cq = draw(n, n);
    let cg = draw(n, n);
    let x_i = draw(n, 1).column(0).into_owned();
    let system = DescriptorSystem::new(Mat::identity(n, n), a, b)?;
    let weights = QuadraticWeights::new(
        crate::linalg::symmetrize(&(cq.transpose() * &cq)),
        Mat::identity(m, m),
        crate::linalg::symmetrize(&(cg.transpose() * &cg * 0.5)),
        2.0,
    )?;
    Ok(Problem {
        name: "lqr-reduction".into(),
        system,
        weights,
        x_i,
        fem: None,
    })
}

/// `E = [[0, 1], [0, 0]]`, `A = I`: one nilpotent block of size two.
pub fn nilpotent() -> Result<DescriptorSystem> {
    DescriptorSystem::new(
        Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        Mat::identity(2, 2),
        Mat::from_row_slice(2, 1, &[0.0, 1.0]),
    )
}
