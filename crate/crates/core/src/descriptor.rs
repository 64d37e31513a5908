//! Descriptor systems `d/dt E x = A x + B u` and the spectral projectors
//! that split state and equation spaces into dynamic and algebraic parts.
//!
//! For a regular pencil whose infinite eigenvalues are semi-simple
//! (nilpotency 1) the deflating subspaces are
//!
//! * `X0 = ker E`, `Z1 = range E`, `Z0 = A X0`,
//! * `X1 = { x : A x in range E }`,
//!
//! and `P_X1` / `P_Z1` are the oblique projectors onto `X1` / `Z1` along
//! `X0` / `Z0`. They commute with the pencil: `P_Z1 E = E P_X1` and
//! `P_Z1 A = A P_X1`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, hstack, norm2, rank_split, solve, vstack, Mat, Vector};

/// Default seed for the regularity probes.
pub const DEFAULT_SEED: u64 = 0x5EED;

/// Sentinel returned in [`PencilClass::index_estimate`] for nilpotency >= 2.
pub const HIGHER_INDEX: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSystem {
    e: Mat,
    a: Mat,
    b: Mat,
}

impl DescriptorSystem {
    pub fn new(e: Mat, a: Mat, b: Mat) -> Result<Self> {
        if e.shape() != a.shape() {
            return Err(Error::DimensionMismatch(format!(
                "E is {:?} but A is {:?}",
                e.shape(),
                a.shape()
            )));
        }
        if b.nrows() != e.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, expected {}",
                b.nrows(),
                e.nrows()
            )));
        }
        if e.ncols() == 0 || b.ncols() == 0 {
            return Err(Error::DimensionMismatch("empty state or input space".into()));
        }
        if e.iter().chain(a.iter()).chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite matrix entry".into()));
        }
        Ok(Self { e, a, b })
    }

    pub fn e(&self) -> &Mat {
        &self.e
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn n_x(&self) -> usize {
        self.e.ncols()
    }

    pub fn n_z(&self) -> usize {
        self.e.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    /// `(cE, cA, B)`; leaves the projectors unchanged.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            e: &self.e * c,
            a: &self.a * c,
            b: self.b.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PencilOptions {
    /// Relative singular-value threshold for rank decisions.
    pub rank_tol: f64,
    /// Relative tolerance on projector identities.
    pub tol_proj: f64,
    /// Largest admissible condition number of the basis changes.
    pub cond_max: f64,
    pub seed: u64,
}

impl Default for PencilOptions {
    fn default() -> Self {
        Self {
            rank_tol: 1e-10,
            tol_proj: 1e-8,
            cond_max: 1e12,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub rank_threshold: f64,
    pub rank_e: usize,
    pub probe_lambdas: Vec<f64>,
    /// `sigma_min / sigma_max` of `lambda E - A` at each probe.
    pub probe_relative_sigma: Vec<f64>,
    /// `sigma_min(W^T A N_E) / |A|`; 1 when there is no algebraic part.
    pub index_relative_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PencilClass {
    pub regular: bool,
    /// 0 for nilpotency 1 (the admissible class), [`HIGHER_INDEX`] otherwise.
    pub index_estimate: u32,
    pub finite_spectrum_count: usize,
    pub infinite_eigenvalue_count: usize,
    pub condition_report: ConditionReport,
}

/// Classify the pencil `lambda E - A` without rejecting it.
pub fn classify_pencil(sys: &DescriptorSystem, opts: &PencilOptions) -> Result<PencilClass> {
    let n = sys.n_x();
    if sys.n_z() != n {
        return Err(Error::NonSquare {
            rows: sys.n_z(),
            cols: n,
        });
    }
    let e_split = rank_split(sys.e(), opts.rank_tol);
    let norm_e = e_split.singular_values.first().cloned().unwrap_or(0.0);
    let norm_a = norm2(sys.a());
    let scale = if norm_e > 0.0 && norm_a > 0.0 {
        norm_a / norm_e
    } else {
        1.0
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut lambdas = Vec::with_capacity(3);
    let mut rel = Vec::with_capacity(3);
    for _ in 0..3 {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let lambda = sign * scale * rng.gen_range(0.5..2.0);
        let pencil = sys.e() * lambda - sys.a();
        let sv = linalg::singular_values(&pencil);
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        lambdas.push(lambda);
        rel.push(if smax > 0.0 { smin / smax } else { 0.0 });
    }
    let regular = rel.iter().any(|&r| r > opts.rank_tol);

    let r = e_split.rank;
    let index_relative_sigma = if r == n {
        1.0
    } else {
        let coupling = e_split.left_null.transpose() * sys.a() * &e_split.kernel;
        let sv = linalg::singular_values(&coupling);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if norm_a > 0.0 {
            smin / norm_a
        } else {
            0.0
        }
    };
    let index_ok = regular && index_relative_sigma > opts.rank_tol;

    let (finite, infinite) = if index_ok {
        (r, n - r)
    } else if regular {
        infinite_multiplicity(sys, lambdas[rel.iter().cloned().enumerate().fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc }).0], opts.rank_tol)
    } else {
        (r, n - r)
    };

    Ok(PencilClass {
        regular,
        index_estimate: if index_ok { 0 } else { HIGHER_INDEX },
        finite_spectrum_count: finite,
        infinite_eigenvalue_count: infinite,
        condition_report: ConditionReport {
            rank_threshold: e_split.threshold,
            rank_e: r,
            probe_lambdas: lambdas,
            probe_relative_sigma: rel,
            index_relative_sigma,
            seed: opts.seed,
        },
    })
}

/// Algebraic multiplicity of the zero eigenvalue of `(lambda0 E - A)^{-1} E`,
/// i.e. the number of infinite pencil eigenvalues, via rank stabilisation of
/// its powers.
fn infinite_multiplicity(sys: &DescriptorSystem, lambda0: f64, rank_tol: f64) -> (usize, usize) {
    let n = sys.n_x();
    let shifted = sys.e() * lambda0 - sys.a();
    let m = match solve(&shifted, sys.e(), "shifted pencil") {
        Ok(m) => m,
        Err(_) => return (0, n),
    };
    let norm_m = norm2(&m);
    // Thresholds scale with |M|^k so that numerically nilpotent powers count as zero.
    let rank_at = |p: &Mat, k: i32| {
        let cutoff = rank_tol * norm_m.powi(k);
        linalg::singular_values(p).iter().filter(|s| **s > cutoff).count()
    };
    let mut power = m.clone();
    let mut rank = rank_at(&power, 1);
    for k in 2..=n as i32 {
        let next = &power * &m;
        let next_rank = rank_at(&next, k);
        if next_rank == rank {
            break;
        }
        power = next;
        rank = next_rank;
    }
    (rank, n - rank)
}

/// Admission gate: the pencil must be square, regular and of nilpotency 1.
pub fn validate_pencil(sys: &DescriptorSystem, opts: &PencilOptions) -> Result<PencilClass> {
    let class = classify_pencil(sys, opts)?;
    if !class.regular {
        let min_relative_sigma = class
            .condition_report
            .probe_relative_sigma
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        return Err(Error::SingularPencil { min_relative_sigma });
    }
    if class.index_estimate != 0 {
        return Err(Error::HigherIndex {
            relative_sigma: class.condition_report.index_relative_sigma,
        });
    }
    Ok(class)
}

/// Column bases of the four subspaces together with the coordinate maps
/// `T_X^{-1}`, `T_Z^{-1}` where `T_X = [x1 | x0]`, `T_Z = [z1 | z0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBases {
    pub x1: Mat,
    pub x0: Mat,
    pub z1: Mat,
    pub z0: Mat,
    /// Rows `0..r` give `X1` coordinates, rows `r..` give `X0` coordinates.
    pub x_coords: Mat,
    pub z_coords: Mat,
}

impl SubspaceBases {
    fn from_columns(x1: Mat, x0: Mat, z1: Mat, z0: Mat, cond_max: f64) -> Result<Self> {
        let tx = hstack(&x1, &x0);
        let tz = hstack(&z1, &z0);
        for (name, t) in [("T_X", &tx), ("T_Z", &tz)] {
            let c = linalg::condition(t);
            if !(c <= cond_max) {
                return Err(Error::ProjectionFailure(format!(
                    "basis change {name} has condition {c:.3e} > {cond_max:.1e}"
                )));
            }
        }
        let n = tx.nrows();
        let x_coords = solve(&tx, &Mat::identity(n, n), "T_X")
            .map_err(|_| Error::ProjectionFailure("T_X singular".into()))?;
        let nz = tz.nrows();
        let z_coords = solve(&tz, &Mat::identity(nz, nz), "T_Z")
            .map_err(|_| Error::ProjectionFailure("T_Z singular".into()))?;
        Ok(Self {
            x1,
            x0,
            z1,
            z0,
            x_coords,
            z_coords,
        })
    }

    pub fn rank_1(&self) -> usize {
        self.x1.ncols()
    }

    /// `S_X1`: `X -> X1` coordinates (`r x n`).
    pub fn sx1(&self) -> Mat {
        let r = self.rank_1();
        self.x_coords.rows(0, r).into_owned()
    }

    pub fn sx0(&self) -> Mat {
        let r = self.rank_1();
        self.x_coords.rows(r, self.x_coords.nrows() - r).into_owned()
    }

    pub fn sz1(&self) -> Mat {
        let r = self.z1.ncols();
        self.z_coords.rows(0, r).into_owned()
    }

    pub fn sz0(&self) -> Mat {
        let r = self.z1.ncols();
        self.z_coords.rows(r, self.z_coords.nrows() - r).into_owned()
    }

    pub fn x1_coords(&self, x: &Vector) -> Vector {
        self.sx1() * x
    }

    pub fn x0_coords(&self, x: &Vector) -> Vector {
        self.sx0() * x
    }

    /// `x = basis_X1 c1 + basis_X0 c0`.
    pub fn lift(&self, c1: &Vector, c0: &Vector) -> Vector {
        &self.x1 * c1 + &self.x0 * c0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProjectors {
    pub p_x1: Mat,
    pub p_x0: Mat,
    pub p_z1: Mat,
    pub p_z0: Mat,
    pub rank_1: usize,
    pub bases: SubspaceBases,
    pub residuals: ProjectorResiduals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectorResiduals {
    /// Largest `|P^2 - P|` over the four projectors.
    pub idempotency: f64,
    /// `|P_Z1 E - E P_X1| / |E|`.
    pub commute_e: f64,
    /// `|P_Z1 A - A P_X1| / |A|`.
    pub commute_a: f64,
}

impl ProjectorResiduals {
    pub fn max(&self) -> f64 {
        self.idempotency.max(self.commute_e).max(self.commute_a)
    }
}

impl SpectralProjectors {
    fn from_bases(sys: &DescriptorSystem, bases: SubspaceBases, tol_proj: f64) -> Result<Self> {
        let n = sys.n_x();
        let p_x1 = &bases.x1 * bases.sx1();
        let p_z1 = &bases.z1 * bases.sz1();
        let p_x0 = Mat::identity(n, n) - &p_x1;
        let p_z0 = Mat::identity(n, n) - &p_z1;
        let residuals = projector_residuals(sys, &p_x1, &p_x0, &p_z1, &p_z0);
        if !(residuals.max() <= tol_proj) {
            return Err(Error::ProjectionFailure(format!(
                "projector residuals {residuals:?} exceed tolerance {tol_proj:.1e}"
            )));
        }
        Ok(Self {
            rank_1: bases.rank_1(),
            p_x1,
            p_x0,
            p_z1,
            p_z0,
            bases,
            residuals,
        })
    }

    pub fn n(&self) -> usize {
        self.p_x1.nrows()
    }
}

pub fn projector_residuals(
    sys: &DescriptorSystem,
    p_x1: &Mat,
    p_x0: &Mat,
    p_z1: &Mat,
    p_z0: &Mat,
) -> ProjectorResiduals {
    let idem = [p_x1, p_x0, p_z1, p_z0]
        .iter()
        .map(|p| linalg::frobenius(&(*p * *p - *p)))
        .fold(0.0, f64::max);
    let rel = |m: &Mat, scale: f64| {
        let r = norm2(m);
        if scale > 0.0 {
            r / scale
        } else {
            r
        }
    };
    ProjectorResiduals {
        idempotency: idem,
        commute_e: rel(&(p_z1 * sys.e() - sys.e() * p_x1), norm2(sys.e())),
        commute_a: rel(&(p_z1 * sys.a() - sys.a() * p_x1), norm2(sys.a())),
    }
}

/// Spectral projectors of a nilpotency-1 pencil from orthonormal bases of
/// its deflating subspaces.
pub fn compute_projectors(sys: &DescriptorSystem, opts: &PencilOptions) -> Result<SpectralProjectors> {
    validate_pencil(sys, opts)?;
    let e_split = rank_split(sys.e(), opts.rank_tol);
    let r = e_split.rank;
    let n = sys.n_x();

    let x0 = e_split.kernel.clone();
    let z1 = e_split.range.clone();
    let z0 = linalg::orthonormal_columns(&(sys.a() * &x0), n - r);
    let constraint = e_split.left_null.transpose() * sys.a();
    let c_split = rank_split(&constraint, opts.rank_tol);
    if c_split.kernel.ncols() != r {
        return Err(Error::ProjectionFailure(format!(
            "finite deflating subspace has dimension {} but rank(E) = {r}",
            c_split.kernel.ncols()
        )));
    }
    let x1 = c_split.kernel;
    let bases = SubspaceBases::from_columns(x1, x0, z1, z0, opts.cond_max)?;
    SpectralProjectors::from_bases(sys, bases, opts.tol_proj)
}

/// Projectors for semi-explicit systems `E = blockdiag(E11, 0)`, built
/// directly from the block partition (no pencil decomposition).
///
/// The bases are `X1 = [I; -A22^{-1} A21]`, `X0 = [0; I]`, `Z1 = [I; 0]`,
/// `Z0 = [A12 A22^{-1}; I]`, which makes the restricted operators
/// `E1 = E11`, `A0 = A22`.
pub fn semi_explicit_projectors(
    sys: &DescriptorSystem,
    n_dynamic: usize,
    opts: &PencilOptions,
) -> Result<SpectralProjectors> {
    let n = sys.n_x();
    if sys.n_z() != n {
        return Err(Error::NonSquare {
            rows: sys.n_z(),
            cols: n,
        });
    }
    if n_dynamic > n {
        return Err(Error::DimensionMismatch(format!(
            "dynamic block {n_dynamic} exceeds state dimension {n}"
        )));
    }
    let m = n - n_dynamic;
    let e = sys.e();
    let scale = norm2(e).max(f64::MIN_POSITIVE);
    let off = [
        e.view((0, n_dynamic), (n_dynamic, m)).norm(),
        e.view((n_dynamic, 0), (m, n_dynamic)).norm(),
        e.view((n_dynamic, n_dynamic), (m, m)).norm(),
    ];
    if off.iter().any(|v| *v > opts.tol_proj * scale) {
        return Err(Error::AssumptionViolated(
            "E is not block-diagonal with a zero trailing block".into(),
        ));
    }
    let e11 = e.view((0, 0), (n_dynamic, n_dynamic)).into_owned();
    if linalg::condition(&e11) > opts.cond_max {
        return Err(Error::AssumptionViolated("E11 is numerically singular".into()));
    }
    let a = sys.a();
    let a12 = a.view((0, n_dynamic), (n_dynamic, m)).into_owned();
    let a21 = a.view((n_dynamic, 0), (m, n_dynamic)).into_owned();
    let a22 = a.view((n_dynamic, n_dynamic), (m, m)).into_owned();
    let a22_cond = linalg::condition(&a22);
    if !(a22_cond <= opts.cond_max) {
        return Err(Error::HigherIndex {
            relative_sigma: 1.0 / a22_cond,
        });
    }
    let a22_inv_a21 = solve(&a22, &a21, "A22")?;
    let a12_a22_inv = linalg::solve_right(&a12, &a22, "A22")?;

    let x1 = vstack(&Mat::identity(n_dynamic, n_dynamic), &(-a22_inv_a21));
    let x0 = vstack(&Mat::zeros(n_dynamic, m), &Mat::identity(m, m));
    let z1 = vstack(&Mat::identity(n_dynamic, n_dynamic), &Mat::zeros(m, n_dynamic));
    let z0 = vstack(&a12_a22_inv, &Mat::identity(m, m));
    let bases = SubspaceBases::from_columns(x1, x0, z1, z0, opts.cond_max)?;
    SpectralProjectors::from_bases(sys, bases, opts.tol_proj)
}

/// Rebuild projectors after replacing the `X1` basis by `x1 * change`
/// (`change` invertible). Used to check basis independence downstream.
pub fn rebase_x1(
    sys: &DescriptorSystem,
    proj: &SpectralProjectors,
    change: &DMatrix<f64>,
    opts: &PencilOptions,
) -> Result<SpectralProjectors> {
    let b = &proj.bases;
    let bases = SubspaceBases::from_columns(
        &b.x1 * change,
        b.x0.clone(),
        b.z1.clone(),
        b.z0.clone(),
        opts.cond_max,
    )?;
    SpectralProjectors::from_bases(sys, bases, opts.tol_proj)
}
