use nalgebra::DMatrix;
use pdae_lq::descriptor::{compute_projectors, DescriptorSystem, PencilOptions};
use pdae_lq::linalg::{block_diag, min_eigenvalue};
use pdae_lq::pipeline::{Pipeline, PipelineOptions};
use pdae_lq::weierstrass::QuadraticWeights;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Mat = DMatrix<f64>;

struct Instance {
    sys: DescriptorSystem,
    weights: QuadraticWeights,
    x_i: nalgebra::DVector<f64>,
    v: Mat,
    r: usize,
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn psd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let c = random(rng, n, n);
    c.transpose() * c
}

/// `E = U diag(I, 0) V`, `A = U diag(J, A22) V` with well-conditioned `U`,
/// `V` and weights that are block diagonal in `V` coordinates.
fn instance(seed: u64, n: usize, r: usize, m: usize, q1_extra: Option<&Mat>) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Mat::identity(n, n) + random(&mut rng, n, n) * 0.3;
    let v = Mat::identity(n, n) + random(&mut rng, n, n) * 0.3;
    let j = random(&mut rng, r, r);
    let a22 = Mat::identity(n - r, n - r) * 2.0 + random(&mut rng, n - r, n - r) * 0.3;
    let e = &u * block_diag(&Mat::identity(r, r), &Mat::zeros(n - r, n - r)) * &v;
    let a = &u * block_diag(&j, &a22) * &v;
    let b = random(&mut rng, n, m);
    let mut q11 = psd(&mut rng, r);
    if let Some(extra) = q1_extra {
        q11 += extra;
    }
    let q = v.transpose() * block_diag(&q11, &psd(&mut rng, n - r)) * &v;
    let g = v.transpose() * block_diag(&(psd(&mut rng, r) * 0.5), &Mat::zeros(n - r, n - r)) * &v;
    let sym = |m: Mat| (&m + m.transpose()) * 0.5;
    let weights = QuadraticWeights::new(sym(q), Mat::identity(m, m), sym(g), 1.5).unwrap();
    let x_i = random(&mut rng, n, 1).column(0).into_owned();
    Instance {
        sys: DescriptorSystem::new(e, a, b).unwrap(),
        weights,
        x_i,
        v,
        r,
    }
}

fn pipeline(inst: &Instance) -> Pipeline {
    Pipeline::build(
        inst.sys.clone(),
        inst.weights.clone(),
        inst.x_i.clone(),
        PipelineOptions {
            n_output_nodes: 31,
            ..Default::default()
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projectors_are_commuting_idempotents(seed in any::<u64>(), n in 3usize..7, m in 1usize..3) {
        let r = 1 + (seed as usize) % (n - 1);
        let inst = instance(seed, n, r, m, None);
        let proj = compute_projectors(&inst.sys, &PencilOptions::default()).unwrap();
        prop_assert_eq!(proj.rank_1, inst.r);
        prop_assert!(proj.residuals.idempotency <= 1e-8);
        prop_assert!(proj.residuals.commute_e <= 1e-8);
        prop_assert!(proj.residuals.commute_a <= 1e-8);
        let p = &proj.p_x1 + &proj.p_x0;
        prop_assert!((p - Mat::identity(n, n)).norm() <= 1e-8);
        // X0 is the kernel of E and X1 maps onto the first block of V.
        prop_assert!((inst.sys.e() * &proj.p_x0).norm() <= 1e-8 * inst.sys.e().norm());
        let tail = (&inst.v * &proj.p_x1).rows(inst.r, n - inst.r).norm();
        prop_assert!(tail <= 1e-8);
    }

    #[test]
    fn projectors_invariant_under_pencil_scaling(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let inst = instance(seed, 5, 3, 2, None);
        let opts = PencilOptions::default();
        let p = compute_projectors(&inst.sys, &opts).unwrap();
        let q = compute_projectors(&inst.sys.scaled(c), &opts).unwrap();
        prop_assert!((&p.p_x1 - &q.p_x1).norm() <= 1e-8);
        prop_assert!((&p.p_z1 - &q.p_z1).norm() <= 1e-8);
    }

    #[test]
    fn effective_control_weight_dominates_r(seed in any::<u64>()) {
        let inst = instance(seed, 5, 2, 2, None);
        let pl = pipeline(&inst);
        prop_assert!(min_eigenvalue(&pl.split.rt) >= min_eigenvalue(&pl.split.r) - 1e-12);
    }

    #[test]
    fn riccati_solution_is_symmetric_psd(seed in any::<u64>()) {
        let inst = instance(seed, 5, 3, 1, None);
        let pl = pipeline(&inst);
        for p in &pl.riccati.projected.series.values {
            prop_assert!((p - p.transpose()).norm() <= 1e-12 * p.norm().max(1.0));
            prop_assert!(min_eigenvalue(p) >= -1e-10 * p.norm().max(1.0));
        }
    }

    #[test]
    fn riccati_monotone_in_state_weight(seed in any::<u64>(), extra_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(extra_seed);
        let extra = psd(&mut rng, 3);
        let base = pipeline(&instance(seed, 5, 3, 1, None));
        let more = pipeline(&instance(seed, 5, 3, 1, Some(&extra)));
        let d = &more.riccati.pit1.values[0] - &base.riccati.pit1.values[0];
        prop_assert!(min_eigenvalue(&d) >= -1e-9 * d.norm().max(1.0));
    }

    #[test]
    fn cost_to_go_agrees_in_both_coordinates(seed in any::<u64>()) {
        let inst = instance(seed, 6, 3, 2, None);
        let pl = pipeline(&inst);
        let c1 = pl.form.x1_coords(&inst.x_i);
        let projected = c1.dot(&(&pl.riccati.projected.series.values[0] * &c1));
        let lifted = pl.minimum_cost();
        prop_assert!((projected - lifted).abs() <= 1e-10 * projected.abs().max(1.0));
    }
}
