//! End-to-end synthesis: pencil check, projectors, Weierstrass form,
//! weight split, Riccati solution and gain schedule on one output grid.

use serde::{Deserialize, Serialize};

use crate::control::{
    feedback_gain, minimum_cost, picard_solve, variation_gradient, ControlSignal, GainSchedule, PicardOptions,
    PicardResult,
};
use crate::descriptor::{
    classify_pencil, compute_projectors, semi_explicit_projectors, DescriptorSystem, PencilClass, PencilOptions,
    SpectralProjectors,
};
use crate::error::Result;
use crate::grid::TimeGrid;
use crate::linalg::Vector;
use crate::oracle::{direct_transcription, OracleOptions, OracleSolution};
use crate::parallel::Execution;
use crate::riccati::{solve_riccati, DreOptions, RiccatiSolution};
use crate::simulate::{
    optimality_restart_deviation, simulate_closed_loop, simulate_open_loop, RestartDeviation, SimOptions, Trajectory,
};
use crate::weierstrass::{
    check_weight_compatibility, decompose, split_weights, CompatibilityReport, QuadraticWeights, SplitWeights,
    WeierstrassForm,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub rank_tol: f64,
    pub tol_proj: f64,
    pub cond_max: f64,
    pub tol_weights: f64,
    pub tol_dre: f64,
    /// Scaled residual bound for the algebraic equation of `Pit0`.
    pub tol_alg: f64,
    /// Bound on the scaled first-variation certificate `z_u`.
    pub tol_opt: f64,
    pub tol_consist: f64,
    pub rtol: f64,
    pub atol: f64,
    pub tol_fp: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_tol: 1e-10,
            tol_proj: 1e-8,
            cond_max: 1e12,
            tol_weights: 1e-8,
            tol_dre: 1e-6,
            tol_alg: 1e-10,
            tol_opt: 1e-4,
            tol_consist: 1e-9,
            rtol: 1e-9,
            atol: 1e-12,
            tol_fp: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub tolerances: Tolerances,
    pub n_output_nodes: usize,
    /// Number of leading differential equations when the system is known
    /// to be semi-explicit.
    pub semi_explicit: Option<usize>,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            n_output_nodes: 601,
            semi_explicit: None,
            seed: PencilOptions::default().seed,
            exec: Execution::default(),
        }
    }
}

impl PipelineOptions {
    pub fn pencil(&self) -> PencilOptions {
        let t = &self.tolerances;
        PencilOptions {
            rank_tol: t.rank_tol,
            tol_proj: t.tol_proj,
            cond_max: t.cond_max,
            seed: self.seed,
        }
    }

    pub fn dre(&self) -> DreOptions {
        DreOptions {
            tol_dre: self.tolerances.tol_dre,
            ..DreOptions::default()
        }
    }

    pub fn sim(&self) -> SimOptions {
        let t = &self.tolerances;
        let mut sim = SimOptions {
            tol_consist: t.tol_consist,
            cond_max: t.cond_max,
            ..SimOptions::default()
        };
        sim.bdf = sim.bdf.with_tolerances(t.rtol, t.atol);
        sim
    }

    pub fn picard(&self) -> PicardOptions {
        let mut p = PicardOptions {
            tol_fp: self.tolerances.tol_fp,
            ..PicardOptions::default()
        };
        p.sim.tol_consist = self.tolerances.tol_consist;
        p
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub system: DescriptorSystem,
    pub weights: QuadraticWeights,
    pub x_i: Vector,
    pub options: PipelineOptions,
    pub pencil: PencilClass,
    pub projectors: SpectralProjectors,
    pub form: WeierstrassForm,
    pub compatibility: CompatibilityReport,
    pub split: SplitWeights,
    pub grid: TimeGrid,
    pub riccati: RiccatiSolution,
    pub gains: GainSchedule,
}

impl Pipeline {
    pub fn build(
        system: DescriptorSystem,
        weights: QuadraticWeights,
        x_i: Vector,
        options: PipelineOptions,
    ) -> Result<Self> {
        weights.check_dimensions(&system)?;
        if x_i.len() != system.n_x() {
            return Err(crate::Error::DimensionMismatch(format!(
                "initial state has length {}, expected {}",
                x_i.len(),
                system.n_x()
            )));
        }
        let popts = options.pencil();
        let pencil = classify_pencil(&system, &popts)?;
        let projectors = match options.semi_explicit {
            Some(k) => semi_explicit_projectors(&system, k, &popts)?,
            None => compute_projectors(&system, &popts)?,
        };
        let form = decompose(&system, &projectors, popts.tol_proj, popts.cond_max)?;
        let compatibility =
            check_weight_compatibility(&weights, &form.p_x1(), &form.p_x0(), options.tolerances.tol_weights);
        let split = split_weights(&weights, &form, options.tolerances.tol_weights)?;
        let grid = TimeGrid::uniform(0.0, weights.t_f, options.n_output_nodes)?;
        let riccati = solve_riccati(&system, &form, &split, &weights, &grid, &options.dre(), options.exec)?;
        let gains = feedback_gain(&riccati, &system, &weights, options.exec)?;
        Ok(Self {
            system,
            weights,
            x_i,
            options,
            pencil,
            projectors,
            form,
            compatibility,
            split,
            grid,
            riccati,
            gains,
        })
    }

    pub fn closed_loop(&self) -> Result<Trajectory> {
        Ok(simulate_closed_loop(&self.form, &self.gains, &self.x_i, &self.grid, &self.options.sim())?
            .with_cost(&self.weights))
    }

    pub fn open_loop(&self, u: &ControlSignal) -> Result<Trajectory> {
        Ok(simulate_open_loop(&self.form, u, &self.x_i, &self.grid, &self.options.sim())?.with_cost(&self.weights))
    }

    pub fn uncontrolled(&self) -> Result<Trajectory> {
        self.open_loop(&ControlSignal::zeros(self.grid.clone(), self.system.n_u()))
    }

    /// `<E x_i, Pit1(0) E x_i>`.
    pub fn minimum_cost(&self) -> f64 {
        minimum_cost(&self.riccati, &self.system, &self.x_i)
    }

    pub fn restart(&self, traj: &Trajectory, t0: f64) -> Result<RestartDeviation> {
        optimality_restart_deviation(traj, t0, &self.form, &self.gains, &self.options.sim())
    }

    /// `z_u` along a simulated trajectory and its control.
    pub fn gradient(&self, traj: &Trajectory) -> Result<ControlSignal> {
        variation_gradient(&traj.control()?, traj, &self.form, &self.split, &self.options.sim())
    }

    pub fn picard(&self) -> Result<PicardResult> {
        picard_solve(&self.form, &self.split, &self.x_i, &self.grid, &self.options.picard())
    }

    pub fn oracle(&self, n_steps: usize) -> Result<OracleSolution> {
        direct_transcription(
            &self.form,
            &self.weights,
            &self.x_i,
            &OracleOptions {
                n_steps,
                tol_consist: self.options.tolerances.tol_consist,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::variation_identity_check;
    use crate::scenarios::scalar;

    fn build(penalise_algebraic: bool, nodes: usize) -> Pipeline {
        let p = scalar(penalise_algebraic).unwrap();
        let opts = PipelineOptions {
            n_output_nodes: nodes,
            ..Default::default()
        };
        Pipeline::build(p.system, p.weights, p.x_i, opts).unwrap()
    }

    #[test]
    fn closed_form_minimum_cost() {
        let pl = build(false, 601);
        let s2 = 2f64.sqrt();
        let th = (s2 * 6.0).tanh();
        let exact = th / (s2 + th);
        assert!((pl.minimum_cost() - exact).abs() < 1e-12);
        let traj = pl.closed_loop().unwrap();
        let j = traj.cost.unwrap();
        assert!((j - exact).abs() / exact < 1e-6, "{j} vs {exact}");
        assert!(traj.consistency_residual(&pl.form) < 1e-12);
    }

    #[test]
    fn simulated_cost_matches_formula_with_algebraic_weight() {
        let pl = build(true, 601);
        let traj = pl.closed_loop().unwrap();
        let j = traj.cost.unwrap();
        assert!((j - pl.minimum_cost()).abs() / j < 1e-6);
    }

    #[test]
    fn gradient_vanishes_along_feedback() {
        let pl = build(true, 601);
        let traj = pl.closed_loop().unwrap();
        let z = pl.gradient(&traj).unwrap();
        let u = traj.control().unwrap();
        assert!(z.sup_norm() < 1e-6 * (1.0 + u.sup_norm()), "{}", z.sup_norm());
    }

    #[test]
    fn picard_matches_feedback() {
        let pl = build(true, 301);
        let traj = pl.closed_loop().unwrap();
        let u = traj.control().unwrap();
        let pic = pl.picard().unwrap();
        let d = pic.control.sup_distance(&u).unwrap();
        assert!(d < 1e-5 * u.sup_norm(), "{d}");
    }

    #[test]
    fn oracle_matches_minimum_cost() {
        let pl = build(true, 201);
        let sol = pl.oracle(400).unwrap();
        let j = pl.minimum_cost();
        assert!((sol.cost - j).abs() / j < 5e-3, "{} vs {j}", sol.cost);
    }

    #[test]
    fn variation_identity_on_admissible_direction() {
        let pl = build(true, 1201);
        let grid = pl.grid.clone();
        let u = ControlSignal::from_values(
            grid.clone(),
            grid.nodes().iter().map(|t| Vector::from_element(1, (-t).exp() - 1.0)).collect(),
        )
        .unwrap();
        let h = ControlSignal::from_values(
            grid.clone(),
            grid.nodes().iter().map(|t| Vector::from_element(1, (t * 1.3).sin())).collect(),
        )
        .unwrap();
        let x_i = Vector::from_vec(vec![1.0, 0.0]);
        let id = variation_identity_check(&u, &h, &x_i, &pl.form, &pl.split, &pl.weights, &pl.options.sim()).unwrap();
        assert!(id.gap <= 1e-6 * id.lhs.abs().max(1.0), "{id:?}");
    }
}
