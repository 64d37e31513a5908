//! The `run` command: synthesis, simulation, cross-checks and artifacts.

use std::path::Path;

use pdae_lq::control::{check_admissible, PicardResult};
use pdae_lq::descriptor::{PencilClass, ProjectorResiduals};
use pdae_lq::fem::instability_indicator;
use pdae_lq::linalg::Vector;
use pdae_lq::oracle::{OracleDiagnostics, OracleSolution};
use pdae_lq::pipeline::Pipeline;
use pdae_lq::riccati::DreDiagnostics;
use pdae_lq::simulate::{simulate_open_loop, RestartDeviation, Trajectory};
use pdae_lq::weierstrass::CompatibilityReport;
use serde::Serialize;

use crate::config::{Checks, Setup};
use crate::lqr::{self, LqrAgreement};
use crate::{output, svg, CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub n_x: usize,
    pub n_u: usize,
    pub n_output_nodes: usize,
    pub seed: u64,
    #[serde(rename = "J_feedback")]
    pub j_feedback: f64,
    #[serde(rename = "J_min_formula")]
    pub j_min_formula: f64,
    #[serde(rename = "J_uncontrolled", skip_serializing_if = "Option::is_none")]
    pub j_uncontrolled: Option<f64>,
    #[serde(rename = "J_oracle", skip_serializing_if = "Option::is_none")]
    pub j_oracle: Option<f64>,
    #[serde(rename = "J_picard", skip_serializing_if = "Option::is_none")]
    pub j_picard: Option<f64>,
    pub zu_sup: f64,
    pub consistency_residual: f64,
    /// `|(x_i)_0 + Bt0 u(0)|`: the algebraic re-initialisation applied by
    /// the feedback at `t = 0`.
    pub initial_gap: f64,
    pub restart_deviation: RestartDeviation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leading_open_loop_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard_feedback_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classic_lqr: Option<LqrAgreement>,
}

/// Stage reports, written to `diagnostics.json` whether or not the run
/// succeeds.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub status: String,
    pub exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pencil: Option<PencilClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projector_residuals: Option<ProjectorResiduals>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weierstrass_reconstruction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compatibility: Option<CompatibilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dre: Option<DreDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi0_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
}

impl Diagnostics {
    pub fn success(pl: &Pipeline, scenario: &str) -> Self {
        Self {
            status: "ok".into(),
            exit_code: 0,
            error: None,
            scenario: Some(scenario.into()),
            pencil: Some(pl.pencil.clone()),
            projector_residuals: Some(pl.projectors.residuals),
            weierstrass_reconstruction: Some(pl.form.reconstruction_residual),
            compatibility: Some(pl.compatibility.clone()),
            dre: Some(pl.riccati.projected.diagnostics),
            pi0_residual: Some(pl.riccati.pi0_residual),
        }
    }

    pub fn failure(err: &CliError, scenario: Option<&str>) -> Self {
        Self {
            status: "error".into(),
            exit_code: err.exit_code(),
            error: Some(ErrorInfo {
                kind: err.kind().into(),
                message: err.to_string(),
            }),
            scenario: scenario.map(String::from),
            ..Default::default()
        }
    }
}

/// Everything computed by one run.
pub struct RunResult {
    pub pipeline: Pipeline,
    pub closed: Trajectory,
    pub uncontrolled: Option<Trajectory>,
    pub picard: Option<PicardResult>,
    pub oracle: Option<OracleSolution>,
    pub summary: Summary,
}

/// Open-loop cost of `u` from `x_i` with the algebraic part set to
/// `-Bt0 u(0)`, as the feedback does.
fn reinitialised_cost(pl: &Pipeline, u: &pdae_lq::control::ControlSignal) -> CliResult<f64> {
    let wf = &pl.form;
    let x0 = wf.lift(&wf.x1_coords(&pl.x_i), &(-&wf.bt0 * u.eval(pl.grid.t0())));
    let traj = simulate_open_loop(wf, u, &x0, &pl.grid, &pl.options.sim())?;
    Ok(traj.with_cost(&pl.weights).cost.unwrap_or(f64::NAN))
}

pub fn execute(setup: &Setup) -> CliResult<RunResult> {
    let p = &setup.problem;
    let pl = Pipeline::build(p.system.clone(), p.weights.clone(), p.x_i.clone(), setup.options)?;
    compute(pl, &p.name, p.fem.as_ref(), &setup.checks)
}

fn compute(
    pl: Pipeline,
    name: &str,
    fem: Option<&pdae_lq::fem::ParabolicEllipticParams>,
    checks: &Checks,
) -> CliResult<RunResult> {
    let closed = pl.closed_loop()?;
    let u = closed.control()?;
    let zero = Vector::zeros(pl.system.n_u());
    let uncontrolled = if check_admissible(&zero, &pl.x_i, &pl.form, pl.options.tolerances.tol_consist).pass {
        Some(pl.uncontrolled()?)
    } else {
        None
    };
    let zu_sup = pl.gradient(&closed)?.sup_norm();
    let restart = pl.restart(&closed, 0.5 * (pl.grid.t0() + pl.grid.tf()))?;

    let (picard, j_picard, picard_distance) = if checks.picard {
        let pic = pl.picard()?;
        let j = reinitialised_cost(&pl, &pic.control)?;
        let d = pic.control.sup_distance(&u)?;
        (Some(pic), Some(j), Some(d))
    } else {
        (None, None, None)
    };
    let oracle = if checks.oracle {
        Some(pl.oracle(checks.oracle_steps)?)
    } else {
        None
    };
    let leading_open_loop_rate = fem.map(instability_indicator).transpose()?;

    let summary = Summary {
        scenario: name.into(),
        n_x: pl.system.n_x(),
        n_u: pl.system.n_u(),
        n_output_nodes: pl.grid.len(),
        seed: pl.options.seed,
        j_feedback: closed.cost.unwrap_or(f64::NAN),
        j_min_formula: pl.minimum_cost(),
        j_uncontrolled: uncontrolled.as_ref().and_then(|t| t.cost),
        j_oracle: oracle.as_ref().map(|o| o.cost),
        j_picard,
        zu_sup,
        consistency_residual: closed.consistency_residual(&pl.form),
        initial_gap: closed.initial_gap,
        restart_deviation: restart,
        leading_open_loop_rate,
        picard_iterations: picard.as_ref().map(|p| p.iterations),
        picard_feedback_distance: picard_distance,
        oracle: oracle.as_ref().map(|o| o.diagnostics),
        classic_lqr: lqr::compare(&pl, 20),
    };
    Ok(RunResult {
        pipeline: pl,
        closed,
        uncontrolled,
        picard,
        oracle,
        summary,
    })
}

/// Write CSV, JSON and SVG artifacts of a successful run.
pub fn write_artifacts(dir: &Path, setup: &Setup, res: &RunResult) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    let pl = &res.pipeline;
    output::write_trajectory(&dir.join("trajectory.csv"), &res.closed)?;
    let u = res.closed.control()?;
    output::write_control(&dir.join("control.csv"), &u)?;
    output::write_riccati(&dir.join("riccati.csv"), pl)?;
    output::write_json(&dir.join("summary.json"), &res.summary)?;

    let t = pl.grid.nodes();
    let channels: Vec<Vec<f64>> = (0..u.n_u()).map(|i| u.values().iter().map(|v| v[i]).collect()).collect();
    std::fs::write(dir.join("control.svg"), svg::line_plot("feedback control u(t)", t, &channels))?;

    if let Some(params) = setup.problem.fem {
        let x = params.mesh();
        let n = params.n_nodes();
        let field = |traj: &Trajectory, offset: usize| -> Vec<Vec<f64>> {
            traj.x.iter().map(|xk| xk.rows(offset, n).iter().cloned().collect()).collect()
        };
        let mut plots = vec![("controlled", &res.closed)];
        if let Some(unc) = &res.uncontrolled {
            plots.push(("uncontrolled", unc));
        }
        for (label, traj) in plots {
            for (field_name, offset) in [("w", 0), ("v", n)] {
                let svg = svg::heatmap(&format!("{field_name}(x, t), {label}"), t, &x, &field(traj, offset), 200);
                std::fs::write(dir.join(format!("{field_name}_{label}.svg")), svg)?;
            }
        }
    }
    Ok(())
}
