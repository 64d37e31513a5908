//! The `verify` command: invariant checks with measured values against
//! tolerances.

use pdae_lq::riccati::{projection_free_residual, terminal_residual};
use serde::Serialize;

use crate::config::Setup;
use crate::run::{self, RunResult};
use crate::CliResult;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn le(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: String,
    pub checks: Vec<Check>,
    pub passed: usize,
    pub failed: usize,
}

impl Report {
    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}: {:.3e} (tol {:.1e}){}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.tolerance,
                    if c.detail.is_empty() { String::new() } else { format!(" {}", c.detail) }
                )
            })
            .collect()
    }
}

pub fn verify(setup: &Setup) -> CliResult<(RunResult, Report)> {
    let res = run::execute(setup)?;
    let pl = &res.pipeline;
    let tol = &pl.options.tolerances;
    let s = &res.summary;
    let mut checks = Vec::new();

    checks.push(Check::le(
        "projector_algebra",
        pl.projectors.residuals.max(),
        tol.tol_proj,
        String::new(),
    ));
    let dre = &pl.riccati.projected.diagnostics;
    checks.push(Check::le(
        "dre_midpoint_residual",
        dre.midpoint_residual,
        tol.tol_dre,
        format!("interpolation error {:.2e}", dre.interpolation_error),
    ));
    checks.push(Check::le(
        "terminal_condition",
        terminal_residual(&pl.riccati, &pl.system, &pl.weights),
        1e-10,
        String::new(),
    ));
    checks.push(Check::le("pi0_algebraic_residual", pl.riccati.pi0_residual, tol.tol_alg, String::new()));

    let (t0, tf) = (pl.grid.t0(), pl.grid.tf());
    let mut worst = 0.0f64;
    for k in 1..=5 {
        let t = t0 + (tf - t0) * k as f64 / 6.0;
        let r = projection_free_residual(&pl.riccati, &pl.system, &pl.weights, &pl.form, &pl.split, t)?;
        worst = worst.max(r.on_closed_loop);
    }
    checks.push(Check::le(
        "projection_free_equation",
        worst,
        1e-5,
        "on the closed-loop manifold, 5 interior times".into(),
    ));

    checks.push(Check::le(
        "consistency",
        s.consistency_residual,
        tol.tol_consist,
        format!("initial re-initialisation gap {:.3e}", s.initial_gap),
    ));
    let u_sup = res.closed.control()?.sup_norm();
    checks.push(Check::le("zu_certificate", s.zu_sup, tol.tol_opt * (1.0 + u_sup), String::new()));
    let j_rel = (s.j_feedback - s.j_min_formula).abs() / s.j_feedback.abs().max(f64::MIN_POSITIVE);
    checks.push(Check::le(
        "minimum_cost_formula",
        j_rel,
        1e-3,
        format!("J_feedback {:.6e}, J_min {:.6e}", s.j_feedback, s.j_min_formula),
    ));
    let x_sup = res.closed.x.iter().map(|x| x.amax()).fold(0.0, f64::max);
    checks.push(Check::le(
        "optimality_restart",
        s.restart_deviation.max(),
        1e-5 * (1.0 + x_sup),
        format!("restart at t = {}", s.restart_deviation.t_restart),
    ));

    if let Some(d) = s.picard_feedback_distance {
        checks.push(Check::le(
            "picard_fixed_point",
            d,
            1e-4 * u_sup,
            format!("{} iterations", s.picard_iterations.unwrap_or(0)),
        ));
    }
    if let Some(fine) = &res.oracle {
        let n = fine.diagnostics.n_steps;
        let coarse = pl.oracle((n / 2).max(1))?;
        let gap_fine = (fine.cost - s.j_min_formula).abs();
        let gap_coarse = (coarse.cost - s.j_min_formula).abs();
        let ratio = gap_fine / gap_coarse.max(f64::MIN_POSITIVE);
        let tiny = gap_fine <= 1e-8 * s.j_min_formula.abs().max(1.0);
        checks.push(Check {
            name: "oracle_gap".into(),
            value: if tiny { 0.0 } else { ratio },
            tolerance: 0.75,
            pass: tiny || ratio <= 0.75,
            detail: format!(
                "gap {gap_coarse:.3e} at {} steps, {gap_fine:.3e} at {n} steps",
                coarse.diagnostics.n_steps
            ),
        });
    }
    if let Some(l) = &s.classic_lqr {
        checks.push(Check::le(
            "classic_lqr_agreement",
            l.gain_rel_error.max(l.cost_rel_error),
            1e-6,
            format!("gain {:.2e}, cost {:.2e}", l.gain_rel_error, l.cost_rel_error),
        ));
    }

    let failed = checks.iter().filter(|c| !c.pass).count();
    let report = Report {
        scenario: s.scenario.clone(),
        passed: checks.len() - failed,
        failed,
        checks,
    };
    Ok((res, report))
}
