//! CSV and JSON artifacts.

use std::fs;
use std::path::Path;

use pdae_lq::control::ControlSignal;
use pdae_lq::pipeline::Pipeline;
use pdae_lq::simulate::Trajectory;
use serde::Serialize;

use crate::CliResult;

/// 17 significant digits in scientific notation.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_table(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<f64>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.into_iter().map(fmt)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => crate::CliError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

/// `t,x_1..x_n,u_1..u_m`.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let (n, m) = (traj.x[0].len(), traj.u[0].len());
    let header = std::iter::once("t".to_string())
        .chain(names("x", n))
        .chain(names("u", m))
        .collect();
    let rows = traj.grid.nodes().iter().enumerate().map(|(k, &t)| {
        std::iter::once(t)
            .chain(traj.x[k].iter().cloned())
            .chain(traj.u[k].iter().cloned())
            .collect()
    });
    write_table(path, header, rows)
}

/// `t,u_1..u_m`.
pub fn write_control(path: &Path, u: &ControlSignal) -> CliResult<()> {
    let header = std::iter::once("t".to_string()).chain(names("u", u.n_u())).collect();
    let rows = u
        .grid()
        .nodes()
        .iter()
        .zip(u.values())
        .map(|(&t, v)| std::iter::once(t).chain(v.iter().cloned()).collect());
    write_table(path, header, rows)
}

/// `t,cost_to_go_xi,frobenius_Pit1` with `cost_to_go_xi = <E x_i, Pit1(t) E x_i>`.
pub fn write_riccati(path: &Path, pl: &Pipeline) -> CliResult<()> {
    let header = ["t", "cost_to_go_xi", "frobenius_Pit1"].map(String::from).to_vec();
    let ex = pl.system.e() * &pl.x_i;
    let rs = &pl.riccati;
    let rows = rs
        .grid()
        .nodes()
        .iter()
        .zip(&rs.pit1.values)
        .map(|(&t, p)| vec![t, ex.dot(&(p * &ex)), p.norm()]);
    write_table(path, header, rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
