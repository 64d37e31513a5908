//! JSON configuration and its resolution into a concrete problem.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use pdae_lq::descriptor::DescriptorSystem;
use pdae_lq::fem::{assemble, ParabolicEllipticParams};
use pdae_lq::linalg::rank_split;
use pdae_lq::pipeline::{PipelineOptions, Tolerances};
use pdae_lq::scenarios::{self, Problem};
use pdae_lq::weierstrass::QuadraticWeights;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub weights: WeightsSpec,
    pub horizon: Horizon,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub semi_explicit: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Matrices {
        matrices: MatricesSpec,
        initial_state: Vec<f64>,
    },
    ParabolicElliptic {
        #[serde(default)]
        params: FemParams,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatricesSpec {
    #[serde(rename = "E")]
    pub e: MatrixSpec,
    #[serde(rename = "A")]
    pub a: MatrixSpec,
    #[serde(rename = "B")]
    pub b: MatrixSpec,
}

/// Row-major nested arrays, a CSV file reference or a named preset
/// (`identity`, `zero`, `mass`).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    File { csv: PathBuf },
    Preset(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    #[serde(rename = "Q", default)]
    pub q: Option<MatrixSpec>,
    #[serde(rename = "R", default)]
    pub r: Option<MatrixSpec>,
    #[serde(rename = "G", default)]
    pub g: Option<MatrixSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FemParams {
    pub rho: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_elements: usize,
}

impl Default for FemParams {
    fn default() -> Self {
        let d = ParabolicEllipticParams::default();
        Self {
            rho: d.rho,
            gamma: d.gamma,
            alpha: d.alpha,
            beta: d.beta,
            n_elements: d.n_elements,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    pub t_f: f64,
    #[serde(default = "default_nodes")]
    pub n_output_nodes: usize,
}

fn default_nodes() -> usize {
    601
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Checks {
    pub picard: bool,
    pub oracle: bool,
    pub oracle_steps: usize,
}

impl Default for Checks {
    fn default() -> Self {
        Self {
            picard: false,
            oracle: false,
            oracle_steps: 400,
        }
    }
}

/// Everything needed for one run.
#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: Problem,
    pub options: PipelineOptions,
    pub checks: Checks,
    pub output_dir: PathBuf,
}

pub fn load(path: &Path) -> CliResult<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl Config {
    pub fn resolve(&self, base_dir: &Path) -> CliResult<Setup> {
        let t_f = self.horizon.t_f;
        if !(t_f.is_finite() && t_f > 0.0) {
            return Err(CliError::Config(format!("horizon.t_f must be positive, got {t_f}")));
        }
        if self.horizon.n_output_nodes < 3 {
            return Err(CliError::Config("horizon.n_output_nodes must be at least 3".into()));
        }
        let problem = match &self.problem {
            ProblemSpec::Matrices { matrices, initial_state } => {
                let e = matrix(&matrices.e, base_dir, None, None)?;
                let n = e.ncols();
                let a = matrix(&matrices.a, base_dir, Some(n), None)?;
                let b = matrix(&matrices.b, base_dir, None, None)?;
                let system = DescriptorSystem::new(e, a, b)?;
                let x_i = DVector::from_vec(initial_state.clone());
                let weights = self.weights(&system, None, t_f, base_dir)?;
                Problem {
                    name: "matrices".into(),
                    system,
                    weights,
                    x_i,
                    fem: None,
                }
            }
            ProblemSpec::ParabolicElliptic { params } => {
                let p = ParabolicEllipticParams {
                    rho: params.rho,
                    gamma: params.gamma,
                    alpha: params.alpha,
                    beta: params.beta,
                    n_elements: params.n_elements,
                    t_f,
                };
                let assembled = assemble(&p)?;
                let weights = self.weights(&assembled.system, Some(&assembled.weights), t_f, base_dir)?;
                Problem {
                    name: "parabolic-elliptic".into(),
                    system: assembled.system,
                    weights,
                    x_i: assembled.x_i,
                    fem: Some(p),
                }
            }
        };
        let semi_explicit = if self.semi_explicit {
            Some(rank_split(problem.system.e(), self.tolerances.rank_tol).rank)
        } else {
            None
        };
        let mut options = PipelineOptions {
            tolerances: self.tolerances,
            n_output_nodes: self.horizon.n_output_nodes,
            semi_explicit,
            ..Default::default()
        };
        if let Some(seed) = self.seed {
            options.seed = seed;
        }
        Ok(Setup {
            problem,
            options,
            checks: self.checks,
            output_dir: self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
        })
    }

    fn weights(
        &self,
        sys: &DescriptorSystem,
        defaults: Option<&QuadraticWeights>,
        t_f: f64,
        base_dir: &Path,
    ) -> CliResult<QuadraticWeights> {
        let (n, m) = (sys.n_x(), sys.n_u());
        let pick = |spec: &Option<MatrixSpec>, default: Option<&DMatrix<f64>>, dim: usize, name: &str| {
            match (spec, default) {
                (Some(s), _) => matrix(s, base_dir, Some(dim), defaults.map(|d| &d.q)),
                (None, Some(d)) => Ok(d.clone()),
                (None, None) => Err(CliError::Config(format!("weights.{name} is required"))),
            }
        };
        let q = pick(&self.weights.q, defaults.map(|d| &d.q), n, "Q")?;
        let r = pick(&self.weights.r, defaults.map(|d| &d.r), m, "R")?;
        let g = match (&self.weights.g, defaults) {
            (None, None) => DMatrix::zeros(n, n),
            _ => pick(&self.weights.g, defaults.map(|d| &d.g), n, "G")?,
        };
        Ok(QuadraticWeights::new(q, r, g, t_f)?)
    }
}

/// Built-in scenario with its default checks and output directory.
pub fn scenario(name: &str) -> CliResult<Setup> {
    let problem = scenarios::by_name(name).ok_or_else(|| {
        CliError::Config(format!(
            "unknown scenario '{name}' (available: {})",
            scenarios::NAMES.join(", ")
        ))
    })??;
    let semi_explicit = problem.fem.map(|p| p.n_nodes());
    Ok(Setup {
        options: PipelineOptions {
            n_output_nodes: 601,
            semi_explicit,
            ..Default::default()
        },
        checks: Checks {
            picard: true,
            oracle: true,
            oracle_steps: 400,
        },
        output_dir: PathBuf::from("out").join(name),
        problem,
    })
}

/// Resolve a matrix spec. `square` fixes the size of presets; `mass` backs
/// the `mass` preset (`blockdiag(M, 0)` for the finite-element problem).
fn matrix(
    spec: &MatrixSpec,
    base_dir: &Path,
    square: Option<usize>,
    mass: Option<&DMatrix<f64>>,
) -> CliResult<DMatrix<f64>> {
    match spec {
        MatrixSpec::Rows(rows) => from_rows(rows),
        MatrixSpec::File { csv } => read_csv(&base_dir.join(csv)),
        MatrixSpec::Preset(name) => {
            let n = square.ok_or_else(|| CliError::Config(format!("preset '{name}' needs a known size")))?;
            match name.as_str() {
                "identity" => Ok(DMatrix::identity(n, n)),
                "zero" => Ok(DMatrix::zeros(n, n)),
                "mass" => mass
                    .cloned()
                    .ok_or_else(|| CliError::Config("preset 'mass' is only defined for parabolic-elliptic".into())),
                other => Err(CliError::Config(format!("unknown matrix preset '{other}'"))),
            }
        }
    }
}

fn from_rows(rows: &[Vec<f64>]) -> CliResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map(|row| row.len()).unwrap_or(0);
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Config("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn read_csv(path: &Path) -> CliResult<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| CliError::Config(format!("{}: bad number '{v}': {e}", path.display())))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_matrix_config() {
        let json = r#"{
            "problem": {"kind": "matrices",
                        "matrices": {"E": [[1,0],[0,0]], "A": [[-1,0],[0,-2]], "B": [[1],[1]]},
                        "initial_state": [1, 0]},
            "weights": {"Q": "identity", "R": [[1]]},
            "horizon": {"t_f": 6, "n_output_nodes": 101},
            "tolerances": {"tol_dre": 1e-7}
        }"#;
        let cfg: Config = serde_json::from_str(json).unwrap();
        let setup = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(setup.problem.system.n_x(), 2);
        assert_eq!(setup.options.tolerances.tol_dre, 1e-7);
        assert_eq!(setup.options.tolerances.tol_proj, 1e-8);
        assert_eq!(setup.problem.weights.g, DMatrix::zeros(2, 2));
    }

    #[test]
    fn parabolic_elliptic_defaults() {
        let json = r#"{"problem": {"kind": "parabolic-elliptic", "params": {"n_elements": 4}},
                       "horizon": {"t_f": 2}}"#;
        let cfg: Config = serde_json::from_str(json).unwrap();
        let setup = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(setup.problem.system.n_x(), 10);
        assert_eq!(setup.problem.weights.t_f, 2.0);
    }

    #[test]
    fn unknown_fields_rejected() {
        let json = r#"{"problem": {"kind": "parabolic-elliptic"}, "horizon": {"t_f": 2, "tf": 3}}"#;
        assert!(serde_json::from_str::<Config>(json).is_err());
        let json = r#"{"problem": {"kind": "parabolic-elliptic"}, "horizon": {"t_f": 2},
                       "tolerances": {"tol_typo": 1}}"#;
        assert!(serde_json::from_str::<Config>(json).is_err());
    }

    #[test]
    fn csv_matrices() {
        let dir = std::env::temp_dir().join(format!("pdae-lq-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("e.csv"), "1, 0\n0, 0\n").unwrap();
        let m = read_csv(&dir.join("e.csv")).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        std::fs::write(dir.join("bad.csv"), "1, x\n").unwrap();
        assert!(matches!(read_csv(&dir.join("bad.csv")), Err(CliError::Config(_))));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
