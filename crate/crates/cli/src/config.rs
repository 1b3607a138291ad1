//! Experiment configuration: JSON schema and validation into core types.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qswitch_core::environment::EnvironmentChain;
use qswitch_core::linalg::StateVector;
use qswitch_core::models::{goldstein_model, poisson_swap_model};
use qswitch_core::nalgebra::DMatrix;
use qswitch_core::{tolerances, Complex64, ComplexMatrix, QuantumModel, Shocks};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Complex number as `[re, im]`.
pub type Pair = [f64; 2];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub initial: InitialSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Goldstein {
        j: f64,
        lambda: f64,
        hbar: f64,
    },
    PoissonSwap {
        e1: f64,
        e2: f64,
        lambda: f64,
        hbar: f64,
    },
    Explicit {
        n: usize,
        k: usize,
        hbar: f64,
        lambda: Vec<f64>,
        q: Vec<Vec<f64>>,
        hamiltonians: Vec<Vec<Pair>>,
        #[serde(default)]
        shocks: ShockSpec,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShockSpec {
    #[default]
    Identity,
    Constant {
        matrix: Vec<Pair>,
    },
    PerTransition {
        transitions: Vec<TransitionShock>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionShock {
    pub from: usize,
    pub to: usize,
    pub matrix: Vec<Pair>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoSpec {
    Shared(Vec<Pair>),
    PerState(Vec<Vec<Pair>>),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub rho: Option<RhoSpec>,
    #[serde(default)]
    pub psi: Option<Vec<Pair>>,
    #[serde(default)]
    pub env_distribution: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default)]
    pub t_start: f64,
    #[serde(default)]
    pub t_stop: f64,
    /// Number of grid intervals; the grid has `steps + 1` points.
    #[serde(default)]
    pub steps: usize,
    /// Explicit grid, used instead of `t_start`/`t_stop`/`steps`.
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub observables: BTreeMap<String, Vec<Pair>>,
    #[serde(default)]
    pub laplace_s: Vec<Pair>,
}

fn default_samples() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

/// Which canned model a configuration names, for model-specific checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Canned {
    Goldstein { lambda: f64 },
    PoissonSwap { lambda: f64 },
    None,
}

/// A configuration whose payloads all passed validation.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: QuantumModel,
    pub canned: Canned,
    pub rho0: Vec<ComplexMatrix>,
    pub distribution: Vec<f64>,
    pub grid: Vec<f64>,
    pub observables: Vec<(String, ComplexMatrix)>,
    pub laplace_s: Vec<Complex64>,
    pub n_samples: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
}

fn invalid(path: &str, message: impl std::fmt::Display) -> CliError {
    CliError::validation(format!("{path}: {message}"))
}

fn at(path: &str) -> impl Fn(qswitch_core::Error) -> CliError + '_ {
    move |e| invalid(path, e)
}

fn parse_matrix(path: &str, n: usize, pairs: &[Pair]) -> Result<ComplexMatrix, CliError> {
    if pairs.len() != n * n {
        return Err(invalid(path, format!("expected {} entries for a {n}x{n} matrix, found {}", n * n, pairs.len())));
    }
    if pairs.iter().flatten().any(|x| !x.is_finite()) {
        return Err(invalid(path, "entries must be finite"));
    }
    let entries: Vec<Complex64> = pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect();
    ComplexMatrix::from_row_major(n, &entries).map_err(at(path))
}

fn parse_hermitian(path: &str, n: usize, pairs: &[Pair]) -> Result<ComplexMatrix, CliError> {
    let m = parse_matrix(path, n, pairs)?;
    m.ensure_hermitian(tolerances::HERMITIAN).map_err(at(path))?;
    Ok(m)
}

fn build_model(spec: &ModelSpec) -> Result<(QuantumModel, Canned), CliError> {
    match *spec {
        ModelSpec::Goldstein { j, lambda, hbar } => {
            check_scalar("model.j", j)?;
            let model = goldstein_model(j, lambda, hbar).map_err(at("model"))?;
            Ok((model, Canned::Goldstein { lambda }))
        }
        ModelSpec::PoissonSwap { e1, e2, lambda, hbar } => {
            check_scalar("model.e1", e1)?;
            check_scalar("model.e2", e2)?;
            let model = poisson_swap_model(e1, e2, lambda, hbar).map_err(at("model"))?;
            Ok((model, Canned::PoissonSwap { lambda }))
        }
        ModelSpec::Explicit { n, k, hbar, ref lambda, ref q, ref hamiltonians, ref shocks } => {
            if n == 0 || k == 0 {
                return Err(invalid("model", "n and k must be positive"));
            }
            if lambda.len() != k {
                return Err(invalid("model.lambda", format!("expected {k} rates, found {}", lambda.len())));
            }
            if q.len() != k || q.iter().any(|row| row.len() != k) {
                return Err(invalid("model.q", format!("expected a {k}x{k} matrix")));
            }
            let jumps = DMatrix::from_fn(k, k, |r, c| q[r][c]);
            let chain = EnvironmentChain::new(lambda, &jumps).map_err(at("model.q"))?;
            if hamiltonians.len() != k {
                return Err(invalid("model.hamiltonians", format!("expected {k} matrices, found {}", hamiltonians.len())));
            }
            let hams = hamiltonians
                .iter()
                .enumerate()
                .map(|(i, h)| parse_hermitian(&format!("model.hamiltonians[{i}]"), n, h))
                .collect::<Result<Vec<_>, _>>()?;
            let shocks = match shocks {
                ShockSpec::Identity => Shocks::Constant(ComplexMatrix::identity(n)),
                ShockSpec::Constant { matrix } => {
                    let path = "model.shocks.matrix";
                    let v = parse_matrix(path, n, matrix)?;
                    v.ensure_unitary(tolerances::UNITARY).map_err(at(path))?;
                    Shocks::Constant(v)
                }
                ShockSpec::PerTransition { transitions } => {
                    let mut map = BTreeMap::new();
                    for (i, t) in transitions.iter().enumerate() {
                        let path = format!("model.shocks.transitions[{i}]");
                        if t.from >= k || t.to >= k {
                            return Err(invalid(&path, format!("transition ({}, {}) out of range", t.from, t.to)));
                        }
                        let v = parse_matrix(&format!("{path}.matrix"), n, &t.matrix)?;
                        v.ensure_unitary(tolerances::UNITARY).map_err(at(&path))?;
                        if map.insert((t.from, t.to), v).is_some() {
                            return Err(invalid(&path, format!("duplicate transition ({}, {})", t.from, t.to)));
                        }
                    }
                    Shocks::PerTransition(map)
                }
            };
            let model = QuantumModel::new(chain, hams, shocks, hbar).map_err(at("model"))?;
            model.check_shock_coverage().map_err(at("model.shocks"))?;
            Ok((model, Canned::None))
        }
    }
}

fn check_scalar(path: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, "must be finite"))
    }
}

fn build_initial(spec: &InitialSpec, model: &QuantumModel) -> Result<(Vec<ComplexMatrix>, Vec<f64>), CliError> {
    let (n, k) = (model.dim(), model.states());
    let check_density = |path: &str, rho: ComplexMatrix| -> Result<ComplexMatrix, CliError> {
        rho.ensure_density(tolerances::DENSITY).map_err(at(path))?;
        Ok(rho)
    };
    let rho0 = match (&spec.rho, &spec.psi) {
        (Some(_), Some(_)) => return Err(invalid("initial", "give either rho or psi, not both")),
        (None, None) => return Err(invalid("initial", "one of rho or psi is required")),
        (None, Some(psi)) => {
            let path = "initial.psi";
            if psi.len() != n {
                return Err(invalid(path, format!("expected {n} amplitudes, found {}", psi.len())));
            }
            let v = StateVector::from_iterator(n, psi.iter().map(|p| Complex64::new(p[0], p[1])));
            if !((v.norm() - 1.0).abs() <= tolerances::STATE_NORM) {
                return Err(invalid(path, format!("state has norm {}, expected 1", v.norm())));
            }
            vec![ComplexMatrix::outer(&v); k]
        }
        (Some(RhoSpec::Shared(m)), None) => {
            let rho = check_density("initial.rho", parse_matrix("initial.rho", n, m)?)?;
            vec![rho; k]
        }
        (Some(RhoSpec::PerState(ms)), None) => {
            if ms.len() != k {
                return Err(invalid("initial.rho", format!("expected {k} matrices, found {}", ms.len())));
            }
            ms.iter()
                .enumerate()
                .map(|(i, m)| {
                    let path = format!("initial.rho[{i}]");
                    check_density(&path, parse_matrix(&path, n, m)?)
                })
                .collect::<Result<_, _>>()?
        }
    };
    let distribution = match &spec.env_distribution {
        None => vec![1.0 / k as f64; k],
        Some(p) => {
            let path = "initial.env_distribution";
            if p.len() != k {
                return Err(invalid(path, format!("expected {k} weights, found {}", p.len())));
            }
            if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(invalid(path, "weights must be finite and non-negative"));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > tolerances::ROW_SUM {
                return Err(invalid(path, format!("weights sum to {total}, expected 1")));
            }
            p.clone()
        }
    };
    Ok((rho0, distribution))
}

fn build_grid(run: &RunSpec) -> Result<Vec<f64>, CliError> {
    if let Some(times) = &run.times {
        let mut prev = 0.0;
        for (i, &t) in times.iter().enumerate() {
            if !(t.is_finite() && t >= prev) {
                return Err(invalid(&format!("run.times[{i}]"), "times must be finite, non-negative and non-decreasing"));
            }
            prev = t;
        }
        return Ok(times.clone());
    }
    let (a, b) = (run.t_start, run.t_stop);
    if !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= a) {
        return Err(invalid("run", format!("need 0 <= t_start <= t_stop, found [{a}, {b}]")));
    }
    if run.steps == 0 {
        return Err(invalid("run.steps", "must be at least 1 (or give run.times)"));
    }
    Ok((0..=run.steps).map(|i| a + (b - a) * i as f64 / run.steps as f64).collect())
}

impl Experiment {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("invalid config {}: {e}", path.display())))?;
        Self::from_config(config, overrides)
    }

    pub fn from_config(config: ExperimentConfig, overrides: &Overrides) -> Result<Self, CliError> {
        let (model, canned) = build_model(&config.model)?;
        let (rho0, distribution) = build_initial(&config.initial, &model)?;
        let grid = build_grid(&config.run)?;
        let observables = config
            .run
            .observables
            .iter()
            .map(|(name, m)| Ok((name.clone(), parse_hermitian(&format!("run.observables.{name}"), model.dim(), m)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        let laplace_s = config
            .run
            .laplace_s
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p[0] > 0.0 && p[0].is_finite() && p[1].is_finite() {
                    Ok(Complex64::new(p[0], p[1]))
                } else {
                    Err(invalid(&format!("run.laplace_s[{i}]"), "real part must be positive"))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let n_samples = overrides.samples.unwrap_or(config.run.n_samples);
        if n_samples == 0 {
            return Err(invalid("run.n_samples", "must be at least 1"));
        }
        let seed = overrides.seed.unwrap_or(config.run.seed);
        let out_dir = overrides.out.clone().unwrap_or_else(|| config.outputs.dir.clone());
        Ok(Self {
            config,
            model,
            canned,
            rho0,
            distribution,
            grid,
            observables,
            laplace_s,
            n_samples,
            seed,
            out_dir,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn goldstein_json(extra_initial: &str) -> String {
        format!(
            r#"{{
                "model": {{"kind": "goldstein", "j": 1.0, "lambda": 0.5, "hbar": 1.0}},
                "initial": {{{extra_initial}}},
                "run": {{"t_stop": 1.0, "steps": 4, "seed": 3}}
            }}"#
        )
    }

    fn load(json: &str) -> Result<Experiment, CliError> {
        Experiment::from_config(serde_json::from_str(json).unwrap(), &Overrides::default())
    }

    #[test]
    fn canned_config_loads() {
        let e = load(&goldstein_json(r#""psi": [[0.7071067811865476, 0], [0.7071067811865476, 0]]"#)).unwrap();
        assert_eq!(e.grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(e.rho0.len(), 2);
        assert_eq!(e.distribution, vec![0.5, 0.5]);
        assert_eq!(e.seed, 3);
        assert_eq!(e.n_samples, 1000);
    }

    #[test]
    fn overrides_win() {
        let config = serde_json::from_str(&goldstein_json(r#""rho": [[1,0],[0,0],[0,0],[0,0]]"#)).unwrap();
        let o = Overrides { seed: Some(9), samples: Some(5), out: Some("x".into()) };
        let e = Experiment::from_config(config, &o).unwrap();
        assert_eq!((e.seed, e.n_samples, e.out_dir), (9, 5, PathBuf::from("x")));
    }

    #[test]
    fn violations_name_the_field() {
        let err = load(&goldstein_json(r#""psi": [[1, 0], [1, 0]]"#)).unwrap_err();
        assert!(err.message.starts_with("initial.psi"), "{}", err.message);
        let err = load(&goldstein_json(r#""rho": [[0.5,0],[0,0],[0,0],[0.6,0]]"#)).unwrap_err();
        assert!(err.message.starts_with("initial.rho"), "{}", err.message);
        let err = load(&goldstein_json(r#""rho": [[1,0],[0,0],[0,0],[0,0]], "env_distribution": [0.5, 0.6]"#)).unwrap_err();
        assert!(err.message.starts_with("initial.env_distribution"), "{}", err.message);
    }

    #[test]
    fn explicit_model_validation() {
        let base = |h1: &str, shocks: &str| {
            format!(
                r#"{{
                    "model": {{"kind": "explicit", "n": 2, "k": 2, "hbar": 1.0, "lambda": [1.0, 2.0],
                              "q": [[0, 1], [1, 0]],
                              "hamiltonians": [[[1,0],[0,0],[0,0],[-1,0]], {h1}],
                              "shocks": {shocks}}},
                    "initial": {{"rho": [[1,0],[0,0],[0,0],[0,0]]}},
                    "run": {{"t_stop": 1.0, "steps": 2}}
                }}"#
            )
        };
        let good_h = "[[0,0],[1,0],[1,0],[0,0]]";
        assert!(load(&base(good_h, r#"{"kind": "identity"}"#)).is_ok());
        let err = load(&base("[[0,0],[1,0],[0,0],[0,0]]", r#"{"kind": "identity"}"#)).unwrap_err();
        assert!(err.message.starts_with("model.hamiltonians[1]"), "{}", err.message);
        let err = load(&base(good_h, r#"{"kind": "constant", "matrix": [[1,0],[0,0],[0,0],[2,0]]}"#)).unwrap_err();
        assert!(err.message.starts_with("model.shocks.matrix"), "{}", err.message);
        let partial = r#"{"kind": "per_transition", "transitions": [{"from": 0, "to": 1, "matrix": [[0,0],[1,0],[1,0],[0,0]]}]}"#;
        let err = load(&base(good_h, partial)).unwrap_err();
        assert!(err.message.starts_with("model.shocks"), "{}", err.message);
    }

    #[test]
    fn explicit_times_may_be_empty() {
        let json = r#"{
            "model": {"kind": "poisson_swap", "e1": 1.0, "e2": -1.0, "lambda": 0.7, "hbar": 1.0},
            "initial": {"rho": [[1,0],[0,0],[0,0],[0,0]]},
            "run": {"times": []}
        }"#;
        assert!(load(json).unwrap().grid.is_empty());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{"model": {"kind": "goldstein", "j": 1, "lambda": 1, "hbar": 1, "x": 2},
                       "initial": {"rho": [[1,0],[0,0],[0,0],[0,0]]}, "run": {"t_stop": 1, "steps": 1}}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
    }
}
