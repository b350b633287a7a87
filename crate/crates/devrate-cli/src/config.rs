//! TOML experiment configs.
//!
//! One file describes one run: a model, a mesh, and a section per task that
//! needs parameters. Unknown keys are rejected so a typo cannot silently fall
//! back to a default, and a parsed config serializes back to an equal value.
//! Fields that tune a method rather than define the experiment are optional
//! and get their defaults at build time, in `resolve_*` below.

use serde::{Deserialize, Serialize};
use std::path::Path;

use devrate_core::decompose::{AutocorrParams, DecomposeParams};
use devrate_core::grid::{AxisSpec, Mesh};
use devrate_core::model::{self, DiffusionModel};
use devrate_core::scgf::{CloningParams, SimParams, SpectralParams};
use devrate_core::field::ScalarField;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scgf: Option<ScgfConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decompose: Option<DecomposeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// ou | quadratic_well | overdamped_quartic | rotating_well | langevin | gradient
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periodic: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScgfConfig {
    /// Expression in the model coordinates, e.g. "x" or "p^2/2 + q^2/2".
    pub observable: String,
    pub thetas: Vec<f64>,
    /// spectral | monte_carlo | cloning (default spectral).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// Bypass the far-field admissibility gate on the spectral route.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skip_gate: bool,
    /// Append a box-doubling sensitivity table (spectral only).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub box_doubling: bool,
    /// Append a horizon-doubling table (monte_carlo only).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub horizon_doubling: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_replicas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blow_up_limit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_clones: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eig_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eig_max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub a_min: f64,
    pub a_max: f64,
    pub a_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub theta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dirs_per_radius: Option<usize>,
    /// Expression for log kappa; when present the custom weight is checked too.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_weight: Option<String>,
    /// Potential growth exponent q for the tail-regime comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_exponent: Option<f64>,
    /// Convexity constants for the kinetic drift-parameter report; both must
    /// be present and the model must be of langevin kind.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub big_c_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeConfig {
    /// Expression for the log-density perturbation v in model coordinates.
    pub perturbation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compat_tol: Option<f64>,
    /// Also estimate the antisymmetric part from current autocorrelations.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub autocorr: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_corr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_measure: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Friction values; the kinetic model is rebuilt from the langevin model
    /// section at each one.
    pub gammas: Vec<f64>,
    /// Perturbation expression in the kinetic coordinates (q and p).
    pub perturbation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compat_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("in {}:\n{e}", path.display())))
}

fn cfg_err(context: &str, e: devrate_core::DevrateError) -> CliError {
    CliError::Config(format!("{context}: {e}"))
}

pub fn build_model(cfg: &ModelConfig) -> Result<DiffusionModel, CliError> {
    // reject parameters that the chosen kind would silently ignore
    let allowed: &[&str] = match cfg.kind.as_str() {
        "ou" => &["alpha"],
        "quadratic_well" => &["dim"],
        "overdamped_quartic" => &[],
        "rotating_well" => &["strength"],
        "langevin" => &["gamma", "potential"],
        "gradient" => &["dim", "potential"],
        other => {
            return Err(CliError::Config(format!(
                "unknown model kind `{other}`; expected ou, quadratic_well, overdamped_quartic, \
                 rotating_well, langevin or gradient"
            )))
        }
    };
    let given = [
        ("alpha", cfg.alpha.is_some()),
        ("dim", cfg.dim.is_some()),
        ("strength", cfg.strength.is_some()),
        ("gamma", cfg.gamma.is_some()),
        ("potential", cfg.potential.is_some()),
    ];
    for (name, present) in given {
        if present && !allowed.contains(&name) {
            return Err(CliError::Config(format!(
                "field `{name}` does not apply to model kind `{}`",
                cfg.kind
            )));
        }
    }
    match cfg.kind.as_str() {
        "ou" => Ok(model::ou(cfg.alpha.unwrap_or(1.0))),
        "quadratic_well" => Ok(model::quadratic_well(cfg.dim.unwrap_or(1))),
        "overdamped_quartic" => Ok(model::overdamped_quartic()),
        "rotating_well" => Ok(model::rotating_well(cfg.strength.unwrap_or(1.0))),
        "langevin" => {
            let src = cfg
                .potential
                .as_deref()
                .ok_or_else(|| CliError::Config("model kind `langevin` needs `potential`".into()))?;
            let v = parse_position_potential(src, 1)?;
            model::langevin(v, cfg.gamma.unwrap_or(1.0)).map_err(|e| cfg_err("model", e))
        }
        "gradient" => {
            let src = cfg
                .potential
                .as_deref()
                .ok_or_else(|| CliError::Config("model kind `gradient` needs `potential`".into()))?;
            let dim = cfg.dim.unwrap_or(1);
            let names = coord_names(dim);
            let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let e = devrate_core::expr::parse(src, &refs)
                .map_err(|e| cfg_err("model potential", e))?;
            let v = ScalarField::from_expr(&e, dim, "V");
            model::reversible_gradient(v).map_err(|e| cfg_err("model", e))
        }
        _ => unreachable!(),
    }
}

fn coord_names(dim: usize) -> Vec<String> {
    match dim {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        _ => (0..dim).map(|i| format!("x{i}")).collect(),
    }
}

/// Parse a potential over position coordinates only: `q` in one dimension,
/// `q0..` otherwise. Used by the langevin model and the friction sweep.
pub fn parse_position_potential(src: &str, dq: usize) -> Result<ScalarField, CliError> {
    let names: Vec<String> =
        if dq == 1 { vec!["q".into()] } else { (0..dq).map(|i| format!("q{i}")).collect() };
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let e = devrate_core::expr::parse(src, &refs).map_err(|e| cfg_err("potential", e))?;
    Ok(ScalarField::from_expr(&e, dq, "V"))
}

pub fn build_mesh(cfg: &MeshConfig, model_dim: usize) -> Result<Mesh, CliError> {
    let d = cfg.lo.len();
    if cfg.hi.len() != d || cfg.nodes.len() != d {
        return Err(CliError::Config(format!(
            "mesh arrays disagree on dimension: lo has {}, hi has {}, nodes has {}",
            cfg.lo.len(),
            cfg.hi.len(),
            cfg.nodes.len()
        )));
    }
    if d != model_dim {
        return Err(CliError::Config(format!(
            "mesh dimension {d} does not match model dimension {model_dim}"
        )));
    }
    if let Some(p) = &cfg.periodic {
        if p.len() != d {
            return Err(CliError::Config(format!(
                "mesh field `periodic` has {} entries for {d} axes",
                p.len()
            )));
        }
    }
    let axes: Vec<AxisSpec> = (0..d)
        .map(|i| {
            let periodic = cfg.periodic.as_ref().map_or(false, |p| p[i]);
            if periodic {
                AxisSpec::periodic(cfg.lo[i], cfg.hi[i], cfg.nodes[i])
            } else {
                AxisSpec::linear(cfg.lo[i], cfg.hi[i], cfg.nodes[i])
            }
        })
        .collect();
    Mesh::new(axes).map_err(|e| cfg_err("mesh", e))
}

pub fn resolve_spectral_params(cfg: &ScgfConfig) -> SpectralParams {
    let d = SpectralParams::default();
    SpectralParams {
        tol: cfg.eig_tol.unwrap_or(d.tol),
        max_iter: cfg.eig_max_iter.unwrap_or(d.max_iter),
    }
}

pub fn resolve_sim_params(cfg: &ScgfConfig, dim: usize, seed: u64) -> SimParams {
    SimParams {
        dt: cfg.dt.unwrap_or(1e-3),
        t_final: cfg.t_final.unwrap_or(50.0),
        x0: cfg.x0.clone().unwrap_or_else(|| vec![0.0; dim]),
        seed,
        blow_up_limit: cfg.blow_up_limit.unwrap_or(1e8),
    }
}

pub fn resolve_cloning_params(cfg: &ScgfConfig, dim: usize, seed: u64) -> CloningParams {
    CloningParams {
        n_clones: cfg.n_clones.unwrap_or(200),
        epoch_dt: cfg.epoch_dt.unwrap_or(0.5),
        n_epochs: cfg.n_epochs.unwrap_or(120),
        dt: cfg.dt.unwrap_or(1e-3),
        seed,
        x0: cfg.x0.clone().unwrap_or_else(|| vec![0.0; dim]),
        blow_up_limit: cfg.blow_up_limit.unwrap_or(1e8),
    }
}

pub fn resolve_decompose_params(
    cg_tol: Option<f64>,
    cg_max_iter: Option<usize>,
    compat_tol: Option<f64>,
) -> DecomposeParams {
    let d = DecomposeParams::default();
    DecomposeParams {
        cg_tol: cg_tol.unwrap_or(d.cg_tol),
        cg_max_iter: cg_max_iter.unwrap_or(d.cg_max_iter),
        compat_tol: compat_tol.unwrap_or(d.compat_tol),
    }
}

pub fn resolve_autocorr_params(cfg: &DecomposeConfig, seed: u64) -> AutocorrParams {
    AutocorrParams {
        t_corr: cfg.t_corr.unwrap_or(4.0),
        t_measure: cfg.t_measure.unwrap_or(400.0),
        dt: cfg.dt.unwrap_or(1e-2),
        n_paths: cfg.n_paths.unwrap_or(8),
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
[model]
kind = "ou"
alpha = 1.0

[mesh]
lo = [-8.0]
hi = [8.0]
nodes = [401]

[scgf]
observable = "x"
thetas = [-1.0, -0.5, 0.0, 0.5, 1.0]
method = "spectral"

[rate]
a_min = -1.5
a_max = 1.5
a_step = 0.1

[run]
seed = 7
out = "results"
"#;

    #[test]
    fn round_trips_losslessly() {
        let cfg: ExperimentConfig = toml::from_str(FULL).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let again: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let bad = FULL.replace("alpha = 1.0", "alpha = 1.0\nalphaa = 2.0");
        let err = toml::from_str::<ExperimentConfig>(&bad).unwrap_err();
        assert!(err.to_string().contains("alphaa"), "{err}");
    }

    #[test]
    fn missing_theta_grid_names_the_field() {
        let bad = FULL.replace("thetas = [-1.0, -0.5, 0.0, 0.5, 1.0]\n", "");
        let err = toml::from_str::<ExperimentConfig>(&bad).unwrap_err();
        assert!(err.to_string().contains("thetas"), "{err}");
    }

    #[test]
    fn irrelevant_model_parameter_is_rejected() {
        let cfg = ModelConfig {
            kind: "ou".into(),
            alpha: Some(1.0),
            dim: None,
            strength: None,
            gamma: Some(2.0),
            potential: None,
        };
        let err = build_model(&cfg).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
    }
}
