//! Task orchestration: each subcommand builds its inputs from the config,
//! calls into devrate-core, and renders artifacts. Build-stage failures are
//! config errors; failures inside the numerics are task errors.

use serde::Serialize;

use devrate_core::decompose::{autocorrelation_ia, decompose, friction_sweep};
use devrate_core::grid::Mesh;
use devrate_core::lyapunov::{
    check_kappa_admissible, check_nonlinear_condition, cramer_comparison, default_radii,
    langevin_lyapunov_params,
};
use devrate_core::model::DiffusionModel;
use devrate_core::ratefn::{legendre_transform_grid, RateValue};
use devrate_core::scgf::{
    box_doubling_sensitivity, horizon_doubling_diagnostic, scgf_cloning, scgf_monte_carlo,
    scgf_spectral, AdmissibilityGate, Integrator,
};
use devrate_core::field::ScalarField;

use crate::config::{
    build_mesh, build_model, parse_position_potential, resolve_autocorr_params,
    resolve_cloning_params, resolve_decompose_params, resolve_sim_params, resolve_spectral_params,
    ExperimentConfig, ScgfConfig,
};
use crate::output::{fmt_sig, line_plot, Artifact, CsvTable, Series};
use crate::CliError;

fn task_err(e: devrate_core::DevrateError) -> CliError {
    CliError::Task(e.to_string())
}

fn need<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    section
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("missing [{name}] section in config")))
}

fn need_mesh(cfg: &ExperimentConfig, model: &DiffusionModel) -> Result<Mesh, CliError> {
    build_mesh(need(&cfg.mesh, "mesh")?, model.dim)
}

struct CurveRow {
    theta: f64,
    lambda: f64,
    stderr: f64,
    method: &'static str,
}

/// Compute the SCGF curve by the configured route and return per-theta rows
/// sorted by theta, plus any method-specific diagnostic table.
fn compute_curve(
    cfg: &ExperimentConfig,
    model: &DiffusionModel,
    sc: &ScgfConfig,
    seed: u64,
) -> Result<(Vec<CurveRow>, Option<Artifact>), CliError> {
    if sc.thetas.is_empty() {
        return Err(CliError::Config("field `thetas` must not be empty".into()));
    }
    let f = model.parse_field(&sc.observable, "f").map_err(|e| {
        CliError::Config(format!("observable: {e}"))
    })?;
    let method = sc.method.as_deref().unwrap_or("spectral");
    let mut rows: Vec<CurveRow> = Vec::new();
    let mut diag: Option<Artifact> = None;
    match method {
        "spectral" => {
            let mesh = need_mesh(cfg, model)?;
            let params = resolve_spectral_params(sc);
            let gate = if sc.skip_gate {
                None
            } else {
                Some(AdmissibilityGate::for_observable(model, &f).map_err(task_err)?)
            };
            let curve = scgf_spectral(model, &mesh, &f, &sc.thetas, gate.as_ref(), &params)
                .map_err(task_err)?;
            for p in &curve.points {
                rows.push(CurveRow {
                    theta: p.theta,
                    lambda: p.lambda,
                    stderr: 0.0,
                    method: "spectral",
                });
            }
            if sc.box_doubling {
                let mut t = CsvTable::new("theta,lambda,lambda_doubled,delta");
                for &theta in &sc.thetas {
                    let r = box_doubling_sensitivity(model, &mesh, &f, theta, &params)
                        .map_err(task_err)?;
                    t.num_row(&[theta, r.lambda, r.lambda_doubled, r.delta]);
                }
                diag = Some(t.into_artifact("scgf_diagnostics.csv"));
            }
        }
        "monte_carlo" => {
            let params = resolve_sim_params(sc, model.dim, seed);
            let n = sc.n_replicas.unwrap_or(200);
            let ests = scgf_monte_carlo(model, &f, &sc.thetas, Integrator::Auto, &params, n)
                .map_err(task_err)?;
            for e in &ests {
                rows.push(CurveRow {
                    theta: e.theta,
                    lambda: e.lambda,
                    stderr: e.stderr,
                    method: "monte_carlo",
                });
            }
            if sc.horizon_doubling {
                let mut t = CsvTable::new("theta,lambda,lambda_doubled,delta");
                for &theta in &sc.thetas {
                    let (short, long, delta) =
                        horizon_doubling_diagnostic(model, &f, theta, Integrator::Auto, &params, n)
                            .map_err(task_err)?;
                    t.num_row(&[theta, short.lambda, long.lambda, delta]);
                }
                diag = Some(t.into_artifact("scgf_diagnostics.csv"));
            }
        }
        "cloning" => {
            let base = resolve_cloning_params(sc, model.dim, seed);
            for (i, &theta) in sc.thetas.iter().enumerate() {
                let mut params = base.clone();
                // distinct stream per tilt so the grid stays independent
                params.seed = seed.wrapping_add(i as u64);
                let est = scgf_cloning(model, &f, theta, Integrator::Auto, &params)
                    .map_err(task_err)?;
                rows.push(CurveRow {
                    theta,
                    lambda: est.lambda,
                    stderr: est.stderr,
                    method: "cloning",
                });
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown scgf method `{other}`; expected spectral, monte_carlo or cloning"
            )))
        }
    }
    rows.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    Ok((rows, diag))
}

pub fn run_scgf(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Artifact>, CliError> {
    let model = build_model(&cfg.model)?;
    let sc = need(&cfg.scgf, "scgf")?;
    let (rows, diag) = compute_curve(cfg, &model, sc, seed)?;
    let mut table = CsvTable::new("theta,lambda,stderr,method");
    for r in &rows {
        table.row(&[fmt_sig(r.theta), fmt_sig(r.lambda), fmt_sig(r.stderr), r.method.into()]);
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.theta, r.lambda)).collect();
    let svg = line_plot(
        "scaled cumulant generating function",
        "theta",
        "lambda",
        &[Series { label: "lambda(theta)".into(), points }],
    );
    let mut out = vec![table.into_artifact("scgf.csv"), Artifact::new("scgf.svg", svg)];
    if let Some(d) = diag {
        out.push(d);
    }
    Ok(out)
}

pub fn run_rate(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Artifact>, CliError> {
    let model = build_model(&cfg.model)?;
    let sc = need(&cfg.scgf, "scgf")?;
    let rc = need(&cfg.rate, "rate")?;
    if !(rc.a_step > 0.0) {
        return Err(CliError::Config("field `a_step` must be positive".into()));
    }
    if rc.a_max < rc.a_min {
        return Err(CliError::Config("field `a_max` must not be below `a_min`".into()));
    }
    let (rows, _) = compute_curve(cfg, &model, sc, seed)?;
    let thetas: Vec<f64> = rows.iter().map(|r| r.theta).collect();
    let lambdas: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    let n_steps = ((rc.a_max - rc.a_min) / rc.a_step).round() as usize;
    let a_values: Vec<f64> = (0..=n_steps).map(|i| rc.a_min + i as f64 * rc.a_step).collect();
    let transformed =
        legendre_transform_grid(&thetas, &lambdas, &a_values).map_err(task_err)?;
    let mut table = CsvTable::new("a,I,is_infinite");
    let mut points = Vec::new();
    for (a, rv) in &transformed {
        let (value, unbounded) = match rv {
            RateValue::Finite(v) => (*v, false),
            RateValue::Unbounded { lower_bound, .. } => (*lower_bound, true),
        };
        table.row(&[fmt_sig(*a), fmt_sig(value), unbounded.to_string()]);
        points.push((*a, value));
    }
    let svg = line_plot(
        "rate function (Legendre transform)",
        "a",
        "I(a)",
        &[Series { label: "I(a)".into(), points }],
    );
    Ok(vec![table.into_artifact("rate.csv"), Artifact::new("rate.svg", svg)])
}

#[derive(Serialize)]
struct ConfinementRecord {
    theta: f64,
    passed: bool,
    tail_ratio: f64,
    samples: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct WeightRecord {
    exponent: f64,
    exponent_stderr: f64,
    passed: bool,
    heavy_tail: bool,
    sup_generator_ratio: f64,
    sup_noise_log_gradient: f64,
}

#[derive(Serialize)]
struct TailRegimeRecord {
    growth_exponent: f64,
    witten_exponent: f64,
    class: String,
    witten_below_linear: bool,
}

#[derive(Serialize)]
struct KineticRecord {
    eta: f64,
    epsilon: f64,
    quadratic_gain: f64,
    momentum_gain: f64,
    offset: f64,
    halvings: u32,
}

#[derive(Serialize)]
struct LyapunovRecord {
    theta: f64,
    confinement: ConfinementRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    custom_weight: Option<WeightRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tail_regime: Option<TailRegimeRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kinetic_params: Option<KineticRecord>,
}

pub fn run_lyapunov(cfg: &ExperimentConfig, _seed: u64) -> Result<Vec<Artifact>, CliError> {
    let model = build_model(&cfg.model)?;
    let lc = need(&cfg.lyapunov, "lyapunov")?;
    let radii = lc.radii.clone().unwrap_or_else(default_radii);
    let dirs = lc.dirs_per_radius.unwrap_or(8);

    let report =
        check_nonlinear_condition(&model, lc.theta, &radii, dirs).map_err(task_err)?;

    let weight = match &lc.log_weight {
        Some(src) => {
            let lw = model
                .parse_field(src, "log_kappa")
                .map_err(|e| CliError::Config(format!("log_weight: {e}")))?;
            let k = check_kappa_admissible(&model, &lw, &radii, dirs).map_err(task_err)?;
            Some(WeightRecord {
                exponent: k.exponent,
                exponent_stderr: k.exponent_stderr,
                passed: k.passed,
                heavy_tail: k.heavy_tail,
                sup_generator_ratio: k.sup_generator_ratio,
                sup_noise_log_gradient: k.sup_noise_log_gradient,
            })
        }
        None => None,
    };

    let regime = match lc.growth_exponent {
        Some(q) => {
            let g = cramer_comparison(q).map_err(task_err)?;
            Some(TailRegimeRecord {
                growth_exponent: g.cramer_exponent,
                witten_exponent: g.witten_exponent,
                class: format!("{:?}", g.class),
                witten_below_linear: g.witten_below_linear,
            })
        }
        None => None,
    };

    let kinetic = match (lc.c_v, lc.big_c_v) {
        (Some(c_v), Some(big_c_v)) => {
            if cfg.model.kind != "langevin" {
                return Err(CliError::Config(
                    "fields `c_v`/`big_c_v` need a model of kind `langevin`".into(),
                ));
            }
            let gamma = cfg.model.gamma.unwrap_or(1.0);
            let p = langevin_lyapunov_params(c_v, big_c_v, gamma, lc.theta, 1)
                .map_err(task_err)?;
            Some(KineticRecord {
                eta: p.eta,
                epsilon: p.epsilon,
                quadratic_gain: p.quadratic_gain,
                momentum_gain: p.momentum_gain,
                offset: p.offset,
                halvings: p.halvings,
            })
        }
        (None, None) => None,
        _ => {
            return Err(CliError::Config(
                "fields `c_v` and `big_c_v` must be given together".into(),
            ))
        }
    };

    let mut txt = String::new();
    txt.push_str(&format!("confinement report at theta = {}\n", report.theta));
    txt.push_str(&format!(
        "  status: {}\n",
        if report.passed { "PASS" } else { "FAIL" }
    ));
    txt.push_str(&format!("  far-field tail ratio: {:.6e}\n", report.tail_ratio));
    txt.push_str("  worst drift-domination ratio per radius:\n");
    for (r, ratio) in &report.samples {
        txt.push_str(&format!("    r = {r:>8.2}: {ratio:.6e}\n"));
    }
    if let Some(w) = &weight {
        txt.push_str("custom weight\n");
        txt.push_str(&format!(
            "  growth exponent: {:.4} +- {:.4} ({})\n",
            w.exponent,
            w.exponent_stderr,
            if w.passed { "PASS" } else { "FAIL" }
        ));
        txt.push_str(&format!("  heavy tail: {}\n", w.heavy_tail));
        txt.push_str(&format!("  sup L kappa / kappa: {:.6e}\n", w.sup_generator_ratio));
        txt.push_str(&format!(
            "  sup |sigma^T grad log kappa|: {:.6e}\n",
            w.sup_noise_log_gradient
        ));
    }
    if let Some(t) = &regime {
        txt.push_str("tail regime\n");
        txt.push_str(&format!("  potential growth exponent: {}\n", t.growth_exponent));
        txt.push_str(&format!("  confinement weight exponent: {}\n", t.witten_exponent));
        txt.push_str(&format!("  class: {}\n", t.class));
        txt.push_str(&format!(
            "  weight grows slower than the observable: {}\n",
            t.witten_below_linear
        ));
    }
    if let Some(k) = &kinetic {
        txt.push_str("kinetic drift parameters\n");
        txt.push_str(&format!("  eta = {:.6}, epsilon = {:.6}\n", k.eta, k.epsilon));
        txt.push_str(&format!(
            "  gains: |q|^2 -> {:.6}, |p|^2 -> {:.6}, offset {:.6}\n",
            k.quadratic_gain, k.momentum_gain, k.offset
        ));
        txt.push_str(&format!("  dyadic halvings: {}\n", k.halvings));
    }

    let record = LyapunovRecord {
        theta: report.theta,
        confinement: ConfinementRecord {
            theta: report.theta,
            passed: report.passed,
            tail_ratio: report.tail_ratio,
            samples: report.samples.clone(),
        },
        custom_weight: weight,
        tail_regime: regime,
        kinetic_params: kinetic,
    };
    let json = serde_json::to_string_pretty(&record)
        .map_err(|e| CliError::Io(format!("record serialization: {e}")))?;

    let svg = line_plot(
        "drift domination by radius",
        "radius",
        "worst ratio",
        &[Series { label: "worst direction".into(), points: report.samples.clone() }],
    );

    Ok(vec![
        Artifact::new("lyapunov.txt", txt.into_bytes()),
        Artifact::new("lyapunov.json", json.into_bytes()),
        Artifact::new("lyapunov.svg", svg),
    ])
}

/// Sample a profile of node values along axis 0, other coordinates held at
/// the box midpoint.
fn axis_profile(mesh: &Mesh, values: &[f64]) -> Vec<(f64, f64)> {
    let mids: Vec<f64> = mesh.axes.iter().map(|a| 0.5 * (a.lo + a.hi)).collect();
    mesh.axis_nodes(0)
        .into_iter()
        .map(|x| {
            let mut p = mids.clone();
            p[0] = x;
            (x, mesh.interpolate(values, &p))
        })
        .collect()
}

pub fn run_decompose(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Artifact>, CliError> {
    let model = build_model(&cfg.model)?;
    let dc = need(&cfg.decompose, "decompose")?;
    let mesh = need_mesh(cfg, &model)?;
    let v = model
        .parse_field(&dc.perturbation, "v")
        .map_err(|e| CliError::Config(format!("perturbation: {e}")))?;
    let params = resolve_decompose_params(dc.cg_tol, dc.cg_max_iter, dc.compat_tol);
    let dec = decompose(&model, &mesh, &v, &params).map_err(task_err)?;

    let mut table = CsvTable::new(
        "IS,IA,I,IS_fisher,compatibility_defect,reference_defect,stationarity_residual,\
         n_components,cg_iterations,cg_residual",
    );
    table.row(&[
        fmt_sig(dec.i_s),
        fmt_sig(dec.i_a),
        fmt_sig(dec.i_total),
        fmt_sig(dec.i_s_fisher),
        fmt_sig(dec.compatibility_defect),
        fmt_sig(dec.reference_defect),
        fmt_sig(dec.stationarity_residual),
        dec.n_components.to_string(),
        dec.cg_iterations.to_string(),
        fmt_sig(dec.cg_residual),
    ]);

    let svg = line_plot(
        "decomposition fields along the first axis",
        &model.coords[0],
        "value",
        &[
            Series { label: "psi".into(), points: axis_profile(&mesh, &dec.psi) },
            Series { label: "current".into(), points: axis_profile(&mesh, &dec.current) },
        ],
    );

    let mut out =
        vec![table.into_artifact("decompose.csv"), Artifact::new("decompose.svg", svg)];

    if dc.autocorr {
        let s_axes: Vec<f64> = (0..model.dim).map(|a| model.axis_diffusion(a)).collect();
        let ac = autocorrelation_ia(
            &mesh,
            &s_axes,
            &dec.nu,
            &dec.current,
            &resolve_autocorr_params(dc, seed),
        )
        .map_err(task_err)?;
        let mut t = CsvTable::new("IA_autocorr,stderr,truncation_ratio,truncation_warning");
        t.row(&[
            fmt_sig(ac.value),
            fmt_sig(ac.stderr),
            fmt_sig(ac.truncation_ratio),
            ac.truncation_warning.to_string(),
        ]);
        out.push(t.into_artifact("decompose_autocorr.csv"));
    }
    Ok(out)
}

pub fn run_sweep(cfg: &ExperimentConfig, _seed: u64) -> Result<Vec<Artifact>, CliError> {
    let sw = need(&cfg.sweep, "sweep")?;
    if cfg.model.kind != "langevin" {
        return Err(CliError::Config(
            "sweep varies the friction of a kinetic model; set model kind `langevin`".into(),
        ));
    }
    let src = cfg
        .model
        .potential
        .as_deref()
        .ok_or_else(|| CliError::Config("model kind `langevin` needs `potential`".into()))?;
    let vq = parse_position_potential(src, 1)?;
    let mesh_cfg = need(&cfg.mesh, "mesh")?;
    let mesh = build_mesh(mesh_cfg, 2)?;
    if sw.gammas.is_empty() {
        return Err(CliError::Config("field `gammas` must not be empty".into()));
    }
    let e = devrate_core::expr::parse(&sw.perturbation, &["q", "p"])
        .map_err(|e| CliError::Config(format!("perturbation: {e}")))?;
    let v = ScalarField::from_expr(&e, 2, "v");
    let params = resolve_decompose_params(sw.cg_tol, sw.cg_max_iter, sw.compat_tol);
    let points =
        friction_sweep(&vq, &sw.gammas, &mesh, &|_| Ok(v.clone()), &params).map_err(task_err)?;

    let mut table = CsvTable::new("gamma,IS,IA,I,gamma_times_I,I_over_gamma");
    for p in &points {
        table.num_row(&[
            p.gamma,
            p.i_s,
            p.i_a,
            p.i_total,
            p.scaled_overdamped,
            p.scaled_underdamped,
        ]);
    }
    let over: Vec<(f64, f64)> = points.iter().map(|p| (p.gamma, p.scaled_overdamped)).collect();
    let under: Vec<(f64, f64)> = points.iter().map(|p| (p.gamma, p.scaled_underdamped)).collect();
    let svg = line_plot(
        "friction scaling of the rate",
        "gamma",
        "scaled rate",
        &[
            Series { label: "gamma * I".into(), points: over },
            Series { label: "I / gamma".into(), points: under },
        ],
    );
    Ok(vec![table.into_artifact("sweep.csv"), Artifact::new("sweep.svg", svg)])
}
