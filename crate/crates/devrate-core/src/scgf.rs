//! Scaled cumulant generating functions of ergodic time averages.
//!
//! Three routes to lambda(theta), the growth rate of E[exp(theta int_0^T f dt)]:
//!
//! * spectral: principal eigenvalue of the discretized tilted generator,
//! * direct Monte Carlo: log-mean of exponential path weights over replicas,
//! * cloning: population dynamics with systematic resampling per epoch.
//!
//! The spectral curve always contains the exact point (0, 0) and carries a
//! midpoint convexity certificate. The sampling routes report standard errors
//! and effective sample sizes; they are estimators, not oracles, and their
//! honesty diagnostics (ESS collapse, horizon doubling) are part of the API.

use crate::field::ScalarField;
use crate::grid::{assemble_generator, AxisSpec, Mesh};
use crate::lyapunov::{default_radii, sphere_directions, witten_potential_theta};
use crate::model::{DiffusionModel, ModelStructure};
use crate::spectral::principal_eigenpair;
use crate::{DevrateError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct ScgfPoint {
    pub theta: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct ScgfCurve {
    /// Sorted by theta; contains (0, 0) exactly when 0 was requested.
    pub points: Vec<ScgfPoint>,
    /// Smallest slope increment between consecutive chords; negative values
    /// beyond tolerance indicate a convexity violation.
    pub convexity_defect: f64,
}

impl ScgfCurve {
    pub fn new(mut points: Vec<ScgfPoint>) -> Self {
        points.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        let mut defect = f64::INFINITY;
        for w in points.windows(3) {
            let s0 = (w[1].lambda - w[0].lambda) / (w[1].theta - w[0].theta);
            let s1 = (w[2].lambda - w[1].lambda) / (w[2].theta - w[1].theta);
            defect = defect.min(s1 - s0);
        }
        if !defect.is_finite() {
            defect = 0.0;
        }
        ScgfCurve { points, convexity_defect: defect }
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.theta).collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    /// Fail if any chord-slope decrease exceeds the tolerance.
    pub fn verify_convexity(&self, tol: f64) -> Result<()> {
        if self.convexity_defect < -tol {
            let mut worst_theta = self.points[0].theta;
            let mut worst = f64::INFINITY;
            for w in self.points.windows(3) {
                let s0 = (w[1].lambda - w[0].lambda) / (w[1].theta - w[0].theta);
                let s1 = (w[2].lambda - w[1].lambda) / (w[2].theta - w[1].theta);
                if s1 - s0 < worst {
                    worst = s1 - s0;
                    worst_theta = w[1].theta;
                }
            }
            return Err(DevrateError::Convexity { theta: worst_theta, defect: worst });
        }
        Ok(())
    }
}

/// Tilt-window guard built from the Witten potential of the half-weight:
/// a tilt theta f is admitted while the witnessed tail ratio
/// |theta| sup |f| / Psi stays below one, the regime where the tilted
/// eigenproblem stays confined as the box grows.
#[derive(Debug, Clone)]
pub struct AdmissibilityGate {
    /// Witnessed sup of |f| / Psi over the far-field sample set.
    pub tail_ratio: f64,
    /// Radii actually used for the witness.
    pub radii: Vec<f64>,
}

impl AdmissibilityGate {
    pub fn for_observable(model: &DiffusionModel, f: &ScalarField) -> Result<AdmissibilityGate> {
        let psi = witten_potential_theta(model, 0.5)?;
        let all = default_radii();
        let radii: Vec<f64> = all.iter().copied().filter(|&r| r >= 16.0).collect();
        let dirs = sphere_directions(model.dim, 8);
        let mut ratio = 0.0f64;
        let mut witnessed = false;
        for &r in &radii {
            for d in &dirs {
                let x: Vec<f64> = d.iter().map(|c| c * r).collect();
                let p = psi.value(&x);
                let fv = f.value(&x).abs();
                if !p.is_finite() || !fv.is_finite() {
                    return Err(DevrateError::NumericRange(format!(
                        "observable or Witten potential not finite at radius {r}"
                    )));
                }
                if p > 0.0 {
                    ratio = ratio.max(fv / p);
                    witnessed = true;
                }
            }
        }
        if !witnessed {
            return Err(DevrateError::InvalidLyapunov(
                "Witten potential not positive anywhere on the far-field samples".into(),
            ));
        }
        Ok(AdmissibilityGate { tail_ratio: ratio, radii })
    }

    pub fn check(&self, theta: f64) -> Result<()> {
        let load = theta.abs() * self.tail_ratio;
        if load >= 1.0 {
            return Err(DevrateError::OutOfTheory(format!(
                "tilt {theta} drives the witnessed ratio to {load:.3} >= 1; \
                 the tilted generator is no longer dominated by the confinement"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SpectralParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SpectralParams {
    fn default() -> Self {
        SpectralParams { tol: 1e-13, max_iter: 300_000 }
    }
}

/// Spectral SCGF on a mesh. The point at theta = 0 is inserted exactly; other
/// points solve the tilted eigenproblem. When a gate is supplied every theta is
/// checked before any solve starts.
pub fn scgf_spectral(
    model: &DiffusionModel,
    mesh: &Mesh,
    f: &ScalarField,
    thetas: &[f64],
    gate: Option<&AdmissibilityGate>,
    params: &SpectralParams,
) -> Result<ScgfCurve> {
    if thetas.is_empty() {
        return Err(DevrateError::EmptyFamily);
    }
    if let Some(g) = gate {
        for &t in thetas {
            g.check(t)?;
        }
    }
    let l = assemble_generator(model, mesh)?;
    let fvals = mesh.sample(|x| f.value(x));
    if fvals.iter().any(|v| !v.is_finite()) {
        return Err(DevrateError::NumericRange("observable not finite on the mesh".into()));
    }
    let points: Result<Vec<ScgfPoint>> = thetas
        .par_iter()
        .map(|&theta| {
            if theta == 0.0 {
                return Ok(ScgfPoint { theta: 0.0, lambda: 0.0, iterations: 0, residual: 0.0 });
            }
            let tilt: Vec<f64> = fvals.iter().map(|v| theta * v).collect();
            let pair = principal_eigenpair(&l, &tilt, params.tol, params.max_iter)?;
            Ok(ScgfPoint { theta, lambda: pair.lambda, iterations: pair.iterations, residual: pair.residual })
        })
        .collect();
    Ok(ScgfCurve::new(points?))
}

#[derive(Debug, Clone)]
pub struct BoxDoublingReport {
    pub lambda: f64,
    pub lambda_doubled: f64,
    /// |lambda_doubled - lambda|: large values mean the eigenvalue is a box
    /// artifact, not a bulk quantity.
    pub delta: f64,
}

/// Re-solve on a box extended by half its width on each side at the same
/// spacing and report the eigenvalue shift. Periodic axes are left alone.
pub fn box_doubling_sensitivity(
    model: &DiffusionModel,
    mesh: &Mesh,
    f: &ScalarField,
    theta: f64,
    params: &SpectralParams,
) -> Result<BoxDoublingReport> {
    let base = scgf_spectral(model, mesh, f, &[theta], None, params)?;
    let doubled_axes: Vec<AxisSpec> = mesh
        .axes
        .iter()
        .map(|ax| {
            if ax.periodic {
                ax.clone()
            } else {
                let w = ax.hi - ax.lo;
                AxisSpec::linear(ax.lo - 0.5 * w, ax.hi + 0.5 * w, 2 * ax.n - 1)
            }
        })
        .collect();
    let mesh2 = Mesh::new(doubled_axes)?;
    let big = scgf_spectral(model, &mesh2, f, &[theta], None, params)?;
    let (l0, l1) = (base.points[0].lambda, big.points[0].lambda);
    Ok(BoxDoublingReport { lambda: l0, lambda_doubled: l1, delta: (l1 - l0).abs() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Pick BAOAB for kinetic models, Euler-Maruyama otherwise.
    Auto,
    EulerMaruyama,
    Baoab,
}

#[derive(Debug, Clone)]
pub struct SimParams {
    pub dt: f64,
    pub t_final: f64,
    pub x0: Vec<f64>,
    pub seed: u64,
    /// Sup-norm excursion treated as divergence of the discretization.
    pub blow_up_limit: f64,
}

enum Stepper {
    Em { sigma: Vec<f64>, m: usize },
    Baoab { potential: ScalarField, dq: usize, decay: f64, kick: f64 },
}

fn make_stepper(model: &DiffusionModel, integrator: Integrator, dt: f64) -> Result<Stepper> {
    let kinetic = matches!(model.structure, ModelStructure::Langevin { .. });
    let choice = match integrator {
        Integrator::Auto => {
            if kinetic {
                Integrator::Baoab
            } else {
                Integrator::EulerMaruyama
            }
        }
        other => other,
    };
    match choice {
        Integrator::Baoab => match &model.structure {
            ModelStructure::Langevin { potential, gamma, position_dim } => {
                let decay = (-gamma * dt).exp();
                Ok(Stepper::Baoab {
                    potential: potential.clone(),
                    dq: *position_dim,
                    decay,
                    kick: (1.0 - decay * decay).sqrt(),
                })
            }
            _ => Err(DevrateError::Config(
                "the splitting integrator requires a kinetic (position/momentum) model".into(),
            )),
        },
        _ => Ok(Stepper::Em { sigma: model.sigma().to_vec(), m: model.brownian_dim }),
    }
}

impl Stepper {
    fn advance(&self, model: &DiffusionModel, x: &mut [f64], dt: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        match self {
            Stepper::Em { sigma, m } => {
                let d = x.len();
                let b = model.drift.value(x);
                let sqdt = dt.sqrt();
                let noise: Vec<f64> = (0..*m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                for i in 0..d {
                    let mut dx = b[i] * dt;
                    for k in 0..*m {
                        dx += sigma[i * m + k] * sqdt * noise[k];
                    }
                    x[i] += dx;
                }
                Ok(())
            }
            Stepper::Baoab { potential, dq, decay, kick } => {
                let dq = *dq;
                let half = 0.5 * dt;
                let g = potential.gradient(&x[..dq])?;
                for i in 0..dq {
                    x[dq + i] -= half * g[i];
                }
                for i in 0..dq {
                    x[i] += half * x[dq + i];
                }
                for i in 0..dq {
                    let z: f64 = rng.sample(StandardNormal);
                    x[dq + i] = decay * x[dq + i] + kick * z;
                }
                for i in 0..dq {
                    x[i] += half * x[dq + i];
                }
                let g = potential.gradient(&x[..dq])?;
                for i in 0..dq {
                    x[dq + i] -= half * g[i];
                }
                Ok(())
            }
        }
    }
}

/// One path's ergodic average (1/T) int_0^T f(X_t) dt with trapezoid
/// accumulation. Returns (average, effective horizon).
pub fn simulate_time_average(
    model: &DiffusionModel,
    f: &ScalarField,
    integrator: Integrator,
    params: &SimParams,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    if params.x0.len() != model.dim {
        return Err(DevrateError::Config(format!(
            "initial state has dimension {}, model has {}",
            params.x0.len(),
            model.dim
        )));
    }
    let stepper = make_stepper(model, integrator, params.dt)?;
    let n_steps = (params.t_final / params.dt).round() as usize;
    if n_steps == 0 {
        return Err(DevrateError::Config("horizon shorter than one step".into()));
    }
    let mut x = params.x0.clone();
    let mut f_prev = f.value(&x);
    let mut acc = 0.0;
    for step in 0..n_steps {
        stepper.advance(model, &mut x, params.dt, rng)?;
        let worst = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if worst > params.blow_up_limit || !worst.is_finite() {
            return Err(DevrateError::BlowUp { time: (step + 1) as f64 * params.dt, limit: params.blow_up_limit });
        }
        let f_new = f.value(&x);
        acc += 0.5 * params.dt * (f_prev + f_new);
        f_prev = f_new;
    }
    let t_eff = n_steps as f64 * params.dt;
    Ok((acc / t_eff, t_eff))
}

#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    /// Occupation weights on the mesh nodes, normalized to sum 1.
    pub weights: Vec<f64>,
    /// Direct trapezoid accumulation of (1/T) int f along the same path.
    pub time_average: f64,
    pub t_final: f64,
}

impl EmpiricalMeasure {
    /// Integral of a node field against the occupation weights.
    pub fn mean(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// One path's occupation measure on the mesh, deposited multilinearly per
/// step, alongside the direct time average of f. The two agree on smooth f up
/// to interpolation error, which is the honest check that the histogram and
/// the accumulator describe the same trajectory.
pub fn simulate_empirical_measure(
    model: &DiffusionModel,
    mesh: &Mesh,
    f: &ScalarField,
    integrator: Integrator,
    params: &SimParams,
    rng: &mut ChaCha8Rng,
) -> Result<EmpiricalMeasure> {
    if params.x0.len() != model.dim {
        return Err(DevrateError::Config(format!(
            "initial state has dimension {}, model has {}",
            params.x0.len(),
            model.dim
        )));
    }
    let stepper = make_stepper(model, integrator, params.dt)?;
    let n_steps = (params.t_final / params.dt).round() as usize;
    if n_steps == 0 {
        return Err(DevrateError::Config("horizon shorter than one step".into()));
    }
    let mut x = params.x0.clone();
    let mut weights = vec![0.0; mesh.n_nodes()];
    let mut f_prev = f.value(&x);
    let mut acc = 0.0;
    mesh.deposit(&mut weights, &x, 0.5);
    for step in 0..n_steps {
        stepper.advance(model, &mut x, params.dt, rng)?;
        let worst = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if worst > params.blow_up_limit || !worst.is_finite() {
            return Err(DevrateError::BlowUp { time: (step + 1) as f64 * params.dt, limit: params.blow_up_limit });
        }
        let f_new = f.value(&x);
        acc += 0.5 * params.dt * (f_prev + f_new);
        f_prev = f_new;
        // trapezoid in time: interior visits carry full weight, the ends half
        let w = if step + 1 == n_steps { 0.5 } else { 1.0 };
        mesh.deposit(&mut weights, &x, w);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let t_eff = n_steps as f64 * params.dt;
    Ok(EmpiricalMeasure { weights, time_average: acc / t_eff, t_final: t_eff })
}

/// Independent replicas with one counter-based stream per replica: results do
/// not depend on thread scheduling. Returns the averages and the horizon.
pub fn time_average_samples(
    model: &DiffusionModel,
    f: &ScalarField,
    integrator: Integrator,
    params: &SimParams,
    n_replicas: usize,
) -> Result<(Vec<f64>, f64)> {
    if n_replicas == 0 {
        return Err(DevrateError::EmptyFamily);
    }
    let results: Result<Vec<(f64, f64)>> = (0..n_replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(i as u64);
            simulate_time_average(model, f, integrator, params, &mut rng)
        })
        .collect();
    let results = results?;
    let t = results[0].1;
    Ok((results.into_iter().map(|(a, _)| a).collect(), t))
}

#[derive(Debug, Clone)]
pub struct McEstimate {
    pub theta: f64,
    pub lambda: f64,
    /// Delta-method standard error of lambda.
    pub stderr: f64,
    /// Effective sample size of the exponential weights.
    pub ess: f64,
    pub n_replicas: usize,
    pub t_final: f64,
}

/// lambda estimates from existing time-average samples:
/// lambda = (1/T) log mean exp(theta T a_i), computed in log space.
pub fn scgf_monte_carlo_from_samples(samples: &[f64], t_final: f64, thetas: &[f64]) -> Result<Vec<McEstimate>> {
    if samples.is_empty() {
        return Err(DevrateError::EmptyFamily);
    }
    let n = samples.len();
    let mut out = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let logs: Vec<f64> = samples.iter().map(|a| theta * t_final * a).collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let sum: f64 = w.iter().sum();
        let mean = sum / n as f64;
        let lambda = (m + mean.ln()) / t_final;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        let stderr = (var / n as f64).sqrt() / mean / t_final;
        let sum_sq: f64 = w.iter().map(|v| v * v).sum();
        let ess = if sum_sq > 0.0 { sum * sum / sum_sq } else { 0.0 };
        out.push(McEstimate { theta, lambda, stderr, ess, n_replicas: n, t_final });
    }
    Ok(out)
}

pub fn scgf_monte_carlo(
    model: &DiffusionModel,
    f: &ScalarField,
    thetas: &[f64],
    integrator: Integrator,
    params: &SimParams,
    n_replicas: usize,
) -> Result<Vec<McEstimate>> {
    let (samples, t) = time_average_samples(model, f, integrator, params, n_replicas)?;
    scgf_monte_carlo_from_samples(&samples, t, thetas)
}

/// Run the direct estimator at T and 2T; the difference bounds neither bias
/// nor error but exposes horizon sensitivity honestly.
pub fn horizon_doubling_diagnostic(
    model: &DiffusionModel,
    f: &ScalarField,
    theta: f64,
    integrator: Integrator,
    params: &SimParams,
    n_replicas: usize,
) -> Result<(McEstimate, McEstimate, f64)> {
    let short = scgf_monte_carlo(model, f, &[theta], integrator, params, n_replicas)?;
    let mut long_params = params.clone();
    long_params.t_final = 2.0 * params.t_final;
    let long = scgf_monte_carlo(model, f, &[theta], integrator, &long_params, n_replicas)?;
    let delta = (long[0].lambda - short[0].lambda).abs();
    Ok((short[0].clone(), long[0].clone(), delta))
}

#[derive(Debug, Clone)]
pub struct CloningParams {
    pub n_clones: usize,
    pub epoch_dt: f64,
    pub n_epochs: usize,
    pub dt: f64,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub blow_up_limit: f64,
}

#[derive(Debug, Clone)]
pub struct CloningEstimate {
    pub theta: f64,
    pub lambda: f64,
    /// Block-averaged standard error over post-burn-in epochs.
    pub stderr: f64,
    pub min_ess: f64,
    pub n_clones: usize,
    pub epochs_used: usize,
    pub total_time: f64,
}

/// Population-dynamics estimator: evolve clones for an epoch, weight by the
/// exponential of the accumulated observable, record the log mean weight, and
/// resample systematically. The estimate is the time-averaged log growth over
/// post-burn-in epochs. An ESS below 2 is a degenerate population and an error.
pub fn scgf_cloning(
    model: &DiffusionModel,
    f: &ScalarField,
    theta: f64,
    integrator: Integrator,
    params: &CloningParams,
) -> Result<CloningEstimate> {
    let n = params.n_clones;
    if n < 2 {
        return Err(DevrateError::Config("cloning needs at least two clones".into()));
    }
    if params.n_epochs < 5 {
        return Err(DevrateError::Config("cloning needs at least five epochs".into()));
    }
    let steps_per_epoch = (params.epoch_dt / params.dt).round() as usize;
    if steps_per_epoch == 0 {
        return Err(DevrateError::Config("epoch shorter than one step".into()));
    }
    let stepper = make_stepper(model, integrator, params.dt)?;
    let mut states: Vec<Vec<f64>> = vec![params.x0.clone(); n];
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(params.seed);
            r.set_stream(i as u64);
            r
        })
        .collect();
    let mut resampler = ChaCha8Rng::seed_from_u64(params.seed);
    resampler.set_stream(n as u64);
    let mut log_growth = Vec::with_capacity(params.n_epochs);
    let mut min_ess = f64::INFINITY;
    for epoch in 0..params.n_epochs {
        let scores: Result<Vec<f64>> = states
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .map(|(x, rng)| {
                let mut f_prev = f.value(x);
                let mut acc = 0.0;
                for step in 0..steps_per_epoch {
                    stepper.advance(model, x, params.dt, rng)?;
                    let worst = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    if worst > params.blow_up_limit || !worst.is_finite() {
                        return Err(DevrateError::BlowUp {
                            time: (epoch * steps_per_epoch + step + 1) as f64 * params.dt,
                            limit: params.blow_up_limit,
                        });
                    }
                    let f_new = f.value(x);
                    acc += 0.5 * params.dt * (f_prev + f_new);
                    f_prev = f_new;
                }
                Ok(acc)
            })
            .collect();
        let scores = scores?;
        let logs: Vec<f64> = scores.iter().map(|s| theta * s).collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let sum: f64 = w.iter().sum();
        let sum_sq: f64 = w.iter().map(|v| v * v).sum();
        let ess = if sum_sq > 0.0 { sum * sum / sum_sq } else { 0.0 };
        min_ess = min_ess.min(ess);
        if ess < 2.0 {
            return Err(DevrateError::Degeneracy { ess });
        }
        log_growth.push(m + (sum / n as f64).ln());
        // systematic resampling with a single uniform offset
        let offset: f64 = resampler.gen::<f64>();
        let mut new_states = Vec::with_capacity(n);
        let mut cum = 0.0;
        let mut k = 0usize;
        for (i, wi) in w.iter().enumerate() {
            cum += wi / sum;
            while k < n && (offset + k as f64) / n as f64 <= cum {
                new_states.push(states[i].clone());
                k += 1;
            }
        }
        while new_states.len() < n {
            new_states.push(states[n - 1].clone());
        }
        states = new_states;
    }
    let burn = params.n_epochs / 5;
    let kept = &log_growth[burn..];
    if kept.len() < 4 {
        return Err(DevrateError::InsufficientWindow { points: kept.len() });
    }
    let total_time = kept.len() as f64 * params.epoch_dt;
    let lambda = kept.iter().sum::<f64>() / total_time;
    let n_blocks = kept.len().min(20).max(2);
    let block_len = kept.len() / n_blocks;
    let mut block_means = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let lo = b * block_len;
        let hi = if b + 1 == n_blocks { kept.len() } else { lo + block_len };
        let mean = kept[lo..hi].iter().sum::<f64>() / ((hi - lo) as f64 * params.epoch_dt);
        block_means.push(mean);
    }
    let bm = block_means.iter().sum::<f64>() / n_blocks as f64;
    let bvar = block_means.iter().map(|v| (v - bm) * (v - bm)).sum::<f64>() / (n_blocks as f64 - 1.0);
    let stderr = (bvar / n_blocks as f64).sqrt();
    Ok(CloningEstimate {
        theta,
        lambda,
        stderr,
        min_ess,
        n_clones: n,
        epochs_used: kept.len(),
        total_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model;

    #[test]
    fn curve_convexity_certificate() {
        let mk = |pts: &[(f64, f64)]| {
            ScgfCurve::new(
                pts.iter()
                    .map(|&(theta, lambda)| ScgfPoint { theta, lambda, iterations: 0, residual: 0.0 })
                    .collect(),
            )
        };
        let good = mk(&[(-1.0, 1.0), (0.0, 0.0), (1.0, 1.0), (2.0, 4.0)]);
        assert!(good.verify_convexity(1e-12).is_ok());
        let bad = mk(&[(0.0, 0.0), (1.0, 1.0), (2.0, 1.2)]);
        let err = bad.verify_convexity(1e-9);
        assert!(matches!(err, Err(DevrateError::Convexity { .. })));
    }

    #[test]
    fn gate_reproduces_quadratic_threshold() {
        // for V = x^2/2 and f = x^2 the admissible window is theta < 1/4
        let m = model::ou(1.0);
        let f = m.parse_field("x^2", "x2").unwrap();
        let gate = AdmissibilityGate::for_observable(&m, &f).unwrap();
        assert!(gate.check(0.2).is_ok());
        assert!(gate.check(0.3).is_err());
        assert!(gate.check(-0.3).is_err());
        // linear observables pass at any moderate tilt
        let fx = m.parse_field("x", "x").unwrap();
        let gate = AdmissibilityGate::for_observable(&m, &fx).unwrap();
        assert!(gate.check(1.0).is_ok());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let m = model::ou(1.0);
        let f = m.parse_field("x", "x").unwrap();
        let params = SimParams { dt: 0.01, t_final: 1.0, x0: vec![0.5], seed: 7, blow_up_limit: 1e6 };
        let (a, _) = time_average_samples(&m, &f, Integrator::Auto, &params, 8).unwrap();
        let (b, _) = time_average_samples(&m, &f, Integrator::Auto, &params, 8).unwrap();
        assert_eq!(a, b);
        // replicas differ from each other
        assert!((a[0] - a[1]).abs() > 1e-12);
    }

    #[test]
    fn unstable_drift_reports_blow_up() {
        let cubic = ScalarField::from_expr(&crate::expr::parse("x^3", &["x"]).unwrap(), 1, "cubic");
        let drift = crate::field::VectorField::new(vec![cubic]);
        let m = crate::model::DiffusionModel::custom(drift, vec![std::f64::consts::SQRT_2], 1, vec!["x".into()]);
        let f = ScalarField::coordinate(1, 0);
        let params = SimParams { dt: 0.01, t_final: 50.0, x0: vec![2.0], seed: 3, blow_up_limit: 1e6 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = simulate_time_average(&m, &f, Integrator::EulerMaruyama, &params, &mut rng);
        assert!(matches!(out, Err(DevrateError::BlowUp { .. })));
    }

    #[test]
    fn monte_carlo_log_space_matches_direct_small_weights() {
        let samples = vec![0.1, -0.2, 0.05, 0.3];
        let t = 2.0;
        let est = scgf_monte_carlo_from_samples(&samples, t, &[0.5]).unwrap();
        let direct: f64 = samples.iter().map(|a| (0.5 * t * a).exp()).sum::<f64>() / 4.0;
        assert!((est[0].lambda - direct.ln() / t).abs() < 1e-12);
        assert!(est[0].ess > 3.0 && est[0].ess <= 4.0);
    }

    #[test]
    fn cloning_runs_and_detects_degeneracy() {
        let m = model::ou(1.0);
        let f = m.parse_field("x", "x").unwrap();
        let params = CloningParams {
            n_clones: 16,
            epoch_dt: 0.2,
            n_epochs: 10,
            dt: 0.01,
            seed: 11,
            x0: vec![0.0],
            blow_up_limit: 1e6,
        };
        let est = scgf_cloning(&m, &f, 0.5, Integrator::Auto, &params).unwrap();
        assert!(est.lambda.is_finite());
        assert!(est.min_ess >= 2.0);
        // an absurd tilt collapses the population onto one clone
        let collapse = scgf_cloning(&m, &f, 500.0, Integrator::Auto, &params);
        assert!(matches!(collapse, Err(DevrateError::Degeneracy { .. })), "{collapse:?}");
    }
}
