//! Confinement diagnostics built on multiplicative Lyapunov weights.
//!
//! For a positive weight kappa = e^u the quantity Psi = -L kappa / kappa
//! measures how strongly the dynamics pushes back against the weight. When Psi
//! grows at infinity the weighted semigroup is compact enough for a principal
//! eigenvalue to exist and for tilted expectations of observables dominated by
//! Psi to stay finite. Everything here reports witnessed quantities on explicit
//! probe families; nothing claims a global bound.

use crate::field::{probe_points, ScalarField};
use crate::model::{apply_generator, carre_du_champ, DiffusionModel, ModelStructure};
use crate::{DevrateError, Result};

/// The natural confining function of the model structure: the potential V for
/// gradient diffusions, the Hamiltonian V(q) + |p|^2/2 for Langevin models.
pub fn structure_potential(model: &DiffusionModel) -> Result<ScalarField> {
    match &model.structure {
        ModelStructure::ReversibleGradient { potential }
        | ModelStructure::NonreversibleGradient { potential, .. } => Ok(potential.clone()),
        ModelStructure::Langevin { potential, position_dim, .. } => {
            let dq = *position_dim;
            let dim = model.dim;
            let v = potential.clone();
            let v2 = potential.clone();
            let v3 = potential.clone();
            Ok(ScalarField::from_fn(dim, "hamiltonian", move |x| {
                v.value(&x[..dq]) + 0.5 * x[dq..].iter().map(|p| p * p).sum::<f64>()
            })
            .with_gradient(move |x| {
                let gv = v2.gradient(&x[..dq]).expect("position potential gradient");
                let mut g = vec![0.0; dim];
                g[..dq].copy_from_slice(&gv);
                g[dq..].copy_from_slice(&x[dq..]);
                g
            })
            .with_hessian(move |x| {
                let hv = v3.hessian(&x[..dq]).expect("position potential hessian");
                let mut h = vec![0.0; dim * dim];
                for i in 0..dq {
                    for j in 0..dq {
                        h[i * dim + j] = hv[i * dq + j];
                    }
                }
                for i in dq..dim {
                    h[i * dim + i] = 1.0;
                }
                h
            }))
        }
        ModelStructure::Custom => Err(DevrateError::OutOfTheory(
            "custom models carry no structural potential; supply a log-weight explicitly".into(),
        )),
    }
}

/// Psi = -L e^u / e^u evaluated through the log-weight u, so the weight itself
/// never overflows: L e^u = e^u (L u + C(u, u)).
pub fn witten_potential(model: &DiffusionModel, log_weight: &ScalarField) -> Result<ScalarField> {
    // fail early if u cannot be differentiated at all
    let origin = vec![0.0; model.dim];
    log_weight.gradient(&origin)?;
    let m = model.clone();
    let u = log_weight.clone();
    Ok(ScalarField::from_fn(model.dim, &format!("witten[{}]", log_weight.name), move |x| {
        let lu = apply_generator(&m, &u, x).expect("generator on log-weight");
        let cu = carre_du_champ(&m, &u, &u, x).expect("carre du champ on log-weight");
        -(lu + cu)
    }))
}

/// Psi for the weight exp(theta V) built on the structural potential.
pub fn witten_potential_theta(model: &DiffusionModel, theta: f64) -> Result<ScalarField> {
    let v = structure_potential(model)?;
    let u = ScalarField::product(&ScalarField::constant(model.dim, theta), &v);
    witten_potential(model, &u)
}

/// Deterministic unit directions: the coordinate axes both ways plus a
/// low-discrepancy fill. Always nonempty, always the same for a given request.
pub fn sphere_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut d = vec![0.0; dim];
            d[i] = sign;
            dirs.push(d);
        }
    }
    if dim > 1 {
        let lo = vec![-1.0; dim];
        let hi = vec![1.0; dim];
        for p in probe_points(dim, 3 * count, &lo, &hi) {
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.3 {
                dirs.push(p.iter().map(|v| v / norm).collect());
            }
            if dirs.len() >= 2 * dim + count {
                break;
            }
        }
    }
    dirs
}

pub fn default_radii() -> Vec<f64> {
    vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
}

#[derive(Debug, Clone)]
pub struct NonlinearConditionReport {
    pub theta: f64,
    /// (radius, worst ratio over directions); radii with vanishing noise
    /// signature in every direction are dropped.
    pub samples: Vec<(f64, f64)>,
    pub tail_ratio: f64,
    pub passed: bool,
}

/// Ratio check for the weight exp(theta V): the reported quantity is
/// (-L V - (theta/2) |sigma^T grad V|^2) / |sigma^T grad V|^2, whose liminf at
/// infinity must stay positive for the weighted compactness argument. For a
/// polynomially growing V of degree q the ratio tends to (1 - theta)/2.
pub fn check_nonlinear_condition(
    model: &DiffusionModel,
    theta: f64,
    radii: &[f64],
    dirs_per_radius: usize,
) -> Result<NonlinearConditionReport> {
    let v = structure_potential(model)?;
    let dirs = sphere_directions(model.dim, dirs_per_radius);
    let mut samples = Vec::new();
    for &r in radii {
        let mut worst: Option<f64> = None;
        for d in &dirs {
            let x: Vec<f64> = d.iter().map(|c| c * r).collect();
            let lv = apply_generator(model, &v, &x)?;
            let g2 = 2.0 * carre_du_champ(model, &v, &v, &x)?;
            if !lv.is_finite() || !g2.is_finite() {
                return Err(DevrateError::NumericRange(format!(
                    "generator or signature not finite at radius {r}"
                )));
            }
            if g2 <= 1e-12 * (1.0 + lv.abs()) {
                continue;
            }
            let ratio = (-lv - 0.5 * theta * g2) / g2;
            worst = Some(match worst {
                Some(w) => w.min(ratio),
                None => ratio,
            });
        }
        if let Some(w) = worst {
            samples.push((r, w));
        }
    }
    if samples.len() < 2 {
        return Err(DevrateError::InsufficientWindow { points: samples.len() });
    }
    let tail_ratio = samples[samples.len() - 1].1;
    let passed = samples[samples.len() - 2..].iter().all(|&(_, w)| w > 0.0);
    Ok(NonlinearConditionReport { theta, samples, tail_ratio, passed })
}

#[derive(Debug, Clone)]
pub struct KappaReport {
    /// Fitted growth exponent of Psi against the radius (log-log slope).
    pub exponent: f64,
    pub exponent_stderr: f64,
    /// Growth detected with a margin of at least twice the fit error.
    pub passed: bool,
    /// Psi grows slower than linearly; tilted moments of linear observables
    /// are then not controlled by this weight.
    pub heavy_tail: bool,
    /// Witnessed sup of L kappa / kappa over all evaluation points.
    pub sup_generator_ratio: f64,
    /// Witnessed sup of |sigma^T grad log kappa|.
    pub sup_noise_log_gradient: f64,
    /// (radius, worst-direction Psi) pairs entering the fit.
    pub samples: Vec<(f64, f64)>,
}

/// Admissibility scan for a candidate weight kappa = e^u given by its log u.
/// Requires at least four radii where the worst-direction Psi is positive.
pub fn check_kappa_admissible(
    model: &DiffusionModel,
    log_kappa: &ScalarField,
    radii: &[f64],
    dirs_per_radius: usize,
) -> Result<KappaReport> {
    let psi = witten_potential(model, log_kappa)?;
    let dirs = sphere_directions(model.dim, dirs_per_radius);
    let mut sup_gen = f64::NEG_INFINITY;
    let mut sup_grad = 0.0f64;
    let mut eval_at = |x: &[f64]| -> Result<f64> {
        let p = psi.value(x);
        if !p.is_finite() {
            return Err(DevrateError::NumericRange(format!("Psi not finite at {x:?}")));
        }
        let c = carre_du_champ(model, log_kappa, log_kappa, x)?;
        sup_gen = sup_gen.max(-p);
        sup_grad = sup_grad.max((2.0 * c).max(0.0).sqrt());
        Ok(p)
    };
    // core points contribute to the sup statistics but not to the growth fit
    eval_at(&vec![0.0; model.dim])?;
    for d in &dirs {
        let x: Vec<f64> = d.iter().map(|c| c * 1.0).collect();
        eval_at(&x)?;
    }
    let mut samples = Vec::new();
    for &r in radii {
        let mut worst: Option<f64> = None;
        for d in &dirs {
            let x: Vec<f64> = d.iter().map(|c| c * r).collect();
            let p = eval_at(&x)?;
            worst = Some(match worst {
                Some(w) => w.min(p),
                None => p,
            });
        }
        if let Some(w) = worst {
            samples.push((r, w));
        }
    }
    let fit: Vec<(f64, f64)> = samples
        .iter()
        .filter(|&&(_, w)| w > 0.0)
        .map(|&(r, w)| (r.ln(), w.ln()))
        .collect();
    if fit.len() < 4 {
        return Err(DevrateError::InsufficientWindow { points: fit.len() });
    }
    let n = fit.len() as f64;
    let mx = fit.iter().map(|p| p.0).sum::<f64>() / n;
    let my = fit.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = fit.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = fit.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = fit.iter().map(|p| {
        let pred = my + slope * (p.0 - mx);
        (p.1 - pred) * (p.1 - pred)
    }).sum();
    let stderr = (ss_res / (n - 2.0) / sxx).sqrt();
    Ok(KappaReport {
        exponent: slope,
        exponent_stderr: stderr,
        passed: slope > 0.0 && slope >= 2.0 * stderr,
        heavy_tail: slope < 1.0,
        sup_generator_ratio: sup_gen,
        sup_noise_log_gradient: sup_grad,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailClass {
    SuperGaussian,
    Gaussian,
    SubGaussian,
}

#[derive(Debug, Clone)]
pub struct GrowthComparison {
    /// Growth exponent of the potential itself, governing the direct
    /// exponential-moment route.
    pub cramer_exponent: f64,
    /// Growth exponent 2(q - 1) of the Witten potential of exp(theta V).
    pub witten_exponent: f64,
    pub class: TailClass,
    /// 2(q - 1) < 1: the weight route controls less than linear observables.
    pub witten_below_linear: bool,
}

/// Compare the two confinement routes for a potential growing like |x|^q.
pub fn cramer_comparison(q: f64) -> Result<GrowthComparison> {
    if !(q > 1.0) {
        return Err(DevrateError::OutOfTheory(format!(
            "potential growth exponent must exceed 1 for ergodicity, got {q}"
        )));
    }
    let witten = 2.0 * (q - 1.0);
    let class = if (q - 2.0).abs() <= 1e-9 {
        TailClass::Gaussian
    } else if q > 2.0 {
        TailClass::SuperGaussian
    } else {
        TailClass::SubGaussian
    };
    Ok(GrowthComparison { cramer_exponent: q, witten_exponent: witten, class, witten_below_linear: witten < 1.0 })
}

#[derive(Debug, Clone)]
pub struct LangevinLyapunovParams {
    /// Coupling scale eta = c_V / gamma.
    pub eta: f64,
    /// Cross-term weight from the dyadic search.
    pub epsilon: f64,
    /// Coefficient in front of |q|^2 in the drift bound.
    pub quadratic_gain: f64,
    /// Coefficient in front of |p|^2 in the drift bound.
    pub momentum_gain: f64,
    /// Additive constant theta gamma d + epsilon C_V.
    pub offset: f64,
    pub halvings: u32,
}

fn langevin_gains(c_v: f64, gamma: f64, theta: f64, eta: f64, epsilon: f64) -> (f64, f64) {
    let a = epsilon * (c_v - eta * gamma / 2.0) - gamma * epsilon * epsilon;
    let b = theta * (1.0 - theta) * gamma - epsilon - gamma * epsilon / (2.0 * eta);
    (a, b)
}

/// Coupled-weight drift constants for the kinetic chain
/// W = exp(theta H + epsilon q.p): selects eta = c_V / gamma and the largest
/// epsilon on the dyadic ladder eta/10, eta/20, ... making both gains positive.
/// c_V and C_V are the convexity bounds q . grad V >= c_V |q|^2 - C_V.
pub fn langevin_lyapunov_params(
    c_v: f64,
    big_c_v: f64,
    gamma: f64,
    theta: f64,
    dim: usize,
) -> Result<LangevinLyapunovParams> {
    if !(c_v > 0.0) || !(gamma > 0.0) {
        return Err(DevrateError::OutOfTheory(format!(
            "need positive convexity and friction, got c_V = {c_v}, gamma = {gamma}"
        )));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(DevrateError::OutOfTheory(format!(
            "tilt parameter must lie strictly between 0 and 1, got {theta}"
        )));
    }
    let eta = c_v / gamma;
    let mut epsilon = eta / 10.0;
    for halvings in 0..200u32 {
        let (a, b) = langevin_gains(c_v, gamma, theta, eta, epsilon);
        if a > 0.0 && b > 0.0 {
            return Ok(LangevinLyapunovParams {
                eta,
                epsilon,
                quadratic_gain: a,
                momentum_gain: b,
                offset: theta * gamma * dim as f64 + epsilon * big_c_v,
                halvings,
            });
        }
        epsilon /= 2.0;
    }
    Err(DevrateError::InvalidLyapunov(
        "no epsilon on the dyadic ladder makes both drift gains positive".into(),
    ))
}

/// Same constants with eta and epsilon supplied by the caller.
pub fn langevin_lyapunov_params_with(
    c_v: f64,
    big_c_v: f64,
    gamma: f64,
    theta: f64,
    dim: usize,
    eta: f64,
    epsilon: f64,
) -> Result<LangevinLyapunovParams> {
    let (a, b) = langevin_gains(c_v, gamma, theta, eta, epsilon);
    if !(a > 0.0 && b > 0.0) {
        return Err(DevrateError::InvalidLyapunov(format!(
            "gains not positive at eta = {eta}, epsilon = {epsilon}: a = {a}, b = {b}"
        )));
    }
    Ok(LangevinLyapunovParams {
        eta,
        epsilon,
        quadratic_gain: a,
        momentum_gain: b,
        offset: theta * gamma * dim as f64 + epsilon * big_c_v,
        halvings: 0,
    })
}

#[derive(Debug, Clone)]
pub struct RestrictionCertificate {
    /// Constant part of the witnessed bound |f| <= bounded_part + tail_ratio * max(Psi, 0).
    pub bounded_part: f64,
    pub tail_ratio: f64,
    pub probes: usize,
}

/// Witness constants dominating an observable by the Witten potential on a
/// probe family. The certificate holds on the probes by construction; it is a
/// witnessed bound, not a global proof.
pub fn restriction_certificate(
    observable: &ScalarField,
    psi: &ScalarField,
    lo: &[f64],
    hi: &[f64],
    n_probes: usize,
) -> Result<RestrictionCertificate> {
    let dim = observable.dim;
    let pts = probe_points(dim, n_probes, lo, hi);
    let mut vals = Vec::with_capacity(pts.len());
    for p in &pts {
        let f = observable.value(p).abs();
        let psi_v = psi.value(p);
        if !f.is_finite() || !psi_v.is_finite() {
            return Err(DevrateError::NumericRange(format!("observable or Psi not finite at {p:?}")));
        }
        vals.push((f, psi_v.max(0.0)));
    }
    let tail_ratio = vals
        .iter()
        .filter(|(_, p)| *p > 1.0)
        .map(|(f, p)| f / p)
        .fold(0.0f64, f64::max);
    let bounded_part = vals.iter().map(|(f, p)| f - tail_ratio * p).fold(0.0f64, f64::max);
    Ok(RestrictionCertificate { bounded_part, tail_ratio, probes: pts.len() })
}

#[derive(Debug, Clone)]
pub struct LyapunovReport {
    pub nonlinear: Vec<NonlinearConditionReport>,
    pub kappa: Option<KappaReport>,
    pub comparison: Option<GrowthComparison>,
    pub langevin: Option<LangevinLyapunovParams>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model;

    #[test]
    fn witten_closed_form_for_quadratic_potential() {
        // reversible V: Psi_theta = theta(1-theta)|grad V|^2 - theta Lap V
        let m = model::ou(1.0);
        let psi = witten_potential_theta(&m, 0.5).unwrap();
        for &x in &[-3.0, -1.0, 0.0, 0.5, 2.0] {
            let expect = 0.25 * x * x - 0.5;
            assert!((psi.value(&[x]) - expect).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn nonlinear_ratio_limit_quadratic() {
        let m = model::ou(1.0);
        let rep = check_nonlinear_condition(&m, 0.5, &default_radii(), 8).unwrap();
        assert!(rep.passed);
        // ratio = ((1-theta) x^2 - 1) / (2 x^2) -> 0.25
        assert!((rep.tail_ratio - 0.25).abs() < 1e-3, "tail {}", rep.tail_ratio);
    }

    #[test]
    fn nonlinear_ratio_limit_quartic() {
        let m = model::overdamped_quartic();
        let rep = check_nonlinear_condition(&m, 0.5, &default_radii(), 8).unwrap();
        assert!(rep.passed);
        assert!((rep.tail_ratio - 0.25).abs() < 1e-2, "tail {}", rep.tail_ratio);
    }

    #[test]
    fn nonlinear_ratio_fails_at_unit_theta() {
        // at theta = 1 the limit is 0: no positive margin survives
        let m = model::ou(1.0);
        let rep = check_nonlinear_condition(&m, 1.0, &default_radii(), 8).unwrap();
        assert!(!rep.passed || rep.tail_ratio < 1e-3);
    }

    #[test]
    fn kappa_gaussian_weight_admissible() {
        let m = model::ou(1.0);
        let u = m.parse_field("x^2/8", "log_kappa").unwrap(); // theta = 1/4
        let rep = check_kappa_admissible(&m, &u, &default_radii(), 8).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(!rep.heavy_tail);
        assert!((rep.exponent - 2.0).abs() < 0.2, "exponent {}", rep.exponent);
        // sup L kappa / kappa is attained at the origin and equals theta
        assert!((rep.sup_generator_ratio - 0.25).abs() < 1e-9);
    }

    #[test]
    fn kappa_polynomial_weight_flagged() {
        let m = model::ou(1.0);
        let u = m.parse_field("log(1 + x^2)", "log_kappa").unwrap();
        let rep = check_kappa_admissible(&m, &u, &default_radii(), 8).unwrap();
        assert!(rep.heavy_tail);
        assert!(rep.exponent < 0.5, "exponent {}", rep.exponent);
    }

    #[test]
    fn growth_regimes() {
        assert_eq!(cramer_comparison(4.0).unwrap().class, TailClass::SuperGaussian);
        assert_eq!(cramer_comparison(2.0).unwrap().class, TailClass::Gaussian);
        let sub = cramer_comparison(1.2).unwrap();
        assert_eq!(sub.class, TailClass::SubGaussian);
        assert!(sub.witten_below_linear); // 2(q-1) = 0.4
        assert!(cramer_comparison(0.9).is_err());
    }

    #[test]
    fn langevin_params_match_hand_calculation() {
        // c_V = 1, C_V = 0, gamma = 1, theta = 1/2, d = 1
        let p = langevin_lyapunov_params(1.0, 0.0, 1.0, 0.5, 1).unwrap();
        assert!((p.eta - 1.0).abs() < 1e-15);
        assert!((p.epsilon - 0.1).abs() < 1e-15);
        assert!((p.quadratic_gain - 0.04).abs() < 1e-12);
        assert!((p.momentum_gain - 0.1).abs() < 1e-12);
        assert!((p.offset - 0.5).abs() < 1e-12);
        assert_eq!(p.halvings, 0);

        // c_V = 1, C_V = 0, gamma = 10, theta = 1/2, d = 1
        let p = langevin_lyapunov_params(1.0, 0.0, 10.0, 0.5, 1).unwrap();
        assert!((p.eta - 0.1).abs() < 1e-15);
        assert!((p.epsilon - 0.01).abs() < 1e-15);
        assert!((p.quadratic_gain - 0.004).abs() < 1e-12);
        assert!((p.momentum_gain - 1.99).abs() < 1e-12);
        assert!((p.offset - 5.0).abs() < 1e-12);
    }

    #[test]
    fn langevin_params_reject_boundary_theta() {
        assert!(langevin_lyapunov_params(1.0, 0.0, 1.0, 1.0, 1).is_err());
        assert!(langevin_lyapunov_params(1.0, 0.0, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn certificate_dominates_observable_on_probes() {
        let m = model::ou(1.0);
        let psi = witten_potential_theta(&m, 0.5).unwrap();
        let f = m.parse_field("x", "position").unwrap();
        let cert = restriction_certificate(&f, &psi, &[-8.0], &[8.0], 500).unwrap();
        assert!(cert.tail_ratio > 0.0);
        for p in probe_points(1, 500, &[-8.0], &[8.0]) {
            let bound = cert.bounded_part + cert.tail_ratio * psi.value(&p).max(0.0);
            assert!(f.value(&p).abs() <= bound + 1e-9);
        }
    }
}
