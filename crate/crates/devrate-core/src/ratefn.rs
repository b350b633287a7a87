//! Rate functions: Legendre duality and the occupation-measure variational form.
//!
//! The level-1 rate function of the time-averaged observable is the Legendre
//! transform I(a) = sup_theta (theta a - lambda(theta)) of the sampled SCGF.
//! Between grid samples the curve is interpolated by the local three-point
//! parabola (exact when the true curve is quadratic) and the supremum is
//! located by golden-section search. Values whose supremum runs into the edge
//! of the sampled tilt window are flagged: there the transform only provides a
//! lower bound and the true rate may be infinite.
//!
//! The occupation-measure route evaluates the Donsker-Varadhan functional
//! -sum nu (L u)/u on a discrete generator for positive test vectors u, with
//! boundary rows excluded and their nu-mass reported.

use crate::sparse::Csr;
use crate::{DevrateError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateValue {
    Finite(f64),
    /// Supremum attained at the edge of the tilt window: `lower_bound` is the
    /// window value, the true rate is at least that and possibly infinite.
    Unbounded { lower_bound: f64, edge_theta: f64 },
}

impl RateValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            RateValue::Finite(v) => Some(*v),
            RateValue::Unbounded { .. } => None,
        }
    }
}

fn check_grid(thetas: &[f64], lambdas: &[f64]) -> Result<()> {
    if thetas.len() != lambdas.len() {
        return Err(DevrateError::Domain("tilt and value arrays differ in length".into()));
    }
    if thetas.len() < 3 {
        return Err(DevrateError::InsufficientWindow { points: thetas.len() });
    }
    if !thetas.windows(2).all(|w| w[1] > w[0]) {
        return Err(DevrateError::Domain("tilt grid must be strictly increasing".into()));
    }
    if lambdas.iter().any(|v| !v.is_finite()) {
        return Err(DevrateError::NumericRange("curve contains non-finite values".into()));
    }
    Ok(())
}

fn golden_max(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = g(c);
    let mut fd = g(d);
    for _ in 0..200 {
        if hi - lo < 1e-13 * (1.0 + lo.abs() + hi.abs()) {
            break;
        }
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = g(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = g(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    g(mid).max(fc).max(fd)
}

/// Legendre transform of the sampled curve at one slope value.
pub fn legendre_transform(thetas: &[f64], lambdas: &[f64], a: f64) -> Result<RateValue> {
    check_grid(thetas, lambdas)?;
    let n = thetas.len();
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..n {
        let g = thetas[i] * a - lambdas[i];
        if g > best_val {
            best_val = g;
            best = i;
        }
    }
    if best == 0 || best == n - 1 {
        return Ok(RateValue::Unbounded { lower_bound: best_val, edge_theta: thetas[best] });
    }
    // local parabola through the bracketing triple, then golden-section max
    let (t0, t1, t2) = (thetas[best - 1], thetas[best], thetas[best + 1]);
    let (l0, l1, l2) = (lambdas[best - 1], lambdas[best], lambdas[best + 1]);
    let interp = move |t: f64| {
        let w0 = (t - t1) * (t - t2) / ((t0 - t1) * (t0 - t2));
        let w1 = (t - t0) * (t - t2) / ((t1 - t0) * (t1 - t2));
        let w2 = (t - t0) * (t - t1) / ((t2 - t0) * (t2 - t1));
        w0 * l0 + w1 * l1 + w2 * l2
    };
    let value = golden_max(move |t| t * a - interp(t), t0, t2);
    Ok(RateValue::Finite(value))
}

pub fn legendre_transform_grid(
    thetas: &[f64],
    lambdas: &[f64],
    a_values: &[f64],
) -> Result<Vec<(f64, RateValue)>> {
    a_values
        .iter()
        .map(|&a| legendre_transform(thetas, lambdas, a).map(|r| (a, r)))
        .collect()
}

/// The typical value a* = lambda'(0) by the central difference across the
/// exact zero-tilt sample; the rate function vanishes there.
pub fn typical_value(thetas: &[f64], lambdas: &[f64]) -> Result<f64> {
    check_grid(thetas, lambdas)?;
    let j = thetas
        .iter()
        .position(|&t| t.abs() < 1e-14)
        .ok_or_else(|| DevrateError::Domain("curve does not contain the zero tilt".into()))?;
    if j == 0 || j + 1 == thetas.len() {
        return Err(DevrateError::Domain("zero tilt must be interior to the window".into()));
    }
    Ok((lambdas[j + 1] - lambdas[j - 1]) / (thetas[j + 1] - thetas[j - 1]))
}

/// Transform the curve to rates and back; returns the largest reconstruction
/// defect max_theta |sup_a (theta a - I(a)) - lambda(theta)| over tilts whose
/// reconstruction stays inside the slope window. Convex duality makes this
/// vanish up to interpolation error.
pub fn double_conjugate_check(thetas: &[f64], lambdas: &[f64], a_values: &[f64]) -> Result<f64> {
    let rates = legendre_transform_grid(thetas, lambdas, a_values)?;
    let finite: Vec<(f64, f64)> = rates
        .iter()
        .filter_map(|(a, r)| r.finite().map(|v| (*a, v)))
        .collect();
    if finite.len() < 3 {
        return Err(DevrateError::InsufficientWindow { points: finite.len() });
    }
    let fa: Vec<f64> = finite.iter().map(|p| p.0).collect();
    let fi: Vec<f64> = finite.iter().map(|p| p.1).collect();
    let mut defect: Option<f64> = None;
    for (j, &theta) in thetas.iter().enumerate() {
        // the conjugate of the conjugate, evaluated by the same machinery
        match legendre_transform(&fa, &fi, theta)? {
            RateValue::Finite(back) => {
                let d = (back - lambdas[j]).abs();
                defect = Some(defect.map_or(d, |cur: f64| cur.max(d)));
            }
            RateValue::Unbounded { .. } => continue,
        }
    }
    defect.ok_or(DevrateError::InsufficientWindow { points: 0 })
}

#[derive(Debug, Clone)]
pub struct DvBound {
    /// -sum over interior nodes of nu (L u)/u.
    pub value: f64,
    /// nu-mass sitting on excluded boundary rows.
    pub boundary_mass: f64,
}

/// Donsker-Varadhan evaluation for one positive test vector. Every admissible
/// u gives a lower bound on the rate of the occupation measure nu; the rate
/// itself is the supremum over u.
pub fn donsker_varadhan_value(l: &Csr, u: &[f64], nu: &[f64], boundary: &[bool]) -> Result<DvBound> {
    let n = l.n_rows;
    if u.len() != n || nu.len() != n || boundary.len() != n {
        return Err(DevrateError::Domain("vector lengths do not match the generator".into()));
    }
    for (i, &ui) in u.iter().enumerate() {
        if !(ui > 0.0) {
            return Err(DevrateError::Positivity { index: i, value: ui });
        }
    }
    let lu = l.apply(u);
    let mut value = 0.0;
    let mut boundary_mass = 0.0;
    for i in 0..n {
        if boundary[i] {
            boundary_mass += nu[i];
        } else {
            value -= nu[i] * lu[i] / u[i];
        }
    }
    Ok(DvBound { value, boundary_mass })
}

#[derive(Debug, Clone)]
pub struct VariationalResult {
    pub best: f64,
    pub best_index: usize,
    /// One value per trial pair: sum_int nu (f + (L u)/u).
    pub values: Vec<f64>,
}

/// Occupation-measure variational objective nu(f) - [-sum nu (L u)/u] over a
/// family of trial pairs (nu, u). With the optimal pair (tilted stationary law,
/// principal eigenvector) the objective equals the SCGF; suboptimal pairs probe
/// the landscape around it.
pub fn variational_scgf_bound(
    l: &Csr,
    f: &[f64],
    family: &[(Vec<f64>, Vec<f64>)],
    boundary: &[bool],
) -> Result<VariationalResult> {
    if family.is_empty() {
        return Err(DevrateError::EmptyFamily);
    }
    let mut values = Vec::with_capacity(family.len());
    for (nu, u) in family {
        let dv = donsker_varadhan_value(l, u, nu, boundary)?;
        let mut obj = -dv.value;
        for i in 0..l.n_rows {
            if !boundary[i] {
                obj += nu[i] * f[i];
            }
        }
        values.push(obj);
    }
    let (best_index, best) = values
        .iter()
        .cloned()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty family");
    Ok(VariationalResult { best, best_index, values })
}
