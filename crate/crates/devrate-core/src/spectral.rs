//! Principal eigenvalue machinery for tilted generators.
//!
//! For a rate matrix L and a tilt f the object of interest is the principal
//! eigentriple of L + diag(f): the eigenvalue of largest real part, its positive
//! right eigenvector h and positive left eigenvector l. The tilt is shifted
//! internally so that max f = 0 before iterating and the shift is added back to
//! the eigenvalue afterwards; together with reading the eigenvalue off a
//! two-sided Rayleigh quotient this makes the identity
//! lambda(f + c) = lambda(f) + c hold to machine precision instead of to solver
//! tolerance.

use crate::sparse::{bicgstab, dot, norm_inf, Csr};
use crate::{DevrateError, Result};

#[derive(Debug, Clone)]
pub struct PrincipalPair {
    pub lambda: f64,
    /// Right eigenvector h > 0, sup-normalized.
    pub right: Vec<f64>,
    /// Left eigenvector l > 0, normalized to sum 1.
    pub left: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl PrincipalPair {
    /// Stationary law of the Doob-transformed process, l .* h renormalized.
    pub fn tilted_stationary(&self) -> Vec<f64> {
        let mut nu: Vec<f64> = self.left.iter().zip(&self.right).map(|(l, h)| l * h).collect();
        let z: f64 = nu.iter().sum();
        nu.iter_mut().for_each(|v| *v /= z);
        nu
    }
}

/// Power iteration on a nonnegative irreducible matrix, sup-normalized iterates.
/// Returns (vector, Perron root, iterations, relative residual).
fn power_iterate(
    a: &Csr,
    transpose: bool,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, usize, f64)> {
    let n = a.n_rows;
    let mut v = vec![1.0; n];
    let mut w = vec![0.0; n];
    let mut rho = 0.0;
    let mut resid = f64::INFINITY;
    let mut checkpoint = f64::INFINITY;
    let mut it = 0;
    while it < max_iter {
        if transpose {
            a.matvec_transpose(&v, &mut w);
        } else {
            a.matvec(&v, &mut w);
        }
        rho = dot(&v, &w) / dot(&v, &v);
        if !(rho > 0.0) {
            return Err(DevrateError::Convergence { iterations: it, residual: f64::NAN });
        }
        let mut err = 0.0f64;
        for i in 0..n {
            err = err.max((w[i] - rho * v[i]).abs());
        }
        resid = err / rho;
        let scale = norm_inf(&w);
        for i in 0..n {
            v[i] = w[i] / scale;
        }
        it += 1;
        if resid < tol {
            break;
        }
        // every few thousand sweeps, accept a stagnated but converged-enough state
        if it % 4000 == 0 {
            if resid > 0.9 * checkpoint && resid < 1e-9 {
                break;
            }
            checkpoint = resid;
        }
    }
    if resid >= 1e-7 {
        return Err(DevrateError::Convergence { iterations: it, residual: resid });
    }
    for (i, &vi) in v.iter().enumerate() {
        if !(vi > 0.0) {
            return Err(DevrateError::Positivity { index: i, value: vi });
        }
    }
    Ok((v, rho, it, resid))
}

/// Principal eigentriple of L + diag(f).
pub fn principal_eigenpair(l: &Csr, f: &[f64], tol: f64, max_iter: usize) -> Result<PrincipalPair> {
    let n = l.n_rows;
    assert_eq!(f.len(), n);
    for &fi in f {
        if !fi.is_finite() {
            return Err(DevrateError::NumericRange("tilt contains a non-finite value".into()));
        }
    }
    let fmax = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let fmin = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = f.iter().map(|&v| v - fmax).collect();
    let q = l.add_diagonal(&shifted);
    // lift the diagonal so the matrix is entrywise nonnegative; Perron theory
    // then guarantees a positive eigenpair reachable by power iteration
    let diag = q.diagonal();
    let dmax = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let c = dmax + (fmax - fmin) + 1.0;
    let a = q.add_diagonal(&vec![c; n]);
    let (right, _, it_r, res_r) = power_iterate(&a, false, tol, max_iter)?;
    let (mut left, _, it_l, res_l) = power_iterate(&a, true, tol, max_iter)?;
    let z: f64 = left.iter().sum();
    left.iter_mut().for_each(|v| *v /= z);
    // two-sided Rayleigh quotient on the shifted pencil, exact shift restored after
    let qv = q.apply(&right);
    let lambda = dot(&left, &qv) / dot(&left, &right) + fmax;
    Ok(PrincipalPair { lambda, right, left, iterations: it_r + it_l, residual: res_r.max(res_l) })
}

/// Stationary distribution of the rate matrix (principal left eigenvector at
/// zero tilt). Also returns the computed principal eigenvalue, which should be
/// zero up to conservation error; callers can treat a large value as a red flag.
pub fn invariant_measure(l: &Csr, tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64)> {
    let pair = principal_eigenpair(l, &vec![0.0; l.n_rows], tol, max_iter)?;
    Ok((pair.left, pair.lambda))
}

/// Doob h-transform of the tilted generator:
/// L^h = diag(h)^-1 (L + diag(f) - lambda) diag(h).
/// The result is a conservative rate matrix; the diagonal is recomputed from the
/// off-diagonal row sums to absorb the eigenresidual.
pub fn doob_transform(l: &Csr, f: &[f64], pair: &PrincipalPair) -> Result<Csr> {
    let n = l.n_rows;
    for (i, &hi) in pair.right.iter().enumerate() {
        if !(hi > 0.0) {
            return Err(DevrateError::Positivity { index: i, value: hi });
        }
    }
    let shifted: Vec<f64> = f.iter().map(|&v| v - pair.lambda).collect();
    let q = l.add_diagonal(&shifted);
    let inv: Vec<f64> = pair.right.iter().map(|h| 1.0 / h).collect();
    let mut out = q.scale_sides(&inv, &pair.right);
    // zero the rows exactly: set each diagonal to minus the off-diagonal sum
    for r in 0..n {
        let (start, end) = (out.row_ptr[r], out.row_ptr[r + 1]);
        let mut off = 0.0;
        let mut diag_k = None;
        for k in start..end {
            if out.col_idx[k] == r {
                diag_k = Some(k);
            } else {
                off += out.values[k];
            }
        }
        match diag_k {
            Some(k) => out.values[k] = -off,
            None => {
                return Err(DevrateError::Mesh(format!("row {r} of the transform has no diagonal entry")))
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DecayFit {
    /// Fitted exponential rate (positive means contraction).
    pub rate: f64,
    pub intercept: f64,
    /// (t, weighted distance) samples used in the fit.
    pub points: Vec<(f64, f64)>,
}

/// Evolve nu_t under d nu / dt = L^T nu by implicit Euler and fit the decay of
/// the weighted distance sum_i W_i |nu_i - mu_i| against the stationary law.
pub fn ergodicity_decay(
    l: &Csr,
    mu: &[f64],
    nu0: &[f64],
    weight: &[f64],
    dt: f64,
    steps: usize,
) -> Result<DecayFit> {
    let n = l.n_rows;
    let lt = l.transpose();
    let ident = Csr::identity(n);
    let m = Csr::linear_combination(1.0, &ident, -dt, &lt);
    let mut nu = nu0.to_vec();
    let dist = |nu: &[f64]| -> f64 {
        nu.iter().zip(mu).zip(weight).map(|((a, b), w)| w * (a - b).abs()).sum()
    };
    let mut points = Vec::with_capacity(steps + 1);
    points.push((0.0, dist(&nu)));
    for s in 1..=steps {
        let (next, rel, iters) = bicgstab(|x, y| m.matvec(x, y), &nu, Some(&nu), 1e-12, 4000);
        if rel > 1e-8 {
            return Err(DevrateError::LinearSolver { iterations: iters, residual: rel });
        }
        nu = next;
        // implicit Euler does not preserve mass exactly; renormalize
        let z: f64 = nu.iter().sum();
        nu.iter_mut().for_each(|v| *v /= z);
        points.push((s as f64 * dt, dist(&nu)));
    }
    // fit log-distance over the usable window, skipping values at the noise floor
    let floor = points[0].1 * 1e-12 + 1e-300;
    let usable: Vec<(f64, f64)> = points.iter().filter(|&&(_, d)| d > floor).cloned().collect();
    if usable.len() < 4 {
        return Err(DevrateError::InsufficientWindow { points: usable.len() });
    }
    let m_pts = usable.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(t, d) in &usable {
        let y = d.ln();
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
    }
    let denom = m_pts * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(DevrateError::InsufficientWindow { points: usable.len() });
    }
    let slope = (m_pts * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m_pts;
    Ok(DecayFit { rate: -slope, intercept, points: usable })
}

/// Implicit Euler evolution of d u / dt = (L + diag(f)) u, the semigroup whose
/// log-growth rate is the principal eigenvalue. Returns the state after each step.
pub fn tilted_evolve(l: &Csr, f: &[f64], u0: &[f64], dt: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
    let n = l.n_rows;
    let q = l.add_diagonal(f);
    let ident = Csr::identity(n);
    let m = Csr::linear_combination(1.0, &ident, -dt, &q);
    let mut u = u0.to_vec();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (next, rel, iters) = bicgstab(|x, y| m.matvec(x, y), &u, Some(&u), 1e-12, 4000);
        if rel > 1e-8 {
            return Err(DevrateError::LinearSolver { iterations: iters, residual: rel });
        }
        u = next;
        out.push(u.clone());
    }
    Ok(out)
}
