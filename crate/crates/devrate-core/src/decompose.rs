//! Symmetric/antisymmetric decomposition of occupation-measure rates.
//!
//! For a perturbed measure nu = e^v mu / Z the rate splits as I = I_S + I_A:
//!
//! * I_S = (1/4) sum_a int S_a (d_a v)^2 dnu, the reversible (gradient) cost,
//! * I_A = (1/4) int <grad psi, S grad psi> dnu, the cost of realizing the
//!   antisymmetric probability current as a gradient flux, where psi solves the
//!   nu-weighted Poisson problem  M psi = -L_A^T nu  in weak form.
//!
//! The stiffness M is the edge-based two-point flux form sum_e S_e nu_e
//! (psi_j - psi_i)^2 / h^2: symmetric positive semidefinite with nullspace
//! exactly the constants on each noise-connected component (for kinetic models
//! the components are the fixed-position slices). The right-hand side uses the
//! central-difference companion of the generator, whose antisymmetric part is
//! free of the O(h) upwinding bias; the rate matrix itself still provides the
//! invariant measure and the compatibility check.
//!
//! Everything in the split is discretized with the central companion against a
//! single reference measure. For models that declare gradient or kinetic
//! structure the reference is the sampled Gibbs density (exp(-V) or exp(-H)),
//! which keeps the whole route second-order accurate. The rate matrix's own
//! stationary vector is only used for models without declared structure; on
//! noiseless axes its upwinding carries a first-order bias, and the
//! compatibility gate below will reject such a pairing rather than silently
//! corrupt the antisymmetric part.
//!
//! Two identities guard the inputs: sum_i mu_i (L_A rho)_i with rho = dnu/dmu
//! equals (L^T mu) . rho / 2, so it vanishes to discretization accuracy when
//! mu is stationary for the companion operator and blows up for a mismatched
//! reference; and the component sums of the right-hand side measure how much
//! of the current the mesh cannot represent, reported and projected out before
//! the solve.

use crate::field::ScalarField;
use crate::grid::{assemble_central, assemble_generator, split_generator, Mesh};
use crate::lyapunov::structure_potential;
use crate::model::{langevin, DiffusionModel, ModelStructure};
use crate::sparse::{dot, norm2, Csr};
use crate::spectral::invariant_measure;
use crate::{DevrateError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct DecomposeParams {
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Bound on |sum mu (L_A rho)|, the stationarity/compatibility identity.
    pub compat_tol: f64,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        DecomposeParams { cg_tol: 1e-10, cg_max_iter: 20_000, compat_tol: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub i_s: f64,
    /// Dirichlet-form cross-check of I_S through sqrt(dnu/dmu).
    pub i_s_fisher: f64,
    pub i_a: f64,
    pub i_total: f64,
    /// Solution of the weighted Poisson problem, nu-mean zero per component.
    pub psi: Vec<f64>,
    pub nu: Vec<f64>,
    /// Antisymmetric current observable (projected RHS over nu), the input to
    /// the autocorrelation route.
    pub current: Vec<f64>,
    /// |sum_i nu_i (L_A v)_i|, the discrete version of the continuum identity
    /// int (L_A v) e^v dmu = 0; nonzero means nu is inconsistent with mu.
    pub compatibility_defect: f64,
    /// |sum_i mu_i (L_A rho)_i| = |(L^T mu) . rho| / 2; a second witness of
    /// the same inconsistency, sensitive to a reference measure that is not
    /// stationary for the companion operator.
    pub reference_defect: f64,
    /// Sup-norm of L^T mu under the companion operator.
    pub stationarity_residual: f64,
    pub n_components: usize,
    pub cg_iterations: usize,
    pub cg_residual: f64,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Component id per node under the edges of noise-carrying axes, plus the
/// number of components.
pub fn noise_components(mesh: &Mesh, s_axes: &[f64]) -> (Vec<usize>, usize) {
    let n = mesh.n_nodes();
    let mut uf = UnionFind::new(n);
    for (a, &s) in s_axes.iter().enumerate() {
        if s > 0.0 {
            for (i, j) in mesh.axis_edges(a) {
                uf.union(i, j);
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0usize;
    let mut comp = vec![0usize; n];
    for i in 0..n {
        let r = uf.find(i);
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        comp[i] = label[r];
    }
    (comp, next)
}

fn project_mean_zero(v: &mut [f64], comp: &[usize], n_comps: usize, weights: Option<&[f64]>) {
    let mut sums = vec![0.0; n_comps];
    let mut mass = vec![0.0; n_comps];
    for i in 0..v.len() {
        let w = weights.map_or(1.0, |ws| ws[i]);
        sums[comp[i]] += w * v[i];
        mass[comp[i]] += w;
    }
    for i in 0..v.len() {
        if mass[comp[i]] > 0.0 {
            v[i] -= sums[comp[i]] / mass[comp[i]];
        }
    }
}

/// Make each component sum of the source vanish by removing a multiple of the
/// measure, not a constant. A constant correction would place charge on tail
/// nodes whose edge weights are exponentially small, and the solve would pay
/// an exponentially large potential jump for it; a measure-proportional one
/// only shifts the current by a uniformly small constant.
fn remove_component_charge(b: &mut [f64], comp: &[usize], n_comps: usize, nu: &[f64]) {
    let mut charge = vec![0.0; n_comps];
    let mut mass = vec![0.0; n_comps];
    for i in 0..b.len() {
        charge[comp[i]] += b[i];
        mass[comp[i]] += nu[i];
    }
    for i in 0..b.len() {
        b[i] -= charge[comp[i]] / mass[comp[i]] * nu[i];
    }
}

fn assemble_stiffness(mesh: &Mesh, s_axes: &[f64], nu: &[f64]) -> Csr {
    let n = mesh.n_nodes();
    let mut triplets = Vec::new();
    for (a, &s) in s_axes.iter().enumerate() {
        if s <= 0.0 {
            continue;
        }
        let h = mesh.axes[a].spacing();
        let scale = s / (h * h);
        for (i, j) in mesh.axis_edges(a) {
            let w = scale * 0.5 * (nu[i] + nu[j]);
            triplets.push((i, i, w));
            triplets.push((j, j, w));
            triplets.push((i, j, -w));
            triplets.push((j, i, -w));
        }
    }
    Csr::from_triplets(n, n, &triplets)
}

/// Jacobi-preconditioned conjugate gradient for the semidefinite stiffness;
/// the right-hand side must already be orthogonal to the nullspace.
fn pcg(m: &Csr, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64, usize)> {
    let n = b.len();
    let diag = m.diagonal();
    let precond = |r: &[f64], z: &mut Vec<f64>| {
        z.clear();
        z.extend(r.iter().zip(&diag).map(|(ri, di)| if *di > 0.0 { ri / di } else { *ri }));
    };
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0.0, 0));
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = Vec::with_capacity(n);
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 0..max_iter {
        m.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            // direction fell into the nullspace, caused by roundoff drift
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let res = norm2(&r) / b_norm;
        if res < tol {
            return Ok((x, res, it + 1));
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm2(&r) / b_norm;
    if res < tol.max(1e-8) {
        return Ok((x, res, max_iter));
    }
    Err(DevrateError::LinearSolver { iterations: max_iter, residual: res })
}

/// Decomposition against a caller-supplied reference measure. `mu` must be
/// stationary for the central companion of the model on this mesh, up to
/// discretization error; the compatibility identity rejects anything else.
pub fn decompose_with_measure(
    model: &DiffusionModel,
    mesh: &Mesh,
    v_nodes: &[f64],
    mu: &[f64],
    params: &DecomposeParams,
) -> Result<Decomposition> {
    let n = mesh.n_nodes();
    if v_nodes.len() != n || mu.len() != n {
        return Err(DevrateError::Domain("node vector lengths do not match the mesh".into()));
    }
    if v_nodes.iter().any(|v| !v.is_finite()) {
        return Err(DevrateError::NumericRange("perturbation not finite on the mesh".into()));
    }
    for (i, &m) in mu.iter().enumerate() {
        if !(m > 0.0) {
            return Err(DevrateError::Positivity { index: i, value: m });
        }
    }
    let lc = assemble_central(model, mesh)?;
    let ltm = lc.apply_transpose(mu);
    let stationarity_residual = ltm.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    // nu = e^v mu / Z and its density against mu
    let vmax = v_nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut nu: Vec<f64> = mu.iter().zip(v_nodes).map(|(m, v)| m * (v - vmax).exp()).collect();
    let z: f64 = nu.iter().sum();
    if !(z > 0.0) {
        return Err(DevrateError::Measure("perturbed measure has zero mass".into()));
    }
    nu.iter_mut().for_each(|x| *x /= z);
    let rho: Vec<f64> = nu.iter().zip(mu).map(|(n, m)| n / m).collect();

    let (ls, la) = split_generator(&lc, mu)?;
    let reference_defect = dot(mu, &la.apply(&rho)).abs();
    let compatibility_defect = dot(&nu, &la.apply(v_nodes)).abs();
    let worst_defect = reference_defect.max(compatibility_defect);
    if worst_defect > params.compat_tol {
        return Err(DevrateError::IncompatibleRhs {
            defect: worst_defect,
            tolerance: params.compat_tol,
        });
    }

    // reversible part: per-axis quadrature plus the Dirichlet-form cross-check
    let s_axes: Vec<f64> = (0..model.dim).map(|a| model.axis_diffusion(a)).collect();
    let i_s = symmetric_rate(mesh, &s_axes, v_nodes, &nu);
    let sqrt_rho: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let ls_sr = ls.apply(&sqrt_rho);
    let i_s_fisher = -mu
        .iter()
        .zip(&sqrt_rho)
        .zip(&ls_sr)
        .map(|((m, s), lsv)| m * s * lsv)
        .sum::<f64>();

    // antisymmetric part: weighted Poisson solve in weak form
    let (comp, n_components) = noise_components(mesh, &s_axes);
    if s_axes.iter().all(|&s| s <= 0.0) {
        return Err(DevrateError::UnsupportedDiffusion("model carries no noise on any axis".into()));
    }
    // detailed balance means the antisymmetric generator part is the zero
    // operator; the Poisson stage would only resolve companion roundoff
    let (psi, current, i_a, cg_residual, cg_iterations) =
        if matches!(model.structure, ModelStructure::ReversibleGradient { .. }) {
            (vec![0.0; n], vec![0.0; n], 0.0, 0.0, 0)
        } else {
            let mut b: Vec<f64> = la.apply_transpose(&nu).iter().map(|x| -x).collect();
            remove_component_charge(&mut b, &comp, n_components, &nu);
            let m = assemble_stiffness(mesh, &s_axes, &nu);
            let (mut psi, cg_residual, cg_iterations) =
                pcg(&m, &b, params.cg_tol, params.cg_max_iter)?;
            project_mean_zero(&mut psi, &comp, n_components, Some(&nu));
            let i_a = 0.25 * dot(&psi, &m.apply(&psi));
            let current: Vec<f64> = b.iter().zip(&nu).map(|(bi, ni)| bi / ni).collect();
            (psi, current, i_a, cg_residual, cg_iterations)
        };

    Ok(Decomposition {
        i_s,
        i_s_fisher,
        i_a,
        i_total: i_s + i_a,
        psi,
        nu,
        current,
        compatibility_defect,
        reference_defect,
        stationarity_residual,
        n_components,
        cg_iterations,
        cg_residual,
    })
}

/// Quadrature for the reversible cost (1/4) sum_a int S_a (d_a v)^2 dnu with
/// central node gradients. Quadratically homogeneous in v at fixed nu.
/// The edge-based H1(nu) quadratic form phi^T M phi built from the same
/// weights as the Poisson stiffness, so i_a = dirichlet_energy(psi) / 4 and
/// the variational objective of the split can be evaluated for arbitrary
/// candidate fields.
pub fn dirichlet_energy(mesh: &Mesh, s_axes: &[f64], nu: &[f64], phi: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, &s) in s_axes.iter().enumerate() {
        if s <= 0.0 {
            continue;
        }
        let h = mesh.axes[a].spacing();
        let scale = s / (h * h);
        for (i, j) in mesh.axis_edges(a) {
            let d = phi[i] - phi[j];
            acc += scale * 0.5 * (nu[i] + nu[j]) * d * d;
        }
    }
    acc
}

pub fn symmetric_rate(mesh: &Mesh, s_axes: &[f64], v_nodes: &[f64], nu: &[f64]) -> f64 {
    let mut i_s = 0.0;
    for (a, &s) in s_axes.iter().enumerate() {
        if s <= 0.0 {
            continue;
        }
        let g = mesh.node_gradient(v_nodes, a);
        i_s += s * g.iter().zip(nu).map(|(gi, ni)| ni * gi * gi).sum::<f64>();
    }
    0.25 * i_s
}

/// Reference measure for the decomposition: the sampled Gibbs density when the
/// model declares gradient or kinetic structure, otherwise the principal left
/// vector of the rate matrix. Normalized to unit mass.
pub fn reference_measure(model: &DiffusionModel, mesh: &Mesh) -> Result<Vec<f64>> {
    let mut mu = match structure_potential(model) {
        Ok(phi) => {
            let sampled = mesh.sample(|x| phi.value(x));
            let pmin = sampled.iter().cloned().fold(f64::INFINITY, f64::min);
            if !pmin.is_finite() {
                return Err(DevrateError::NumericRange("structural potential not finite".into()));
            }
            sampled.iter().map(|p| (pmin - p).exp()).collect::<Vec<f64>>()
        }
        Err(DevrateError::OutOfTheory(_)) => {
            let l = assemble_generator(model, mesh)?;
            invariant_measure(&l, 1e-13, 300_000)?.0
        }
        Err(e) => return Err(e),
    };
    let z: f64 = mu.iter().sum();
    if !(z > 0.0) {
        return Err(DevrateError::Measure("reference measure has zero mass".into()));
    }
    mu.iter_mut().for_each(|x| *x /= z);
    Ok(mu)
}

/// Full pipeline: structural reference measure, then the split.
pub fn decompose(
    model: &DiffusionModel,
    mesh: &Mesh,
    v: &ScalarField,
    params: &DecomposeParams,
) -> Result<Decomposition> {
    let mu = reference_measure(model, mesh)?;
    let v_nodes = mesh.sample(|x| v.value(x));
    decompose_with_measure(model, mesh, &v_nodes, &mu, params)
}

#[derive(Debug, Clone)]
pub struct FrictionPoint {
    pub gamma: f64,
    pub i_s: f64,
    pub i_a: f64,
    pub i_total: f64,
    /// gamma * I, the overdamped-side scaling.
    pub scaled_overdamped: f64,
    /// I / gamma, the underdamped-side scaling.
    pub scaled_underdamped: f64,
}

/// Decompose the same family of perturbations across friction values of the
/// kinetic model with a fixed position potential. The perturbation builder
/// receives gamma so families like v_gamma = base + s(gamma) correction fit.
pub fn friction_sweep(
    potential_q: &ScalarField,
    gammas: &[f64],
    mesh: &Mesh,
    perturbation: &dyn Fn(f64) -> Result<ScalarField>,
    params: &DecomposeParams,
) -> Result<Vec<FrictionPoint>> {
    if gammas.is_empty() {
        return Err(DevrateError::EmptyFamily);
    }
    let mut out = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let model = langevin(potential_q.clone(), gamma)?;
        let v = perturbation(gamma)?;
        let dec = decompose(&model, mesh, &v, params)?;
        out.push(FrictionPoint {
            gamma,
            i_s: dec.i_s,
            i_a: dec.i_a,
            i_total: dec.i_total,
            scaled_overdamped: gamma * dec.i_total,
            scaled_underdamped: dec.i_total / gamma,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AutocorrParams {
    /// Correlation window integrated over.
    pub t_corr: f64,
    /// Measurement time per path after burn-in.
    pub t_measure: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct AutocorrIa {
    pub value: f64,
    /// Standard error over path-wise integrals.
    pub stderr: f64,
    /// C(t_corr)/C(0): how much correlation the window truncates.
    pub truncation_ratio: f64,
    pub truncation_warning: bool,
}

/// Independent estimate of I_A as (1/4) int_0^T E[j(X_0) j(X_t)] dt under the
/// nu-reversible auxiliary diffusion dX_a = S_a d_a log nu dt + sqrt(2 S_a) dB
/// on the noise-carrying axes (noiseless coordinates stay frozen). The drift
/// and the current observable j come from the gridded fields by multilinear
/// interpolation; paths outside the box see the clamped boundary values.
pub fn autocorrelation_ia(
    mesh: &Mesh,
    s_axes: &[f64],
    nu: &[f64],
    current: &[f64],
    params: &AutocorrParams,
) -> Result<AutocorrIa> {
    let n = mesh.n_nodes();
    if nu.len() != n || current.len() != n {
        return Err(DevrateError::Domain("node vector lengths do not match the mesh".into()));
    }
    if params.n_paths < 2 {
        return Err(DevrateError::Config("need at least two paths for a standard error".into()));
    }
    let active: Vec<usize> = s_axes.iter().enumerate().filter(|(_, &s)| s > 0.0).map(|(a, _)| a).collect();
    if active.is_empty() {
        return Err(DevrateError::UnsupportedDiffusion("no noise-carrying axis to move along".into()));
    }
    let lognu: Vec<f64> = nu
        .iter()
        .map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
        .collect();
    if lognu.iter().any(|v| !v.is_finite()) {
        return Err(DevrateError::Measure("perturbed measure vanishes somewhere on the mesh".into()));
    }
    let grads: Vec<Vec<f64>> = active.iter().map(|&a| mesh.node_gradient(&lognu, a)).collect();
    let lags = (params.t_corr / params.dt).round() as usize;
    let steps = (params.t_measure / params.dt).round() as usize;
    if lags == 0 || steps < 4 * lags {
        return Err(DevrateError::Config(
            "measurement window must cover at least four correlation windows".into(),
        ));
    }
    let burn = steps / 5;
    let x0 = {
        let arg = nu
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("nonempty mesh");
        mesh.node_coords(arg)
    };
    let path_results: Result<Vec<(f64, f64, f64)>> = (0..params.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(p as u64);
            let mut x = x0.clone();
            let mut ring = vec![0.0f64; lags + 1];
            let mut csum = vec![0.0f64; lags + 1];
            let mut count = vec![0usize; lags + 1];
            for step in 0..(burn + steps) {
                for (k, &a) in active.iter().enumerate() {
                    let s = s_axes[a];
                    let drift = s * mesh.interpolate(&grads[k], &x);
                    let noise: f64 = rng.sample(StandardNormal);
                    x[a] += drift * params.dt + (2.0 * s * params.dt).sqrt() * noise;
                }
                if step < burn {
                    continue;
                }
                let t = step - burn;
                let j = mesh.interpolate(current, &x);
                ring[t % (lags + 1)] = j;
                let max_lag = t.min(lags);
                for k in 0..=max_lag {
                    let prev = ring[(t - k) % (lags + 1)];
                    csum[k] += j * prev;
                    count[k] += 1;
                }
            }
            let c: Vec<f64> = csum.iter().zip(&count).map(|(s, &c)| s / c.max(1) as f64).collect();
            let mut integral = 0.5 * (c[0] + c[lags]);
            integral += c[1..lags].iter().sum::<f64>();
            integral *= 0.25 * params.dt;
            Ok((integral, c[0], c[lags]))
        })
        .collect();
    let path_results = path_results?;
    let n_paths = path_results.len() as f64;
    let value = path_results.iter().map(|r| r.0).sum::<f64>() / n_paths;
    let var = path_results.iter().map(|r| (r.0 - value) * (r.0 - value)).sum::<f64>() / (n_paths - 1.0);
    let stderr = (var / n_paths).sqrt();
    let c0 = path_results.iter().map(|r| r.1).sum::<f64>() / n_paths;
    let ck = path_results.iter().map(|r| r.2).sum::<f64>() / n_paths;
    let truncation_ratio = if c0 > 0.0 { (ck / c0).abs() } else { f64::INFINITY };
    Ok(AutocorrIa { value, stderr, truncation_ratio, truncation_warning: truncation_ratio > 0.05 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model;

    fn ou_setup() -> (DiffusionModel, Mesh) {
        (model::ou(1.0), Mesh::uniform_box(&[-6.0], &[6.0], 121).unwrap())
    }

    #[test]
    fn reversible_linear_perturbation_exact_symmetric_rate() {
        let (m, mesh) = ou_setup();
        // v = 0.4 x - 0.08 shifts the Gaussian mean to 0.4; I = m^2/4
        let v = m.parse_field("0.4*x - 0.08", "tilt").unwrap();
        let dec = decompose(&m, &mesh, &v, &DecomposeParams::default()).unwrap();
        assert!((dec.i_s - 0.04).abs() < 1e-10, "i_s {}", dec.i_s);
        // detailed balance: the antisymmetric stage is skipped outright
        assert_eq!(dec.i_a, 0.0);
        assert!(dec.psi.iter().all(|&p| p == 0.0));
        assert!(dec.compatibility_defect < 1e-4, "compat {}", dec.compatibility_defect);
        assert!(dec.reference_defect < 1e-4, "reference {}", dec.reference_defect);
        assert!((dec.i_s_fisher - 0.04).abs() < 0.02 * 0.04 + 1e-6, "fisher {}", dec.i_s_fisher);
        assert_eq!(dec.n_components, 1);
    }

    #[test]
    fn mismatched_reference_measure_is_rejected() {
        let (m, mesh) = ou_setup();
        let v_nodes = mesh.sample(|x| 0.4 * x[0]);
        // Gaussian with the wrong variance is not stationary for the generator
        let mut mu = mesh.sample(|x| (-x[0] * x[0]).exp());
        let z: f64 = mu.iter().sum();
        mu.iter_mut().for_each(|x| *x /= z);
        let out = decompose_with_measure(&m, &mesh, &v_nodes, &mu, &DecomposeParams::default());
        assert!(matches!(out, Err(DevrateError::IncompatibleRhs { .. })), "{out:?}");
    }

    #[test]
    fn kinetic_position_tilt_antisymmetric_rate() {
        // V = q^2/2, v = m q - m^2/2: I_A = m^2 / (4 gamma), I_S = 0
        let gamma = 1.0;
        let m_tilt = 0.5;
        let model = model::langevin_quadratic(gamma);
        let mesh = Mesh::uniform_box(&[-4.0, -4.0], &[4.0, 4.0], 33).unwrap();
        let v = model.parse_field("0.5*q - 0.125", "tilt").unwrap();
        let dec = decompose(&model, &mesh, &v, &DecomposeParams::default()).unwrap();
        assert_eq!(dec.i_s, 0.0);
        // discrete version of the identity int (L_A v) e^v dmu = 0
        assert!(dec.compatibility_defect < 1e-8, "compat {}", dec.compatibility_defect);
        let exact = m_tilt * m_tilt / (4.0 * gamma);
        assert!(
            (dec.i_a - exact).abs() < 0.03 * exact,
            "i_a {} vs {exact}",
            dec.i_a
        );
        // components are the fixed-q slices
        assert_eq!(dec.n_components, 33);
        // current observable approximates m p
        let probe = [m_tilt, 1.0];
        let j = mesh.interpolate(&dec.current, &probe);
        assert!((j - m_tilt).abs() < 0.1, "current at (m,1): {j}");
        // psi approximates (m/gamma) p up to the per-slice constant
        let psi_hi = mesh.interpolate(&dec.psi, &[m_tilt, 1.0]);
        let psi_lo = mesh.interpolate(&dec.psi, &[m_tilt, -1.0]);
        assert!(((psi_hi - psi_lo) / 2.0 - m_tilt / gamma).abs() < 0.1);
    }

    #[test]
    fn components_and_projection() {
        let mesh = Mesh::uniform_box(&[0.0, 0.0], &[1.0, 1.0], 9).unwrap();
        let (comp, n) = noise_components(&mesh, &[0.0, 1.0]);
        assert_eq!(n, 9);
        // nodes in the same q-slice share a component
        assert_eq!(comp[mesh.ravel(&[3, 0])], comp[mesh.ravel(&[3, 8])]);
        assert_ne!(comp[mesh.ravel(&[3, 0])], comp[mesh.ravel(&[4, 0])]);
        let mut v: Vec<f64> = (0..mesh.n_nodes()).map(|i| i as f64).collect();
        project_mean_zero(&mut v, &comp, n, None);
        for c in 0..n {
            let s: f64 = v.iter().zip(&comp).filter(|(_, &ci)| ci == c).map(|(x, _)| x).sum();
            assert!(s.abs() < 1e-9);
        }
    }
}
