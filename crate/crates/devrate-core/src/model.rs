//! Diffusion models: drift, noise and generator.
//!
//! A model is the data of dX_t = b(X_t) dt + sigma dB_t together with enough
//! structure to know which analytic identities apply:
//!
//! * reversible gradient flow      b = -grad V,          sigma = sqrt(2) I
//! * nonequilibrium gradient flow  b = -grad V + F,      sigma = sqrt(2) I,
//!   with F divergence-free against exp(-V)
//! * underdamped Langevin          b = (p, -grad V - gamma p), noise sqrt(2 gamma)
//!   acting on momenta only
//! * custom                        drift and noise supplied directly
//!
//! The generator acts as L phi = b . grad phi + S : Hess phi with
//! S = sigma sigma^T / 2, and the carre du champ is
//! C(phi, psi) = (sigma^T grad phi) . (sigma^T grad psi) / 2.

use crate::expr;
use crate::field::{probe_points, ScalarField, VectorField};
use crate::{DevrateError, Result};

#[derive(Debug, Clone)]
pub enum ModelStructure {
    /// b = -grad V with isotropic sqrt(2) noise; detailed balance against exp(-V).
    ReversibleGradient { potential: ScalarField },
    /// b = -grad V + F with F preserving exp(-V).
    NonreversibleGradient { potential: ScalarField, force: VectorField },
    /// Phase-space model on (q, p); `potential` lives on the q block.
    Langevin { potential: ScalarField, gamma: f64, position_dim: usize },
    Custom,
}

#[derive(Debug, Clone)]
pub struct DiffusionModel {
    pub dim: usize,
    pub brownian_dim: usize,
    pub drift: VectorField,
    /// Constant noise factor, row-major dim x brownian_dim.
    sigma: Vec<f64>,
    pub structure: ModelStructure,
    /// Coordinate names used when binding expressions to this model's state.
    pub coords: Vec<String>,
}

impl DiffusionModel {
    pub fn custom(drift: VectorField, sigma: Vec<f64>, brownian_dim: usize, coords: Vec<String>) -> Self {
        let dim = drift.dim();
        assert_eq!(sigma.len(), dim * brownian_dim);
        assert_eq!(coords.len(), dim);
        DiffusionModel { dim, brownian_dim, drift, sigma, structure: ModelStructure::Custom, coords }
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// S = sigma sigma^T / 2, row-major dim x dim.
    pub fn diffusion_matrix(&self) -> Vec<f64> {
        let (d, m) = (self.dim, self.brownian_dim);
        let mut s = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..m {
                    acc += self.sigma[i * m + k] * self.sigma[j * m + k];
                }
                s[i * d + j] = 0.5 * acc;
            }
        }
        s
    }

    /// Diagonal entry S_aa; the grid assembler requires the off-diagonals to vanish.
    pub fn axis_diffusion(&self, axis: usize) -> f64 {
        self.diffusion_matrix()[axis * self.dim + axis]
    }

    pub fn is_axis_aligned(&self, tol: f64) -> bool {
        let s = self.diffusion_matrix();
        let d = self.dim;
        (0..d).all(|i| (0..d).all(|j| i == j || s[i * d + j].abs() <= tol))
    }

    pub fn coord_names(&self) -> Vec<&str> {
        self.coords.iter().map(|s| s.as_str()).collect()
    }

    /// Parse an expression in this model's coordinates.
    pub fn parse_field(&self, src: &str, name: &str) -> Result<ScalarField> {
        let names = self.coord_names();
        let e = expr::parse(src, &names)?;
        Ok(ScalarField::from_expr(&e, self.dim, name))
    }
}

/// L phi (x) = b(x) . grad phi (x) + S : Hess phi (x). Constants map to exactly zero.
pub fn apply_generator(model: &DiffusionModel, phi: &ScalarField, x: &[f64]) -> Result<f64> {
    let g = phi.gradient(x)?;
    let h = phi.hessian(x)?;
    let b = model.drift.value(x);
    let s = model.diffusion_matrix();
    let d = model.dim;
    let mut out = 0.0;
    for i in 0..d {
        out += b[i] * g[i];
        for j in 0..d {
            out += s[i * d + j] * h[i * d + j];
        }
    }
    Ok(out)
}

/// C(phi, psi)(x) = (sigma^T grad phi) . (sigma^T grad psi) / 2.
pub fn carre_du_champ(model: &DiffusionModel, phi: &ScalarField, psi: &ScalarField, x: &[f64]) -> Result<f64> {
    let gp = phi.gradient(x)?;
    let gq = psi.gradient(x)?;
    let (d, m) = (model.dim, model.brownian_dim);
    let mut acc = 0.0;
    for k in 0..m {
        let mut up = 0.0;
        let mut uq = 0.0;
        for i in 0..d {
            up += model.sigma[i * m + k] * gp[i];
            uq += model.sigma[i * m + k] * gq[i];
        }
        acc += up * uq;
    }
    Ok(0.5 * acc)
}

fn isotropic_sigma(dim: usize) -> Vec<f64> {
    let mut s = vec![0.0; dim * dim];
    for i in 0..dim {
        s[i * dim + i] = std::f64::consts::SQRT_2;
    }
    s
}

fn coord_names_for(dim: usize) -> Vec<String> {
    match dim {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        _ => (0..dim).map(|i| format!("x{i}")).collect(),
    }
}

/// Gradient flow dX = -grad V dt + sqrt(2) dB.
pub fn reversible_gradient(potential: ScalarField) -> Result<DiffusionModel> {
    let dim = potential.dim;
    if !potential.has_analytic_gradient() {
        // finite differences would silently degrade every structural test downstream
        potential.gradient(&vec![0.0; dim])?;
    }
    let v = potential.clone();
    let components: Vec<ScalarField> = (0..dim)
        .map(|i| {
            let vi = v.clone();
            ScalarField::from_fn(dim, &format!("-dV/dx{i}"), move |x| -vi.gradient(x).expect("potential gradient")[i])
                .with_gradient({
                    let vi = v.clone();
                    move |x| {
                        let h = vi.hessian(x).expect("potential hessian");
                        (0..dim).map(|j| -h[i * dim + j]).collect()
                    }
                })
        })
        .collect();
    Ok(DiffusionModel {
        dim,
        brownian_dim: dim,
        drift: VectorField::new(components),
        sigma: isotropic_sigma(dim),
        structure: ModelStructure::ReversibleGradient { potential },
        coords: coord_names_for(dim),
    })
}

/// One-dimensional Ornstein-Uhlenbeck: V = alpha x^2 / 2.
pub fn ou(alpha: f64) -> DiffusionModel {
    let e = expr::parse(&format!("{alpha} * x^2 / 2"), &["x"]).expect("static expression");
    reversible_gradient(ScalarField::from_expr(&e, 1, "ou_potential")).expect("analytic potential")
}

/// Isotropic quadratic well in `dim` dimensions, V = |x|^2 / 2.
pub fn quadratic_well(dim: usize) -> DiffusionModel {
    let names = coord_names_for(dim);
    let src = names.iter().map(|n| format!("{n}^2")).collect::<Vec<_>>().join(" + ");
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let e = expr::parse(&format!("({src})/2"), &refs).expect("static expression");
    reversible_gradient(ScalarField::from_expr(&e, dim, "quadratic_well")).expect("analytic potential")
}

/// Quartic well, V = x^4 / 4 on the line.
pub fn overdamped_quartic() -> DiffusionModel {
    let e = expr::parse("x^4/4", &["x"]).expect("static expression");
    reversible_gradient(ScalarField::from_expr(&e, 1, "quartic_potential")).expect("analytic potential")
}

/// Check that F preserves exp(-V) (div(F e^-V) = 0 on probes) and build
/// dX = (-grad V + F) dt + sqrt(2) dB. Probes are low-discrepancy points in the box.
pub fn make_nonreversible_overdamped(
    potential: ScalarField,
    force: VectorField,
    box_lo: &[f64],
    box_hi: &[f64],
    n_probes: usize,
    tol: f64,
) -> Result<DiffusionModel> {
    let dim = potential.dim;
    if force.dim() != dim {
        return Err(DevrateError::Mesh(format!(
            "force has dimension {}, potential has {}",
            force.dim(),
            dim
        )));
    }
    let mut worst = 0.0f64;
    let mut worst_at = vec![0.0; dim];
    for p in probe_points(dim, n_probes, box_lo, box_hi) {
        // div(F e^-V) = e^-V (div F - F . grad V)
        let div_f = force.divergence(&p)?;
        let fv = force.value(&p);
        let gv = potential.gradient(&p)?;
        let dot: f64 = fv.iter().zip(&gv).map(|(a, b)| a * b).sum();
        let residual = (-potential.value(&p)).exp() * (div_f - dot);
        if residual.abs() > worst {
            worst = residual.abs();
            worst_at = p;
        }
    }
    if worst > tol {
        return Err(DevrateError::InvalidNonequilibriumForce { residual: worst, probe: worst_at });
    }
    let base = reversible_gradient(potential.clone())?;
    let components: Vec<ScalarField> = (0..dim)
        .map(|i| {
            let bi = base.drift.components[i].clone();
            let fi = force.components[i].clone();
            let (bi2, fi2) = (bi.clone(), fi.clone());
            ScalarField::from_fn(dim, &format!("b{i}"), move |x| bi.value(x) + fi.value(x)).with_gradient(
                move |x| {
                    let gb = bi2.gradient(x).expect("drift gradient");
                    let gf = fi2.gradient(x).expect("force gradient");
                    gb.iter().zip(&gf).map(|(a, b)| a + b).collect()
                },
            )
        })
        .collect();
    Ok(DiffusionModel {
        dim,
        brownian_dim: dim,
        drift: VectorField::new(components),
        sigma: isotropic_sigma(dim),
        structure: ModelStructure::NonreversibleGradient { potential, force },
        coords: coord_names_for(dim),
    })
}

/// Solid rotation F = a A grad V with A = [[0,1],[-1,0]] around the quadratic well;
/// divergence-free against exp(-V) for any rotation strength.
pub fn rotating_well(strength: f64) -> DiffusionModel {
    let names = ["x", "y"];
    let v = ScalarField::from_expr(&expr::parse("(x^2+y^2)/2", &names).expect("static"), 2, "well");
    let fx = ScalarField::from_expr(&expr::parse(&format!("{strength}*y"), &names).expect("static"), 2, "Fx");
    let fy = ScalarField::from_expr(&expr::parse(&format!("-{strength}*x"), &names).expect("static"), 2, "Fy");
    make_nonreversible_overdamped(v, VectorField::new(vec![fx, fy]), &[-6.0, -6.0], &[6.0, 6.0], 1000, 1e-8)
        .expect("rotation preserves the Gibbs measure")
}

/// Underdamped Langevin on (q, p) with unit mass: dq = p dt,
/// dp = -V'(q) dt - gamma p dt + sqrt(2 gamma) dB.
pub fn langevin(potential_q: ScalarField, gamma: f64) -> Result<DiffusionModel> {
    if gamma <= 0.0 {
        return Err(DevrateError::OutOfTheory(format!("friction must be positive, got {gamma}")));
    }
    let dq = potential_q.dim;
    let dim = 2 * dq;
    let vq = potential_q.clone();
    let mut components: Vec<ScalarField> = Vec::with_capacity(dim);
    for i in 0..dq {
        // dq_i/dt = p_i
        components.push(ScalarField::coordinate(dim, dq + i));
    }
    for i in 0..dq {
        let v = vq.clone();
        let v2 = vq.clone();
        components.push(
            ScalarField::from_fn(dim, &format!("force_p{i}"), move |x| {
                -v.gradient(&x[..dq]).expect("potential gradient")[i] - gamma * x[dq + i]
            })
            .with_gradient(move |x| {
                let h = v2.hessian(&x[..dq]).expect("potential hessian");
                let mut g = vec![0.0; dim];
                for j in 0..dq {
                    g[j] = -h[i * dq + j];
                }
                g[dq + i] = -gamma;
                g
            }),
        );
    }
    let mut sigma = vec![0.0; dim * dq];
    for i in 0..dq {
        sigma[(dq + i) * dq + i] = (2.0 * gamma).sqrt();
    }
    let coords = if dq == 1 {
        vec!["q".into(), "p".into()]
    } else {
        (0..dq).map(|i| format!("q{i}")).chain((0..dq).map(|i| format!("p{i}"))).collect()
    };
    Ok(DiffusionModel {
        dim,
        brownian_dim: dq,
        drift: VectorField::new(components),
        sigma,
        structure: ModelStructure::Langevin { potential: potential_q, gamma, position_dim: dq },
        coords,
    })
}

/// Langevin in the quadratic well V = q^2/2.
pub fn langevin_quadratic(gamma: f64) -> DiffusionModel {
    let e = expr::parse("q^2/2", &["q"]).expect("static expression");
    langevin(ScalarField::from_expr(&e, 1, "quadratic"), gamma).expect("positive friction")
}

/// Smooth polynomial-growth potential (1+x^2)^(q/2) ~ |x|^q at infinity,
/// for growth-exponent experiments. Requires q > 1.
pub fn power_growth_potential(q: f64) -> Result<ScalarField> {
    if q <= 1.0 {
        return Err(DevrateError::OutOfTheory(format!("growth exponent must exceed 1, got {q}")));
    }
    let e = expr::parse(&format!("(1+x^2)^({}/2)", q), &["x"])?;
    Ok(ScalarField::from_expr(&e, 1, "power_growth"))
}
