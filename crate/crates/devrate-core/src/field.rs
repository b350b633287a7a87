//! Evaluable scalar and vector fields with exact or fallback derivatives.
//!
//! Generator application needs drift, diffusion and test-function derivatives
//! at arbitrary points. Fields built from expressions or the built-in model
//! catalog carry analytic gradients and Hessians; a central finite-difference
//! fallback with step 1e-4*(1+|x|) covers closures supplied without them.
//! Fields constructed as `opaque` refuse differentiation, which is the error
//! path callers must handle.

use crate::expr::Expr;
use crate::{DevrateError, Result};
use std::sync::Arc;

pub type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type HessFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>; // row-major d*d

#[derive(Clone)]
pub struct ScalarField {
    pub dim: usize,
    pub name: String,
    eval: EvalFn,
    grad: Option<GradFn>,
    hess: Option<HessFn>,
    differentiable: bool,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("name", &self.name)
            .field("analytic_grad", &self.grad.is_some())
            .field("analytic_hess", &self.hess.is_some())
            .finish()
    }
}

fn fd_step(x: &[f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    1e-4 * (1.0 + norm)
}

impl ScalarField {
    pub fn from_fn(dim: usize, name: &str, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField { dim, name: name.to_string(), eval: Arc::new(eval), grad: None, hess: None, differentiable: true }
    }

    /// A field that refuses differentiation entirely.
    pub fn opaque(dim: usize, name: &str, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField { dim, name: name.to_string(), eval: Arc::new(eval), grad: None, hess: None, differentiable: false }
    }

    pub fn with_gradient(mut self, grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_hessian(mut self, hess: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.hess = Some(Arc::new(hess));
        self
    }

    /// Build from a parsed expression; gradient and Hessian are symbolic.
    pub fn from_expr(expr: &Expr, dim: usize, name: &str) -> Self {
        let grads: Vec<Expr> = (0..dim).map(|i| expr.diff(i)).collect();
        let hessians: Vec<Expr> = (0..dim)
            .flat_map(|i| {
                let gi = grads[i].clone();
                (0..dim).map(move |j| gi.diff(j)).collect::<Vec<_>>()
            })
            .collect();
        let e = expr.clone();
        let g = grads;
        let h = hessians;
        ScalarField {
            dim,
            name: name.to_string(),
            eval: Arc::new(move |x| e.eval(x)),
            grad: Some(Arc::new(move |x| g.iter().map(|gi| gi.eval(x)).collect())),
            hess: Some(Arc::new(move |x| h.iter().map(|hij| hij.eval(x)).collect())),
            differentiable: true,
        }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        let d2 = dim * dim;
        ScalarField {
            dim,
            name: format!("{value}"),
            eval: Arc::new(move |_| value),
            grad: Some(Arc::new(move |_| vec![0.0; dim])),
            hess: Some(Arc::new(move |_| vec![0.0; d2])),
            differentiable: true,
        }
    }

    pub fn coordinate(dim: usize, index: usize) -> Self {
        assert!(index < dim);
        let d2 = dim * dim;
        ScalarField {
            dim,
            name: format!("x{index}"),
            eval: Arc::new(move |x| x[index]),
            grad: Some(Arc::new(move |_| {
                let mut g = vec![0.0; dim];
                g[index] = 1.0;
                g
            })),
            hess: Some(Arc::new(move |_| vec![0.0; d2])),
            differentiable: true,
        }
    }

    /// Pointwise product with product-rule derivatives when both factors have them.
    pub fn product(a: &ScalarField, b: &ScalarField) -> Self {
        assert_eq!(a.dim, b.dim);
        let dim = a.dim;
        let (ae, be) = (a.eval.clone(), b.eval.clone());
        let mut out = ScalarField {
            dim,
            name: format!("({})*({})", a.name, b.name),
            eval: Arc::new(move |x| ae(x) * be(x)),
            grad: None,
            hess: None,
            differentiable: a.differentiable && b.differentiable,
        };
        if let (Some(ag), Some(bg)) = (a.grad.clone(), b.grad.clone()) {
            let (ae, be) = (a.eval.clone(), b.eval.clone());
            let (ag2, bg2) = (ag.clone(), bg.clone());
            out.grad = Some(Arc::new(move |x| {
                let (fa, fb) = (ae(x), be(x));
                let (ga, gb) = (ag2(x), bg2(x));
                (0..dim).map(|i| ga[i] * fb + fa * gb[i]).collect()
            }));
            if let (Some(ah), Some(bh)) = (a.hess.clone(), b.hess.clone()) {
                let (ae, be) = (a.eval.clone(), b.eval.clone());
                out.hess = Some(Arc::new(move |x| {
                    let (fa, fb) = (ae(x), be(x));
                    let (ga, gb) = (ag(x), bg(x));
                    let (ha, hb) = (ah(x), bh(x));
                    let mut h = vec![0.0; dim * dim];
                    for i in 0..dim {
                        for j in 0..dim {
                            h[i * dim + j] = ha[i * dim + j] * fb
                                + fa * hb[i * dim + j]
                                + ga[i] * gb[j]
                                + ga[j] * gb[i];
                        }
                    }
                    h
                }));
            }
        }
        out
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.grad.is_some()
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(g) = &self.grad {
            return Ok(g(x));
        }
        if !self.differentiable {
            return Err(DevrateError::DerivativeUnavailable(format!(
                "field '{}' was constructed without derivative evaluators",
                self.name
            )));
        }
        let h = fd_step(x);
        let mut xp = x.to_vec();
        let mut g = vec![0.0; self.dim];
        for i in 0..self.dim {
            let xi = x[i];
            xp[i] = xi + h;
            let fp = (self.eval)(&xp);
            xp[i] = xi - h;
            let fm = (self.eval)(&xp);
            xp[i] = xi;
            g[i] = (fp - fm) / (2.0 * h);
        }
        Ok(g)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(hs) = &self.hess {
            return Ok(hs(x));
        }
        if !self.differentiable {
            return Err(DevrateError::DerivativeUnavailable(format!(
                "field '{}' was constructed without derivative evaluators",
                self.name
            )));
        }
        // differentiate the gradient when it is analytic, otherwise the values
        let h = fd_step(x);
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        if self.grad.is_some() {
            let mut xp = x.to_vec();
            for j in 0..d {
                let xj = x[j];
                xp[j] = xj + h;
                let gp = self.gradient(&xp)?;
                xp[j] = xj - h;
                let gm = self.gradient(&xp)?;
                xp[j] = xj;
                for i in 0..d {
                    out[i * d + j] += 0.5 * (gp[i] - gm[i]) / (2.0 * h);
                    out[j * d + i] += 0.5 * (gp[i] - gm[i]) / (2.0 * h);
                }
            }
            return Ok(out);
        }
        let f0 = (self.eval)(x);
        let mut xp = x.to_vec();
        for i in 0..d {
            let xi = x[i];
            xp[i] = xi + h;
            let fp = (self.eval)(&xp);
            xp[i] = xi - h;
            let fm = (self.eval)(&xp);
            xp[i] = xi;
            out[i * d + i] = (fp - 2.0 * f0 + fm) / (h * h);
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let (xi, xj) = (x[i], x[j]);
                let mut ev = |si: f64, sj: f64| {
                    xp[i] = xi + si * h;
                    xp[j] = xj + sj * h;
                    let v = (self.eval)(&xp);
                    xp[i] = xi;
                    xp[j] = xj;
                    v
                };
                let v = (ev(1.0, 1.0) - ev(1.0, -1.0) - ev(-1.0, 1.0) + ev(-1.0, -1.0)) / (4.0 * h * h);
                out[i * d + j] = v;
                out[j * d + i] = v;
            }
        }
        Ok(out)
    }

    pub fn laplacian(&self, x: &[f64]) -> Result<f64> {
        let h = self.hessian(x)?;
        Ok((0..self.dim).map(|i| h[i * self.dim + i]).sum())
    }
}

#[derive(Debug, Clone)]
pub struct VectorField {
    pub components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Self {
        assert!(!components.is_empty());
        let dim = components[0].dim;
        assert!(components.iter().all(|c| c.dim == dim));
        VectorField { components }
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.value(x)).collect()
    }

    pub fn divergence(&self, x: &[f64]) -> Result<f64> {
        let mut div = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            div += c.gradient(x)?[i];
        }
        Ok(div)
    }

    pub fn zero(dim: usize) -> Self {
        VectorField { components: (0..dim).map(|_| ScalarField::constant(dim, 0.0)).collect() }
    }
}

/// Low-discrepancy probe points in a box: additive Kronecker sequence with
/// generalized golden-ratio increments, deterministic for a given count.
pub fn probe_points(dim: usize, count: usize, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    // root of x^(d+1) = x + 1
    let mut phi = 1.5f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=dim).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
    (1..=count)
        .map(|k| {
            (0..dim)
                .map(|j| {
                    let u = (0.5 + k as f64 * alphas[j]).fract();
                    lo[j] + (hi[j] - lo[j]) * u
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn expression_field_gradient_is_exact() {
        let e = parse("x^4/4", &["x"]).unwrap();
        let f = ScalarField::from_expr(&e, 1, "quartic");
        assert_eq!(f.value(&[2.0]), 4.0);
        assert_eq!(f.gradient(&[2.0]).unwrap(), vec![8.0]);
        assert_eq!(f.hessian(&[2.0]).unwrap(), vec![12.0]);
    }

    #[test]
    fn fd_fallback_close_to_analytic() {
        let f = ScalarField::from_fn(2, "gauss", |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1]) / 2.0).exp());
        let g = f.gradient(&[0.3, -0.7]).unwrap();
        let e = parse("exp(-(x^2+2*y^2)/2)", &["x", "y"]).unwrap();
        let exact = ScalarField::from_expr(&e, 2, "gauss");
        let ge = exact.gradient(&[0.3, -0.7]).unwrap();
        for i in 0..2 {
            assert!((g[i] - ge[i]).abs() < 1e-7);
        }
        let h = f.hessian(&[0.3, -0.7]).unwrap();
        let he = exact.hessian(&[0.3, -0.7]).unwrap();
        for i in 0..4 {
            assert!((h[i] - he[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn opaque_field_refuses_derivatives() {
        let f = ScalarField::opaque(1, "samples", |x| x[0]);
        assert!(matches!(f.gradient(&[0.0]), Err(DevrateError::DerivativeUnavailable(_))));
    }

    #[test]
    fn probes_fill_the_box() {
        let pts = probe_points(2, 100, &[-1.0, -2.0], &[1.0, 2.0]);
        assert_eq!(pts.len(), 100);
        assert!(pts.iter().all(|p| p[0] >= -1.0 && p[0] <= 1.0 && p[1] >= -2.0 && p[1] <= 2.0));
        // not all in one corner
        let mean_x: f64 = pts.iter().map(|p| p[0]).sum::<f64>() / 100.0;
        assert!(mean_x.abs() < 0.2);
    }
}
