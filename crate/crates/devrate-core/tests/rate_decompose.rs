//! Rate-function and entropy-decomposition oracles: Legendre conjugation,
//! occupation-measure duality, the reversible/irreversible split, and the
//! trajectory route to the antisymmetric part.

use devrate_core::decompose::{
    autocorrelation_ia, decompose, dirichlet_energy, friction_sweep, symmetric_rate, AutocorrParams,
    DecomposeParams,
};
use devrate_core::field::ScalarField;
use devrate_core::grid::{assemble_generator, Mesh};
use devrate_core::model;
use devrate_core::ratefn::{
    donsker_varadhan_value, double_conjugate_check, legendre_transform, legendre_transform_grid,
    typical_value, variational_scgf_bound, RateValue,
};
use devrate_core::scgf::{scgf_spectral, SpectralParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quadratic_grid() -> (Vec<f64>, Vec<f64>) {
    let thetas: Vec<f64> = (-32..=32).map(|i| i as f64 * 0.05).collect();
    let lambdas: Vec<f64> = thetas.iter().map(|t| t * t).collect();
    (thetas, lambdas)
}

#[test]
fn legendre_recovers_quadratic_rate() {
    let (thetas, lambdas) = quadratic_grid();
    let a_values: Vec<f64> = (-15..=15).map(|i| i as f64 * 0.1).collect();
    let rates = legendre_transform_grid(&thetas, &lambdas, &a_values).unwrap();
    for (a, r) in rates {
        let i = r.finite().expect("interior slope must give a finite rate");
        assert!((i - a * a / 4.0).abs() <= 5e-3, "a {a} rate {i}");
    }
    // beyond the sampled slope range only an affine lower bound is available
    match legendre_transform(&thetas, &lambdas, 3.5).unwrap() {
        RateValue::Unbounded { lower_bound, edge_theta } => {
            assert!((edge_theta.abs() - 1.6).abs() <= 1e-12, "edge {edge_theta}");
            assert!((lower_bound - (3.5 * 1.6 - 2.56)).abs() <= 1e-9, "bound {lower_bound}");
        }
        RateValue::Finite(v) => panic!("expected unbounded tail, got {v}"),
    }
}

#[test]
fn double_conjugate_tight_on_quadratic() {
    let (thetas, lambdas) = quadratic_grid();
    let a_values: Vec<f64> = (-15..=15).map(|i| i as f64 * 0.1).collect();
    let gap = double_conjugate_check(&thetas, &lambdas, &a_values).unwrap();
    assert!(gap <= 5e-3, "double conjugate gap {gap}");
    let a_star = typical_value(&thetas, &lambdas).unwrap();
    assert!(a_star.abs() <= 1e-12, "typical value {a_star}");
    let at_star = legendre_transform(&thetas, &lambdas, a_star).unwrap().finite().unwrap();
    assert!(at_star.abs() <= 1e-12, "rate at the typical value: {at_star}");
}

#[test]
fn dv_lower_bounds_and_saturates() {
    let m = model::ou(1.0);
    let mesh = Mesh::uniform_box(&[-8.0], &[8.0], 401).unwrap();
    let l = assemble_generator(&m, &mesh).unwrap();
    let n = mesh.n_nodes();
    let boundary: Vec<bool> = (0..n).map(|i| mesh.is_boundary(i)).collect();
    // nu = N(2,1), rate I(nu) = 1
    let mut nu = mesh.sample(|x| (-0.5 * (x[0] - 2.0) * (x[0] - 2.0)).exp());
    let z: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|w| *w /= z);

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..50 {
        let amp: f64 = rng.gen_range(0.2..1.2);
        let freq: f64 = rng.gen_range(0.2..1.5);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let u = mesh.sample(|x| (amp * (freq * x[0] + phase).sin()).exp());
        let dv = donsker_varadhan_value(&l, &u, &nu, &boundary).unwrap();
        assert!(dv.value <= 1.0 + 1e-3, "dv {} for amp {amp} freq {freq}", dv.value);
        assert!(dv.boundary_mass <= 1e-8, "boundary mass {}", dv.boundary_mass);
    }

    // the optimizer u* = exp((v + psi)/2) with psi = 0 for a reversible model
    let ustar = mesh.sample(|x| (x[0] - 1.0).exp());
    let tight = donsker_varadhan_value(&l, &ustar, &nu, &boundary).unwrap();
    assert!((tight.value - 1.0).abs() <= 1e-2, "saturated bound {}", tight.value);
}

#[test]
fn variational_family_attains_scgf() {
    let m = model::ou(1.0);
    let mesh = Mesh::uniform_box(&[-8.0], &[8.0], 401).unwrap();
    let l = assemble_generator(&m, &mesh).unwrap();
    let n = mesh.n_nodes();
    let boundary: Vec<bool> = (0..n).map(|i| mesh.is_boundary(i)).collect();
    let f = mesh.sample(|x| x[0]);

    // shifted Gaussians nu_m = N(m,1) paired with u_m = exp(m x / 2); the
    // tilted stationary pair sits at m = 2 where the objective is lambda(1) = 1
    let ms = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5];
    let family: Vec<(Vec<f64>, Vec<f64>)> = ms
        .iter()
        .map(|&mval| {
            let mut nu = mesh.sample(|x| (-0.5 * (x[0] - mval) * (x[0] - mval)).exp());
            let z: f64 = nu.iter().sum();
            nu.iter_mut().for_each(|w| *w /= z);
            let u = mesh.sample(|x| (0.5 * mval * x[0]).exp());
            (nu, u)
        })
        .collect();
    let out = variational_scgf_bound(&l, &f, &family, &boundary).unwrap();
    for (i, v) in out.values.iter().enumerate() {
        assert!(*v <= 1.0 + 1e-3, "family member {i} exceeds the scgf: {v}");
    }
    assert_eq!(out.best_index, 4, "optimum should sit at m = 2");
    assert!((out.best - 1.0).abs() <= 1e-2, "best value {}", out.best);
}

#[test]
fn contraction_bounds_observable_rate() {
    let m = model::ou(1.0);
    let mesh = Mesh::uniform_box(&[-8.0], &[8.0], 401).unwrap();
    let f = ScalarField::from_fn(1, "xsq", |x| x[0] * x[0]);
    let thetas: Vec<f64> = (-40..=11).map(|i| i as f64 * 0.02).collect();
    let curve = scgf_spectral(&m, &mesh, &f, &thetas, None, &SpectralParams::default()).unwrap();
    let lams: Vec<f64> = curve.points.iter().map(|p| p.lambda).collect();
    let ths: Vec<f64> = curve.points.iter().map(|p| p.theta).collect();

    // nu = N(0.8, 1): I(nu) = 0.16 and nu(x^2) = 1.64; observing the mean of
    // f can never cost more than observing the whole measure
    let a = 1.64;
    let i_f = legendre_transform(&ths, &lams, a).unwrap().finite().unwrap();
    assert!(i_f <= 0.16 + 1e-3, "contracted rate {i_f}");
    assert!(i_f > 0.0, "away from the typical value the rate is positive");
}

#[test]
fn symmetric_part_oracle_and_reversible_zero() {
    let m = model::ou(1.0);
    let mesh = Mesh::uniform_box(&[-8.0], &[8.0], 321).unwrap();
    let v = ScalarField::from_fn(1, "shift", |x| 2.0 * x[0] - 2.0);
    // companion residue grows with the squared perturbation scale; m = 2 needs
    // a wider gate than the default
    let params = DecomposeParams { compat_tol: 2e-2, ..DecomposeParams::default() };
    let dec = decompose(&m, &mesh, &v, &params).unwrap();
    assert_eq!(dec.i_a, 0.0);
    assert!(dec.psi.iter().all(|&p| p == 0.0));
    assert!(dec.current.iter().all(|&c| c == 0.0));
    assert!((dec.i_s - 1.0).abs() <= 1e-2, "i_s {}", dec.i_s);
    assert!((dec.i_s_fisher - 1.0).abs() <= 2e-2, "fisher route {}", dec.i_s_fisher);
    assert_eq!(dec.i_total, dec.i_s);
}

#[test]
fn rotating_well_produces_antisymmetric_entropy() {
    let mesh = Mesh::uniform_box(&[-6.0, -6.0], &[6.0, 6.0], 81).unwrap();
    let rot = model::rotating_well(1.0);
    let rev = model::quadratic_well(2);
    let params = DecomposeParams::default();

    let v = ScalarField::from_fn(2, "shift", |x| 0.4 * x[0] - 0.08);
    let dec = decompose(&rot, &mesh, &v, &params).unwrap();
    assert!(dec.i_a > 0.0, "rotation must dissipate: i_a {}", dec.i_a);
    // psi = a m x_2 solves the weighted Poisson problem, so I_A = a^2 m^2 / 4
    let exact = 0.25 * 0.4 * 0.4;
    assert!((dec.i_a - exact).abs() <= 0.05 * exact, "i_a {} exact {exact}", dec.i_a);

    let perturbations: Vec<ScalarField> = vec![
        ScalarField::from_fn(2, "p1", |x| 0.4 * x[0] - 0.08),
        ScalarField::from_fn(2, "p2", |x| 0.3 * x[1]),
        ScalarField::from_fn(2, "p3", |x| 0.2 * (x[0] + x[1])),
        ScalarField::from_fn(2, "p4", |x| 0.25 * x[0] - 0.1 * x[1]),
        ScalarField::from_fn(2, "p5", |x| 0.15 * x[0] + 0.05 * x[1]),
    ];
    for (k, p) in perturbations.iter().enumerate() {
        let forced = decompose(&rot, &mesh, p, &params).unwrap();
        let reversible = decompose(&rev, &mesh, p, &params).unwrap();
        assert!(
            forced.i_total >= reversible.i_total - 1e-12,
            "perturbation {k}: forced {} reversible {}",
            forced.i_total,
            reversible.i_total
        );
    }
}

#[test]
fn variational_identity_of_poisson_solution() {
    let mesh = Mesh::uniform_box(&[-7.0, -7.0], &[7.0, 7.0], 161).unwrap();
    let m = model::langevin_quadratic(1.0);
    let v = ScalarField::from_fn(2, "tilt", |x| x[0] - 0.5);
    let dec = decompose(&m, &mesh, &v, &DecomposeParams::default()).unwrap();
    let s_axes = [0.0, 1.0];
    let b: Vec<f64> = dec.current.iter().zip(&dec.nu).map(|(c, n)| c * n).collect();

    // J(phi) = <phi, b>/2 - E(phi)/4 is maximized by psi with J(psi) = i_a
    let j = |phi: &[f64]| -> f64 {
        let lin: f64 = phi.iter().zip(&b).map(|(p, bi)| p * bi).sum();
        0.5 * lin - 0.25 * dirichlet_energy(&mesh, &s_axes, &dec.nu, phi)
    };
    let j_psi = j(&dec.psi);
    assert!((j_psi - dec.i_a).abs() <= 1e-8, "j(psi) {} i_a {}", j_psi, dec.i_a);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..20 {
        let delta: Vec<f64> =
            (0..dec.psi.len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let perturbed: Vec<f64> = dec.psi.iter().zip(&delta).map(|(p, d)| p + d).collect();
        assert!(
            j(&perturbed) <= j_psi + 1e-8,
            "trial {trial}: objective increased by {}",
            j(&perturbed) - j_psi
        );
    }
}

#[test]
fn symmetric_rate_scales_quadratically() {
    let mesh = Mesh::uniform_box(&[-3.0], &[3.0], 41).unwrap();
    let mut nu = mesh.sample(|x| (-0.7 * x[0] * x[0] + 0.3 * x[0]).exp());
    let z: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|w| *w /= z);
    let v = mesh.sample(|x| (0.9 * x[0]).sin() + 0.2 * x[0] * x[0]);
    let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
    let s = [1.3];
    let base = symmetric_rate(&mesh, &s, &v, &nu);
    let doubled = symmetric_rate(&mesh, &s, &v2, &nu);
    assert!(base > 0.0);
    assert!((doubled - 4.0 * base).abs() <= 1e-12 * doubled.abs(), "{doubled} vs {}", 4.0 * base);
}

#[test]
fn mixed_perturbation_sweep_crossover() {
    let mesh = Mesh::uniform_box(&[-5.0, -5.0], &[5.0, 5.0], 81).unwrap();
    let pot = ScalarField::from_fn(1, "well", |q| 0.5 * q[0] * q[0]);
    let params = DecomposeParams::default();
    let gamma = 16.0;
    let pts = friction_sweep(
        &pot,
        &[gamma],
        &mesh,
        &|g| Ok(ScalarField::from_fn(2, "mixed", move |x| (x[0] - 0.5) + 0.1 * x[1].tanh() / g)),
        &params,
    )
    .unwrap();

    // large-friction limit of gamma*I: 1/4 + (0.1^2/4) E[sech^4 p] with the
    // expectation under the standard Gaussian momentum marginal
    let (mut quad, mut zq) = (0.0f64, 0.0f64);
    let steps = 4000;
    for i in 0..=steps {
        let p = -8.0 + 16.0 * i as f64 / steps as f64;
        let w = (-0.5 * p * p).exp();
        let sech = 1.0 / p.cosh();
        quad += w * sech.powi(4);
        zq += w;
    }
    let limit = 0.25 + 0.25 * 0.01 * quad / zq;
    let gi = pts[0].scaled_overdamped;
    assert!((gi - limit).abs() <= 0.1 * limit, "gamma I {gi} limit {limit}");
}

#[test]
fn autocorrelation_matches_poisson_route() {
    let mesh = Mesh::uniform_box(&[-6.0, -6.0], &[6.0, 6.0], 97).unwrap();
    let m = model::langevin_quadratic(1.0);
    let v = ScalarField::from_fn(2, "tilt", |x| x[0] - 0.5);
    let dec = decompose(&m, &mesh, &v, &DecomposeParams::default()).unwrap();
    let params = AutocorrParams { t_corr: 4.0, t_measure: 200.0, dt: 1e-2, n_paths: 8, seed: 2 };
    let ac = autocorrelation_ia(&mesh, &[0.0, 1.0], &dec.nu, &dec.current, &params).unwrap();
    assert!(!ac.truncation_warning, "window truncates: ratio {}", ac.truncation_ratio);
    assert!(
        (ac.value - dec.i_a).abs() <= 3.0 * ac.stderr,
        "autocorr {} vs poisson {} (stderr {})",
        ac.value,
        dec.i_a,
        ac.stderr
    );
}
