//! Built-in oracle battery behind `devrate selftest`: quick analytic checks
//! that catch a broken build or a miscompiled numeric kernel before a long
//! run is launched. Every check has a closed-form expected value.

use devrate_core::decompose::{decompose, DecomposeParams};
use devrate_core::grid::Mesh;
use devrate_core::lyapunov::{cramer_comparison, langevin_lyapunov_params, witten_potential_theta, TailClass};
use devrate_core::model;
use devrate_core::ratefn::legendre_transform;
use devrate_core::scgf::{scgf_spectral, SpectralParams};

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

pub fn run() -> Vec<Check> {
    let mut out = Vec::new();

    // quadratic SCGF of the linear observable under the unit-rate OU process
    let ou = model::ou(1.0);
    let mesh = Mesh::uniform_box(&[-8.0], &[8.0], 401).expect("static mesh");
    let f = ou.parse_field("x", "f").expect("static expression");
    let thetas = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let params = SpectralParams::default();
    match scgf_spectral(&ou, &mesh, &f, &thetas, None, &params) {
        Ok(curve) => {
            let worst = curve
                .points
                .iter()
                .map(|p| (p.lambda - p.theta * p.theta).abs())
                .fold(0.0f64, f64::max);
            out.push(check(
                "scgf quadratic oracle",
                worst <= 1e-3,
                format!("max |lambda - theta^2| = {worst:.3e} (tol 1e-3)"),
            ));
            out.push(check(
                "scgf convexity",
                curve.verify_convexity(1e-10).is_ok(),
                format!("defect = {:.3e}", curve.convexity_defect),
            ));
            match legendre_transform(&curve.thetas(), &curve.lambdas(), 1.0) {
                Ok(rv) => {
                    let val = rv.finite().unwrap_or(f64::NAN);
                    out.push(check(
                        "rate function oracle",
                        (val - 0.25).abs() <= 5e-3,
                        format!("I(1) = {val:.6} (expect 0.25)"),
                    ));
                }
                Err(e) => out.push(check("rate function oracle", false, e.to_string())),
            }
        }
        Err(e) => out.push(check("scgf quadratic oracle", false, e.to_string())),
    }

    // Witten confinement weight of the quadratic well in closed form
    match witten_potential_theta(&ou, 0.5) {
        Ok(psi) => {
            let got = psi.value(&[2.0]);
            let expect = 0.25 * 4.0 - 0.5;
            out.push(check(
                "confinement weight closed form",
                (got - expect).abs() <= 1e-9,
                format!("Psi(2) = {got:.12} (expect {expect})"),
            ));
        }
        Err(e) => out.push(check("confinement weight closed form", false, e.to_string())),
    }

    // tail regimes on both sides of the Gaussian boundary
    let regimes = [
        (1.5, TailClass::SubGaussian),
        (2.0, TailClass::Gaussian),
        (3.0, TailClass::SuperGaussian),
    ];
    let mut ok = true;
    let mut detail = String::new();
    for (q, want) in regimes {
        match cramer_comparison(q) {
            Ok(g) => {
                if g.class != want {
                    ok = false;
                }
                detail.push_str(&format!("q={q}:{:?} ", g.class));
            }
            Err(e) => {
                ok = false;
                detail = e.to_string();
                break;
            }
        }
    }
    out.push(check("tail regime classification", ok, detail.trim_end().into()));

    // kinetic drift parameters exist with positive gains at unit constants
    match langevin_lyapunov_params(1.0, 1.0, 1.0, 0.5, 1) {
        Ok(p) => out.push(check(
            "kinetic drift parameters",
            p.quadratic_gain > 0.0 && p.momentum_gain > 0.0,
            format!("gains ({:.4}, {:.4})", p.quadratic_gain, p.momentum_gain),
        )),
        Err(e) => out.push(check("kinetic drift parameters", false, e.to_string())),
    }

    // kinetic decomposition: position tilt of the quadratic well has
    // I_S = 0 and I_A = m^2 / (4 gamma)
    let lan = model::langevin_quadratic(1.0);
    let mesh2 = Mesh::uniform_box(&[-4.0, -4.0], &[4.0, 4.0], 33).expect("static mesh");
    let v = lan.parse_field("0.5*q - 0.125", "v").expect("static expression");
    match decompose(&lan, &mesh2, &v, &DecomposeParams::default()) {
        Ok(dec) => {
            let expect = 0.0625;
            let rel = (dec.i_a - expect).abs() / expect;
            out.push(check(
                "kinetic decomposition oracle",
                dec.i_s == 0.0 && rel <= 0.05,
                format!("I_S = {:.3e}, I_A = {:.6} (expect {expect}, rel err {rel:.2e})", dec.i_s, dec.i_a),
            ));
        }
        Err(e) => out.push(check("kinetic decomposition oracle", false, e.to_string())),
    }

    out
}
