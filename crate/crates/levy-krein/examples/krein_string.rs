//! Integrating a measure-coefficient string A'' = lambda^2 rho A and its
//! decaying partner D, with two cases whose solutions are elementary.
//!
//! The Lebesgue string (unit density) has A = cosh(lambda x) and
//! D = exp(-lambda x) / lambda. Adding a point mass kinks the derivative
//! but preserves the Wronskian A D' - A' D = -1, which the integrator
//! maintains through atoms by construction.

use levy_krein::krein_string::{integrate_ad, spectral_transform, StringMeasure};
use levy_krein::Result;

fn main() -> Result<()> {
    let string = StringMeasure::lebesgue(12.0)?;
    let lambda = 1.0;
    let sol = integrate_ad(&string, lambda, 12.0)?;

    let mut err_a = 0.0f64;
    let mut err_d = 0.0f64;
    let mut err_w = 0.0f64;
    for (i, &x) in sol.xs.iter().enumerate() {
        err_a = err_a.max((sol.a[i] - (lambda * x).cosh()).abs());
        err_d = err_d.max((sol.d[i] - (-lambda * x).exp() / lambda).abs());
        let w = sol.a[i] * sol.d_prime[i] - sol.a_prime[i] * sol.d[i];
        err_w = err_w.max((w + 1.0).abs());
    }
    println!("unit-density string on [0, 12], lambda = 1:");
    println!("  max |A - cosh|        = {err_a:.2e}");
    println!("  max |D - exp(-x)|     = {err_d:.2e}");
    println!("  max |Wronskian + 1|   = {err_w:.2e}");
    assert!(err_a < 1e-7 && err_d < 1e-7 && err_w < 1e-8);

    // The transform D(0, lambda) is 1/lambda for the unit density.
    let lambdas = [0.25, 0.5, 1.0, 2.0, 4.0];
    let d0 = spectral_transform(&string, &lambdas)?;
    println!("\ntransform D(0, lambda) against 1/lambda:");
    for (l, v) in lambdas.iter().zip(&d0) {
        println!("  lambda = {l:<4}  D(0) = {v:.8}  (exact {:.8})", 1.0 / l);
        assert!((v - 1.0 / l).abs() < 1e-6);
    }

    // A point mass of weight 2 at x = 1 kinks A' by 2 lambda^2 A(1).
    let kinked = StringMeasure::new(vec![0.0, 12.0], vec![1.0, 1.0], vec![(1.0, 2.0)])?;
    let sol = integrate_ad(&kinked, lambda, 12.0)?;
    let mut err_w = 0.0f64;
    for i in 0..sol.xs.len() {
        let w = sol.a[i] * sol.d_prime[i] - sol.a_prime[i] * sol.d[i];
        err_w = err_w.max((w + 1.0).abs());
    }
    println!("\nsame string plus a point mass of 2 at x = 1:");
    println!("  D(0, 1) drops to {:.6} (mass slows the diffusion)", sol.d0());
    println!("  max |Wronskian + 1| across the atom = {err_w:.2e}");
    assert!(err_w < 1e-8);
    assert!(sol.d0() < 1.0);
    Ok(())
}
