//! The entropy identity: the boundary series of a string settles on the
//! frequency integral of its log spectral density.
//!
//! Three strings illustrate it. The unit-density string has flat spectral
//! density, so both sides vanish. A cube-law density calibrated so the
//! spectral density is exactly sqrt(u) turns the frequency side into the
//! closed value log(lambda)/2. Finally, a string estimated from killed
//! alpha = 1/2 paths settles log(2) above the quadrature exponent of the
//! process, measuring the doubling of the identified density.

use levy_krein::krein_string::{entropy_formula, SpectralDensity, StringMeasure};
use levy_krein::specfun::gamma;
use levy_krein::string_bridge::verify_wiener_hopf;
use levy_krein::{LevyModel, MonotoneTable, Result};

fn main() -> Result<()> {
    // Flat string, flat density: the identity is 0 = 0.
    let m = StringMeasure::lebesgue(12.0)?;
    let s_inv = MonotoneTable::power_law(1.0, 1.0, 1e-6, 30.0, 40)?;
    let flat = SpectralDensity::new(vec![1e-3, 1e3], vec![1.0, 1.0], 0.0)?;
    let rep = entropy_formula(&m, &s_inv, &flat, 1.0)?;
    println!("unit-density string, flat spectral density:");
    println!("  frequency side = {:.2e}, boundary series = {:.2e}", rep.lhs, rep.rhs);
    assert!(rep.lhs == 0.0 && rep.rhs.abs() < 1e-6);

    // Cube-law density tuned so the spectral density is sqrt(u).
    let pi = std::f64::consts::PI;
    let c = pi * pi / (8.0 * gamma(0.75).powi(4));
    let kappa = 4.0 * c * c / 3.0;
    let s_inv = MonotoneTable::power_law((3.0 * kappa).sqrt(), 2.0, 1e-6, 30.0, 60)?;
    let delta = SpectralDensity::power(1.0, 0.5, 1e-4, 1e4, 520)?;
    println!("\ncalibrated cube-law string, spectral density sqrt(u):");
    for &lam in &[0.5, 1.0, 2.0] {
        let x_max = (150.0 / (c * lam)).sqrt();
        let m = StringMeasure::power_density(3.0 * kappa, 2.0, x_max, 3000)?;
        let rep = entropy_formula(&m, &s_inv, &delta, lam)?;
        let exact = 0.5 * lam.ln();
        println!(
            "  lambda = {lam:<4} frequency side = {:+.5}  plateau = {:+.5}  exact = {:+.5}",
            rep.lhs, rep.rhs, exact
        );
        assert!((rep.lhs - exact).abs() < 1e-3 && (rep.lhs - rep.rhs).abs() < 1e-2);
    }

    // A string estimated from killed alpha = 1/2 paths: its boundary
    // series sits log 2 above the quadrature exponent of the process,
    // because the string identifies twice the shifted exponent.
    let model = LevyModel::symmetric_stable(0.5)?;
    let report = verify_wiener_hopf(&model, &[1.0, 2.0], 20_000, 2e-3, 9)?;
    let route = report.diagnostics.entropy_route.expect("bounded variation has the route");
    println!("\nstring estimated from 20k killed alpha = 1/2 paths:");
    for row in &route.per_lambda {
        println!(
            "  lambda = {:<4} boundary series = {:.4}  quadrature = {:.4}  difference = {:.4}",
            row.lambda,
            row.lhs,
            row.rhs,
            row.lhs - row.rhs
        );
    }
    println!(
        "  fitted density multiplier = {:.3} (log gap {:.3}, against log 2 = {:.3})",
        route.fitted_multiplier,
        route.fitted_multiplier.ln(),
        std::f64::consts::LN_2
    );
    assert!((route.fitted_multiplier.ln() - std::f64::consts::LN_2).abs() < 0.15);
    Ok(())
}
