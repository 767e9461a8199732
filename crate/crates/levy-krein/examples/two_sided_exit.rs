//! Two-sided exit of a symmetric Cauchy process: the closed form against
//! a step-path Monte Carlo estimate.
//!
//! For positivity exponents `gamma = delta = 1/2` the chance of leaving
//! `[-a, b]` upward is the regularized incomplete beta of (1/2, 1/2) at
//! `b / (a + b)`, which is the arcsine law of the split. The Monte Carlo
//! side runs the step-path estimator at two step sizes and extrapolates
//! the discretization bias away.

use levy_krein::stable_forms::{exit_probability, exit_up_mc, expected_exit_time};
use levy_krein::{LevyModel, PositivityParams, Result};

fn main() -> Result<()> {
    let params = PositivityParams::new(0.5, 0.5)?;

    println!("closed form, barriers a = 3, b = 1:");
    let p = exit_probability(&params, 3.0, 1.0)?;
    println!("  P(exit upward) = {p:.12}   (exactly 1/3)");

    println!("\nsweep of the barrier split at fixed width a + b = 4:");
    for &b in &[0.5, 1.0, 2.0, 3.0, 3.5] {
        let a = 4.0 - b;
        let p = exit_probability(&params, a, b)?;
        let t = expected_exit_time(&params, a, b)?;
        println!("  a = {a:.1}, b = {b:.1}:  P(up) = {p:.6}   E[exit time] = {t:.6}");
    }

    // The sampler handles the symmetric alpha = 1 member of the family.
    let model = LevyModel::symmetric_stable(1.0)?;
    let (mc, se) = exit_up_mc(&model, 3.0, 1.0, 2e-3, 20_000, 42, 0)?;
    let gap = (mc - 1.0 / 3.0).abs();
    println!("\nMonte Carlo cross-check (20k paths, step-halving extrapolation):");
    println!("  estimate = {mc:.5} +- {se:.5},  |gap| = {gap:.5}");
    assert!(gap < 4.0 * se.max(2e-3), "Monte Carlo disagrees with the closed form");
    println!("  agrees with 1/3 within the sampling error");
    Ok(())
}
