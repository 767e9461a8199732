//! Closed-form fluctuation laws of symmetric stable processes: ratio of
//! final value to maximum, the ratio of the first two swings, exit
//! probabilities and expected exit times.

use levy_krein::stable_forms::{
    exit_probability, expected_exit_time, final_over_max_law, meander_ratio, ratio_law_cdf,
    StableFluctuationLaw,
};
use levy_krein::{PositivityParams, Result};
use num_complex::Complex64;

fn main() -> Result<()> {
    let params = PositivityParams::new(0.5, 0.5)?;

    // Final displacement over maximum is Beta distributed.
    let beta = final_over_max_law(&params)?;
    println!("final/max law for gamma = delta = 1/2: Beta({}, {})", beta.a, beta.b);
    println!("  mean = {:.4}", beta.a / (beta.a + beta.b));

    // The second swing over the first follows the power law r^delta.
    println!("\ncdf of (second swing)/(first swing):");
    for &r in &[0.25, 0.5, 0.75, 1.0] {
        println!("  P(ratio <= {r:.2}) = {:.4}", ratio_law_cdf(&params, r)?);
    }

    // Expectation ratio between the stopped meander and the full path.
    let m = meander_ratio(1.0, 0.5)?;
    println!("\nmeander expectation ratio at alpha = 1, delta = 1/2: {m:.6}");

    // Exit quantities across asymmetric exponents.
    println!("\nskewed exponents gamma = 0.7, delta = 0.3, barriers a = 2, b = 1:");
    let skewed = PositivityParams::new(0.7, 0.3)?;
    println!("  P(exit up) = {:.6}", exit_probability(&skewed, 2.0, 1.0)?);
    println!("  E[exit time] = {:.6}", expected_exit_time(&skewed, 2.0, 1.0)?);

    // The packaged law evaluates H and the restricted transform together.
    let law = StableFluctuationLaw::new(params, 1.0, 1.0)?;
    let x = 0.8;
    let phi = law.phi(x, Complex64::new(1.0, 0.0))?;
    println!("\nH({x}) = {:.6}, phi({x}, 1) = {:.6}", law.h(x), phi.re);
    println!("self-similarity: phi(2x, 1) = sqrt(2) phi(x, 2):");
    let lhs = law.phi(2.0 * x, Complex64::new(1.0, 0.0))?.re;
    let rhs = 2.0f64.sqrt() * law.phi(x, Complex64::new(2.0, 0.0))?.re;
    println!("  {lhs:.10} vs {rhs:.10}");
    assert!((lhs - rhs).abs() < 1e-10);
    Ok(())
}
