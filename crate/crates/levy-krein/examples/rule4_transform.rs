//! The commutation transform for a renewal function of unbounded
//! variation, where no string on a half line exists and the change of
//! variables must run through the conjugate pair instead.
//!
//! The Brownian renewal function H(x) = tanh(x/2) is the benchmark: the
//! commuted weight H / W_1 is exactly flat at one half, the argument map
//! is t(x) = x/2, and the residual combination D + D' W_1 equals
//! (1 - lambda^2) exp(-lambda t) on the nose. The transform has a pole
//! at lambda = 1 (the killing rate), and renewal functions whose commuted
//! weight is not flat carry no known reference and are refused.

use levy_krein::error::Error;
use levy_krein::extrema_chain::log_nodes;
use levy_krein::string_bridge::unbounded_transform;
use levy_krein::{MonotoneTable, Result};

fn main() -> Result<()> {
    let xs = log_nodes(1e-5, 14.0, 40);
    let ys: Vec<f64> = xs.iter().map(|x| (x / 2.0).tanh()).collect();
    let h = MonotoneTable::from_samples(xs, ys)?;

    for &lam in &[0.5, 2.0] {
        let (transform, report) = unbounded_transform(&h, lam)?;
        let exact = 1.0 - lam * lam;
        println!("lambda = {lam}:");
        println!(
            "  fitted constant = {:+.5}  (exact 1 - lambda^2 = {exact:+.5})",
            report.fitted_constant
        );
        println!("  residual sup against the flat reference = {:.2e}", report.residual_sup);
        println!(
            "  commuted weight level = {:.5}, spread = {:.2e}",
            report.commutated_level, report.commutated_spread
        );
        println!("  argument map starts at t = {:.2e}", report.t_map_start);
        assert!((report.fitted_constant - exact).abs() < 0.05 * exact.abs());
        assert!(report.residual_sup < 5e-2);

        // t(x) = x/2 for this renewal function.
        let (txs, tts) = transform.t_map.nodes();
        let mid = txs.len() / 2;
        println!(
            "  t({:.3}) = {:.4}, t({:.3}) = {:.4}  (the map is x/2)",
            txs[mid],
            tts[mid],
            txs[txs.len() - 1],
            tts[txs.len() - 1]
        );
    }

    // The killing rate is a pole of the transform.
    match unbounded_transform(&h, 1.0) {
        Err(Error::Pole(msg)) => println!("\nlambda = 1 is refused: {msg}"),
        other => panic!("expected the pole diagnostic, got {other:?}"),
    }

    // A bounded-variation renewal function belongs to the string route.
    let quarter = MonotoneTable::power_law(1.0, 0.25, 1e-6, 20.0, 200)?;
    match unbounded_transform(&quarter, 2.0) {
        Err(Error::Domain(msg)) => println!("bounded variation is refused: {msg}"),
        other => panic!("expected the domain rejection, got {other:?}"),
    }

    // A linear renewal function passes the variation check, but its
    // commuted weight is visibly not flat, so no reference is claimed.
    let linear = MonotoneTable::power_law(0.8, 1.0, 1e-6, 30.0, 200)?;
    match unbounded_transform(&linear, 2.0) {
        Err(Error::UnsupportedModel(msg)) => println!("non-flat commuted weight: {msg}"),
        other => panic!("expected the unsupported-model rejection, got {other:?}"),
    }
    Ok(())
}
