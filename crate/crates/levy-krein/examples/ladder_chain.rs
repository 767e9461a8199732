//! Decomposing killed paths into alternating ladder chains, and running
//! the chain directly from a renewal table without simulating paths.
//!
//! A killed path splits into swings: up to a new maximum, down to a new
//! post-maximum minimum, and so on. The signed swing heights sum to the
//! final displacement, and the first height is the overall maximum of the
//! first excursion. The same chain can be sampled intrinsically from the
//! renewal function `H`: each swing height given the previous one `z`
//! follows the kernel `H(dy) / H(z)` on `[0, z]`, which is what
//! `simulate_chain` iterates.

use levy_krein::extrema_chain::{extract_ladder_chain, simulate_chain};
use levy_krein::path_sim::{fluctuation_summary, sample_path};
use levy_krein::{LevyModel, MonotoneTable, Result};

fn main() -> Result<()> {
    // One killed Cauchy path, decomposed.
    let model = LevyModel::symmetric_stable(1.0)?;
    let path = sample_path(&model, 1e-3, 7)?;
    let chain = extract_ladder_chain(&path)?;
    let extremes = fluctuation_summary(&path)?;
    println!("one killed path, dt = 1e-3:");
    println!("  lifetime = {:.4}, swings = {}", path.lifetime, chain.heights.len());
    for (i, (t, h)) in chain.times.iter().zip(&chain.heights).take(6).enumerate() {
        println!("  swing {i}: time {t:.4}, signed height {h:+.4}");
    }
    let over_min = extremes.final_value - extremes.min;
    println!("  sum of heights = {:.6}, final minus minimum = {over_min:.6}", chain.total());
    assert!((chain.total() - over_min).abs() < 1e-9);

    // The intrinsic chain for the alpha = 1 renewal function H(x) = c sqrt(x).
    // Conditioning the first swing below 1 keeps every later swing below 1.
    let h = MonotoneTable::power_law(1.0, 0.5, 1e-9, 1.0, 400)?;
    let n = 20_000;
    let mut mean_ratio = 0.0;
    let mut mean_steps = 0.0;
    for seed in 0..n {
        let (max, final_value, steps) = simulate_chain(&h, &h, 1.0, seed)?;
        assert!(0.0 <= final_value && final_value <= max && max <= 1.0);
        mean_ratio += final_value / max;
        mean_steps += steps as f64;
    }
    mean_ratio /= n as f64;
    mean_steps /= n as f64;
    println!("\nintrinsic chains from H(x) = sqrt(x), first swing capped at 1:");
    println!("  mean final/max over {n} chains = {mean_ratio:.4}");
    println!("  mean swings until the chain closes = {mean_steps:.2}");
    // final/max follows Beta(3/2, 1/2) here, whose mean is 3/4.
    assert!((mean_ratio - 0.75).abs() < 0.01);
    println!("  matches the Beta(3/2, 1/2) mean 0.75");
    Ok(())
}
