//! Alternating extrema chains of killed paths.
//!
//! A killed path splits at its minimum; the part after the minimum climbs
//! to its maximum, falls to its next minimum, and so on. The signed
//! heights Z_1, Z_2, ... of these swings alternate in sign, shrink in
//! magnitude, and telescope to final value minus minimum. Their law is a
//! two-table Markov kernel driven by the renewal functions H (ascending)
//! and H-check (descending), which is what makes the chain simulable
//! without the path.

use crate::error::{Error, Result};
use crate::models::{uniform_open, Killing, LevyModel, LEBESGUE_RATE_LEVELS};
use crate::path_sim::{fluctuation_summary, mc_map, simulate_path, PathSample};
use crate::table::MonotoneTable;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Signed swing heights of one path with the grid times at which each
/// swing's closing extremum is attained.
#[derive(Debug, Clone, Serialize)]
pub struct LadderChain {
    pub times: Vec<f64>,
    pub heights: Vec<f64>,
}

impl LadderChain {
    /// Sum of the signed heights; equals final value minus minimum.
    pub fn total(&self) -> f64 {
        self.heights.iter().sum()
    }
}

/// Relative threshold below which a swing is treated as closed out.
pub const CHAIN_EPS_REL: f64 = 1e-12;
/// Safety cap on chain length.
pub const CHAIN_MAX_STEPS: usize = 10_000;

/// Decomposes a gridded path into its alternating extrema chain.
///
/// The first swing starts at the earliest minimum of the whole path; each
/// later swing starts at the closing extremum of the previous one. Swings
/// smaller than `CHAIN_EPS_REL` times the first one terminate the chain.
pub fn extract_ladder_chain(path: &PathSample) -> Result<LadderChain> {
    if path.values.is_empty() {
        return Err(Error::DegenerateState("empty path".into()));
    }
    let v = &path.values;
    // Earliest global minimum.
    let mut start = 0usize;
    for (k, &x) in v.iter().enumerate() {
        if x < v[start] {
            start = k;
        }
    }
    let mut times = Vec::new();
    let mut heights = Vec::new();
    let mut level = v[start];
    let mut upward = true;
    let mut eps = f64::INFINITY;
    while start + 1 < v.len() && heights.len() < CHAIN_MAX_STEPS {
        // Earliest extremum of the remaining segment, in the current
        // direction.
        let mut best = start;
        for k in start..v.len() {
            if (upward && v[k] > v[best]) || (!upward && v[k] < v[best]) {
                best = k;
            }
        }
        let z = v[best] - level;
        if heights.is_empty() {
            // The first swing is nonnegative by construction; a zero
            // swing means the minimum sits at the end of the path.
            if z <= 0.0 {
                break;
            }
            eps = CHAIN_EPS_REL * z;
        } else if z.abs() <= eps {
            break;
        }
        heights.push(z);
        times.push(best as f64 * path.dt);
        level = v[best];
        start = best;
        upward = !upward;
    }
    Ok(LadderChain { times, heights })
}

/// One step of the chain kernel, drawing from the caller's generator: from
/// a swing of signed height `z`, draws the next signed height. A positive
/// swing is followed by a drop whose magnitude has distribution function
/// H-check(s) / H-check(z) on (0, z]; a negative swing by a rise governed
/// by H the same way. Consumes exactly one uniform.
pub fn kernel_step_with<R: Rng>(
    h: &MonotoneTable,
    h_check: &MonotoneTable,
    z: f64,
    rng: &mut R,
) -> Result<f64> {
    if z == 0.0 || !z.is_finite() {
        return Err(Error::DegenerateState(format!("kernel cannot step from height {z}")));
    }
    let u = uniform_open(rng);
    if z > 0.0 {
        Ok(-h_check.sample_ratio(z, u)?)
    } else {
        Ok(h.sample_ratio(-z, u)?)
    }
}

/// One kernel step from a fresh seeded generator.
pub fn kernel_step(
    h: &MonotoneTable,
    h_check: &MonotoneTable,
    z: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kernel_step_with(h, h_check, z, &mut rng)
}

/// Runs a chain from a given first swing until it closes out, returning
/// all signed heights.
pub fn chain_from_first_swing<R: Rng>(
    h: &MonotoneTable,
    h_check: &MonotoneTable,
    z1: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(z1 > 0.0) {
        return Err(Error::Domain(format!("first swing must be positive, got {z1}")));
    }
    let eps = CHAIN_EPS_REL * z1;
    let mut heights = vec![z1];
    let mut z = z1;
    for _ in 0..CHAIN_MAX_STEPS {
        z = kernel_step_with(h, h_check, z, rng)?;
        if z.abs() <= eps {
            return Ok(heights);
        }
        heights.push(z);
    }
    Err(Error::NonConvergence(format!(
        "chain did not close out within {CHAIN_MAX_STEPS} swings"
    )))
}

/// Simulates one complete chain whose first swing is drawn from H
/// conditioned to (0, x_cap]. Returns (M, F, n_steps): the first swing,
/// which is the maximum of the post-minimum piece the chain encodes; the
/// telescoped sum, which is its final height; and the number of swings.
/// Always 0 <= F <= M <= x_cap.
pub fn simulate_chain(
    h: &MonotoneTable,
    h_check: &MonotoneTable,
    x_cap: f64,
    seed: u64,
) -> Result<(f64, f64, usize)> {
    if !(x_cap > 0.0 && x_cap.is_finite()) {
        return Err(Error::Domain(format!("swing cap must be positive, got {x_cap}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z1 = h.sample_ratio(x_cap, uniform_open(&mut rng))?;
    let heights = chain_from_first_swing(h, h_check, z1, &mut rng)?;
    Ok((z1, heights.iter().sum(), heights.len()))
}

/// Chain Monte Carlo estimate of the restricted transform
/// phi(x, lambda) = integral over (0, x] of E exp(-lambda (z + rest))
/// against H(dz): the first swing is drawn from H conditioned to (0, x],
/// the chain is run to closure, and the factor H(x) restores the
/// unnormalized mass. Returns (estimate, standard error); at lambda = 0
/// every draw is 1, so the estimate is exactly H(x) with zero error.
pub fn phi_mc(
    h: &MonotoneTable,
    h_check: &MonotoneTable,
    x: f64,
    lambda: Complex64,
    n_chains: usize,
    seed: u64,
) -> Result<(Complex64, f64)> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("evaluation point must be positive, got {x}")));
    }
    if n_chains < 100 {
        return Err(Error::InsufficientSampling("need at least 100 chains".into()));
    }
    let draws: Vec<Result<Complex64>> = mc_map(n_chains, seed, 0, |_, rng| {
        let z1 = h.sample_ratio(x, uniform_open(rng))?;
        let heights = chain_from_first_swing(h, h_check, z1, rng)?;
        Ok((-lambda * heights.iter().sum::<f64>()).exp())
    });
    let mut sum = Complex64::new(0.0, 0.0);
    let mut sum_sq = 0.0;
    let mut values = Vec::with_capacity(n_chains);
    for d in draws {
        let v = d.map_err(|e| Error::NonConvergence(format!("chain replica failed: {e}")))?;
        sum += v;
        values.push(v);
    }
    let nf = n_chains as f64;
    let mean = sum / nf;
    for v in &values {
        sum_sq += (v - mean).norm_sqr();
    }
    let scale = h.eval(x);
    Ok((scale * mean, scale * (sum_sq / nf / nf).sqrt()))
}

/// First swing of a gridded path: the height climbed from the earliest
/// minimum to the maximum of what follows it. None when the minimum sits
/// at the end of the path, which is the grid analogue of a zero swing.
pub fn first_swing_of(path: &PathSample) -> Option<f64> {
    let s = fluctuation_summary(path).ok()?;
    let start = (s.argmin / path.dt).round() as usize;
    let z = path.values[start..].iter().cloned().fold(f64::NEG_INFINITY, f64::max) - s.min;
    if z > 0.0 {
        Some(z)
    } else {
        None
    }
}

/// First swing heights of killed paths: one draw of Z_1 per path, paths
/// with no positive swing skipped.
pub fn first_swing_heights(
    model: &LevyModel,
    n: usize,
    dt: f64,
    seed: u64,
    workers: usize,
) -> Result<Vec<f64>> {
    model.require_samplable()?;
    model.kill_rate()?;
    let draws: Vec<Result<Option<f64>>> = mc_map(n, seed, workers, |_, rng| {
        Ok(first_swing_of(&simulate_path(model, dt, rng)?))
    });
    let mut heights = Vec::with_capacity(n);
    for d in draws {
        if let Some(z) = d? {
            heights.push(z);
        }
    }
    Ok(heights)
}

/// Empirical distribution function of `samples` on the given nodes, as a
/// table. Nodes holding fewer than `min_count` observations are dropped so
/// the head never rests on pure noise; at least two nodes must survive.
pub fn cdf_table(samples: &[f64], nodes: &[f64], min_count: usize) -> Result<MonotoneTable> {
    if samples.is_empty() {
        return Err(Error::InsufficientSampling("no samples for the distribution table".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = sorted.len() as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &node in nodes {
        let count = sorted.partition_point(|&s| s <= node);
        if count >= min_count {
            xs.push(node);
            ys.push(count as f64 / nf);
        }
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientSampling(
            "fewer than two distribution nodes carry enough mass".into(),
        ));
    }
    MonotoneTable::from_samples(xs, ys)
}

/// Minimum observations a node needs before it enters the estimated
/// renewal table.
const H_MIN_COUNT: usize = 25;

/// Estimates the ascending renewal function H on the given grid, together
/// with pointwise standard errors on the surviving nodes.
///
/// Exponential killing gives the plain empirical distribution function of
/// the first swing. The Lebesgue mode runs the rate schedule 1, 1/2, ...,
/// 2^-6 with the grid scaled to keep the expected step count per lifetime
/// fixed, forms node ratios against the central grid node, and
/// extrapolates them linearly in the rate to zero killing; the result is
/// normalized to 1 at that central node, which fixes the scale left free
/// by the vanishing-rate limit.
pub fn estimate_h(
    model: &LevyModel,
    x_grid: &[f64],
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<(MonotoneTable, Vec<f64>)> {
    model.require_samplable()?;
    if n_paths < 1_000 {
        return Err(Error::InsufficientSampling(format!(
            "renewal estimation needs at least 1000 paths, got {n_paths}"
        )));
    }
    if x_grid.len() < 2 {
        return Err(Error::Domain("need at least two grid nodes".into()));
    }
    match model.killing {
        Killing::Exponential { .. } => {
            let heights = first_swing_heights(model, n_paths, dt, seed, 0)?;
            let mut sorted = heights;
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let nf = sorted.len() as f64;
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut ses = Vec::new();
            for &node in x_grid {
                let count = sorted.partition_point(|&s| s <= node);
                if count >= H_MIN_COUNT {
                    let p = count as f64 / nf;
                    xs.push(node);
                    ys.push(p);
                    ses.push((p * (1.0 - p) / nf).sqrt());
                }
            }
            if xs.len() < 2 {
                return Err(Error::InsufficientSampling(
                    "fewer than two grid nodes carry enough mass".into(),
                ));
            }
            Ok((MonotoneTable::from_samples(xs, ys)?, ses))
        }
        Killing::LebesgueProxy => estimate_h_vanishing(model, x_grid, n_paths, dt, seed),
    }
}

/// Standard error of the intercept of a least squares line, from the fit
/// residuals.
fn intercept_se(xs: &[f64], ys: &[f64], slope: f64, intercept: f64) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    (ss_res / (n - 2.0) * (1.0 / n + mx * mx / sxx)).sqrt()
}

fn estimate_h_vanishing(
    model: &LevyModel,
    x_grid: &[f64],
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<(MonotoneTable, Vec<f64>)> {
    let x_ref = x_grid[x_grid.len() / 2];
    let n_per_level = n_paths / LEBESGUE_RATE_LEVELS;
    let levels: Vec<f64> = (0..LEBESGUE_RATE_LEVELS).map(|k| 0.5f64.powi(k as i32)).collect();
    let mut ratios: Vec<Vec<f64>> = Vec::new(); // per level, per node
    for (li, &rate) in levels.iter().enumerate() {
        let level_model = model.clone().with_killing(rate)?;
        // Lifetimes stretch as the rate falls; scaling the grid with them
        // keeps the expected step count per path fixed.
        let level_dt = dt / rate;
        let heights = first_swing_heights(
            &level_model,
            n_per_level,
            level_dt,
            seed.wrapping_add(li as u64 * 0x9e37_79b9),
            0,
        )?;
        let mut sorted = heights;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let at_ref = sorted.partition_point(|&s| s <= x_ref) as f64;
        if at_ref < 100.0 {
            return Err(Error::InsufficientSampling(format!(
                "only {at_ref} swings reach below the reference point at rate {rate}"
            )));
        }
        ratios.push(
            x_grid
                .iter()
                .map(|&x| sorted.partition_point(|&s| s <= x) as f64 / at_ref)
                .collect(),
        );
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ses = Vec::new();
    for (j, &node) in x_grid.iter().enumerate() {
        let per_level: Vec<f64> = ratios.iter().map(|r| r[j]).collect();
        // Linear-in-rate extrapolation to zero killing.
        let (slope, intercept) = crate::stats::fit_line(&levels, &per_level)?;
        if intercept > 0.0 {
            xs.push(node);
            ys.push(intercept);
            ses.push(intercept_se(&levels, &per_level, slope, intercept));
        }
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientSampling(
            "vanishing-killing extrapolation left fewer than two usable nodes".into(),
        ));
    }
    let mut run_max = 0.0f64;
    for y in ys.iter_mut() {
        run_max = run_max.max(*y);
        *y = run_max;
    }
    Ok((MonotoneTable::from_samples(xs, ys)?, ses))
}

/// Log-spaced node grid, `per_decade` nodes per factor of ten.
pub fn log_nodes(x_min: f64, x_max: f64, per_decade: usize) -> Vec<f64> {
    assert!(x_min > 0.0 && x_max > x_min && per_decade > 0);
    let decades = (x_max / x_min).log10();
    let n = (decades * per_decade as f64).ceil() as usize + 1;
    let step = (x_max / x_min).ln() / (n - 1) as f64;
    (0..n).map(|i| x_min * (step * i as f64).exp()).collect()
}
