//! Simulation of killed paths and their fluctuation summaries.
//!
//! Paths start at zero and run until an independent exponential killing
//! time whose rate is read off the model. Reproducibility contract: every
//! Monte Carlo experiment derives the generator of path `i` from
//! `(seed, stream = i + 1)`, so results are byte-identical for any worker
//! count.

use crate::error::{Error, Result};
use crate::models::{uniform_open, LevyModel};
use crate::stats::{chi2_independence, ks_two_sample, TestResult};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A path sampled on a regular grid of spacing `dt`, killed at `lifetime`.
///
/// `values[k]` is the position at time `k dt`, starting with the origin;
/// there are `ceil(lifetime / dt)` entries, so every stored time is
/// strictly before the killing time.
#[derive(Debug, Clone, Serialize)]
pub struct PathSample {
    pub dt: f64,
    pub values: Vec<f64>,
    pub lifetime: f64,
}

/// Extremal statistics of one path.
#[derive(Debug, Clone, Serialize)]
pub struct FluctuationSummary {
    pub min: f64,
    pub max: f64,
    #[serde(rename = "final")]
    pub final_value: f64,
    /// Time of the first minimum.
    pub argmin: f64,
    pub running_sup: Vec<f64>,
    pub running_inf: Vec<f64>,
}

/// How extrema inside one grid step are accounted for.
///
/// `Endpoints` reads extrema off the grid values only. `BrownianBridge`
/// additionally draws the exact conditional minimum and maximum of each
/// step given its endpoints, which removes the order sqrt(dt) extremum
/// bias; it is exact in law for the Brownian model and rejected for
/// others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepExtrema {
    Endpoints,
    BrownianBridge,
}

/// Simulates one killed path on the grid, drawing from the caller's
/// generator.
pub fn simulate_path<R: Rng>(model: &LevyModel, dt: f64, rng: &mut R) -> Result<PathSample> {
    model.require_samplable()?;
    let kill_rate = model.kill_rate()?;
    let lifetime = -uniform_open(rng).ln() / kill_rate;
    simulate_path_for(model, lifetime, dt, rng)
}

/// Simulates one path over a fixed window. The Lebesgue weighting of path
/// space disintegrates over window lengths, and for stable models scale
/// invariance of the swings makes ratio statistics the same at every
/// length, so a single horizon observes them exactly.
pub fn simulate_path_for<R: Rng>(
    model: &LevyModel,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<PathSample> {
    model.require_samplable()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("step size must be positive, got {dt}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("window length must be positive, got {horizon}")));
    }
    let n = (horizon / dt).ceil() as usize;
    let mut values = Vec::with_capacity(n.max(1));
    let mut x = 0.0;
    values.push(x);
    for _ in 1..n {
        x += model.sample_increment(dt, rng);
        values.push(x);
    }
    Ok(PathSample { dt, values, lifetime: horizon })
}

/// Simulates one killed path from a fresh seeded generator.
pub fn sample_path(model: &LevyModel, dt: f64, seed: u64) -> Result<PathSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_path(model, dt, &mut rng)
}

/// Simulates one fixed-window path from a fresh seeded generator.
pub fn sample_path_for(model: &LevyModel, horizon: f64, dt: f64, seed: u64) -> Result<PathSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_path_for(model, horizon, dt, &mut rng)
}

/// Extremal summary of a gridded path.
pub fn fluctuation_summary(path: &PathSample) -> Result<FluctuationSummary> {
    if path.values.is_empty() {
        return Err(Error::DegenerateState("empty path".into()));
    }
    let mut running_sup = Vec::with_capacity(path.values.len());
    let mut running_inf = Vec::with_capacity(path.values.len());
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    let mut argmin_idx = 0usize;
    for (k, &v) in path.values.iter().enumerate() {
        sup = sup.max(v);
        if v < inf {
            inf = v;
            argmin_idx = k;
        }
        running_sup.push(sup);
        running_inf.push(inf);
    }
    Ok(FluctuationSummary {
        min: inf,
        max: sup,
        final_value: *path.values.last().unwrap(),
        argmin: argmin_idx as f64 * path.dt,
        running_sup,
        running_inf,
    })
}

/// Streaming extremal summary of one killed path, never materializing the
/// path. The last step is shortened to end exactly at the killing time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExtremaSummary {
    pub min: f64,
    /// Start time of the step that attained the minimum.
    pub argmin_time: f64,
    pub max: f64,
    /// Maximum of the piece after the minimum.
    pub max_post_min: f64,
    pub final_value: f64,
    pub lifetime: f64,
}

/// Exact conditional extrema of a Brownian step from `a` to `b` whose
/// increment variance is `var`: the running minimum satisfies
/// P(min <= m) = exp(-2 (a - m)(b - m) / var), and inverting it at one
/// uniform gives a draw. Minimum and maximum use independent uniforms,
/// which is exact for each marginal.
fn bridge_extrema<R: Rng>(a: f64, b: f64, var: f64, rng: &mut R) -> (f64, f64) {
    let d2 = (a - b) * (a - b);
    let lo = 0.5 * (a + b - (d2 - 2.0 * var * uniform_open(rng).ln()).sqrt());
    let hi = 0.5 * (a + b + (d2 - 2.0 * var * uniform_open(rng).ln()).sqrt());
    (lo, hi)
}

/// Simulates one killed path and its extrema without storing it.
pub fn killed_extrema<R: Rng>(
    model: &LevyModel,
    dt: f64,
    mode: StepExtrema,
    rng: &mut R,
) -> Result<ExtremaSummary> {
    model.require_samplable()?;
    let kill_rate = model.kill_rate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("step size must be positive, got {dt}")));
    }
    if mode == StepExtrema::BrownianBridge && model.alpha() != 2.0 {
        return Err(Error::UnsupportedModel(
            "bridge-corrected extrema are exact only for the Brownian model".into(),
        ));
    }
    let lifetime = -uniform_open(rng).ln() / kill_rate;
    let mut x = 0.0;
    let mut min = 0.0f64;
    let mut argmin_time = 0.0;
    let mut max = 0.0f64;
    let mut max_post = 0.0f64;
    let mut t = 0.0;
    while t < lifetime {
        let h = dt.min(lifetime - t);
        let y = x + model.sample_increment(h, rng);
        let (step_min, step_max) = match mode {
            StepExtrema::Endpoints => (x.min(y), x.max(y)),
            StepExtrema::BrownianBridge => bridge_extrema(x, y, 2.0 * h, rng),
        };
        if step_min < min {
            min = step_min;
            argmin_time = t;
            // The post-minimum piece restarts inside this step; its end
            // value is the sharp lower bound available for its maximum.
            max_post = y;
        } else {
            max_post = max_post.max(step_max);
        }
        max = max.max(step_max);
        x = y;
        t += h;
    }
    Ok(ExtremaSummary { min, argmin_time, max, max_post_min: max_post, final_value: x, lifetime })
}

/// Walks a path until it leaves the open interval (lower, upper); returns
/// whether the exit was upward and the exit time on the grid.
pub fn exit_interval<R: Rng>(
    model: &LevyModel,
    dt: f64,
    lower: f64,
    upper: f64,
    rng: &mut R,
) -> Result<(bool, f64)> {
    model.require_samplable()?;
    if !(lower < 0.0 && upper > 0.0) {
        return Err(Error::Domain(format!(
            "interval must straddle the origin, got ({lower}, {upper})"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("step size must be positive, got {dt}")));
    }
    let mut x = 0.0;
    let mut k = 0u64;
    loop {
        x += model.sample_increment(dt, rng);
        k += 1;
        if x >= upper {
            return Ok((true, k as f64 * dt));
        }
        if x <= lower {
            return Ok((false, k as f64 * dt));
        }
    }
}

/// Outcome of the minimum-splitting factorization experiment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FactorizationReport {
    /// Chi-square independence of (-min, final - min) given that the
    /// amplitude max - min stays below the cap.
    pub independence: TestResult,
    /// Two-sample agreement of -min with the reference law.
    pub marginal_min: TestResult,
    /// Two-sample agreement of final - min with the reference law.
    pub marginal_final: TestResult,
    /// Pairs accepted under the amplitude cap.
    pub n_accepted: usize,
    /// Reference draws: post-minimum segments accepted on their own
    /// maximum staying below the cap.
    pub n_reference: usize,
}

/// Tests the splitting of a killed path at its minimum: restricted to
/// amplitudes below `x`, the depth of the minimum and the final height
/// above it must be independent, and each must follow the law of the
/// final value of a post-minimum segment whose own maximum stays below
/// `x`. Even-indexed replicas supply the pairs, odd-indexed replicas the
/// reference sample, keeping the two-sample tests on independent data.
pub fn factorization_test(
    model: &LevyModel,
    x: f64,
    n_paths: usize,
    n_bins: usize,
    dt: f64,
    seed: u64,
) -> Result<FactorizationReport> {
    model.require_samplable()?;
    if model.skew != 0.0 {
        return Err(Error::UnsupportedModel(
            "the factorization experiment needs a symmetric model".into(),
        ));
    }
    model.kill_rate()?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("amplitude cap must be positive, got {x}")));
    }
    if n_bins == 0 {
        return Err(Error::Validation("need at least one histogram bin".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("step size must be positive, got {dt}")));
    }
    let mode =
        if model.alpha() == 2.0 { StepExtrema::BrownianBridge } else { StepExtrema::Endpoints };
    let summaries = mc_map(n_paths, seed, 0, |_, rng| {
        killed_extrema(model, dt, mode, rng).expect("inputs validated above")
    });

    let mut pair_depth = Vec::new();
    let mut pair_final = Vec::new();
    let mut reference = Vec::new();
    for (i, s) in summaries.iter().enumerate() {
        if i % 2 == 0 {
            if s.max - s.min <= x {
                pair_depth.push(-s.min);
                pair_final.push(s.final_value - s.min);
            }
        } else if s.max_post_min - s.min <= x {
            reference.push(s.final_value - s.min);
        }
    }
    let n_accepted = pair_depth.len();
    let needed = 30 * n_bins * n_bins;
    if n_accepted < needed {
        return Err(Error::InsufficientSampling(format!(
            "{n_accepted} accepted paths for a {n_bins}x{n_bins} histogram; need {needed}"
        )));
    }
    if n_bins == 1 {
        let trivial = TestResult { statistic: 0.0, p_value: 1.0 };
        return Ok(FactorizationReport {
            independence: trivial,
            marginal_min: trivial,
            marginal_final: trivial,
            n_accepted,
            n_reference: reference.len(),
        });
    }
    Ok(FactorizationReport {
        independence: chi2_independence(&pair_depth, &pair_final, n_bins)?,
        marginal_min: ks_two_sample(&pair_depth, &reference)?,
        marginal_final: ks_two_sample(&pair_final, &reference)?,
        n_accepted,
        n_reference: reference.len(),
    })
}

/// Runs `n` independent replicas with a deterministic per-replica
/// generator: replica `i` uses stream `i + 1` of the seeded ChaCha8
/// generator, so the output vector does not depend on the worker count.
///
/// `workers`: 0 uses the process-wide thread pool, 1 runs serially, any
/// other count runs on a dedicated pool of that size.
pub fn mc_map<T, F>(n: usize, seed: u64, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync + Send,
{
    let body = |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        f(i, &mut rng)
    };
    match workers {
        1 => (0..n).map(body).collect(),
        0 => (0..n).into_par_iter().map(body).collect(),
        w => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .expect("thread pool construction cannot fail for positive sizes");
            pool.install(|| (0..n).into_par_iter().map(body).collect())
        }
    }
}
