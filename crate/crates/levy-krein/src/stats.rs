//! Statistical tests used by the acceptance experiments: Kolmogorov
//! Smirnov fits, a quantile-binned chi-square independence test, and a
//! permutation test on distance correlation.

use crate::error::{Error, Result};
use crate::specfun::{inc_gamma_q, kolmogorov_sf};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn ks_p_value(n_eff: f64, d: f64) -> f64 {
    // Stephens' finite-sample correction of the Kolmogorov limit.
    let root = n_eff.sqrt();
    kolmogorov_sf((root + 0.12 + 0.11 / root) * d)
}

/// One-sample Kolmogorov Smirnov test against a continuous distribution
/// function.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<TestResult> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::InsufficientSampling(format!(
            "one-sample fit test needs at least 8 points, got {n}"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Domain(format!("reference distribution left [0, 1] at {x}")));
        }
        d = d.max((f - i as f64 / nf).abs()).max((f - (i + 1) as f64 / nf).abs());
    }
    Ok(TestResult { statistic: d, p_value: ks_p_value(nf, d) })
}

/// Two-sample Kolmogorov Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 8 || b.len() < 8 {
        return Err(Error::InsufficientSampling(
            "two-sample test needs at least 8 points per sample".into(),
        ));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    // Evaluate the empirical CDF gap only after both samples pass the
    // current value; stepping one sample at a time through a shared atom
    // would inflate the statistic by the atom mass.
    while i < xs.len() && j < ys.len() {
        let t = if xs[i] <= ys[j] { xs[i] } else { ys[j] };
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(TestResult { statistic: d, p_value: ks_p_value(n_eff, d) })
}

/// Ranks of a sample, 0-based, ties broken by index (the data fed in here
/// is continuous so exact ties carry no probability).
fn ranks(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut r = vec![0usize; values.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank;
    }
    r
}

/// Chi-square independence test on a quantile-binned contingency table.
///
/// Both margins are cut at their empirical quantiles into `n_bins` cells,
/// so each row and column holds close to n / n_bins points by
/// construction and the expected counts never degenerate.
pub fn chi2_independence(xs: &[f64], ys: &[f64], n_bins: usize) -> Result<TestResult> {
    if xs.len() != ys.len() {
        return Err(Error::Domain("paired test needs equal lengths".into()));
    }
    if n_bins < 2 {
        return Err(Error::Domain("need at least 2 bins".into()));
    }
    let n = xs.len();
    if n < 30 * n_bins * n_bins {
        return Err(Error::InsufficientSampling(format!(
            "independence test with {n_bins}x{n_bins} bins needs at least {} points, got {n}",
            30 * n_bins * n_bins
        )));
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let bin = |rank: usize| (rank * n_bins / n).min(n_bins - 1);
    let mut counts = vec![0.0f64; n_bins * n_bins];
    for k in 0..n {
        counts[bin(rx[k]) * n_bins + bin(ry[k])] += 1.0;
    }
    let row: Vec<f64> = (0..n_bins)
        .map(|i| (0..n_bins).map(|j| counts[i * n_bins + j]).sum())
        .collect();
    let col: Vec<f64> = (0..n_bins)
        .map(|j| (0..n_bins).map(|i| counts[i * n_bins + j]).sum())
        .collect();
    let nf = n as f64;
    let mut chi2 = 0.0;
    for i in 0..n_bins {
        for j in 0..n_bins {
            let e = row[i] * col[j] / nf;
            let o = counts[i * n_bins + j];
            chi2 += (o - e) * (o - e) / e;
        }
    }
    let dof = ((n_bins - 1) * (n_bins - 1)) as f64;
    let p = inc_gamma_q(0.5 * dof, 0.5 * chi2)?;
    Ok(TestResult { statistic: chi2, p_value: p })
}

fn double_center(dist: &mut [f64], n: usize) {
    let mut row_mean = vec![0.0f64; n];
    for i in 0..n {
        row_mean[i] = (0..n).map(|j| dist[i * n + j]).sum::<f64>() / n as f64;
    }
    let grand: f64 = row_mean.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            dist[i * n + j] += grand - row_mean[i] - row_mean[j];
        }
    }
}

/// Distance correlation with a permutation p-value.
///
/// Sensitive to any dependence, not only linear association. Samples
/// larger than `subsample_cap` are thinned deterministically from the
/// seed; the permutation null uses `n_perms` reshuffles of one margin.
pub fn dcor_permutation_test(
    xs: &[f64],
    ys: &[f64],
    subsample_cap: usize,
    n_perms: usize,
    seed: u64,
) -> Result<TestResult> {
    if xs.len() != ys.len() {
        return Err(Error::Domain("paired test needs equal lengths".into()));
    }
    if xs.len() < 30 {
        return Err(Error::InsufficientSampling(
            "distance correlation needs at least 30 pairs".into(),
        ));
    }
    if n_perms < 19 {
        return Err(Error::Domain("need at least 19 permutations".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_all = xs.len();
    let n = n_all.min(subsample_cap);
    let picked: Vec<usize> = if n_all > n {
        let mut idx: Vec<usize> = (0..n_all).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n);
        idx
    } else {
        (0..n_all).collect()
    };

    let mut a = vec![0.0f64; n * n];
    let mut b = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (xs[picked[i]] - xs[picked[j]]).abs();
            b[i * n + j] = (ys[picked[i]] - ys[picked[j]]).abs();
        }
    }
    double_center(&mut a, n);
    double_center(&mut b, n);

    let n2 = (n * n) as f64;
    let dcov2 = |perm: &[usize]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            let pi = perm[i] * n;
            let ai = i * n;
            for j in 0..n {
                s += a[ai + j] * b[pi + perm[j]];
            }
        }
        s / n2
    };

    let identity: Vec<usize> = (0..n).collect();
    let observed = dcov2(&identity);
    let var_a: f64 = a.iter().map(|v| v * v).sum::<f64>() / n2;
    let var_b: f64 = b.iter().map(|v| v * v).sum::<f64>() / n2;
    let denom = (var_a * var_b).sqrt();
    if denom <= 0.0 {
        return Err(Error::DegenerateState("a margin is constant".into()));
    }
    let dcor = (observed.max(0.0) / denom).sqrt();

    let mut perm = identity;
    let mut at_least = 1usize; // the identity counts for itself
    for _ in 0..n_perms {
        perm.shuffle(&mut rng);
        if dcov2(&perm) >= observed {
            at_least += 1;
        }
    }
    let p = at_least as f64 / (n_perms + 1) as f64;
    Ok(TestResult { statistic: dcor, p_value: p })
}

/// Ordinary least squares line fit, returning (slope, intercept).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Domain("line fit needs at least two paired points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::SingularSystem("all abscissas coincide".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
