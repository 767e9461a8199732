//! Closed forms for symmetric stable processes.
//!
//! Self-similarity collapses the fluctuation objects of a stable process
//! to explicit formulas: the renewal function is a pure power c x^gamma,
//! the restricted transform is that power times a confluent factor, the
//! two-sided exit probability is a regularized incomplete beta in the
//! barrier split, the expected exit time is a product of powers of the
//! two barrier distances, and the final-over-maximum ratio of the
//! post-minimum path is Beta distributed and independent of the maximum.

use crate::error::{Error, Result};
use crate::models::{LevyModel, PositivityParams};
use crate::path_sim::{exit_interval, mc_map};
use crate::specfun::{beta_laplace, beta_laplace_re, gamma, inc_beta, BetaParams};
use num_complex::Complex64;
use serde::Serialize;

/// Closed-form fluctuation law of a stable process: renewal function
/// H(x) = c x^gamma and restricted transform
/// phi(x, lambda) = k x^gamma M(gamma; alpha + 1; -lambda x).
#[derive(Debug, Clone, Serialize)]
pub struct StableFluctuationLaw {
    pub params: PositivityParams,
    pub k: f64,
    pub c: f64,
}

impl StableFluctuationLaw {
    pub fn new(params: PositivityParams, k: f64, c: f64) -> Result<Self> {
        params.validate()?;
        if !(k > 0.0 && c > 0.0) {
            return Err(Error::Domain("scale constants must be positive".into()));
        }
        Ok(StableFluctuationLaw { params, k, c })
    }

    pub fn h(&self, x: f64) -> f64 {
        self.c * x.powf(self.params.gamma)
    }

    pub fn phi(&self, x: f64, lambda: Complex64) -> Result<Complex64> {
        phi_closed(self, x, lambda)
    }
}

/// Restricted transform with unit scale constant:
/// x^gamma M(gamma; alpha + 1; -lambda x) at a real frequency. The
/// confluent factor is the Laplace transform of a Beta(gamma, delta + 1)
/// variable at lambda x.
pub fn phi_closed_unit(params: &PositivityParams, x: f64, lambda: f64) -> Result<f64> {
    params.validate()?;
    if !(x > 0.0) {
        return Err(Error::Domain(format!("evaluation point must be positive, got {x}")));
    }
    Ok(x.powf(params.gamma) * beta_laplace_re(params.gamma, params.delta + 1.0, lambda * x)?)
}

/// Restricted transform of a stable law at a complex frequency:
/// k x^gamma times the Beta(gamma, delta + 1) transform at lambda x.
/// Satisfies the self-similarity phi(c x, lambda) = c^gamma phi(x, c
/// lambda).
pub fn phi_closed(law: &StableFluctuationLaw, x: f64, lambda: Complex64) -> Result<Complex64> {
    law.params.validate()?;
    if !(x > 0.0) {
        return Err(Error::Domain(format!("evaluation point must be positive, got {x}")));
    }
    let shapes = BetaParams::new(law.params.gamma, law.params.delta + 1.0)?;
    Ok(law.k * x.powf(law.params.gamma) * beta_laplace(shapes, lambda * x)?)
}

/// Probability that the process leaves the interval (-b, a) upward,
/// starting from 0: the regularized incomplete beta of shape
/// (gamma, delta) at b / (a + b).
pub fn exit_probability(params: &PositivityParams, a: f64, b: f64) -> Result<f64> {
    params.validate()?;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!("barriers must be positive, got a={a}, b={b}")));
    }
    inc_beta(params.gamma, params.delta, b / (a + b))
}

/// The bivariate occupation constant
/// Gamma(gamma + 1) Gamma(delta + 1) / Gamma(alpha + 1)^2 times
/// x^gamma y^delta.
///
/// This is a contracted formula value. Its claimed probabilistic reading,
/// the time integral of P(sup <= x, -inf <= y), is NOT what it evaluates
/// to: that integral is `expected_exit_time`, which differs from this by
/// the factor Gamma(gamma + 1) Gamma(delta + 1) / Gamma(alpha + 1). The
/// two agree at no stable index except where the factor degenerates, so
/// Monte Carlo checks must target `expected_exit_time`.
pub fn bivariate_occupation(
    params: &PositivityParams,
    alpha: f64,
    x: f64,
    y: f64,
) -> Result<f64> {
    params.validate()?;
    if (params.alpha() - alpha).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "stability index {alpha} does not match the exponent pair (sum {})",
            params.alpha()
        )));
    }
    if !(x >= 0.0 && y >= 0.0) {
        return Err(Error::Domain(format!("barriers must be nonnegative, got x={x}, y={y}")));
    }
    if x == 0.0 || y == 0.0 {
        return Ok(0.0);
    }
    let g = params.gamma;
    let d = params.delta;
    let ga1 = gamma(alpha + 1.0);
    // Grouping the power product first keeps the symmetric case exactly
    // invariant under swapping the barriers.
    Ok(gamma(g + 1.0) * gamma(d + 1.0) / (ga1 * ga1) * (x.powf(g) * y.powf(d)))
}

/// Expected time to leave the interval (-y, x) from 0, the total mass of
/// the two-sided occupation measure: x^gamma y^delta / Gamma(alpha + 1).
pub fn expected_exit_time(params: &PositivityParams, x: f64, y: f64) -> Result<f64> {
    params.validate()?;
    if !(x > 0.0 && y > 0.0) {
        return Err(Error::Domain(format!("barriers must be positive, got x={x}, y={y}")));
    }
    let g = params.gamma;
    let d = params.delta;
    Ok(x.powf(g) * y.powf(d) / gamma(g + d + 1.0))
}

/// The constant relating the maximum of the process to the maximum of its
/// final segment: Gamma(delta + 1) / Gamma(alpha + 1).
pub fn meander_ratio(alpha: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= alpha && alpha <= 2.0) {
        return Err(Error::Domain(format!(
            "need 0 < delta <= alpha <= 2, got alpha={alpha}, delta={delta}"
        )));
    }
    Ok(gamma(delta + 1.0) / gamma(alpha + 1.0))
}

/// Law of the ratio final-over-maximum of the post-minimum path:
/// Beta(gamma + 1, delta), independent of the maximum.
pub fn final_over_max_law(params: &PositivityParams) -> Result<BetaParams> {
    params.validate()?;
    BetaParams::new(params.gamma + 1.0, params.delta)
}

/// Distribution function of the final-over-maximum ratio.
pub fn ratio_law_cdf(params: &PositivityParams, r: f64) -> Result<f64> {
    let shapes = final_over_max_law(params)?;
    inc_beta(shapes.a, shapes.b, r.clamp(0.0, 1.0))
}

/// Least squares fit of the single scale constant k through observed
/// transform values at points (x, lambda, value).
pub fn fit_k(points: &[(f64, f64, f64)], params: &PositivityParams) -> Result<f64> {
    params.validate()?;
    if points.len() < 2 {
        return Err(Error::InsufficientSampling("need at least two points to fit k".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &(x, lambda, value) in points {
        let f = phi_closed_unit(params, x, lambda)?;
        num += value * f;
        den += f * f;
    }
    if den <= 0.0 {
        return Err(Error::SingularSystem("degenerate design for the k fit".into()));
    }
    Ok(num / den)
}

/// Monte Carlo estimate of the upward exit probability with Richardson
/// extrapolation in the step size: runs the grid walk at dt and dt / 2
/// and removes the leading linear step-size bias. Returns the
/// extrapolated estimate and its standard error.
#[allow(clippy::too_many_arguments)]
pub fn exit_up_mc(
    model: &LevyModel,
    a: f64,
    b: f64,
    dt: f64,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<(f64, f64)> {
    model.require_samplable()?;
    if n < 1000 {
        return Err(Error::InsufficientSampling("need at least 1000 exit paths".into()));
    }
    let mut estimates = [0.0f64; 2];
    for (level, est) in estimates.iter_mut().enumerate() {
        let step = dt / (level + 1) as f64;
        let hits: Vec<Result<bool>> = mc_map(n, seed.wrapping_add(level as u64), workers, |_, rng| {
            exit_interval(model, step, -b, a, rng).map(|(up, _)| up)
        });
        let mut count = 0usize;
        for h in hits {
            if h? {
                count += 1;
            }
        }
        *est = count as f64 / n as f64;
    }
    let p = 2.0 * estimates[1] - estimates[0];
    let se_one = (estimates[1] * (1.0 - estimates[1]) / n as f64).sqrt();
    // Var(2 p2 - p1) with independent runs.
    let se = (5.0f64).sqrt() * se_one;
    Ok((p, se))
}

/// Monte Carlo estimate of the expected exit time of (-y, x).
#[allow(clippy::too_many_arguments)]
pub fn exit_time_mc(
    model: &LevyModel,
    x: f64,
    y: f64,
    dt: f64,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<(f64, f64)> {
    model.require_samplable()?;
    if n < 1000 {
        return Err(Error::InsufficientSampling("need at least 1000 exit paths".into()));
    }
    let times: Vec<Result<f64>> = mc_map(n, seed, workers, |_, rng| {
        exit_interval(model, dt, -y, x, rng).map(|(_, t)| t)
    });
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for t in times {
        let t = t?;
        s1 += t;
        s2 += t * t;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = (s2 / nf - mean * mean).max(0.0);
    Ok((mean, (var / nf).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extrema_chain::simulate_chain;
    use crate::table::MonotoneTable;

    fn cauchy_params() -> PositivityParams {
        PositivityParams::new(0.5, 0.5).unwrap()
    }

    #[test]
    fn exit_probability_frozen_value() {
        // Upper barrier 3, lower barrier -1: exactly 1/3 for the Cauchy
        // process (arcsine law at the split 1/4).
        let p = exit_probability(&cauchy_params(), 3.0, 1.0).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-12, "got {p}");
        // Complementary exit.
        let q = exit_probability(&cauchy_params(), 1.0, 3.0).unwrap();
        assert!((p + q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exit_probability_brownian_limit_and_monotonicity() {
        // gamma = delta = 1 reduces to the classical linear rule.
        let p = LevyModel::brownian().positivity_params();
        for &(a, b) in &[(1.0, 1.0), (3.0, 1.0), (0.5, 4.0)] {
            let v = exit_probability(&p, a, b).unwrap();
            assert!((v - b / (a + b)).abs() < 1e-12);
        }
        let c = cauchy_params();
        assert!(exit_probability(&c, 2.0, 1.0).unwrap() < exit_probability(&c, 1.0, 1.0).unwrap());
        assert!(exit_probability(&c, 1.0, 2.0).unwrap() > exit_probability(&c, 1.0, 1.0).unwrap());
    }

    #[test]
    fn exit_time_anchors() {
        // Brownian: mean exit time of (-y, x) is x y / 2.
        let bm = LevyModel::brownian().positivity_params();
        for &(x, y) in &[(1.0, 1.0), (2.0, 0.5), (3.0, 3.0)] {
            let v = expected_exit_time(&bm, x, y).unwrap();
            assert!((v - 0.5 * x * y).abs() < 1e-12, "x={x} y={y}: {v}");
        }
        // Cauchy at unit barriers: 1 / Gamma(2) = 1.
        let v = expected_exit_time(&cauchy_params(), 1.0, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn occupation_constant_and_its_relation_to_exit_time() {
        // Frozen value at the symmetric unit-barrier Cauchy point.
        let v = bivariate_occupation(&cauchy_params(), 1.0, 1.0, 1.0).unwrap();
        assert!((v - std::f64::consts::PI / 4.0).abs() < 1e-12, "got {v}");
        // Degenerate barriers and symmetry.
        assert_eq!(bivariate_occupation(&cauchy_params(), 1.0, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(bivariate_occupation(&cauchy_params(), 1.0, 2.0, 0.0).unwrap(), 0.0);
        let s = bivariate_occupation(&cauchy_params(), 1.0, 2.0, 3.0).unwrap();
        let t = bivariate_occupation(&cauchy_params(), 1.0, 3.0, 2.0).unwrap();
        assert_eq!(s, t);
        // Index consistency is enforced.
        assert!(bivariate_occupation(&cauchy_params(), 1.5, 1.0, 1.0).is_err());
        // The constant differs from the occupation total mass by exactly
        // Gamma(gamma+1) Gamma(delta+1) / Gamma(alpha+1).
        let p = PositivityParams::new(0.75, 0.75).unwrap();
        let factor = gamma(1.75) * gamma(1.75) / gamma(2.5);
        let lhs = bivariate_occupation(&p, 1.5, 1.3, 0.6).unwrap();
        let rhs = expected_exit_time(&p, 1.3, 0.6).unwrap() * factor;
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
    }

    #[test]
    fn meander_ratio_reference_values() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((meander_ratio(1.0, 0.5).unwrap() - 0.5 * sqrt_pi).abs() < 1e-13);
        assert!((meander_ratio(2.0, 1.0).unwrap() - 0.5).abs() < 1e-13);
        let v = meander_ratio(0.5, 0.25).unwrap();
        assert!((v - gamma(1.25) / gamma(1.5)).abs() < 1e-13);
        assert!(meander_ratio(1.0, 1.5).is_err());
        assert!(meander_ratio(2.5, 1.0).is_err());
        assert!(meander_ratio(1.0, 0.0).is_err());
    }

    #[test]
    fn final_over_max_shapes() {
        let c = final_over_max_law(&cauchy_params()).unwrap();
        assert_eq!((c.a, c.b), (1.5, 0.5));
        let bm = final_over_max_law(&LevyModel::brownian().positivity_params()).unwrap();
        assert_eq!((bm.a, bm.b), (2.0, 1.0));
    }

    #[test]
    fn final_over_max_matches_chain_sample_mean() {
        // The chain's F / M over square-root tables must average to the
        // Beta(3/2, 1/2) mean 3/4.
        let h = MonotoneTable::power_law(1.0, 0.5, 1e-6, 10.0, 60).unwrap();
        let n = 2000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for seed in 0..n {
            let (m, f, _) = simulate_chain(&h, &h, 1.0, seed).unwrap();
            let r = f / m;
            sum += r;
            sum_sq += r * r;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        let shapes = final_over_max_law(&cauchy_params()).unwrap();
        let exact = shapes.a / (shapes.a + shapes.b);
        assert!((mean - exact).abs() < 3.0 * se, "mean {mean} vs {exact} (se {se})");
    }

    #[test]
    fn ratio_law_moments() {
        // Beta(3/2, 1/2) has mean 3/4.
        let cdf_mid = ratio_law_cdf(&cauchy_params(), 0.75).unwrap();
        assert!(cdf_mid > 0.3 && cdf_mid < 0.6);
        assert_eq!(ratio_law_cdf(&cauchy_params(), 1.0).unwrap(), 1.0);
    }

    #[test]
    fn phi_closed_scaling_and_zero_frequency() {
        let law = StableFluctuationLaw::new(cauchy_params(), 1.7, 1.0).unwrap();
        let x = 0.8;
        assert!(
            (phi_closed(&law, x, Complex64::new(0.0, 0.0)).unwrap().re
                - 1.7 * x.sqrt())
            .abs()
                < 1e-13
        );
        for &(re, im) in &[(0.5, 0.0), (1.0, 2.0), (3.0, -1.0)] {
            let lam = Complex64::new(re, im);
            let lhs = phi_closed(&law, 2.0 * x, lam).unwrap();
            let rhs = 2.0f64.sqrt() * phi_closed(&law, x, 2.0 * lam).unwrap();
            assert!((lhs - rhs).norm() < 1e-13 * rhs.norm(), "lam={lam}");
        }
    }

    #[test]
    fn fit_k_recovers_scale() {
        let params = cauchy_params();
        let mut points = Vec::new();
        for &x in &[0.2, 0.5, 1.0] {
            for &lam in &[0.5, 1.0, 2.0] {
                points.push((x, lam, 2.5 * phi_closed_unit(&params, x, lam).unwrap()));
            }
        }
        let k = fit_k(&points, &params).unwrap();
        assert!((k - 2.5).abs() < 1e-12);
    }

    #[test]
    fn exit_mc_agrees_with_formula_loosely() {
        // Small pilot run; the acceptance suite does the tight version.
        let model = LevyModel::symmetric_stable(1.0).unwrap();
        let (p, se) = exit_up_mc(&model, 3.0, 1.0, 0.02, 20_000, 7, 1).unwrap();
        assert!(
            (p - 1.0 / 3.0).abs() < (4.0 * se).max(0.02),
            "p={p} se={se}"
        );
    }

    #[test]
    fn exit_time_mc_agrees_with_formula_loosely() {
        let model = LevyModel::symmetric_stable(1.0).unwrap();
        let (t, se) = exit_time_mc(&model, 1.0, 1.0, 0.002, 20_000, 11, 1).unwrap();
        let exact = expected_exit_time(&cauchy_params(), 1.0, 1.0).unwrap();
        assert!(
            (t - exact).abs() < (4.0 * se).max(0.03),
            "t={t} se={se} vs {exact}"
        );
    }
}
