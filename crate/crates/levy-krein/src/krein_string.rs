//! Second order strings: the equation A'' = lambda^2 rho A on a half line,
//! its decreasing companion D, and the spectral calculus built on them.
//!
//! A string is a nonnegative mass distribution on [0, x_max], here a
//! piecewise linear density plus point masses. For each spectral argument
//! lambda the module integrates the increasing solution A (A(0) = 1,
//! A'(0) = 0) and the decreasing solution D = A * integral of A^-2 from x
//! to infinity, normalized so the Wronskian A D' - A' D is -1 everywhere.
//! D(0, lambda) is the string's characteristic transform; it determines and
//! is determined by a spectral density on the frequency half line, and the
//! two sides are tied together by an entropy-type integral identity that
//! `entropy_formula` evaluates from both ends.

use crate::error::{Error, Result};
use crate::specfun::{integrate, log_head, log_tail};
use crate::stats::fit_line;
use crate::table::MonotoneTable;
use serde::{Deserialize, Serialize};

/// Target step of the string integrator. Cells of the breakpoint grid are
/// subdivided to roughly this length (coarser for very long strings so the
/// node count stays bounded).
const STEP_TARGET: f64 = 1e-3;
/// Hard cap on integration nodes, to bound memory on long strings.
const MAX_NODES: f64 = 400_000.0;
/// Overflow guard: A grows like exp(lambda * travel time) and the tail
/// closure squares it, so magnitudes beyond this leave the representable
/// range before the sweep finishes.
const A_OVERFLOW: f64 = 1e150;
/// Relative flatness required of consecutive compensated checkpoints before
/// the right side of the entropy identity is declared settled.
const PLATEAU_TOL: f64 = 2e-4;

/// A mass distribution on [0, x_max]: a piecewise linear density given on
/// an increasing abscissa grid starting at 0, plus point masses strictly
/// inside (0, x_max]. Beyond the last grid node the density continues at
/// its last value.
///
/// Point masses at the origin are rejected: they would shift A'(0) away
/// from 0 and the solutions here are normalized against that anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StringMeasureRepr", into = "StringMeasureRepr")]
pub struct StringMeasure {
    xs: Vec<f64>,
    density: Vec<f64>,
    atoms: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StringMeasureRepr {
    xs: Vec<f64>,
    density: Vec<f64>,
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<StringMeasureRepr> for StringMeasure {
    type Error = Error;
    fn try_from(r: StringMeasureRepr) -> Result<Self> {
        StringMeasure::new(r.xs, r.density, r.atoms)
    }
}

impl From<StringMeasure> for StringMeasureRepr {
    fn from(m: StringMeasure) -> Self {
        StringMeasureRepr { xs: m.xs, density: m.density, atoms: m.atoms }
    }
}

impl StringMeasure {
    /// Builds and validates a measure from density samples and point masses.
    pub fn new(xs: Vec<f64>, density: Vec<f64>, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if xs.len() != density.len() || xs.len() < 2 {
            return Err(Error::Domain(
                "density table needs at least two nodes with matching lengths".into(),
            ));
        }
        if xs[0] != 0.0 {
            return Err(Error::Domain("density grid must start at 0".into()));
        }
        if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("density grid must be finite and increasing".into()));
        }
        if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Domain("density values must be finite and nonnegative".into()));
        }
        let x_max = *xs.last().unwrap();
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        for &(loc, mass) in &atoms {
            if !(loc.is_finite() && loc > 0.0 && loc <= x_max) {
                return Err(Error::Domain(
                    "point masses must sit strictly inside (0, x_max]".into(),
                ));
            }
            if !(mass.is_finite() && mass > 0.0) {
                return Err(Error::Domain("point masses must be positive and finite".into()));
            }
        }
        // Merge coincident point masses so the jump map is single valued.
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (loc, mass) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == loc => last.1 += mass,
                _ => merged.push((loc, mass)),
            }
        }
        Ok(StringMeasure { xs, density, atoms: merged })
    }

    /// The measure with density one and no point masses on [0, x_max].
    pub fn lebesgue(x_max: f64) -> Result<Self> {
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::Domain("x_max must be positive and finite".into()));
        }
        StringMeasure::new(vec![0.0, x_max], vec![1.0, 1.0], vec![])
    }

    /// Density coef * x^power sampled on a uniform grid of n nodes.
    pub fn power_density(coef: f64, power: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(coef > 0.0 && coef.is_finite()) {
            return Err(Error::Domain("density coefficient must be positive".into()));
        }
        if !(power >= 0.0 && power.is_finite()) {
            return Err(Error::Domain(
                "power densities are only tabulated for nonnegative exponents".into(),
            ));
        }
        if !(x_max > 0.0 && x_max.is_finite()) || n < 2 {
            return Err(Error::Domain("need positive x_max and at least two nodes".into()));
        }
        let xs: Vec<f64> = (0..n).map(|i| x_max * i as f64 / (n - 1) as f64).collect();
        let density = xs.iter().map(|x| coef * x.powf(power)).collect();
        StringMeasure::new(xs, density, vec![])
    }

    /// A single point mass on an otherwise massless interval [0, x_max].
    pub fn single_atom(loc: f64, mass: f64, x_max: f64) -> Result<Self> {
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::Domain("x_max must be positive and finite".into()));
        }
        StringMeasure::new(vec![0.0, x_max], vec![0.0, 0.0], vec![(loc, mass)])
    }

    /// Returns a copy with one more point mass.
    pub fn with_atom(&self, loc: f64, mass: f64) -> Result<Self> {
        let mut atoms = self.atoms.clone();
        atoms.push((loc, mass));
        StringMeasure::new(self.xs.clone(), self.density.clone(), atoms)
    }

    /// Right end of the density grid.
    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    /// Point masses, sorted by location.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// Piecewise linear density, continued by its last value beyond the
    /// grid and by its first value below 0 (never queried there).
    pub fn density_at(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return self.density[0];
        }
        if x >= *self.xs.last().unwrap() {
            return *self.density.last().unwrap();
        }
        let j = match self.xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(j) => return self.density[j],
            Err(j) => j,
        };
        let (xa, xb) = (self.xs[j - 1], self.xs[j]);
        let w = (x - xa) / (xb - xa);
        self.density[j - 1] * (1.0 - w) + self.density[j] * w
    }

    /// Total mass of [0, x]: the trapezoid integral of the density plus
    /// all point masses at or below x.
    pub fn mass(&self, x: f64) -> f64 {
        let mut total = 0.0;
        for j in 1..self.xs.len() {
            if self.xs[j] <= x {
                total += 0.5 * (self.density[j - 1] + self.density[j]) * (self.xs[j] - self.xs[j - 1]);
            } else {
                let xa = self.xs[j - 1];
                if x > xa {
                    total += 0.5 * (self.density[j - 1] + self.density_at(x)) * (x - xa);
                }
                break;
            }
        }
        if x > self.x_max() {
            total += (x - self.x_max()) * *self.density.last().unwrap();
        }
        total + self.atoms.iter().filter(|a| a.0 <= x).map(|a| a.1).sum::<f64>()
    }
}

/// The two fundamental solutions of one string at one spectral argument,
/// tabulated on the integration grid: A increasing with A(0) = 1 and
/// A'(0) = 0, D decreasing and integrable with A D' - A' D = -1.
#[derive(Debug, Clone, Serialize)]
pub struct ABSolutions {
    pub xs: Vec<f64>,
    pub a: Vec<f64>,
    pub a_prime: Vec<f64>,
    pub d: Vec<f64>,
    pub d_prime: Vec<f64>,
    pub lambda: f64,
}

impl ABSolutions {
    /// Value of the characteristic transform D(0, lambda).
    pub fn d0(&self) -> f64 {
        self.d[0]
    }

    /// CSV rendering with header x,A,A_prime,D,D_prime.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,A,A_prime,D,D_prime\n");
        for i in 0..self.xs.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.xs[i], self.a[i], self.a_prime[i], self.d[i], self.d_prime[i]
            ));
        }
        out
    }
}

/// Builds the integration grid: all structural breakpoints (density nodes,
/// point mass locations, 0 and x_max), each gap subdivided to the target
/// step. Returns the node list and, for each node, the point mass sitting
/// exactly there (0 if none).
fn integration_grid(m: &StringMeasure, x_max: f64) -> (Vec<f64>, Vec<f64>) {
    let mut breaks: Vec<f64> = vec![0.0, x_max];
    breaks.extend(m.xs.iter().copied().filter(|&x| x > 0.0 && x < x_max));
    breaks.extend(m.atoms.iter().map(|a| a.0).filter(|&x| x > 0.0 && x < x_max));
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();

    let step = STEP_TARGET.max(x_max / MAX_NODES);
    let mut xs: Vec<f64> = vec![0.0];
    for w in breaks.windows(2) {
        let gap = w[1] - w[0];
        let pieces = (gap / step).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            xs.push(w[0] + gap * k as f64 / pieces as f64);
        }
        // Snap the cell end onto the breakpoint to keep jumps exact.
        *xs.last_mut().unwrap() = w[1];
    }

    let mut jump = vec![0.0; xs.len()];
    for &(loc, mass) in m.atoms() {
        if loc > x_max {
            continue;
        }
        // Breakpoints include every atom location, so an exact hit exists.
        let j = xs
            .binary_search_by(|p| p.partial_cmp(&loc).unwrap())
            .expect("atom location is an integration node");
        jump[j] += mass;
    }
    (xs, jump)
}

/// One RK4 step of (A, B)' = (B, lambda^2 rho(x) A) over [x, x+h].
fn rk4_step(m: &StringMeasure, lam2: f64, x: f64, h: f64, a: f64, b: f64) -> (f64, f64) {
    let f = |x: f64, a: f64, b: f64| (b, lam2 * m.density_at(x) * a);
    let (k1a, k1b) = f(x, a, b);
    let (k2a, k2b) = f(x + 0.5 * h, a + 0.5 * h * k1a, b + 0.5 * h * k1b);
    let (k3a, k3b) = f(x + 0.5 * h, a + 0.5 * h * k2a, b + 0.5 * h * k2b);
    let (k4a, k4b) = f(x + h, a + h * k3a, b + h * k3b);
    (
        a + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a),
        b + h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b),
    )
}

/// Integrates both fundamental solutions of the string `m` at argument
/// `lambda` over [0, x_max].
///
/// A and A' come from a fourth order sweep with exact derivative jumps
/// A'(x+) = A'(x-) + lambda^2 w A(x) at each point mass. D is assembled as
/// A(x) * K(x) with K(x) the integral of A^-2 from x to infinity: the part
/// beyond x_max uses the constant-density continuation of the measure, for
/// which the trailing integral is exactly 1 / (A_end (mu A_end + A'_end))
/// with mu = lambda * sqrt(rho(x_max)). That closed form also covers
/// strings that are massless near the end (mu = 0). It requires the
/// solution to have entered its exponential regime; if A' still lags the
/// asymptotic rate the estimate would be badly biased and the call fails
/// with a tail estimation error suggesting a longer interval.
pub fn integrate_ad(m: &StringMeasure, lambda: f64, x_max: f64) -> Result<ABSolutions> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain("spectral argument must be positive and finite".into()));
    }
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(Error::Domain("x_max must be positive and finite".into()));
    }
    if m.mass(x_max) <= 0.0 {
        return Err(Error::Domain(
            "the string carries no mass on [0, x_max]; the solutions degenerate".into(),
        ));
    }

    let lam2 = lambda * lambda;
    let (xs, jump) = integration_grid(m, x_max);
    let n = xs.len();

    // Forward sweep for A, with midpoint values kept for the quadrature of
    // A^-2 later.
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut a_mid = vec![0.0; n - 1];
    a[0] = 1.0;
    b[0] = 0.0;
    for i in 0..n - 1 {
        let h = xs[i + 1] - xs[i];
        let (am, bm) = rk4_step(m, lam2, xs[i], 0.5 * h, a[i], b[i]);
        a_mid[i] = am;
        let (an, bn) = rk4_step(m, lam2, xs[i] + 0.5 * h, 0.5 * h, am, bm);
        a[i + 1] = an;
        // A' jumps by lambda^2 w A across a point mass at the node.
        b[i + 1] = bn + lam2 * jump[i + 1] * an;
        if !(an.is_finite() && an < A_OVERFLOW) {
            return Err(Error::NonConvergence(format!(
                "string solution overflowed near x = {:.6}; reduce x_max or the argument",
                xs[i + 1]
            )));
        }
    }

    // Trailing integral of A^-2 under constant-density continuation.
    let rho_end = m.density_at(x_max);
    let mu = lambda * rho_end.sqrt();
    let (a_end, b_end) = (a[n - 1], b[n - 1]);
    let denom = a_end * (mu * a_end + b_end);
    if !denom.is_finite() {
        return Err(Error::NonConvergence(
            "solution magnitude overflows the tail closure; reduce x_max or the argument".into(),
        ));
    }
    if !(denom > 0.0) {
        return Err(Error::TailEstimation(
            "trailing integral of A^-2 is not positive; the solution has not grown".into(),
        ));
    }
    if mu > 0.0 && b_end < 0.5 * mu * a_end {
        return Err(Error::TailEstimation(format!(
            "A is not yet in its exponential regime at x_max (log-derivative {:.3e} \
             vs asymptotic rate {:.3e}); enlarge x_max",
            b_end / a_end,
            mu
        )));
    }

    // K(x) = integral of A^-2 from x to infinity, accumulated from the
    // right with Simpson cells on the stored midpoints.
    let mut k = vec![0.0; n];
    k[n - 1] = 1.0 / denom;
    for i in (0..n - 1).rev() {
        let h = xs[i + 1] - xs[i];
        let cell = h / 6.0
            * (1.0 / (a[i] * a[i]) + 4.0 / (a_mid[i] * a_mid[i]) + 1.0 / (a[i + 1] * a[i + 1]));
        k[i] = k[i + 1] + cell;
    }

    let d: Vec<f64> = (0..n).map(|i| a[i] * k[i]).collect();
    // D' = A' K - 1/A keeps the Wronskian A D' - A' D at exactly -1.
    let d_prime: Vec<f64> = (0..n).map(|i| b[i] * k[i] - 1.0 / a[i]).collect();

    Ok(ABSolutions { xs, a, a_prime: b, d, d_prime, lambda })
}

/// The characteristic transform D(0, lambda) on a grid of arguments.
pub fn spectral_transform(m: &StringMeasure, lambdas: &[f64]) -> Result<Vec<f64>> {
    if lambdas.is_empty() {
        return Err(Error::Domain("need at least one spectral argument".into()));
    }
    lambdas.iter().map(|&l| Ok(integrate_ad(m, l, m.x_max())?.d0())).collect()
}

/// A spectral density on the frequency half line: nonnegative values on an
/// increasing positive grid, continued beyond the last node as a power law
/// with the stated tail exponent (valid only in (-1, 1), the integrable
/// class) and below the first node by the first cell's own power law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectralDensityRepr", into = "SpectralDensityRepr")]
pub struct SpectralDensity {
    us: Vec<f64>,
    density: Vec<f64>,
    tail_exponent: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectralDensityRepr {
    us: Vec<f64>,
    density: Vec<f64>,
    tail_exponent: f64,
}

impl TryFrom<SpectralDensityRepr> for SpectralDensity {
    type Error = Error;
    fn try_from(r: SpectralDensityRepr) -> Result<Self> {
        SpectralDensity::new(r.us, r.density, r.tail_exponent)
    }
}

impl From<SpectralDensity> for SpectralDensityRepr {
    fn from(d: SpectralDensity) -> Self {
        SpectralDensityRepr { us: d.us, density: d.density, tail_exponent: d.tail_exponent }
    }
}

impl SpectralDensity {
    /// Builds and validates a tabulated spectral density.
    pub fn new(us: Vec<f64>, density: Vec<f64>, tail_exponent: f64) -> Result<Self> {
        if us.len() != density.len() || us.len() < 2 {
            return Err(Error::Domain(
                "spectral table needs at least two nodes with matching lengths".into(),
            ));
        }
        if us[0] <= 0.0
            || us.iter().any(|u| !u.is_finite())
            || us.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Domain(
                "spectral grid must be positive, finite and increasing".into(),
            ));
        }
        if density.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::Domain(
                "spectral density values must be finite and nonnegative".into(),
            ));
        }
        if !(tail_exponent > -1.0 && tail_exponent < 1.0) {
            return Err(Error::Domain(
                "tail exponent outside (-1, 1) leaves the integrable spectral class".into(),
            ));
        }
        Ok(SpectralDensity { us, density, tail_exponent })
    }

    /// Power density coef * u^exponent on a geometric grid.
    pub fn power(coef: f64, exponent: f64, u_min: f64, u_max: f64, n: usize) -> Result<Self> {
        if !(coef > 0.0 && coef.is_finite()) {
            return Err(Error::Domain("coefficient must be positive and finite".into()));
        }
        if !(u_min > 0.0 && u_max > u_min && u_max.is_finite()) || n < 2 {
            return Err(Error::Domain("need 0 < u_min < u_max and at least two nodes".into()));
        }
        let ratio = (u_max / u_min).ln();
        let us: Vec<f64> =
            (0..n).map(|i| u_min * (ratio * i as f64 / (n - 1) as f64).exp()).collect();
        let density = us.iter().map(|u| coef * u.powf(exponent)).collect();
        SpectralDensity::new(us, density, exponent)
    }

    pub fn us(&self) -> &[f64] {
        &self.us
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn tail_exponent(&self) -> f64 {
        self.tail_exponent
    }

    /// True when every tabulated value is strictly positive.
    pub fn strictly_positive(&self) -> bool {
        self.density.iter().all(|&g| g > 0.0)
    }
}

/// Diagnostics of one spectral density fit.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralFitReport {
    /// Relative l2 residual of the fitted transform against the samples.
    pub residual_rel: f64,
    /// Set when the residual exceeds 5 percent: the samples do not pin the
    /// density down and the fit is exploratory only.
    pub ill_posed: bool,
}

/// Recovers a spectral density from transform samples (lambda, D(0, lambda))
/// by ridge-regularized nonnegative least squares on a hat-function basis
/// over `u_grid`.
///
/// Each basis coefficient is the density value at one grid node; the
/// forward map integrates the piecewise linear density against
/// (2/pi) / (u^2 + lambda^2), cell by cell in closed form. Frequencies
/// outside the grid carry a large share of every sample when the density
/// grows, so the model continues the edge nodes analytically as power laws
/// whose exponents come from the log-log slope of the samples themselves
/// (transform slope s at an end pins the density exponent there to 1 + s).
/// The returned density declares that same tail exponent.
///
/// The ridge penalizes the discrete curvature of the coefficient sequence
/// (a plain magnitude ridge cannot see the oscillation modes the smoothing
/// kernel annihilates, and those dominate the null space here); the
/// regularized normal equations are solved exactly by an active set
/// method, which keeps every coefficient nonnegative.
///
/// The inversion is ill conditioned by nature. At least 8 samples spanning
/// a ratio of 10^1.5 in lambda are required, and even then the report may
/// flag the answer as exploratory.
pub fn fit_spectral_density(
    samples: &[(f64, f64)],
    u_grid: &[f64],
    ridge: f64,
) -> Result<(SpectralDensity, SpectralFitReport)> {
    if samples.len() < 8 {
        return Err(Error::InsufficientSampling(
            "spectral inversion needs at least 8 transform samples".into(),
        ));
    }
    let mut lam_min = f64::INFINITY;
    let mut lam_max = 0.0_f64;
    for &(l, v) in samples {
        if !(l > 0.0 && l.is_finite() && v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(
                "transform samples must have positive finite arguments and values".into(),
            ));
        }
        lam_min = lam_min.min(l);
        lam_max = lam_max.max(l);
    }
    if lam_max / lam_min < 10f64.powf(1.5) {
        return Err(Error::InsufficientSampling(format!(
            "sample arguments span a ratio of {:.2}; the inversion needs at least 10^1.5",
            lam_max / lam_min
        )));
    }
    if u_grid.len() < 4
        || u_grid[0] <= 0.0
        || u_grid.iter().any(|u| !u.is_finite())
        || u_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::Domain(
            "u_grid must be positive, increasing, with at least 4 nodes".into(),
        ));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Domain("ridge must be nonnegative and finite".into()));
    }

    let n = samples.len();
    let p = u_grid.len();

    // End exponents from the samples: a transform slope s over the low
    // (high) end of the argument range pins the density exponent at the
    // matching frequency end to 1 + s. This is exact for power densities.
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let third = (n / 3).max(3).min(n);
    let end_slope = |chunk: &[(f64, f64)]| -> Result<f64> {
        let lx: Vec<f64> = chunk.iter().map(|s| s.0.ln()).collect();
        let ly: Vec<f64> = chunk.iter().map(|s| s.1.ln()).collect();
        Ok(fit_line(&lx, &ly)?.0)
    };
    let head_exp = (1.0 + end_slope(&sorted[..third])?).clamp(-0.99, 0.99);
    let tail_exponent = (1.0 + end_slope(&sorted[n - third..])?).clamp(-0.99, 0.99);

    // Forward matrix: entry (i, j) is the transform at lambda_i of the hat
    // function at node j. On each cell [ua, ub] the hats are the falling
    // ramp (ub - u)/(ub - ua) toward node a and the rising ramp toward
    // node b; with P0 = integral of du/(u^2+l^2) and P1 = integral of
    // u du/(u^2+l^2) both ramps integrate in closed form. The first and
    // last columns also carry their power continuations beyond the grid,
    // flattened by a power substitution so plain quadrature converges.
    let (u_min, u_max) = (u_grid[0], u_grid[p - 1]);
    let mut g = vec![0.0; n * p];
    for (i, &(lam, _)) in samples.iter().enumerate() {
        for j in 0..p - 1 {
            let (ua, ub) = (u_grid[j], u_grid[j + 1]);
            let p0 = ((ub / lam).atan() - (ua / lam).atan()) / lam;
            let p1 = 0.5 * ((ub * ub + lam * lam) / (ua * ua + lam * lam)).ln();
            let w = ub - ua;
            g[i * p + j] += (2.0 / std::f64::consts::PI) * (ub * p0 - p1) / w;
            g[i * p + j + 1] += (2.0 / std::f64::consts::PI) * (p1 - ua * p0) / w;
        }
        let head = integrate(
            &|v: f64| {
                let u = u_min * v.powf(1.0 / (head_exp + 1.0));
                1.0 / (u * u + lam * lam)
            },
            0.0,
            1.0,
            1e-10,
        ) * u_min
            / (head_exp + 1.0);
        g[i * p] += (2.0 / std::f64::consts::PI) * head;
        let tail = integrate(
            &|v: f64| {
                let t = v.powf(1.0 / (1.0 - tail_exponent));
                u_max / (u_max * u_max + lam * lam * t * t)
            },
            0.0,
            1.0,
            1e-10,
        ) / (1.0 - tail_exponent);
        g[i * p + p - 1] += (2.0 / std::f64::consts::PI) * tail;
    }

    // Normal equations with a curvature ridge, solved by projected
    // coordinate descent.
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for j in 0..p {
        for l in j..p {
            let mut s = 0.0;
            for i in 0..n {
                s += g[i * p + j] * g[i * p + l];
            }
            gram[j * p + l] = s;
            gram[l * p + j] = s;
        }
        for i in 0..n {
            rhs[j] += g[i * p + j] * samples[i].1;
        }
    }
    // Add ridge * L^T L with L the second difference operator: the
    // penalty vanishes on index-linear sequences and grows on wiggle.
    for j in 1..p - 1 {
        for (da, ca) in [(-1i64, 1.0), (0, -2.0), (1, 1.0)] {
            for (db, cb) in [(-1i64, 1.0), (0, -2.0), (1, 1.0)] {
                let a = (j as i64 + da) as usize;
                let b = (j as i64 + db) as usize;
                gram[a * p + b] += ridge * ca * cb;
            }
        }
    }
    let w = nnls(&gram, &rhs, p)?;

    // Relative residual of the fitted transform.
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &(_, v)) in samples.iter().enumerate() {
        let mut fitted = 0.0;
        for j in 0..p {
            fitted += g[i * p + j] * w[j];
        }
        num += (fitted - v) * (fitted - v);
        den += v * v;
    }
    let residual_rel = (num / den).sqrt();

    let density = SpectralDensity::new(u_grid.to_vec(), w, tail_exponent)?;
    let report = SpectralFitReport { residual_rel, ill_posed: residual_rel > 0.05 };
    Ok((density, report))
}

/// Solves a dense symmetric positive system by Gaussian elimination with
/// partial pivoting. `sub` selects the active rows and columns.
fn solve_subsystem(gram: &[f64], rhs: &[f64], p: usize, sub: &[usize]) -> Result<Vec<f64>> {
    let k = sub.len();
    let mut m = vec![0.0; k * (k + 1)];
    for (r, &jr) in sub.iter().enumerate() {
        for (c, &jc) in sub.iter().enumerate() {
            m[r * (k + 1) + c] = gram[jr * p + jc];
        }
        m[r * (k + 1) + k] = rhs[jr];
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&a, &b| {
                m[a * (k + 1) + col].abs().partial_cmp(&m[b * (k + 1) + col].abs()).unwrap()
            })
            .unwrap();
        if m[pivot * (k + 1) + col].abs() < 1e-300 {
            return Err(Error::SingularSystem("normal equations are singular".into()));
        }
        if pivot != col {
            for c in 0..=k {
                m.swap(col * (k + 1) + c, pivot * (k + 1) + c);
            }
        }
        let d = m[col * (k + 1) + col];
        for r in 0..k {
            if r == col {
                continue;
            }
            let f = m[r * (k + 1) + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..=k {
                m[r * (k + 1) + c] -= f * m[col * (k + 1) + c];
            }
        }
    }
    Ok((0..k).map(|r| m[r * (k + 1) + k] / m[r * (k + 1) + r]).collect())
}

/// Nonnegative least squares on prebuilt normal equations, by the active
/// set method: grow the passive set by the most violated gradient, solve
/// the unconstrained subsystem exactly, and step back whenever a passive
/// coefficient would go negative.
fn nnls(gram: &[f64], rhs: &[f64], p: usize) -> Result<Vec<f64>> {
    let mut w = vec![0.0; p];
    let mut passive = vec![false; p];
    let scale = rhs.iter().fold(0.0_f64, |a, r| a.max(r.abs())).max(1e-300);
    for _ in 0..10 * p {
        // Gradient of the objective at w; the most positive entry among
        // the clamped coordinates is the next to free up.
        let mut best = 0.0;
        let mut best_j = None;
        for j in 0..p {
            if passive[j] {
                continue;
            }
            let mut grad = rhs[j];
            for l in 0..p {
                grad -= gram[j * p + l] * w[l];
            }
            if grad > best {
                best = grad;
                best_j = Some(j);
            }
        }
        let Some(j) = best_j else { break };
        if best < 1e-11 * scale {
            break;
        }
        passive[j] = true;

        loop {
            let sub: Vec<usize> = (0..p).filter(|&l| passive[l]).collect();
            let z = solve_subsystem(gram, rhs, p, &sub)?;
            if z.iter().all(|&v| v > 0.0) {
                for (l, &jl) in sub.iter().enumerate() {
                    w[jl] = z[l];
                }
                break;
            }
            // Step from w toward z until the first coefficient hits 0,
            // then drop it from the passive set.
            let mut alpha = 1.0_f64;
            let mut drop_j = None;
            for (l, &jl) in sub.iter().enumerate() {
                if z[l] <= 0.0 {
                    let step = w[jl] / (w[jl] - z[l]);
                    if step < alpha {
                        alpha = step;
                        drop_j = Some(jl);
                    }
                }
            }
            for (l, &jl) in sub.iter().enumerate() {
                w[jl] += alpha * (z[l] - w[jl]);
            }
            match drop_j {
                Some(d) => {
                    w[d] = 0.0;
                    passive[d] = false;
                }
                None => break,
            }
        }
    }
    Ok(w)
}

/// Both sides of the entropy identity at one argument, with the checkpoint
/// trace behind the right side.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    /// Frequency side: (2 lambda / pi) times the integral of
    /// log density / (u^2 + lambda^2) over the half line.
    pub lhs: f64,
    /// String side: the settled value of the compensated boundary series.
    pub rhs: f64,
    pub diagnostic: EntropyDiagnostic,
}

/// Checkpoint trace of the string side of the entropy identity.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyDiagnostic {
    /// Abscissas of the checkpoints (log spaced over the string).
    pub xs: Vec<f64>,
    /// log(-D' D) + 2 lambda T(x) + log lambda with T the travel time
    /// integral of sqrt(density); this is the series whose plateau is the
    /// right side.
    pub compensated: Vec<f64>,
    /// The same boundary term compensated with the supplied inverse scale
    /// function instead of the travel time. For a Lebesgue string the two
    /// agree; in general this one is reported for comparison only and may
    /// drift.
    pub scale_compensated: Vec<f64>,
    /// Abscissa where the plateau was accepted.
    pub plateau_x: f64,
}

/// Evaluates the entropy identity tying a string to its spectral density:
/// the frequency side integrates log density against the Poisson-type
/// kernel, the string side reads the compensated boundary series
/// log(-D'(x) D(x)) + 2 lambda T(x) + log lambda off the integrated
/// solutions and requires it to settle to a plateau.
///
/// T(x) is the travel time, the integral of sqrt(density) up to x. The
/// `s_inverse` table is the inverse of the scale change that produced the
/// string; the diagnostic also reports the series compensated with
/// 2 lambda s_inverse(x), which coincides with the travel time form for
/// Lebesgue strings but generally does not settle.
///
/// Requires a strictly positive spectral density (the logarithm must be
/// finite) with lambda strictly inside its tabulated grid.
pub fn entropy_formula(
    m: &StringMeasure,
    s_inverse: &MonotoneTable,
    delta: &SpectralDensity,
    lambda: f64,
) -> Result<EntropyReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain("spectral argument must be positive and finite".into()));
    }
    if !delta.strictly_positive() {
        return Err(Error::Domain(
            "entropy integral needs a strictly positive spectral density".into(),
        ));
    }
    let us = delta.us();
    let gs = delta.density();
    let p = us.len();
    if !(lambda > us[0] && lambda < us[p - 1]) {
        return Err(Error::Domain(
            "argument must lie strictly inside the tabulated spectral grid".into(),
        ));
    }

    // Frequency side. Head: continue the first cell's power law to the
    // origin, where log density is c0 + c1 log u.
    let head_exp = if gs[1] == gs[0] { 0.0 } else { (gs[1] / gs[0]).ln() / (us[1] / us[0]).ln() };
    let mut lhs_integral =
        log_head(gs[0].ln() - head_exp * us[0].ln(), head_exp, us[0], lambda)?;

    // Tabulated cells: log of the linear interpolant against the kernel.
    // Cells where the density crosses 1 are split at the crossing so the
    // integrand's kink never sits inside a quadrature panel.
    let cell_tol = 1e-13;
    for j in 0..p - 1 {
        let (ua, ub) = (us[j], us[j + 1]);
        let (ga, gb) = (gs[j], gs[j + 1]);
        let f = |u: f64| {
            let t = (u - ua) / (ub - ua);
            let g = ga * (1.0 - t) + gb * t;
            g.ln() / (u * u + lambda * lambda)
        };
        if (ga - 1.0) * (gb - 1.0) < 0.0 {
            let u_star = ua + (1.0 - ga) * (ub - ua) / (gb - ga);
            lhs_integral += integrate(&f, ua, u_star, cell_tol);
            lhs_integral += integrate(&f, u_star, ub, cell_tol);
        } else {
            lhs_integral += integrate(&f, ua, ub, cell_tol);
        }
    }

    // Tail: the declared power continuation, log g = c0 + tau log u.
    let tau = delta.tail_exponent();
    lhs_integral += log_tail(gs[p - 1].ln() - tau * us[p - 1].ln(), tau, us[p - 1], lambda)?;
    let lhs = 2.0 * lambda / std::f64::consts::PI * lhs_integral;

    // String side: integrate the solutions, accumulate the travel time on
    // the same grid, and walk log spaced checkpoints.
    let sol = integrate_ad(m, lambda, m.x_max())?;
    let nx = sol.xs.len();
    let mut travel = vec![0.0; nx];
    for i in 0..nx - 1 {
        let (xa, xb) = (sol.xs[i], sol.xs[i + 1]);
        let mid = 0.5 * (xa + xb);
        travel[i + 1] = travel[i]
            + (xb - xa) / 6.0
                * (m.density_at(xa).sqrt()
                    + 4.0 * m.density_at(mid).sqrt()
                    + m.density_at(xb).sqrt());
    }

    let x_end = sol.xs[nx - 1];
    let n_checks = 48;
    let mut idxs: Vec<usize> = (0..n_checks)
        .map(|k| {
            let target = x_end * (300f64).powf(k as f64 / (n_checks - 1) as f64 - 1.0);
            sol.xs.partition_point(|&x| x < target).min(nx - 1)
        })
        .collect();
    idxs.dedup();

    let mut xs_out = Vec::with_capacity(idxs.len());
    let mut compensated = Vec::with_capacity(idxs.len());
    let mut scale_compensated = Vec::with_capacity(idxs.len());
    for &i in &idxs {
        let boundary = -sol.d_prime[i] * sol.d[i];
        let r = if boundary > 0.0 {
            boundary.ln() + 2.0 * lambda * travel[i] + lambda.ln()
        } else {
            f64::NAN
        };
        let s = if boundary > 0.0 {
            boundary.ln() + 2.0 * lambda * s_inverse.eval(sol.xs[i]) + lambda.ln()
        } else {
            f64::NAN
        };
        xs_out.push(sol.xs[i]);
        compensated.push(r);
        scale_compensated.push(s);
    }

    // Plateau: the last checkpoint whose two predecessors already agree
    // with it. Requiring three in a row guards against a slow drift that
    // happens to pause.
    let mut plateau: Option<usize> = None;
    for k in 2..compensated.len() {
        let (r0, r1, r2) = (compensated[k - 2], compensated[k - 1], compensated[k]);
        if r0.is_finite()
            && r1.is_finite()
            && r2.is_finite()
            && (r1 - r0).abs() < PLATEAU_TOL
            && (r2 - r1).abs() < PLATEAU_TOL
        {
            plateau = Some(k);
        }
    }
    let Some(k) = plateau else {
        return Err(Error::NonConvergence(
            "compensated boundary series never settled; enlarge x_max".into(),
        ));
    };

    Ok(EntropyReport {
        lhs,
        rhs: compensated[k],
        diagnostic: EntropyDiagnostic {
            xs: xs_out.clone(),
            compensated,
            scale_compensated,
            plateau_x: xs_out[k],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{gamma, stieltjes_integral, QuadratureSpec};

    #[test]
    fn measure_masses_and_rejections() {
        let m = StringMeasure::new(
            vec![0.0, 1.0, 2.0],
            vec![1.0, 3.0, 3.0],
            vec![(1.5, 0.25), (0.5, 0.5)],
        )
        .unwrap();
        // Trapezoid of the density plus the atoms at 0.5 and 1.5.
        assert!((m.mass(1.0) - (2.0 + 0.5)).abs() < 1e-12);
        assert!((m.mass(2.0) - (2.0 + 3.0 + 0.75)).abs() < 1e-12);
        assert!((m.density_at(0.5) - 2.0).abs() < 1e-12);
        assert!((m.density_at(5.0) - 3.0).abs() < 1e-12);
        // Atoms come back sorted.
        assert_eq!(m.atoms()[0].0, 0.5);

        assert!(StringMeasure::new(vec![0.5, 1.0], vec![1.0, 1.0], vec![]).is_err());
        assert!(StringMeasure::new(vec![0.0, 1.0], vec![1.0, -1.0], vec![]).is_err());
        assert!(StringMeasure::new(vec![0.0, 1.0], vec![1.0], vec![]).is_err());
        assert!(StringMeasure::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![(0.0, 1.0)]).is_err());
        assert!(StringMeasure::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![(2.0, 1.0)]).is_err());
        assert!(StringMeasure::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![(0.5, 0.0)]).is_err());

        // Coincident atoms merge.
        let m2 = StringMeasure::new(
            vec![0.0, 1.0],
            vec![0.0, 0.0],
            vec![(0.5, 0.25), (0.5, 0.25)],
        )
        .unwrap();
        assert_eq!(m2.atoms().len(), 1);
        assert!((m2.atoms()[0].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn measure_serde_roundtrip_and_validation() {
        let m = StringMeasure::new(vec![0.0, 2.0], vec![1.0, 2.0], vec![(1.0, 0.5)]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: StringMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
        let bad = r#"{"xs":[0.0,1.0],"density":[1.0,-2.0],"atoms":[]}"#;
        assert!(serde_json::from_str::<StringMeasure>(bad).is_err());
    }

    #[test]
    fn lebesgue_string_matches_hyperbolic_solutions() {
        // Flat density: A = cosh(lambda x), D = exp(-lambda x) / lambda.
        let m = StringMeasure::lebesgue(5.0).unwrap();
        for &lam in &[1.0, 1.7] {
            let sol = integrate_ad(&m, lam, 5.0).unwrap();
            let mut worst = 0.0_f64;
            for (i, &x) in sol.xs.iter().enumerate() {
                let a = (lam * x).cosh();
                let ap = lam * (lam * x).sinh();
                let d = (-lam * x).exp() / lam;
                let dp = -(-lam * x).exp();
                worst = worst
                    .max((sol.a[i] - a).abs())
                    .max((sol.a_prime[i] - ap).abs())
                    .max((sol.d[i] - d).abs())
                    .max((sol.d_prime[i] - dp).abs());
            }
            assert!(worst < 1e-8, "worst abs deviation {worst:.3e} at lambda {lam}");
            // Shape invariants: A convex increasing from 1, D positive
            // decreasing, A' from exactly 0.
            assert_eq!(sol.a_prime[0], 0.0);
            assert_eq!(sol.a[0], 1.0);
            assert!(sol.a.windows(2).all(|w| w[1] >= w[0]));
            assert!(sol.a_prime.windows(2).all(|w| w[1] >= w[0]));
            assert!(sol.d.iter().all(|&v| v > 0.0));
            assert!(sol.d.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn single_atom_string_is_piecewise_exact() {
        // One point mass w at x = 1 on a massless interval: A stays 1 up
        // to the atom then grows linearly with slope lambda^2 w; D drops
        // linearly to 1/(lambda^2 w) and stays there.
        let (lam, wgt) = (1.3, 0.7);
        let c = lam * lam * wgt;
        let m = StringMeasure::single_atom(1.0, wgt, 4.0).unwrap();
        let sol = integrate_ad(&m, lam, 4.0).unwrap();
        for (i, &x) in sol.xs.iter().enumerate() {
            let (a, ap) = if x < 1.0 { (1.0, 0.0) } else { (1.0 + c * (x - 1.0), c) };
            // At the node itself A' carries the jump already.
            let ap = if x == 1.0 { c } else { ap };
            let d = if x <= 1.0 { 1.0 / c + (1.0 - x) } else { 1.0 / c };
            let dp = if x < 1.0 { -1.0 } else { 0.0 };
            assert!((sol.a[i] - a).abs() < 1e-10, "A mismatch at {x}");
            assert!((sol.a_prime[i] - ap).abs() < 1e-10, "A' mismatch at {x}");
            assert!((sol.d[i] - d).abs() < 1e-10, "D mismatch at {x}");
            if x != 1.0 {
                assert!((sol.d_prime[i] - dp).abs() < 1e-10, "D' mismatch at {x}");
            }
        }
        assert!((sol.d0() - (1.0 + 1.0 / c)).abs() < 1e-10);
    }

    #[test]
    fn wronskian_and_backward_reintegration_agree() {
        // Mixed string: flat density plus an interior atom. The Wronskian
        // A D' - A' D must be -1 on every node, and integrating the string
        // equation backwards from (D, D') at the right end must reproduce
        // the full D profile, jumps included.
        let (lam, wgt, loc) = (1.3, 0.5, 1.2);
        let m = StringMeasure::lebesgue(4.0).unwrap().with_atom(loc, wgt).unwrap();
        let sol = integrate_ad(&m, lam, 4.0).unwrap();
        let n = sol.xs.len();
        for i in 0..n {
            let w = sol.a[i] * sol.d_prime[i] - sol.a_prime[i] * sol.d[i];
            assert!((w + 1.0).abs() < 1e-8, "Wronskian {w} at x = {}", sol.xs[i]);
        }

        // Backward sweep with the same fourth order stepper; across the
        // atom the derivative jump is removed instead of added.
        let lam2 = lam * lam;
        let mut e = sol.d[n - 1];
        let mut ep = sol.d_prime[n - 1];
        let mut worst = 0.0_f64;
        for i in (0..n - 1).rev() {
            let h = sol.xs[i + 1] - sol.xs[i];
            if sol.xs[i + 1] == loc {
                ep -= lam2 * wgt * e;
            }
            let (em, epm) = rk4_step(&m, lam2, sol.xs[i + 1], -0.5 * h, e, ep);
            let (en, epn) = rk4_step(&m, lam2, sol.xs[i + 1] - 0.5 * h, -0.5 * h, em, epm);
            e = en;
            ep = epn;
            worst = worst.max((e - sol.d[i]).abs() / sol.d[i].abs());
        }
        assert!(worst < 1e-6, "backward reintegration deviates by {worst:.3e}");
    }

    #[test]
    fn tail_needs_the_exponential_regime() {
        // At tiny argument the solution is still flat at x_max, so the
        // constant-continuation tail would be badly biased.
        let m = StringMeasure::lebesgue(5.0).unwrap();
        let err = integrate_ad(&m, 0.05, 5.0).unwrap_err();
        assert!(matches!(err, Error::TailEstimation(_)));
        // A string with no mass at all is rejected outright.
        let empty = StringMeasure::new(vec![0.0, 1.0], vec![0.0, 0.0], vec![]).unwrap();
        assert!(matches!(integrate_ad(&empty, 1.0, 1.0).unwrap_err(), Error::Domain(_)));
    }

    #[test]
    fn lebesgue_transform_is_reciprocal() {
        let m = StringMeasure::lebesgue(12.0).unwrap();
        let lams = [0.5, 1.0, 2.0, 4.0];
        let d0 = spectral_transform(&m, &lams).unwrap();
        for (v, lam) in d0.iter().zip(lams) {
            assert!(
                (v - 1.0 / lam).abs() < 1e-8 / lam,
                "transform {v} vs {} at lambda {lam}",
                1.0 / lam
            );
        }
    }

    #[test]
    fn power_string_transform_matches_closed_form() {
        // Density x^2 / 16 integrates to the cube-law string m = x^3 / 48,
        // whose transform is known exactly:
        //   D(0, lambda) = Gamma(5/4) / Gamma(3/4) * (c lambda / 2)^(-1/2)
        // with c = 2 sqrt(kappa p) / (p + 1) = 1/8 for kappa = 1/48, p = 3.
        let m = StringMeasure::power_density(1.0 / 16.0, 2.0, 15.0, 3000).unwrap();
        let c = 0.125;
        let lams = [0.5, 1.0, 2.0, 4.0, 8.0];
        let d0 = spectral_transform(&m, &lams).unwrap();
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for (v, lam) in d0.iter().zip(lams) {
            let exact = gamma(1.25) / gamma(0.75) * (c * lam / 2.0).powf(-0.5);
            assert!(
                (v / exact - 1.0).abs() < 2e-3,
                "transform {v} vs exact {exact} at lambda {lam}"
            );
            lx.push(lam.ln());
            ly.push(v.ln());
        }
        // Log-log slope pins the spectral index.
        let (slope, _) = fit_line(&lx, &ly).unwrap();
        assert!((slope + 0.5).abs() < 0.02, "slope {slope}");
        assert!(d0.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn fit_recovers_a_flat_spectral_density() {
        // Transform samples 1/lambda belong to the flat density 1. The
        // middle of the fitted grid must come back near 1 and feeding the
        // fit back through the transform must reproduce the samples.
        let samples: Vec<(f64, f64)> = (0..12)
            .map(|i| {
                let l = 0.1 * (100f64).powf(i as f64 / 11.0);
                (l, 1.0 / l)
            })
            .collect();
        let p = 64;
        let u_grid: Vec<f64> =
            (0..p).map(|j| 1e-3 * (1e6f64).powf(j as f64 / (p - 1) as f64)).collect();
        let (fit, report) = fit_spectral_density(&samples, &u_grid, 1e-4).unwrap();
        assert!(!report.ill_posed, "residual {}", report.residual_rel);
        assert!(report.residual_rel < 0.02);

        // Flat lies in the curvature penalty's null space and the edge
        // continuations carry the out-of-grid mass, so the middle half of
        // the grid must come back within 5 percent.
        let vals = fit.density();
        for j in p / 4..3 * p / 4 {
            assert!(
                (vals[j] - 1.0).abs() < 0.05,
                "node {} at u = {:.4} fitted {:.4}",
                j,
                fit.us()[j],
                vals[j]
            );
        }
        assert!(fit.tail_exponent().abs() < 0.02, "tail {}", fit.tail_exponent());

        // Round trip through the quadrature of the fitted density.
        let spec = QuadratureSpec { u_max: 4e4, rel_tol: 1e-9, tail_order: fit.tail_exponent() };
        for &(lam, v) in samples.iter().skip(2).take(8) {
            let back = stieltjes_integral(fit.us(), fit.density(), lam, &spec).unwrap();
            assert!((back / v - 1.0).abs() < 0.01, "round trip {back} vs {v} at {lam}");
        }
    }

    #[test]
    fn fit_recovers_the_power_string_spectral_density() {
        // Samples from the cube-law string, whose spectral density is
        // known in closed form:
        //   (pi nu / Gamma(1 - nu)^2) (c/2)^(-2 nu) u^(1 - 2 nu)
        // with nu = 1/4 and c = 1/8, about 2.09 sqrt(u). The fit must
        // recover exponent and amplitude through its informative band.
        let m = StringMeasure::power_density(1.0 / 16.0, 2.0, 15.0, 3000).unwrap();
        let lams: Vec<f64> = (0..16).map(|i| 0.2 * (50f64).powf(i as f64 / 15.0)).collect();
        let d0 = spectral_transform(&m, &lams).unwrap();
        let samples: Vec<(f64, f64)> = lams.iter().copied().zip(d0).collect();
        let p = 48;
        let u_grid: Vec<f64> =
            (0..p).map(|j| 0.05 * (1000f64).powf(j as f64 / (p - 1) as f64)).collect();
        let (fit, _report) = fit_spectral_density(&samples, &u_grid, 1e-4).unwrap();
        assert!((fit.tail_exponent() - 0.5).abs() < 0.02, "tail {}", fit.tail_exponent());

        let amp = std::f64::consts::PI * 0.25 / gamma(0.75).powi(2) * (0.125_f64 / 2.0).powf(-0.5);
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for j in 0..p {
            let u = fit.us()[j];
            if u >= 0.3 && u <= 6.0 && fit.density()[j] > 0.0 {
                assert!(
                    (fit.density()[j] / (amp * u.sqrt()) - 1.0).abs() < 0.05,
                    "node at u = {u:.3} fitted {:.4} vs {:.4}",
                    fit.density()[j],
                    amp * u.sqrt()
                );
                lx.push(u.ln());
                ly.push(fit.density()[j].ln());
            }
        }
        assert!(lx.len() >= 6, "informative band too sparse");
        let (slope, _) = fit_line(&lx, &ly).unwrap();
        assert!((slope - 0.5).abs() < 0.05, "fitted spectral slope {slope}");
    }

    #[test]
    fn fit_preconditions() {
        let ok: Vec<(f64, f64)> =
            (0..12).map(|i| (0.1 * (100f64).powf(i as f64 / 11.0), 1.0)).collect();
        let narrow: Vec<(f64, f64)> = (0..12).map(|i| (1.0 + i as f64 * 0.1, 1.0)).collect();
        let grid = vec![0.1, 1.0, 10.0, 100.0];
        assert!(matches!(
            fit_spectral_density(&ok[..6], &grid, 0.0).unwrap_err(),
            Error::InsufficientSampling(_)
        ));
        assert!(matches!(
            fit_spectral_density(&narrow, &grid, 0.0).unwrap_err(),
            Error::InsufficientSampling(_)
        ));
        assert!(fit_spectral_density(&ok, &[1.0, 2.0], 0.0).is_err());
        assert!(fit_spectral_density(&ok, &grid, -1.0).is_err());
    }

    #[test]
    fn spectral_density_validation() {
        assert!(SpectralDensity::new(vec![1.0, 2.0], vec![1.0, 1.0], 0.0).is_ok());
        assert!(SpectralDensity::new(vec![1.0, 2.0], vec![1.0, 1.0], 1.0).is_err());
        assert!(SpectralDensity::new(vec![1.0, 2.0], vec![1.0, 1.0], -1.0).is_err());
        assert!(SpectralDensity::new(vec![2.0, 1.0], vec![1.0, 1.0], 0.0).is_err());
        assert!(SpectralDensity::new(vec![1.0, 2.0], vec![-1.0, 1.0], 0.0).is_err());
        let d = SpectralDensity::power(2.0, 0.5, 0.01, 100.0, 9).unwrap();
        assert!((d.density()[4] - 2.0 * d.us()[4].sqrt()).abs() < 1e-12);
        let json = serde_json::to_string(&d).unwrap();
        let back: SpectralDensity = serde_json::from_str(&json).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn entropy_identity_is_exact_for_the_flat_string() {
        // Lebesgue string against the flat spectral density: both sides of
        // the identity vanish. The frequency side is exactly 0 term by
        // term; the string side must settle there numerically. With the
        // identity scale change the two compensated series coincide.
        let m = StringMeasure::lebesgue(12.0).unwrap();
        let s_inv = MonotoneTable::power_law(1.0, 1.0, 1e-6, 30.0, 40).unwrap();
        let delta = SpectralDensity::new(vec![1e-3, 1e3], vec![1.0, 1.0], 0.0).unwrap();
        let rep = entropy_formula(&m, &s_inv, &delta, 1.0).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert!(rep.rhs.abs() < 1e-6, "rhs {}", rep.rhs);
        for (r, s) in rep.diagnostic.compensated.iter().zip(&rep.diagnostic.scale_compensated) {
            if r.is_finite() {
                assert!((r - s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn entropy_identity_on_the_calibrated_cube_law_string() {
        // The string with density 3 kappa x^2 tuned so its spectral
        // density is exactly sqrt(u): kappa = 4 c^2 / 3 where
        // c = pi^2 / (8 Gamma(3/4)^4). The frequency side then has the
        // closed value log(lambda) / 2, and the string side must agree.
        let pi = std::f64::consts::PI;
        let c = pi * pi / (8.0 * gamma(0.75).powi(4));
        let kappa = 4.0 * c * c / 3.0;
        let s_inv = MonotoneTable::power_law((3.0 * kappa).sqrt(), 2.0, 1e-6, 30.0, 60).unwrap();
        let delta = SpectralDensity::power(1.0, 0.5, 1e-4, 1e4, 520).unwrap();
        for &lam in &[0.5, 1.0, 2.0, 4.0] {
            // The boundary series settles only algebraically (like one over
            // the travel time in units of 1/lambda), so the string length
            // adapts to keep lambda * T(x_max) near 150.
            let x_max = (150.0 / (c * lam)).sqrt();
            let m = StringMeasure::power_density(3.0 * kappa, 2.0, x_max, 3000).unwrap();
            let rep = entropy_formula(&m, &s_inv, &delta, lam).unwrap();
            let exact = 0.5 * lam.ln();
            assert!(
                (rep.lhs - exact).abs() < 1e-3,
                "lhs {} vs exact {exact} at lambda {lam}",
                rep.lhs
            );
            assert!(
                (rep.lhs - rep.rhs).abs() < 1e-2,
                "lhs {} vs rhs {} at lambda {lam}",
                rep.lhs,
                rep.rhs
            );
        }
    }

    #[test]
    fn entropy_rejections_and_nonconvergence() {
        let m = StringMeasure::lebesgue(12.0).unwrap();
        let s_inv = MonotoneTable::power_law(1.0, 1.0, 1e-6, 30.0, 40).unwrap();
        let flat = SpectralDensity::new(vec![1e-3, 1e3], vec![1.0, 1.0], 0.0).unwrap();
        // Argument outside the tabulated grid.
        assert!(entropy_formula(&m, &s_inv, &flat, 2e3).is_err());
        // Density with a zero value has no finite logarithm.
        let zeroed = SpectralDensity::new(vec![1e-3, 1.0, 1e3], vec![1.0, 0.0, 1.0], 0.0).unwrap();
        assert!(matches!(
            entropy_formula(&m, &s_inv, &zeroed, 1.0).unwrap_err(),
            Error::Domain(_)
        ));
        // A string cut too short never reaches its plateau (or fails the
        // tail gate first, depending on the argument).
        let pi = std::f64::consts::PI;
        let c = pi * pi / (8.0 * gamma(0.75).powi(4));
        let kappa = 4.0 * c * c / 3.0;
        let short = StringMeasure::power_density(3.0 * kappa, 2.0, 1.5, 600).unwrap();
        let delta = SpectralDensity::power(1.0, 0.5, 1e-4, 1e4, 520).unwrap();
        let err = entropy_formula(&short, &s_inv, &delta, 0.5).unwrap_err();
        assert!(matches!(err, Error::NonConvergence(_) | Error::TailEstimation(_)));
    }

    #[test]
    fn csv_rendering_has_the_expected_shape() {
        let m = StringMeasure::lebesgue(2.0).unwrap();
        let sol = integrate_ad(&m, 1.0, 2.0).unwrap();
        let csv = sol.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "x,A,A_prime,D,D_prime");
        assert_eq!(csv.lines().count(), sol.xs.len() + 1);
    }
}
