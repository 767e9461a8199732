//! Solver for the coupled restricted-transform system.
//!
//! The pair phi(x, lambda), phi-check(x, -lambda) solves a linear system
//! of Stieltjes differential equations driven by the renewal functions:
//!
//!   d phi(x, lambda)        = exp(-lambda x) phi-check(x, -lambda)
//!                             dH(x) / H-check(x),
//!   d phi-check(x, -lambda) = exp(+lambda x) phi(x, lambda)
//!                             dH-check(x) / H(x),
//!
//! with both components starting like their renewal function at the
//! origin. phi(x, lambda) is the transform of the post-minimum final
//! displacement restricted to paths whose maximum stays below x, so at
//! lambda = 0 the system collapses to phi = H. The argument is complex;
//! every solution component is entire in lambda, so no branch choices
//! arise. For symmetric tables the half-sum
//! [e^(lambda x / 2) phi(x, lambda) + e^(-lambda x / 2) phi(x, -lambda)]
//! / (2 H(x)) is the string solution A at the transformed coordinate.

use crate::error::{Error, Result};
use crate::table::MonotoneTable;
use num_complex::Complex64;
use serde::Serialize;

/// Lowest admissible startup abscissa relative to the right end of the
/// grid; twelve decades keeps the grid size bounded.
const MIN_START_RATIO: f64 = 1e-12;

/// Default local tolerance of the integration.
pub const DEFAULT_REL_TOL: f64 = 1e-6;

/// Default density of the automatically built log grid.
pub const DEFAULT_PER_DECADE: usize = 200;

/// Joint solution table of the coupled system at one transform argument.
#[derive(Debug, Clone, Serialize)]
pub struct PhiTable {
    pub xs: Vec<f64>,
    pub lambda: Complex64,
    /// phi(x, lambda) on `xs`.
    pub phi: Vec<Complex64>,
    /// phi-check(x, -lambda) on `xs`.
    pub phi_check: Vec<Complex64>,
    /// Renewal values H on `xs`; interpolation carrier (the ratio phi / H
    /// is smooth and equals 1 identically at zero argument).
    #[serde(skip)]
    h_nodes: Vec<f64>,
    /// Renewal values H-check on `xs`.
    #[serde(skip)]
    hc_nodes: Vec<f64>,
}

impl PhiTable {
    /// phi(x, lambda) between nodes: the ratio to the renewal function is
    /// interpolated linearly in log x and multiplied back by the cell's
    /// power law, so zero argument reproduces the renewal function rather
    /// than a chord through it. Exact at the nodes.
    pub fn eval(&self, x: f64) -> Result<Complex64> {
        interp_ratio(&self.xs, &self.phi, &self.h_nodes, x)
    }

    /// phi-check(x, -lambda) between nodes.
    pub fn eval_check(&self, x: f64) -> Result<Complex64> {
        interp_ratio(&self.xs, &self.phi_check, &self.hc_nodes, x)
    }

    /// CSV rows (x, Re phi, Im phi, Re phi-check, Im phi-check).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,phi_re,phi_im,phi_check_re,phi_check_im\n");
        for i in 0..self.xs.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.xs[i],
                self.phi[i].re,
                self.phi[i].im,
                self.phi_check[i].re,
                self.phi_check[i].im
            ));
        }
        out
    }
}

fn interp_ratio(xs: &[f64], vs: &[Complex64], hs: &[f64], x: f64) -> Result<Complex64> {
    let lo = xs[0];
    let hi = xs[xs.len() - 1];
    if !(x > 0.0) || x < lo * (1.0 - 1e-12) || x > hi * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("point {x} outside the solved grid [{lo}, {hi}]")));
    }
    let x = x.clamp(lo, hi);
    let j = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
        Ok(j) => return Ok(vs[j]),
        Err(j) => j, // first index with xs[j] > x; j >= 1 here
    };
    let (xa, xb) = (xs[j - 1], xs[j]);
    let w = (x / xa).ln() / (xb / xa).ln();
    let ratio = vs[j - 1] / hs[j - 1] * (1.0 - w) + vs[j] / hs[j] * w;
    let h_here = hs[j - 1] * (x / xa).powf((hs[j] / hs[j - 1]).ln() / (xb / xa).ln());
    Ok(ratio * h_here)
}

/// Builds a log-spaced grid whose startup point is small enough that
/// seeding the system with the renewal functions themselves keeps the
/// neglected first-order correction, about |lambda| x g / (2 g + 1) with
/// g the larger head exponent, below `rel_tol`.
///
/// The startup never sits above the first tabulated node of either
/// renewal function; if the tolerance would push it more than twelve
/// decades below `x_max` the request is rejected, as is a renewal table
/// with a flat head.
pub fn startup_grid(
    h: &MonotoneTable,
    h_check: &MonotoneTable,
    lambda: Complex64,
    x_max: f64,
    per_decade: usize,
    rel_tol: f64,
) -> Result<Vec<f64>> {
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(Error::Domain(format!("grid end must be positive, got {x_max}")));
    }
    if per_decade < 10 {
        return Err(Error::Domain("need at least 10 grid nodes per decade".into()));
    }
    if !(rel_tol > 0.0 && rel_tol < 0.1) {
        return Err(Error::Domain("relative tolerance must lie in (0, 0.1)".into()));
    }
    let g = h.head_exponent();
    let g_check = h_check.head_exponent();
    if g <= 0.0 || g_check <= 0.0 {
        return Err(Error::Startup(
            "renewal functions must vanish at the origin as a positive power".into(),
        ));
    }
    let mut x0 = h.x_min().min(h_check.x_min()).min(x_max / 10.0);
    if lambda != Complex64::new(0.0, 0.0) {
        let g_big = g.max(g_check);
        let bound_point = 0.5 * rel_tol * (2.0 * g_big + 1.0) / (lambda.norm() * g_big);
        x0 = x0.min(bound_point);
    }
    if x0 < x_max * MIN_START_RATIO {
        return Err(Error::Startup(format!(
            "tolerance {rel_tol} at argument {lambda} needs a startup point below \
             {MIN_START_RATIO} of the grid end"
        )));
    }
    let decades = (x_max / x0).log10();
    let n = (decades * per_decade as f64).ceil() as usize + 1;
    let step = (x_max / x0).ln() / (n - 1) as f64;
    Ok((0..n).map(|i| x0 * (step * i as f64).exp()).collect())
}

/// Integrates the coupled system at arguments lambda and -lambda on the
/// given grid and returns both solution tables.
///
/// The grid must be strictly increasing and positive, and its first node
/// must satisfy the startup bound of [`startup_grid`] at the default
/// tolerance: the components are seeded with the renewal functions there.
pub fn solve_phi(
    hplus: &MonotoneTable,
    hminus: &MonotoneTable,
    lambda: Complex64,
    xs: &[f64],
) -> Result<(PhiTable, PhiTable)> {
    solve_phi_with_tol(hplus, hminus, lambda, xs, DEFAULT_REL_TOL)
}

/// [`solve_phi`] with an explicit startup tolerance.
pub fn solve_phi_with_tol(
    hplus: &MonotoneTable,
    hminus: &MonotoneTable,
    lambda: Complex64,
    xs: &[f64],
    rel_tol: f64,
) -> Result<(PhiTable, PhiTable)> {
    if xs.len() < 2 {
        return Err(Error::Domain("need at least two grid nodes".into()));
    }
    if !(xs[0] > 0.0) || xs.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::Domain("grid must be strictly increasing and positive".into()));
    }
    if !(rel_tol > 0.0 && rel_tol < 0.1) {
        return Err(Error::Domain("relative tolerance must lie in (0, 0.1)".into()));
    }
    let x_max = xs[xs.len() - 1];
    if !lambda.is_finite() || lambda.re.abs() * x_max > 600.0 {
        return Err(Error::Domain(format!(
            "transform argument {lambda} overflows the exponential weights on this grid"
        )));
    }
    let g = hplus.head_exponent();
    let g_check = hminus.head_exponent();
    if g <= 0.0 || g_check <= 0.0 {
        return Err(Error::Startup(
            "renewal functions must vanish at the origin as a positive power".into(),
        ));
    }
    if lambda != Complex64::new(0.0, 0.0) {
        let g_big = g.max(g_check);
        let bound_point = 0.5 * rel_tol * (2.0 * g_big + 1.0) / (lambda.norm() * g_big);
        if xs[0] > bound_point {
            return Err(Error::Startup(format!(
                "grid starts at {} but the renewal seed is only valid below {bound_point} \
                 at argument {lambda}",
                xs[0]
            )));
        }
    }
    let plus = integrate_pair(hplus, hminus, lambda, xs)?;
    let minus = integrate_pair(hplus, hminus, -lambda, xs)?;
    Ok((plus, minus))
}

/// One sweep of the predictor-corrector trapezoid scheme at a single
/// argument, producing phi(., lambda) and phi-check(., -lambda).
fn integrate_pair(
    h: &MonotoneTable,
    h_check: &MonotoneTable,
    lambda: Complex64,
    xs: &[f64],
) -> Result<PhiTable> {
    let n = xs.len();
    let h_nodes: Vec<f64> = xs.iter().map(|&x| h.eval(x)).collect();
    let hc_nodes: Vec<f64> = xs.iter().map(|&x| h_check.eval(x)).collect();
    if h_nodes.iter().chain(hc_nodes.iter()).any(|v| !(*v > 0.0)) {
        return Err(Error::SingularSystem(
            "a renewal function vanishes on the grid interior".into(),
        ));
    }
    let mut phi = Vec::with_capacity(n);
    let mut chk = Vec::with_capacity(n);
    phi.push(Complex64::new(h_nodes[0], 0.0));
    chk.push(Complex64::new(hc_nodes[0], 0.0));
    if lambda == Complex64::new(0.0, 0.0) {
        // Exact fixed point of the system.
        for i in 1..n {
            phi.push(Complex64::new(h_nodes[i], 0.0));
            chk.push(Complex64::new(hc_nodes[i], 0.0));
        }
        return Ok(PhiTable { xs: xs.to_vec(), lambda, phi, phi_check: chk, h_nodes, hc_nodes });
    }

    for i in 0..n - 1 {
        let (xa, xb) = (xs[i], xs[i + 1]);
        let (ha, hb) = (h_nodes[i], h_nodes[i + 1]);
        let (hca, hcb) = (hc_nodes[i], hc_nodes[i + 1]);
        let dh = hb - ha;
        let dhc = hcb - hca;
        let fa = (-lambda * xa).exp() * chk[i] / hca;
        let ga = (lambda * xa).exp() * phi[i] / ha;
        // Predict with left-endpoint integrands, then correct once with
        // the trapezoid against the exact renewal increments.
        let phi_pred = phi[i] + fa * dh;
        let chk_pred = chk[i] + ga * dhc;
        let fb = (-lambda * xb).exp() * chk_pred / hcb;
        let gb = (lambda * xb).exp() * phi_pred / hb;
        phi.push(phi[i] + 0.5 * (fa + fb) * dh);
        chk.push(chk[i] + 0.5 * (ga + gb) * dhc);
    }

    let bad = |v: &Complex64| !v.is_finite();
    if phi.iter().chain(chk.iter()).any(bad) {
        return Err(Error::NonConvergence(
            "coupled system overflowed; grid or tables are unusable".into(),
        ));
    }
    if lambda.im == 0.0 && lambda.re > 0.0 && phi.iter().chain(chk.iter()).any(|v| v.re <= 0.0) {
        return Err(Error::NonConvergence(
            "coupled system left the positive cone; grid or tables are unusable".into(),
        ));
    }
    Ok(PhiTable { xs: xs.to_vec(), lambda, phi, phi_check: chk, h_nodes, hc_nodes })
}

/// String solution read off the transform pair:
/// [e^(lambda x / 2) phi(x, lambda) + e^(-lambda x / 2) phi(x, -lambda)]
/// / H(x), renormalized by its limit 2 at the origin so the result
/// starts at 1 like a string solution must.
pub fn a_from_phi(
    pair: &(PhiTable, PhiTable),
    hplus: &MonotoneTable,
    x: f64,
    lambda: Complex64,
) -> Result<Complex64> {
    let (plus, minus) = if pair.0.lambda == lambda && pair.1.lambda == -lambda {
        (&pair.0, &pair.1)
    } else if pair.1.lambda == lambda && pair.0.lambda == -lambda {
        (&pair.1, &pair.0)
    } else {
        return Err(Error::Domain(format!(
            "pair was solved at {} and {}, not at {lambda}",
            pair.0.lambda, pair.1.lambda
        )));
    };
    let hx = hplus.eval(x);
    if !(hx > 0.0) {
        return Err(Error::Domain(format!("renewal function vanishes at {x}")));
    }
    let half = 0.5 * lambda * x;
    let bracket = half.exp() * plus.eval(x)? + (-half).exp() * minus.eval(x)?;
    Ok(0.5 * bracket / hx)
}
