//! Nondecreasing positive functions stored as piecewise power laws.
//!
//! Renewal-type functions such as `H(x)` behave like `c x^g` near zero and
//! like another power (or a constant) at infinity. Interpolating linearly
//! in log-log coordinates represents every pure power law exactly and keeps
//! small-argument asymptotics honest, which matters because the chain
//! kernel and the string change of variables both probe `H` far below the
//! smallest tabulated node.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A tabulated nondecreasing positive function on `(0, infinity)`.
///
/// Between nodes the function is a power law through the two endpoints.
/// Below the first node it continues the first cell's power law; above the
/// last node it continues the last cell's. Evaluation at a node reproduces
/// the stored value exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct MonotoneTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Cell exponents: exps[i] = log(ys[i+1]/ys[i]) / log(xs[i+1]/xs[i]).
    exps: Vec<f64>,
}

/// Wire form of a table: just the nodes. Exponents are rebuilt (and the
/// monotonicity contract re-checked) on deserialization.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableRepr {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl TryFrom<TableRepr> for MonotoneTable {
    type Error = Error;

    fn try_from(r: TableRepr) -> Result<Self> {
        MonotoneTable::from_samples(r.xs, r.ys)
    }
}

impl From<MonotoneTable> for TableRepr {
    fn from(t: MonotoneTable) -> Self {
        TableRepr { xs: t.xs, ys: t.ys }
    }
}

impl MonotoneTable {
    /// Builds a table from sampled nodes.
    ///
    /// Requires at least two nodes, strictly increasing positive `xs`,
    /// strictly positive nondecreasing `ys`.
    pub fn from_samples(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Domain(format!(
                "node count mismatch: {} abscissas, {} values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::Domain("need at least two nodes".into()));
        }
        if !xs[0].is_finite() || xs[0] <= 0.0 {
            return Err(Error::Domain("abscissas must be positive".into()));
        }
        for w in xs.windows(2) {
            if !w[1].is_finite() || w[1] <= w[0] {
                return Err(Error::Domain("abscissas must be strictly increasing".into()));
            }
        }
        if ys.iter().any(|y| !y.is_finite() || *y <= 0.0) {
            return Err(Error::Domain("values must be positive and finite".into()));
        }
        for w in ys.windows(2) {
            if w[1] < w[0] {
                return Err(Error::Domain("values must be nondecreasing".into()));
            }
        }
        let exps = xs
            .windows(2)
            .zip(ys.windows(2))
            .map(|(x, y)| {
                if y[1] == y[0] {
                    0.0
                } else {
                    (y[1] / y[0]).ln() / (x[1] / x[0]).ln()
                }
            })
            .collect();
        Ok(MonotoneTable { xs, ys, exps })
    }

    /// Convenience constructor for an exact power law `c x^g` sampled on a
    /// log grid; cells of a log-log table reproduce it with no error.
    pub fn power_law(c: f64, g: f64, x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(c > 0.0) || !g.is_finite() || g < 0.0 {
            return Err(Error::Domain("power law needs c > 0 and g >= 0".into()));
        }
        if !(x_min > 0.0 && x_max > x_min) || n < 2 {
            return Err(Error::Domain("bad power law grid".into()));
        }
        let ratio = (x_max / x_min).ln() / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| x_min * (ratio * i as f64).exp()).collect();
        let ys = xs.iter().map(|x| c * x.powf(g)).collect();
        Self::from_samples(xs, ys)
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    /// Exponent of the fitted power head below the first node.
    pub fn head_exponent(&self) -> f64 {
        self.exps[0]
    }

    /// Exponent of the power extension above the last node.
    pub fn tail_exponent(&self) -> f64 {
        *self.exps.last().unwrap()
    }

    fn cell_of(&self, x: f64) -> usize {
        // Index of the cell whose power law evaluates x; clamped so that
        // out-of-range arguments use the head or tail extension.
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.xs.len() - 2),
        }
    }

    /// Evaluates the interpolant. Zero at and below the origin when the
    /// head exponent is positive; constant continuation when it is zero.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return if self.exps[0] > 0.0 { 0.0 } else { self.ys[0] };
        }
        let i = self.cell_of(x);
        self.ys[i] * (x / self.xs[i]).powf(self.exps[i])
    }

    /// Smallest `s` with `eval(s) = target`.
    ///
    /// Flat stretches are resolved to their left edge. Targets below the
    /// reach of a positive head or above the reach of the tail extension
    /// are inverted through those extensions.
    pub fn quantile(&self, target: f64) -> Result<f64> {
        if !(target > 0.0) || !target.is_finite() {
            return Err(Error::Domain("quantile target must be positive".into()));
        }
        if target < self.ys[0] {
            let g = self.exps[0];
            if g <= 0.0 {
                return Err(Error::DegenerateState(
                    "flat head cannot be inverted below the first node".into(),
                ));
            }
            return Ok(self.xs[0] * (target / self.ys[0]).powf(1.0 / g));
        }
        let last = *self.ys.last().unwrap();
        if target > last {
            let g = *self.exps.last().unwrap();
            if g <= 0.0 {
                return Err(Error::DegenerateState(
                    "flat tail cannot be inverted above the last node".into(),
                ));
            }
            return Ok(self.x_max() * (target / last).powf(1.0 / g));
        }
        // First cell whose right value reaches the target.
        let mut lo = 0usize;
        let mut hi = self.ys.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.ys[mid] < target {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        if lo == 0 || self.ys[lo - 1] == target {
            return Ok(self.xs[if lo == 0 { 0 } else { lo - 1 }]);
        }
        let i = lo - 1;
        let g = self.exps[i];
        Ok(self.xs[i] * (target / self.ys[i]).powf(1.0 / g))
    }

    /// Draws the value `s` in `(0, z]` with `eval(s) = u * eval(z)`, the
    /// inverse transform draw from the normalized measure `d eval / eval(z)`
    /// on `(0, z]`. Consumes exactly the one uniform `u` handed in.
    pub fn sample_ratio(&self, z: f64, u: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::Domain("sampling scale must be positive".into()));
        }
        if !(0.0 < u && u < 1.0) {
            return Err(Error::Domain("uniform draw must lie in (0, 1)".into()));
        }
        self.quantile(u * self.eval(z))
    }

    /// Closed-form `integral of eval(t)^k dt` over `[a, b]`, `0 <= a < b`,
    /// summed cell by cell. Head and tail power extensions are integrated
    /// exactly as well; a head with `k * g <= -1` diverges at the origin.
    pub fn integral_power(&self, a: f64, b: f64, k: f64) -> Result<f64> {
        if !(a >= 0.0 && b > a) {
            return Err(Error::Domain("need 0 <= a < b".into()));
        }
        let mut total = 0.0;
        let mut lo = a;
        while lo < b {
            let i = self.cell_of(if lo == 0.0 { self.xs[0] * 0.5 } else { lo });
            // Right edge of the power law piece containing lo.
            let hi = if lo < self.xs[0] {
                b.min(self.xs[0])
            } else if i + 2 == self.xs.len() {
                b
            } else {
                b.min(self.xs[i + 1])
            };
            let g = self.exps[i];
            let p = g * k;
            // Piece is y_i^k (t / x_i)^(g k); integrate t^p exactly.
            let scale = self.ys[i].powf(k) / self.xs[i].powf(p);
            if lo == 0.0 && p <= -1.0 + 1e-12 {
                return Err(Error::Divergence(format!(
                    "integral of power {p:.3} diverges at the origin"
                )));
            }
            let piece = if (p + 1.0).abs() < 1e-12 {
                scale * (hi / lo).ln()
            } else {
                scale * (hi.powf(p + 1.0) - if lo == 0.0 { 0.0 } else { lo.powf(p + 1.0) })
                    / (p + 1.0)
            };
            total += piece;
            lo = hi;
        }
        Ok(total)
    }
}
