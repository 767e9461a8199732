//! Process models: stable Lévy processes with exact increment sampling,
//! plus a tabulated-exponent family for spectral-side experiments.
//!
//! A model couples three choices: the process family (symmetric stable with
//! `psi(u) = |u|^alpha`, Brownian as its `alpha = 2` member, or a custom
//! tabulated even exponent), a stable skewness used only where signs
//! matter, and the killing mode. Exponential killing at a positive rate is
//! the proper probabilistic setting; the Lebesgue mode stands for the
//! vanishing-rate limit and is handled operationally by a decreasing rate
//! schedule with extrapolation.

use crate::error::{Error, Result};
use crate::table::MonotoneTable;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Draws a uniform in the open interval (0, 1).
pub(crate) fn uniform_open<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Process family.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `psi(u) = |u|^alpha`, `alpha` in (0, 2].
    SymmetricStable { alpha: f64 },
    /// `psi(u) = u^2`; the `alpha = 2` stable member, named for clarity.
    Brownian,
    /// Tabulated even exponent; evaluation only, not samplable.
    Custom { psi: MonotoneTable },
}

/// Killing mode of the path measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Killing {
    /// Independent exponential lifetime at a fixed positive rate.
    Exponential { rate: f64 },
    /// Lebesgue weighting in time: the vanishing-rate limit, represented
    /// by the rate schedule 2^-k with extrapolation to zero.
    LebesgueProxy,
}

/// The rate schedule standing in for Lebesgue killing.
pub const LEBESGUE_RATE_LEVELS: usize = 7;

/// A Lévy process together with its killing mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct LevyModel {
    pub family: Family,
    /// Stable skewness in [-1, 1]; nonzero values are supported only by
    /// the samplers and the positivity estimate, not by `psi`.
    pub skew: f64,
    pub killing: Killing,
}

/// Flat wire form: `{family, alpha, skew, killing, psi?}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default)]
    skew: f64,
    killing: Killing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    psi: Option<MonotoneTable>,
}

impl TryFrom<ModelRepr> for LevyModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        let family = match r.family.as_str() {
            "symmetric-stable" => {
                let alpha = r.alpha.ok_or_else(|| {
                    Error::Validation("symmetric-stable family needs an alpha field".into())
                })?;
                Family::SymmetricStable { alpha }
            }
            "brownian" => Family::Brownian,
            "custom" => {
                let psi = r.psi.ok_or_else(|| {
                    Error::Validation("custom family needs a psi table".into())
                })?;
                Family::Custom { psi }
            }
            other => {
                return Err(Error::Validation(format!("unknown process family '{other}'")))
            }
        };
        let model = LevyModel { family, skew: r.skew, killing: r.killing };
        model.validate()?;
        Ok(model)
    }
}

impl From<LevyModel> for ModelRepr {
    fn from(m: LevyModel) -> Self {
        let (family, alpha, psi) = match m.family {
            Family::SymmetricStable { alpha } => ("symmetric-stable", Some(alpha), None),
            Family::Brownian => ("brownian", None, None),
            Family::Custom { psi } => ("custom", None, Some(psi)),
        };
        ModelRepr { family: family.into(), alpha, skew: m.skew, killing: m.killing, psi }
    }
}

impl LevyModel {
    /// Symmetric stable process killed at unit rate.
    pub fn symmetric_stable(alpha: f64) -> Result<Self> {
        let model = LevyModel {
            family: Family::SymmetricStable { alpha },
            skew: 0.0,
            killing: Killing::Exponential { rate: 1.0 },
        };
        model.validate()?;
        Ok(model)
    }

    /// Brownian motion killed at unit rate.
    pub fn brownian() -> Self {
        LevyModel { family: Family::Brownian, skew: 0.0, killing: Killing::Exponential { rate: 1.0 } }
    }

    /// Same process, different killing rate.
    pub fn with_killing(mut self, rate: f64) -> Result<Self> {
        self.killing = Killing::Exponential { rate };
        self.validate()?;
        Ok(self)
    }

    /// Same process under the Lebesgue (vanishing-rate) mode.
    pub fn second_case(mut self) -> Self {
        self.killing = Killing::LebesgueProxy;
        self
    }

    /// Same process with a stable skewness.
    pub fn with_skew(mut self, skew: f64) -> Result<Self> {
        self.skew = skew;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.family {
            Family::SymmetricStable { alpha } => {
                if !(*alpha > 0.0 && *alpha <= 2.0) {
                    return Err(Error::UnsupportedModel(format!(
                        "stability index must lie in (0, 2], got {alpha}"
                    )));
                }
            }
            Family::Brownian => {}
            Family::Custom { psi } => {
                if self.skew != 0.0 {
                    return Err(Error::UnsupportedModel(
                        "a tabulated exponent has no skew parameter".into(),
                    ));
                }
                if psi.head_exponent() <= 0.0 {
                    return Err(Error::UnsupportedModel(
                        "tabulated exponent must vanish at the origin (positive head exponent)"
                            .into(),
                    ));
                }
            }
        }
        if !(self.skew >= -1.0 && self.skew <= 1.0) {
            return Err(Error::UnsupportedModel(format!(
                "skewness must lie in [-1, 1], got {}",
                self.skew
            )));
        }
        if let Killing::Exponential { rate } = self.killing {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::UnsupportedModel(format!(
                    "killing rate must be positive, got {rate}"
                )));
            }
        }
        Ok(())
    }

    /// Stability index. Sampling-side code paths are stable-only, so a
    /// tabulated-exponent model must be rejected by the caller before
    /// this is reached.
    pub fn alpha(&self) -> f64 {
        match &self.family {
            Family::SymmetricStable { alpha } => *alpha,
            Family::Brownian => 2.0,
            Family::Custom { .. } => {
                panic!("tabulated-exponent models have no stability index")
            }
        }
    }

    /// Errors unless the model can be sampled exactly (stable families).
    pub fn require_samplable(&self) -> Result<f64> {
        self.validate()?;
        match &self.family {
            Family::Custom { .. } => Err(Error::UnsupportedModel(
                "tabulated exponents cannot be sampled; use a stable family".into(),
            )),
            _ => Ok(self.alpha()),
        }
    }

    /// Killing rate, if the model is exponentially killed.
    pub fn kill_rate(&self) -> Result<f64> {
        match self.killing {
            Killing::Exponential { rate } => Ok(rate),
            Killing::LebesgueProxy => Err(Error::Validation(
                "the Lebesgue mode has no single path law; use the rate schedule".into(),
            )),
        }
    }

    /// Characteristic exponent: E exp(i u X_t) = exp(-t psi(u)).
    /// Defined for symmetric models only.
    pub fn psi(&self, u: f64) -> Result<f64> {
        if self.skew != 0.0 {
            return Err(Error::UnsupportedModel(
                "the exponent of a skewed stable process is complex; only symmetric models \
                 expose psi"
                    .into(),
            ));
        }
        Ok(match &self.family {
            Family::SymmetricStable { alpha } => u.abs().powf(*alpha),
            Family::Brownian => u * u,
            Family::Custom { psi } => psi.eval(u.abs()),
        })
    }

    /// Upward and downward regularity exponents of the two-sided exit
    /// laws. Symmetry makes both equal to alpha / 2; see the module-level
    /// `positivity_params` for the skewed Monte Carlo estimate.
    pub fn positivity_params(&self) -> PositivityParams {
        assert!(self.skew == 0.0, "closed-form exponents exist only for symmetric models");
        let half = 0.5 * self.alpha();
        PositivityParams { gamma: half, delta: half }
    }

    /// True when the paths have finite total variation: stable with
    /// alpha < 1. A tabulated exponent is decided by its growth order at
    /// infinity (order below 1 integrates the small jumps), with refusal
    /// when the fitted order is too close to the boundary to call.
    pub fn bounded_variation(&self) -> Result<bool> {
        self.validate()?;
        match &self.family {
            Family::SymmetricStable { alpha } => Ok(*alpha < 1.0),
            Family::Brownian => Ok(false),
            Family::Custom { psi } => {
                let order = psi.tail_exponent();
                if (order - 1.0).abs() < 0.05 {
                    return Err(Error::TailEstimation(format!(
                        "tabulated exponent growth order {order:.3} is too close to 1 to \
                         decide path variation"
                    )));
                }
                Ok(order < 1.0)
            }
        }
    }

    /// One draw of X_1 by the exact trigonometric representation of a
    /// standard stable variate (symmetric form, plus the skewed extension
    /// in the S(alpha, beta; 1) convention).
    pub fn sample_standard<R: Rng>(&self, rng: &mut R) -> f64 {
        let alpha = self.alpha();
        let v = std::f64::consts::PI * (uniform_open(rng) - 0.5);
        if self.skew == 0.0 {
            if alpha == 1.0 {
                return v.tan();
            }
            let w = -uniform_open(rng).ln();
            if alpha == 2.0 {
                return 2.0 * w.sqrt() * v.sin();
            }
            let cv = v.cos();
            return ((alpha * v).sin() / cv.powf(1.0 / alpha))
                * ((((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha));
        }
        let beta = self.skew;
        let w = -uniform_open(rng).ln();
        if alpha == 1.0 {
            let half_pi = std::f64::consts::FRAC_PI_2;
            let a = half_pi + beta * v;
            return (a * v.tan() - beta * ((half_pi * w * v.cos()) / a).ln()) / half_pi;
        }
        let t = beta * (std::f64::consts::FRAC_PI_2 * alpha).tan();
        let b = t.atan() / alpha;
        let scale = (1.0 + t * t).powf(0.5 / alpha);
        scale * ((alpha * (v + b)).sin() / v.cos().powf(1.0 / alpha))
            * (((v - alpha * (v + b)).cos() / w).powf((1.0 - alpha) / alpha))
    }

    /// One increment over a step of length dt; stable scaling gives
    /// dt^(1/alpha) times a standard draw.
    pub fn sample_increment<R: Rng>(&self, dt: f64, rng: &mut R) -> f64 {
        dt.powf(1.0 / self.alpha()) * self.sample_standard(rng)
    }
}

/// Exponents (gamma, delta) of the two-sided exit laws: the probability of
/// leaving an interval upward is a regularized incomplete beta with these
/// shapes, and the post-minimum height law behaves like x^gamma at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositivityParams {
    pub gamma: f64,
    pub delta: f64,
}

impl PositivityParams {
    pub fn new(gamma: f64, delta: f64) -> Result<Self> {
        let p = PositivityParams { gamma, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0 && self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Domain(format!(
                "exit exponents must lie in (0, 1], got gamma={}, delta={}",
                self.gamma, self.delta
            )));
        }
        Ok(())
    }

    /// Stability index recovered from the exponent pair.
    pub fn alpha(&self) -> f64 {
        self.gamma + self.delta
    }
}

/// Positivity exponents of a stable model, with the standard error of the
/// estimate. Symmetric models are exact, gamma = delta = alpha / 2, with
/// zero error. A skewed model is estimated from `n_mc` draws of X_1:
/// gamma = alpha P(X_1 > 0).
pub fn positivity_params(
    model: &LevyModel,
    n_mc: usize,
    seed: u64,
) -> Result<(PositivityParams, f64)> {
    let alpha = model.require_samplable()?;
    if model.skew == 0.0 {
        return Ok((model.positivity_params(), 0.0));
    }
    if n_mc == 0 {
        return Err(Error::InsufficientSampling(
            "the skewed positivity exponent needs a positive sample budget".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positive = 0usize;
    for _ in 0..n_mc {
        if model.sample_standard(&mut rng) > 0.0 {
            positive += 1;
        }
    }
    let p = positive as f64 / n_mc as f64;
    let se = alpha * (p * (1.0 - p) / n_mc as f64).sqrt();
    let params = PositivityParams { gamma: alpha * p, delta: alpha * (1.0 - p) };
    params.validate()?;
    Ok((params, se))
}
