//! Spot-model parameter sets, seasonal levels and analytic moments.
//!
//! Two families are supported:
//!
//! * the two-factor mean-reverting model with jumps. Electricity is arithmetic,
//!   `S_e = L_e(t) + X_e + Y_e`; gas is geometric, `ln S_g = ln L_g(t) + X_g + Y_g`.
//!   `X` is an Ornstein-Uhlenbeck factor and `Y` a fast-reverting spike factor
//!   driven by a compound Poisson process with Gaussian jump sizes;
//! * Merton jump diffusion, `dS/S = (r - q - lambda kappa) dt + sigma dB + (e^J - 1) dN`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_nonnegative, ensure_positive, Error, Result};

/// Version tag embedded in every parameter, config and result file.
pub const SCHEMA_VERSION: &str = "sparkspread-params-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

/// Deterministic seasonal level `c0 + c1 t + sum_k a_k sin(2 pi t / P_k + phi_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeasonalFunction {
    pub c0: f64,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub harmonics: Vec<Harmonic>,
}

impl SeasonalFunction {
    pub fn constant(c0: f64) -> Self {
        Self {
            c0,
            c1: 0.0,
            harmonics: Vec::new(),
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        seasonal_eval(self, t)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        ensure_finite(&format!("{name}.c0"), self.c0)?;
        ensure_finite(&format!("{name}.c1"), self.c1)?;
        for (k, h) in self.harmonics.iter().enumerate() {
            ensure_finite(&format!("{name}.harmonics[{k}].amplitude"), h.amplitude)?;
            ensure_positive(&format!("{name}.harmonics[{k}].period"), h.period)?;
            ensure_finite(&format!("{name}.harmonics[{k}].phase"), h.phase)?;
        }
        Ok(())
    }

    /// Checks `eval(t) > 0` on `[0, horizon]`.
    ///
    /// A level-plus-trend lower bound settles most cases; otherwise the function
    /// is sampled at a resolution finer than the shortest harmonic period.
    pub fn validate_positive(&self, horizon: f64) -> Result<()> {
        ensure_nonnegative("horizon", horizon)?;
        let amplitude: f64 = self.harmonics.iter().map(|h| h.amplitude.abs()).sum();
        let trend_min = self.c0 + (self.c1 * horizon).min(0.0);
        if trend_min - amplitude > 0.0 {
            return Ok(());
        }
        let shortest = self
            .harmonics
            .iter()
            .map(|h| h.period)
            .fold(f64::INFINITY, f64::min);
        let per_period = 256.0;
        let mut n = if shortest.is_finite() {
            (horizon / shortest * per_period).ceil() as usize
        } else {
            1
        };
        n = n.clamp(1, 4_000_000);
        for i in 0..=n {
            let t = horizon * i as f64 / n as f64;
            let v = self.eval(t);
            if !(v > 0.0) {
                return Err(Error::NonPositiveLevel { time: t, value: v });
            }
        }
        Ok(())
    }
}

/// Seasonal level at time `t`.
pub fn seasonal_eval(f: &SeasonalFunction, t: f64) -> f64 {
    let periodic: f64 = f
        .harmonics
        .iter()
        .map(|h| h.amplitude * (2.0 * PI * t / h.period + h.phase).sin())
        .sum();
    f.c0 + f.c1 * t + periodic
}

/// Parameters of one commodity under the two-factor mean-reverting jump model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoFactorJumpParams {
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
    pub eta: f64,
    pub jump_intensity: f64,
    pub jump_mean: f64,
    pub jump_sd: f64,
    pub seasonal: SeasonalFunction,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub y0: f64,
}

impl TwoFactorJumpParams {
    pub fn validate(&self, name: &str) -> Result<()> {
        let field = |f: &str| format!("{name}.{f}");
        ensure_positive(&field("alpha"), self.alpha)?;
        ensure_positive(&field("beta"), self.beta)?;
        if self.beta < self.alpha {
            return Err(Error::invalid(
                field("beta"),
                format!("spike reversion must be at least alpha ({}), got {}", self.alpha, self.beta),
            ));
        }
        ensure_nonnegative(&field("sigma"), self.sigma)?;
        ensure_nonnegative(&field("eta"), self.eta)?;
        ensure_nonnegative(&field("jump_intensity"), self.jump_intensity)?;
        ensure_finite(&field("jump_mean"), self.jump_mean)?;
        ensure_nonnegative(&field("jump_sd"), self.jump_sd)?;
        ensure_finite(&field("x0"), self.x0)?;
        ensure_finite(&field("y0"), self.y0)?;
        self.seasonal.validate(&field("seasonal"))
    }
}

/// Merton jump-diffusion parameters for one asset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MertonParams {
    pub s0: f64,
    pub r: f64,
    #[serde(default)]
    pub q: f64,
    pub sigma: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub m: f64,
    #[serde(default)]
    pub s: f64,
}

impl MertonParams {
    /// Pure geometric Brownian motion.
    pub fn gbm(s0: f64, r: f64, q: f64, sigma: f64) -> Self {
        Self {
            s0,
            r,
            q,
            sigma,
            lambda: 0.0,
            m: 0.0,
            s: 0.0,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let field = |f: &str| format!("{name}.{f}");
        ensure_positive(&field("s0"), self.s0)?;
        ensure_finite(&field("r"), self.r)?;
        ensure_finite(&field("q"), self.q)?;
        ensure_nonnegative(&field("sigma"), self.sigma)?;
        ensure_nonnegative(&field("lambda"), self.lambda)?;
        ensure_finite(&field("m"), self.m)?;
        ensure_nonnegative(&field("s"), self.s)?;
        if !self.kappa().is_finite() {
            return Err(Error::invalid(field("m"), "mean jump factor overflows"));
        }
        Ok(())
    }

    /// `E[e^J] - 1` for the Gaussian log-jump `J ~ N(m, s^2)`.
    #[inline]
    pub fn kappa(&self) -> f64 {
        merton_kappa(self)
    }

    /// Risk-neutral mean `E[S(T)] = s0 e^{(r - q) T}`.
    pub fn expected_spot(&self, horizon: f64) -> f64 {
        self.s0 * ((self.r - self.q) * horizon).exp()
    }
}

pub fn merton_kappa(params: &MertonParams) -> f64 {
    (params.m + 0.5 * params.s * params.s).exp_m1()
}

/// Conditional mean and variance of an Ornstein-Uhlenbeck factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Moments of `X(t)` for `dX = -alpha X dt + sigma dB`, `X(0) = x0`.
///
/// `t = f64::INFINITY` yields the stationary law `(0, sigma^2 / (2 alpha))`.
pub fn ou_moments(alpha: f64, sigma: f64, x0: f64, t: f64) -> Result<OuMoments> {
    ensure_positive("alpha", alpha)?;
    ensure_nonnegative("sigma", sigma)?;
    ensure_finite("x0", x0)?;
    if t.is_nan() || t < 0.0 {
        return Err(Error::invalid("t", format!("must be >= 0, got {t}")));
    }
    let decay = (-alpha * t).exp();
    // 1 - e^{-2 alpha t} via expm1 keeps precision for small t.
    let variance = sigma * sigma * -(-2.0 * alpha * t).exp_m1() / (2.0 * alpha);
    Ok(OuMoments {
        mean: x0 * decay,
        variance,
    })
}

/// How the option's forwards are formed from spot prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Settlement {
    /// Average of discounted daily spots over `[tau1, tau2]`.
    #[default]
    DeliveryAverage,
    /// Day-ahead settlement: forwards are the spot prices at maturity `tau`.
    DayAhead,
}

fn default_true() -> bool {
    true
}

/// Valuation contract for the plant's dispatch option
/// `e^{-r_f (tau - t)} E[(F_e - heat_rate F_g - cost)^+]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contract {
    pub t: f64,
    pub tau: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub heat_rate: f64,
    pub cost: f64,
    pub r_f: f64,
    pub grid_step: f64,
    #[serde(default)]
    pub settlement: Settlement,
    #[serde(default = "default_true")]
    pub discount_inside_average: bool,
}

impl Contract {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("contract.t", self.t),
            ("contract.tau", self.tau),
            ("contract.tau1", self.tau1),
            ("contract.tau2", self.tau2),
            ("contract.r_f", self.r_f),
        ] {
            ensure_finite(name, v)?;
        }
        if !(self.t < self.tau) {
            return Err(Error::invalid("contract.tau", "must satisfy t < tau"));
        }
        if !(self.tau <= self.tau1) {
            return Err(Error::invalid("contract.tau1", "must satisfy tau <= tau1"));
        }
        if !(self.tau1 < self.tau2) {
            return Err(Error::invalid("contract.tau1", "must satisfy tau1 < tau2"));
        }
        ensure_positive("contract.heat_rate", self.heat_rate)?;
        ensure_nonnegative("contract.cost", self.cost)?;
        ensure_positive("contract.grid_step", self.grid_step)?;
        self.delivery_steps().map(|_| ())
    }

    /// Number of grid steps spanning `[tau1, tau2]`.
    pub fn delivery_steps(&self) -> Result<usize> {
        let ratio = (self.tau2 - self.tau1) / self.grid_step;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::invalid(
                "contract.grid_step",
                format!("must divide tau2 - tau1 into a whole number of steps, got ratio {ratio}"),
            ));
        }
        Ok(n as usize)
    }

    /// Time to maturity `tau - t`.
    pub fn time_to_maturity(&self) -> f64 {
        self.tau - self.t
    }

    pub fn discount_factor(&self) -> f64 {
        (-self.r_f * self.time_to_maturity()).exp()
    }
}
