//! Closed-form prices and bounds.
//!
//! Spread legs are quoted as pre-paid forwards, i.e. present values of the
//! asset delivered at maturity. The strike is a cash amount paid at maturity and
//! is discounted inside the formulas.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_correlation, ensure_finite, ensure_nonnegative, ensure_positive, Error, Result};
use crate::models::{Contract, MertonParams};
use crate::numeric::{norm_cdf, CompensatedSum};

/// Black-Scholes call on pre-paid forwards: `fp_s Phi(d1) - fp_k Phi(d2)`.
pub fn bs_call_prepaid(fp_s: f64, fp_k: f64, sigma: f64, dt: f64) -> Result<f64> {
    ensure_positive("fp_s", fp_s)?;
    ensure_positive("fp_k", fp_k)?;
    ensure_nonnegative("sigma", sigma)?;
    ensure_positive("dt", dt)?;
    Ok(black_prepaid(fp_s, fp_k, sigma * dt.sqrt()))
}

// `total_vol` is sigma * sqrt(dt). At zero volatility the payoff is intrinsic,
// and an exact tie is worth nothing.
#[inline]
fn black_prepaid(fp_s: f64, fp_k: f64, total_vol: f64) -> f64 {
    if total_vol == 0.0 {
        let intrinsic = fp_s - fp_k;
        return if intrinsic > 0.0 { intrinsic } else { 0.0 };
    }
    let d1 = (fp_s / fp_k).ln() / total_vol + 0.5 * total_vol;
    let d2 = d1 - total_vol;
    (fp_s * norm_cdf(d1) - fp_k * norm_cdf(d2)).max(0.0)
}

/// Undiscounted Black call on forwards, used by the quadrature pricer.
#[inline]
pub(crate) fn black_forward(forward: f64, strike: f64, total_vol: f64) -> f64 {
    black_prepaid(forward, strike, total_vol)
}

/// Inputs of a two-asset spread call `(S1(T) - S2(T) - k)^+`.
///
/// `x1`, `x2` are pre-paid forwards of the long (electricity) and short
/// (heat-rate-scaled gas) legs; `k` is paid at maturity `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadInputs {
    pub x1: f64,
    pub x2: f64,
    pub k: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub dt: f64,
    pub r_f: f64,
}

impl SpreadInputs {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("x1", self.x1)?;
        ensure_positive("x2", self.x2)?;
        ensure_nonnegative("k", self.k)?;
        ensure_nonnegative("sigma1", self.sigma1)?;
        ensure_nonnegative("sigma2", self.sigma2)?;
        ensure_correlation("rho", self.rho)?;
        ensure_positive("dt", self.dt)?;
        ensure_finite("r_f", self.r_f)
    }

    /// Present value of the strike.
    pub fn discounted_strike(&self) -> f64 {
        self.k * (-self.r_f * self.dt).exp()
    }
}

// Exchange value x1 Phi(d1) - x2 Phi(d2) with total variance `variance * dt`.
#[inline]
fn exchange_value(x1: f64, x2: f64, variance: f64, dt: f64) -> f64 {
    black_prepaid(x1, x2, (variance.max(0.0) * dt).sqrt())
}

/// Kirk's approximation. The short leg plus discounted strike is treated as a
/// single lognormal asset with effective volatility
/// `sqrt(s1^2 - 2 rho s1 s2 w + s2^2 w^2)`, `w = x2 / (x2 + k e^{-r dt})`.
pub fn kirk_spread(inputs: &SpreadInputs) -> Result<f64> {
    inputs.validate()?;
    let SpreadInputs {
        x1,
        x2,
        sigma1,
        sigma2,
        rho,
        dt,
        ..
    } = *inputs;
    let short = x2 + inputs.discounted_strike();
    let w = x2 / short;
    let variance = sigma1 * sigma1 - 2.0 * rho * sigma1 * sigma2 * w + sigma2 * sigma2 * w * w;
    Ok(exchange_value(x1, short, variance, dt))
}

/// Margrabe's exchange option on pre-paid legs.
pub fn margrabe(x1: f64, x2: f64, sigma1: f64, sigma2: f64, rho: f64, dt: f64) -> Result<f64> {
    ensure_positive("x1", x1)?;
    ensure_positive("x2", x2)?;
    ensure_nonnegative("sigma1", sigma1)?;
    ensure_nonnegative("sigma2", sigma2)?;
    ensure_correlation("rho", rho)?;
    ensure_positive("dt", dt)?;
    // Same expression as Kirk's at w = 1 so the zero-strike case agrees bitwise.
    let w = 1.0;
    let variance = sigma1 * sigma1 - 2.0 * rho * sigma1 * sigma2 * w + sigma2 * sigma2 * w * w;
    Ok(exchange_value(x1, x2, variance, dt))
}

/// Model-free envelope for the zero-cost spread option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsResult {
    pub lower: f64,
    pub upper: f64,
    /// Set when the contract has a positive cost. The upper bound still holds
    /// but the lower bound no longer applies.
    pub cost_warning: bool,
}

/// `e^{-r_f (tau - t)} (F_e - r_g F_g)^+ <= V <= e^{-r_f (tau - t)} F_e`.
pub fn deng_bounds(f_e: f64, f_g: f64, contract: &Contract) -> Result<BoundsResult> {
    ensure_nonnegative("f_e", f_e)?;
    ensure_nonnegative("f_g", f_g)?;
    let disc = contract.discount_factor();
    let spread = f_e - contract.heat_rate * f_g;
    Ok(BoundsResult {
        lower: disc * spread.max(0.0),
        upper: disc * f_e,
        cost_warning: contract.cost > 0.0,
    })
}

/// Diagnostics of a truncated single-asset Merton series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MertonSeriesResult {
    pub price: f64,
    pub terms: usize,
    /// Upper bound on the Poisson weight mass left out of the sum.
    pub dropped_mass: f64,
}

/// Merton jump-diffusion call as a Poisson mixture of Black-Scholes prices.
///
/// Weights are `Poisson(lambda (1 + kappa) dt)`; term `n` uses
/// `sigma_n^2 = sigma^2 + n s^2 / dt` on the pre-paid forward `s0 e^{-q dt}`
/// against the pre-paid strike scaled by `e^{lambda kappa dt - n (m + s^2/2)}`.
pub fn merton_series_price(params: &MertonParams, strike: f64, dt: f64, tail_tol: f64) -> Result<f64> {
    merton_series_detail(params, strike, dt, tail_tol).map(|r| r.price)
}

pub fn merton_series_detail(params: &MertonParams, strike: f64, dt: f64, tail_tol: f64) -> Result<MertonSeriesResult> {
    params.validate("params")?;
    ensure_positive("strike", strike)?;
    ensure_positive("dt", dt)?;
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::invalid("tail_tol", format!("must lie in (0, 1), got {tail_tol}")));
    }
    let kappa = params.kappa();
    let gamma = params.m + 0.5 * params.s * params.s;
    let intensity = params.lambda * (1.0 + kappa) * dt;
    if intensity > 500.0 {
        return Err(Error::invalid("lambda", "expected jump count above 500 is not supported"));
    }
    let fp_s = params.s0 * (-params.q * dt).exp();
    let fp_k = strike * (-params.r * dt).exp();
    let compensator = params.lambda * kappa * dt;

    let mut price = CompensatedSum::new();
    let mut weight = (-intensity).exp();
    let mut n = 0u64;
    loop {
        let nf = n as f64;
        let sigma_n = (params.sigma * params.sigma + nf * params.s * params.s / dt).sqrt();
        let strike_n = fp_k * (compensator - nf * gamma).exp();
        let term = if strike_n > 0.0 && strike_n.is_finite() {
            black_prepaid(fp_s, strike_n, sigma_n * dt.sqrt())
        } else if strike_n == 0.0 {
            fp_s
        } else {
            0.0
        };
        price.add(weight * term);
        if intensity == 0.0 {
            return Ok(MertonSeriesResult {
                price: price.value(),
                terms: 1,
                dropped_mass: 0.0,
            });
        }
        // P(N > n) <= w_{n+1} / (1 - mu / (n + 2)) once n + 2 > mu.
        let next = weight * intensity / (nf + 1.0);
        if nf + 2.0 > intensity {
            let bound = next / (1.0 - intensity / (nf + 2.0));
            if bound < tail_tol {
                return Ok(MertonSeriesResult {
                    price: price.value(),
                    terms: n as usize + 1,
                    dropped_mass: bound,
                });
            }
        }
        weight = next;
        n += 1;
    }
}

/// Map applied to the gas forward in the linear electricity proxy `a F(x) + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Identity,
    Log,
}

impl MapKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            MapKind::Identity => x,
            MapKind::Log => x.ln(),
        }
    }
}

/// Effective single underlying `a F(gas_forward) + b - r_g gas_forward`.
pub fn linear_reduction_underlying(a: f64, b: f64, map_kind: MapKind, gas_forward: f64, heat_rate: f64) -> Result<f64> {
    ensure_finite("a", a)?;
    ensure_finite("b", b)?;
    ensure_positive("gas_forward", gas_forward)?;
    let s_hat = a * map_kind.apply(gas_forward) + b - heat_rate * gas_forward;
    if !(s_hat > 0.0) || !s_hat.is_finite() {
        return Err(Error::NonPositiveUnderlying(s_hat));
    }
    Ok(s_hat)
}

/// Spread option under a linear electricity-on-gas proxy.
///
/// Without jumps this is Black-Scholes on the pre-paid forwards
/// `S_hat e^{-r_f (tau - t)}` and `K e^{-r_f (tau - t)}` with the gas volatility.
/// With jumps the effective underlying inherits the gas jump law (`lambda`, `m`,
/// `s` of `jumps`) and is priced with [`merton_series_price`].
pub fn linear_reduction_price(
    a: f64,
    b: f64,
    map_kind: MapKind,
    gas_forward: f64,
    gas_sigma: f64,
    contract: &Contract,
    jumps: Option<&MertonParams>,
) -> Result<f64> {
    contract.validate()?;
    ensure_nonnegative("gas_sigma", gas_sigma)?;
    let s_hat = linear_reduction_underlying(a, b, map_kind, gas_forward, contract.heat_rate)?;
    let dt = contract.time_to_maturity();
    let disc = contract.discount_factor();
    if contract.cost == 0.0 {
        // Zero strike: the call is the asset.
        return Ok(s_hat * disc);
    }
    match jumps {
        None => bs_call_prepaid(s_hat * disc, contract.cost * disc, gas_sigma, dt),
        Some(j) => {
            // Forward-style underlying: zero drift under the pricing measure.
            let params = MertonParams {
                s0: s_hat,
                r: contract.r_f,
                q: contract.r_f,
                sigma: gas_sigma,
                lambda: j.lambda,
                m: j.m,
                s: j.s,
            };
            merton_series_price(&params, contract.cost, dt, 1e-14)
        }
    }
}
