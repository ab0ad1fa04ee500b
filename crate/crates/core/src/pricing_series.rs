//! Two-asset jump-mixture spread pricing.
//!
//! Conditional on the jump counts `(i, j)` of two independent Merton assets,
//! both terminal prices are lognormal. The spread call is then a Poisson
//! mixture of two-asset lognormal spread prices:
//!
//! ```text
//! V = sum_{i,j} e^{-(l1 + l2) T} (l1 T)^i (l2 T)^j / (i! j!) * p(x1~, x2~, s1~, s2~, rho~)
//! ```
//!
//! with conditional forwards `x~ = s0 e^{(r - q - l kappa) T + n (m + s^2/2)}`,
//! conditional volatilities `s~ = sqrt(sigma^2 + n s^2 / T)` and correlation
//! `rho~ = rho sigma_e sigma_g / (s1~ s2~)`. The inner price `p` is either
//! Kirk's approximation or the exact conditional quadrature.
//!
//! The controller sums whole anti-diagonals `i + j = d` and stops once the
//! change between diagonals and a certified bound on the remainder are both
//! small.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_correlation, ensure_finite, ensure_positive, Error, Result};
use crate::models::MertonParams;
use crate::numeric::{ln_factorial, poisson_tail, CompensatedSum, GaussHermite};
use crate::pricing_closed::{black_forward, kirk_spread, SpreadInputs};

/// Default Gauss-Hermite order of the inner quadrature.
pub const DEFAULT_NODES: usize = 64;

/// One `(i, j)` term of the jump mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub i: u64,
    pub j: u64,
    pub weight: f64,
    /// Conditional forward of each leg at `T`.
    pub x1_tilde: f64,
    pub x2_tilde: f64,
    pub sigma1_tilde: f64,
    pub sigma2_tilde: f64,
    pub rho_tilde: f64,
    pub term_price: f64,
}

fn poisson_log_weight(rate: f64, n: u64) -> f64 {
    if rate == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    n as f64 * rate.ln() - ln_factorial(n)
}

/// Adjusted parameters and Poisson weight of term `(i, j)`; `term_price` is left at zero.
pub fn term_transform(params_e: &MertonParams, params_g: &MertonParams, i: u64, j: u64, horizon: f64, rho: f64) -> SeriesTerm {
    let (le, lg) = (params_e.lambda * horizon, params_g.lambda * horizon);
    let weight = (-(le + lg) + poisson_log_weight(le, i) + poisson_log_weight(lg, j)).exp();
    let forward = |p: &MertonParams, n: u64| {
        let log_shift = (p.r - p.q - p.lambda * p.kappa()) * horizon + n as f64 * (p.m + 0.5 * p.s * p.s);
        p.s0 * log_shift.exp()
    };
    let vol = |p: &MertonParams, n: u64| (p.sigma * p.sigma + n as f64 * p.s * p.s / horizon).sqrt();
    let (s1, s2) = (vol(params_e, i), vol(params_g, j));
    let rho_tilde = if i == 0 && j == 0 {
        rho
    } else if s1 > 0.0 && s2 > 0.0 {
        rho * params_e.sigma * params_g.sigma / (s1 * s2)
    } else {
        0.0
    };
    SeriesTerm {
        i,
        j,
        weight,
        x1_tilde: forward(params_e, i),
        x2_tilde: forward(params_g, j),
        sigma1_tilde: s1,
        sigma2_tilde: s2,
        rho_tilde,
        term_price: 0.0,
    }
}

/// Exact spread price by conditioning on the short leg.
///
/// The inner integral over the long leg is a Black call given the short leg's
/// Gaussian driver; the outer integral uses Gauss-Hermite nodes.
#[derive(Debug, Clone)]
pub struct SpreadQuadrature {
    rule: GaussHermite,
}

impl SpreadQuadrature {
    pub fn new(n_nodes: usize) -> Result<Self> {
        Ok(Self {
            rule: GaussHermite::new(n_nodes)?,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.rule.len()
    }

    pub fn price(&self, inputs: &SpreadInputs) -> Result<f64> {
        inputs.validate()?;
        let SpreadInputs {
            x1,
            x2,
            k,
            sigma1,
            sigma2,
            dt,
            r_f,
            ..
        } = *inputs;
        // A deterministic short leg carries no correlation.
        let rho = if sigma2 == 0.0 { 0.0 } else { inputs.rho };
        let disc = (-r_f * dt).exp();
        let (f1, f2) = (x1 / disc, x2 / disc);
        let sqrt_dt = dt.sqrt();
        let v1 = sigma1 * sqrt_dt;
        let v2 = sigma2 * sqrt_dt;
        let cond_vol = v1 * (1.0 - rho * rho).max(0.0).sqrt();
        let cond_drift = -0.5 * rho * rho * v1 * v1;
        let inner = self.rule.expect(|z| {
            let short = f2 * (-0.5 * v2 * v2 + v2 * z).exp() + k;
            let long = f1 * (cond_drift + rho * v1 * z).exp();
            black_forward(long, short, cond_vol)
        });
        let price = disc * inner;
        if !price.is_finite() {
            return Err(Error::NonFinite("spread_price_quadrature"));
        }
        Ok(price.max(0.0))
    }
}

/// `e^{-r dt} E[(S1 - S2 - k)^+]` for correlated lognormal legs with pre-paid forwards `x1`, `x2`.
pub fn spread_price_quadrature(inputs: &SpreadInputs, n_nodes: usize) -> Result<f64> {
    SpreadQuadrature::new(n_nodes)?.price(inputs)
}

/// Pricer applied to each conditional term.
#[derive(Debug, Clone)]
pub enum InnerPricer {
    Kirk,
    Quadrature(SpreadQuadrature),
}

impl InnerPricer {
    pub fn quadrature(n_nodes: usize) -> Result<Self> {
        Ok(InnerPricer::Quadrature(SpreadQuadrature::new(n_nodes)?))
    }

    pub fn name(&self) -> &'static str {
        match self {
            InnerPricer::Kirk => "kirk",
            InnerPricer::Quadrature(_) => "quadrature",
        }
    }

    pub fn price(&self, inputs: &SpreadInputs) -> Result<f64> {
        match self {
            InnerPricer::Kirk => kirk_spread(inputs),
            InnerPricer::Quadrature(q) => q.price(inputs),
        }
    }
}

/// Stopping rule for the diagonal expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationPolicy {
    /// Stop once successive partial sums differ by at most this much.
    pub stop_tol: f64,
    /// Last diagonal that may be evaluated.
    pub max_diagonal: usize,
    /// Required bound on the price mass left out of the sum.
    pub tail_tol: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            stop_tol: 1e-6,
            max_diagonal: 200,
            tail_tol: 1e-8,
        }
    }
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("truncation.stop_tol", self.stop_tol)?;
        ensure_positive("truncation.tail_tol", self.tail_tol)?;
        if self.max_diagonal < 1 {
            return Err(Error::invalid("truncation.max_diagonal", "must be >= 1"));
        }
        Ok(())
    }
}

/// Builds a validated [`TruncationPolicy`].
pub fn adaptive_truncation(stop_tol: f64, max_diagonal: usize, tail_tol: f64) -> Result<TruncationPolicy> {
    let policy = TruncationPolicy {
        stop_tol,
        max_diagonal,
        tail_tol,
    };
    policy.validate()?;
    Ok(policy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub terms_evaluated: usize,
    /// Index `d` of the last anti-diagonal `i + j = d` included.
    pub final_diagonal: usize,
    /// `|V_d - V_{d-1}|` for each diagonal, with `V_{-1} = 0`.
    pub error_sequence: Vec<f64>,
    /// Poisson weight mass beyond the final diagonal.
    pub tail_mass_bound: f64,
    /// Upper bound on the price contribution of all omitted terms.
    pub tail_price_bound: f64,
    /// Largest inner price seen.
    pub max_term_price: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesOutcome {
    pub price: f64,
    pub inner: String,
    pub report: ConvergenceReport,
}

/// Two-asset jump-mixture spread price.
///
/// Legs are the terminal spots of `params_e` (long) and `params_g` (short);
/// scale the gas `s0` by the heat rate beforehand. Returns
/// [`Error::NotConverged`] with the partial sum when the policy budget runs out.
#[allow(clippy::too_many_arguments)]
pub fn jump_series_price(
    params_e: &MertonParams,
    params_g: &MertonParams,
    rho: f64,
    k: f64,
    horizon: f64,
    r_f: f64,
    inner: &InnerPricer,
    policy: &TruncationPolicy,
) -> Result<SeriesOutcome> {
    params_e.validate("electricity")?;
    params_g.validate("gas")?;
    ensure_correlation("rho", rho)?;
    ensure_positive("T", horizon)?;
    ensure_finite("r_f", r_f)?;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::invalid("k", "must be finite and >= 0"));
    }
    policy.validate()?;

    let disc = (-r_f * horizon).exp();
    let (le, lg) = (params_e.lambda * horizon, params_g.lambda * horizon);
    // A spread call is worth at most its long leg; summing that cap over the
    // omitted terms tilts the electricity count to Poisson(l_e (1 + kappa_e) T).
    let long_leg = params_e.s0 * ((params_e.r - params_e.q) * horizon).exp() * disc;
    let tilted = le * (1.0 + params_e.kappa()) + lg;

    let term_at = |i: u64, j: u64| -> Result<SeriesTerm> {
        let mut term = term_transform(params_e, params_g, i, j, horizon, rho);
        let spread = SpreadInputs {
            x1: term.x1_tilde * disc,
            x2: term.x2_tilde * disc,
            k,
            sigma1: term.sigma1_tilde,
            sigma2: term.sigma2_tilde,
            rho: term.rho_tilde,
            dt: horizon,
            r_f,
        };
        term.term_price = inner.price(&spread)?;
        Ok(term)
    };

    let mut total = CompensatedSum::new();
    let mut errors = Vec::new();
    let mut terms = 0usize;
    let mut max_price = 0.0f64;
    let mut d = 0usize;
    loop {
        let indices: Vec<(u64, u64)> = (0..=d as u64)
            .map(|i| (i, d as u64 - i))
            .filter(|&(i, j)| (i == 0 || le > 0.0) && (j == 0 || lg > 0.0))
            .collect();
        // Fixed reduction order keeps the sum independent of the thread count.
        let diagonal: Vec<SeriesTerm> = indices
            .par_iter()
            .map(|&(i, j)| term_at(i, j))
            .collect::<Result<_>>()?;
        let mut diag_sum = CompensatedSum::new();
        for t in &diagonal {
            max_price = max_price.max(t.term_price);
            diag_sum.add(t.weight * t.term_price);
        }
        terms += diagonal.len();
        total.add(diag_sum.value());
        errors.push(diag_sum.value().abs());

        let tail_mass = poisson_tail(le + lg, d as u64);
        let tail_price = long_leg * poisson_tail(tilted, d as u64);
        let exhausted = tail_mass == 0.0;
        let stable = d >= 1 && diag_sum.value().abs() <= policy.stop_tol;
        let converged = exhausted || (stable && tail_price <= policy.tail_tol);
        if converged || d >= policy.max_diagonal {
            let price = total.value();
            if !price.is_finite() {
                return Err(Error::NonFinite("jump_series_price"));
            }
            let outcome = SeriesOutcome {
                price,
                inner: inner.name().to_string(),
                report: ConvergenceReport {
                    terms_evaluated: terms,
                    final_diagonal: d,
                    error_sequence: errors,
                    tail_mass_bound: tail_mass,
                    tail_price_bound: tail_price,
                    max_term_price: max_price,
                    converged,
                },
            };
            return if converged {
                Ok(outcome)
            } else {
                Err(Error::NotConverged(Box::new(outcome)))
            };
        }
        d += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing_closed::{bs_call_prepaid, merton_series_price};

    fn merton(s0: f64, sigma: f64, lambda: f64, m: f64, s: f64) -> MertonParams {
        MertonParams {
            s0,
            r: 0.05,
            q: 0.0,
            sigma,
            lambda,
            m,
            s,
        }
    }

    fn spread(x1: f64, x2: f64, k: f64, s1: f64, s2: f64, rho: f64, dt: f64, r_f: f64) -> SpreadInputs {
        SpreadInputs {
            x1,
            x2,
            k,
            sigma1: s1,
            sigma2: s2,
            rho,
            dt,
            r_f,
        }
    }

    #[test]
    fn no_jump_term() {
        let e = merton(100.0, 0.3, 0.0, 0.1, 0.2);
        let g = merton(90.0, 0.2, 0.0, 0.1, 0.2);
        let t = term_transform(&e, &g, 0, 0, 1.0, 0.4);
        assert_eq!(t.weight, 1.0);
        assert!((t.x1_tilde - 100.0 * 0.05f64.exp()).abs() < 1e-12);
        assert_eq!((t.sigma1_tilde, t.sigma2_tilde, t.rho_tilde), (0.3, 0.2, 0.4));
    }

    #[test]
    fn deterministic_jump_shifts_forward() {
        let e = merton(100.0, 0.3, 0.8, 0.1, 0.0);
        let g = merton(90.0, 0.2, 0.4, -0.1, 0.2);
        let t0 = term_transform(&e, &g, 0, 0, 1.0, 0.4);
        let t1 = term_transform(&e, &g, 1, 0, 1.0, 0.4);
        assert_eq!(t1.sigma1_tilde, 0.3);
        assert!((t1.x1_tilde / t0.x1_tilde - 0.1f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn mixture_mean_matches_merton_mean() {
        let e = merton(100.0, 0.3, 0.8, 0.1, 0.15);
        let g = merton(90.0, 0.2, 0.4, -0.1, 0.2);
        let horizon = 1.3;
        let mut mean = CompensatedSum::new();
        let mut mass = CompensatedSum::new();
        for i in 0..=40 {
            for j in 0..=40 {
                let t = term_transform(&e, &g, i, j, horizon, 0.3);
                mean.add(t.weight * t.x1_tilde);
                mass.add(t.weight);
            }
        }
        let exact = e.expected_spot(horizon);
        assert!(((mean.value() - exact) / exact).abs() < 1e-8);
        assert!(mass.value() <= 1.0 + 1e-15);
    }

    #[test]
    fn quadrature_deterministic_short_leg_is_black_scholes() {
        let inp = spread(100.0, 90.0, 5.0, 0.3, 0.0, 0.4, 1.0, 0.05);
        let q = spread_price_quadrature(&inp, 64).unwrap();
        let bs = bs_call_prepaid(100.0, 90.0 + inp.discounted_strike(), 0.3, 1.0).unwrap();
        assert!((q - bs).abs() < 1e-10, "{q} vs {bs}");
    }

    #[test]
    fn quadrature_deep_out_of_the_money() {
        let inp = spread(100.0, 90.0, 1e8, 0.3, 0.2, 0.4, 1.0, 0.05);
        assert!(spread_price_quadrature(&inp, 64).unwrap() < 1e-8);
    }

    #[test]
    fn quadrature_matches_high_precision_reference() {
        // Bivariate lognormal double integral evaluated at 20 digits.
        let inp = spread(100.0, 90.0, 5.0, 0.3, 0.2, 0.4, 1.0, 0.05);
        let q = spread_price_quadrature(&inp, 64).unwrap();
        assert!((q - 13.803_162_183_881_293).abs() < 1e-9, "{q}");
        let k = kirk_spread(&inp).unwrap();
        assert!(((k - q) / q).abs() < 0.005);
        // Zero strike reproduces the exchange option.
        let ex = spread(100.0, 95.0, 0.0, 0.25, 0.15, 0.3, 0.5, 0.0);
        let q = spread_price_quadrature(&ex, 64).unwrap();
        assert!((q - 9.653_359_842_157_863).abs() < 1e-9);
    }

    #[test]
    fn quadrature_rejects_small_rules() {
        let inp = spread(100.0, 90.0, 5.0, 0.3, 0.2, 0.4, 1.0, 0.05);
        assert!(spread_price_quadrature(&inp, 4).is_err());
    }

    #[test]
    fn zero_intensity_series_is_single_term() {
        let e = merton(100.0, 0.3, 0.0, 0.1, 0.15);
        let g = merton(90.0, 0.2, 0.0, -0.1, 0.2);
        let policy = TruncationPolicy::default();
        for inner in [InnerPricer::Kirk, InnerPricer::quadrature(64).unwrap()] {
            let out = jump_series_price(&e, &g, 0.3, 5.0, 1.0, 0.05, &inner, &policy).unwrap();
            let disc = (-0.05f64).exp();
            let direct = inner
                .price(&spread(100.0 * 0.05f64.exp() * disc, 90.0 * 0.05f64.exp() * disc, 5.0, 0.3, 0.2, 0.3, 1.0, 0.05))
                .unwrap();
            assert_eq!(out.price, direct);
            assert!(out.report.converged);
            assert_eq!(out.report.final_diagonal, 0);
            assert_eq!(out.report.terms_evaluated, 1);
        }
    }

    #[test]
    fn degenerate_jumps_reduce_to_diffusion() {
        let base_e = merton(100.0, 0.3, 0.0, 0.0, 0.0);
        let base_g = merton(90.0, 0.2, 0.0, 0.0, 0.0);
        let policy = adaptive_truncation(1e-13, 200, 1e-13).unwrap();
        let inner = InnerPricer::quadrature(64).unwrap();
        let v0 = jump_series_price(&base_e, &base_g, 0.3, 5.0, 1.0, 0.05, &inner, &policy).unwrap();
        let e = MertonParams { lambda: 0.8, ..base_e };
        let g = MertonParams { lambda: 0.4, ..base_g };
        let v = jump_series_price(&e, &g, 0.3, 5.0, 1.0, 0.05, &inner, &policy).unwrap();
        assert!((v.price - v0.price).abs() < 1e-10, "{} vs {}", v.price, v0.price);
    }

    #[test]
    fn rho_tilde_shrinks() {
        let e = merton(100.0, 0.3, 0.8, 0.1, 0.15);
        let g = merton(90.0, 0.2, 0.4, -0.1, 0.2);
        for i in 0..6 {
            for j in 0..6 {
                let t = term_transform(&e, &g, i, j, 1.0, -0.7);
                if i == 0 && j == 0 {
                    assert_eq!(t.rho_tilde, -0.7);
                } else {
                    assert!(t.rho_tilde.abs() < 0.7);
                }
                assert!(t.sigma1_tilde >= 0.3 && t.sigma2_tilde >= 0.2);
                assert!(t.weight > 0.0 && t.weight <= 1.0);
            }
        }
    }

    #[test]
    fn single_jumping_leg_matches_merton_series() {
        // Deterministic gas leg folds into the strike.
        let e = merton(100.0, 0.25, 0.9, -0.05, 0.2);
        let g = merton(60.0, 0.0, 0.0, 0.0, 0.0);
        let (k, horizon) = (8.0, 0.75);
        let policy = adaptive_truncation(1e-14, 400, 1e-14).unwrap();
        let strike = g.expected_spot(horizon) + k;
        let reference = merton_series_price(&e, strike, horizon, 1e-15).unwrap();
        for inner in [InnerPricer::Kirk, InnerPricer::quadrature(64).unwrap()] {
            let v = jump_series_price(&e, &g, 0.5, k, horizon, e.r, &inner, &policy).unwrap();
            assert!((v.price - reference).abs() < 1e-8, "{}: {} vs {reference}", inner.name(), v.price);
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let e = merton(100.0, 0.3, 5.0, 0.1, 0.15);
        let g = merton(90.0, 0.2, 5.0, -0.1, 0.2);
        let policy = adaptive_truncation(1e-12, 2, 1e-12).unwrap();
        match jump_series_price(&e, &g, 0.3, 5.0, 1.0, 0.05, &InnerPricer::Kirk, &policy) {
            Err(Error::NotConverged(out)) => {
                assert!(!out.report.converged);
                assert_eq!(out.report.final_diagonal, 2);
                assert!(out.report.tail_price_bound > 1e-12);
                assert!(out.price > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn policy_validation() {
        assert!(adaptive_truncation(0.0, 10, 1e-8).is_err());
        assert!(adaptive_truncation(1e-6, 0, 1e-8).is_err());
        assert!(adaptive_truncation(1e-6, 1, 1e-8).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn term_order_does_not_matter(seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let e = merton(100.0, 0.3, 0.8, 0.1, 0.15);
                let g = merton(90.0, 0.2, 0.6, -0.1, 0.2);
                let disc = (-0.05f64).exp();
                let mut values: Vec<f64> = (0..15u64)
                    .flat_map(|i| (0..15u64).map(move |j| (i, j)))
                    .map(|(i, j)| {
                        let t = term_transform(&e, &g, i, j, 1.0, 0.3);
                        let p = kirk_spread(&spread(t.x1_tilde * disc, t.x2_tilde * disc, 5.0,
                            t.sigma1_tilde, t.sigma2_tilde, t.rho_tilde, 1.0, 0.05)).unwrap();
                        t.weight * p
                    })
                    .collect();
                let a = crate::numeric::compensated_sum(values.iter().copied());
                values.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let b = crate::numeric::compensated_sum(values.iter().copied());
                prop_assert!((a - b).abs() < 1e-12);
            }

            #[test]
            fn quadrature_between_bounds(
                x1 in 20.0f64..200.0, x2 in 20.0f64..200.0, k in 0.0f64..30.0,
                s1 in 0.05f64..0.6, s2 in 0.05f64..0.6, rho in -0.9f64..0.9, dt in 0.1f64..2.0,
            ) {
                let inp = spread(x1, x2, k, s1, s2, rho, dt, 0.02);
                let q = spread_price_quadrature(&inp, 64).unwrap();
                prop_assert!(q >= (x1 - x2 - inp.discounted_strike()).max(0.0) - 1e-8 * x1);
                prop_assert!(q <= x1 * (1.0 + 1e-10));
            }
        }
    }
}
