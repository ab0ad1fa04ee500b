//! Method dispatch for a validated [`RunConfig`].

use serde::{Deserialize, Serialize};

use crate::config::{InnerKind, Method, RunConfig};
use crate::error::{Error, Result};
use crate::mc_oracle::{expected_forwards, mc_spark_spread, simulation_grid, MCResult, ModelConfig};
use crate::models::MertonParams;
use crate::pricing_closed::{
    bs_call_prepaid, deng_bounds, kirk_spread, linear_reduction_price, margrabe, merton_series_detail,
    BoundsResult, MertonSeriesResult, SpreadInputs,
};
use crate::pricing_series::{jump_series_price, ConvergenceReport, InnerPricer};
use crate::simulate::{simulate_pairs, MertonSimulator, PathSet, TwoFactorSimulator};

pub const RESULT_SCHEMA: &str = "sparkspread-result-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceResult {
    pub schema: String,
    pub method: String,
    pub model: String,
    pub price: f64,
    pub bounds: BoundsResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merton_series: Option<MertonSeriesResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<MCResult>,
    pub seed: u64,
}

impl PriceResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let mut line = format!(
            "{} {}: price {:.6} bounds [{:.6}, {:.6}]",
            self.model, self.method, self.price, self.bounds.lower, self.bounds.upper
        );
        if let Some(r) = &self.convergence {
            line.push_str(&format!(
                " diagonals {} tail {:.1e}",
                r.final_diagonal + 1,
                r.tail_price_bound
            ));
        }
        if let Some(mc) = &self.mc {
            line.push_str(&format!(" se {:.6} paths {}", mc.std_error, mc.n_paths));
        }
        line
    }
}

/// Merton legs with the gas spot scaled by the heat rate.
fn merton_legs(config: &RunConfig) -> Result<(&MertonParams, MertonParams, f64)> {
    match &config.model {
        ModelConfig::Merton { electricity, gas, rho } => {
            let scaled = MertonParams {
                s0: gas.s0 * config.contract.heat_rate,
                ..*gas
            };
            Ok((electricity, scaled, *rho))
        }
        ModelConfig::TwoFactor { .. } => Err(Error::invalid("model.family", "analytic methods need the merton family")),
    }
}

/// Prices the configured contract with the configured method.
pub fn price(config: &RunConfig) -> Result<PriceResult> {
    config.validate()?;
    let contract = &config.contract;
    let (f_e, f_g) = expected_forwards(&config.model, contract)?;
    let bounds = deng_bounds(f_e, f_g, contract)?;
    let mut result = PriceResult {
        schema: RESULT_SCHEMA.into(),
        method: config.method.name().into(),
        model: config.model.tag().into(),
        price: f64::NAN,
        bounds,
        inner: None,
        convergence: None,
        merton_series: None,
        mc: None,
        seed: config.seed,
    };
    if let Method::Mc { n_paths } = config.method {
        let mc = mc_spark_spread(&config.model, contract, n_paths, config.seed)?;
        result.price = mc.estimate;
        result.mc = Some(mc);
        return Ok(result);
    }

    let dt = contract.time_to_maturity();
    let disc = contract.discount_factor();
    let (e, g, rho) = merton_legs(config)?;
    let x1 = e.expected_spot(dt) * disc;
    let x2 = g.expected_spot(dt) * disc;
    let spread = SpreadInputs {
        x1,
        x2,
        k: contract.cost,
        sigma1: e.sigma,
        sigma2: g.sigma,
        rho,
        dt,
        r_f: contract.r_f,
    };
    result.price = match &config.method {
        Method::Kirk => kirk_spread(&spread)?,
        Method::Margrabe => margrabe(x1, x2, e.sigma, g.sigma, rho, dt)?,
        Method::Bs => bs_call_prepaid(x1, x2 + contract.cost * disc, e.sigma, dt)?,
        Method::MertonSeries { tail_tol } => {
            // Forward-style electricity leg against a fixed strike.
            let forward = MertonParams {
                s0: e.expected_spot(dt),
                r: contract.r_f,
                q: contract.r_f,
                ..*e
            };
            let strike = g.expected_spot(dt) + contract.cost;
            let detail = merton_series_detail(&forward, strike, dt, *tail_tol)?;
            result.merton_series = Some(detail);
            detail.price
        }
        Method::LinearReduction { a, b, map } => {
            let ModelConfig::Merton { gas, .. } = &config.model else {
                unreachable!("checked by merton_legs")
            };
            let jumps = (gas.lambda > 0.0).then_some(gas);
            linear_reduction_price(*a, *b, *map, gas.expected_spot(dt), gas.sigma, contract, jumps)?
        }
        Method::Series {
            inner,
            truncation,
            nodes,
        } => {
            let pricer = match inner {
                InnerKind::Kirk => InnerPricer::Kirk,
                InnerKind::Quadrature => InnerPricer::quadrature(*nodes)?,
            };
            let outcome = jump_series_price(e, &g, rho, contract.cost, dt, contract.r_f, &pricer, truncation)?;
            result.inner = Some(outcome.inner);
            result.convergence = Some(outcome.report);
            outcome.price
        }
        Method::Mc { .. } => unreachable!("handled above"),
    };
    Ok(result)
}

/// Simulates the configured model on the contract's grid.
pub fn simulate(config: &RunConfig) -> Result<(PathSet, PathSet)> {
    config.validate()?;
    let n_paths = config
        .simulation
        .as_ref()
        .ok_or_else(|| Error::invalid("simulation", "section required for simulate"))?
        .n_paths;
    let (grid, _) = simulation_grid(&config.contract)?;
    match &config.model {
        ModelConfig::TwoFactor { electricity, gas, rho } => {
            let sim = TwoFactorSimulator::new(electricity, gas, *rho, grid, config.seed)?;
            simulate_pairs(&sim, n_paths)
        }
        ModelConfig::Merton { electricity, gas, rho } => {
            let sim = MertonSimulator::new(electricity, gas, *rho, grid, config.seed)?;
            simulate_pairs(&sim, n_paths)
        }
    }
}
