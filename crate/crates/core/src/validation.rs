//! Oracle suites behind `sparkspread validate`.
//!
//! Every check is an interval test `lower <= value <= upper`, so reports share
//! one row layout in JSON and CSV.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc_oracle::{
    bound_containment_sweep_with, check_containment, deterministic_fixture, mc_spark_spread, ModelConfig, SWEEP_PATHS,
};
use crate::models::{Contract, MertonParams, Settlement};
use crate::numeric::CompensatedSum;
use crate::pricing_closed::{kirk_spread, merton_series_price, SpreadInputs};
use crate::pricing_series::{
    adaptive_truncation, jump_series_price, spread_price_quadrature, term_transform, InnerPricer, DEFAULT_NODES,
};

pub const REPORT_SCHEMA: &str = "sparkspread-validation-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Bounds,
    Oracle,
    Convergence,
    All,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Bounds => "bounds",
            Suite::Oracle => "oracle",
            Suite::Convergence => "convergence",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bounds" => Ok(Suite::Bounds),
            "oracle" => Ok(Suite::Oracle),
            "convergence" => Ok(Suite::Convergence),
            "all" => Ok(Suite::All),
            other => Err(Error::invalid(
                "suite",
                format!("unknown suite {other:?}; expected bounds, oracle, convergence or all"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateOptions {
    pub seed: u64,
    pub bounds_cases: usize,
    pub bounds_paths: usize,
    pub oracle_paths: usize,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            seed: 2024,
            bounds_cases: 200,
            bounds_paths: SWEEP_PATHS,
            oracle_paths: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

impl Check {
    fn new(suite: Suite, name: impl Into<String>, value: f64, lower: f64, upper: f64) -> Self {
        Self {
            suite: suite.as_str().into(),
            name: name.into(),
            value,
            lower,
            upper,
            pass: value >= lower && value <= upper,
        }
    }

    fn within(suite: Suite, name: impl Into<String>, value: f64, reference: f64, tol: f64) -> Self {
        Self::new(suite, name, value, reference - tol, reference + tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema: String,
    pub suite: Suite,
    pub options: ValidateOptions,
    pub checks: Vec<Check>,
    pub n_pass: usize,
    pub all_pass: bool,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.checks {
            w.serialize(c).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

pub fn run_suite(suite: Suite, options: &ValidateOptions) -> Result<ValidationReport> {
    let checks = match suite {
        Suite::Bounds => bounds_suite(options)?,
        Suite::Oracle => oracle_suite(options)?,
        Suite::Convergence => convergence_suite()?,
        Suite::All => {
            let mut all = bounds_suite(options)?;
            all.extend(oracle_suite(options)?);
            all.extend(convergence_suite()?);
            all
        }
    };
    let n_pass = checks.iter().filter(|c| c.pass).count();
    Ok(ValidationReport {
        schema: REPORT_SCHEMA.into(),
        suite,
        options: options.clone(),
        all_pass: n_pass == checks.len(),
        n_pass,
        checks,
    })
}

fn bounds_suite(options: &ValidateOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::with_capacity(options.bounds_cases + 1);
    let (model, contract) = deterministic_fixture();
    let c = check_containment(0, &model, &contract, 1000, options.seed)?;
    let slack = 3.0 * c.std_error;
    checks.push(Check::new(
        Suite::Bounds,
        "deterministic_fixture",
        c.estimate,
        c.lower - slack,
        c.upper + slack,
    ));
    if options.bounds_cases > 0 {
        let sweep = bound_containment_sweep_with(options.bounds_cases, options.seed, options.bounds_paths)?;
        for c in sweep.cases {
            let slack = 3.0 * c.std_error;
            checks.push(Check::new(
                Suite::Bounds,
                format!("sweep_{:03}_{}", c.case, c.family),
                c.estimate,
                c.lower - slack,
                c.upper + slack,
            ));
        }
    }
    Ok(checks)
}

fn terminal_contract(dt: f64, r_f: f64, heat_rate: f64, cost: f64) -> Contract {
    Contract {
        t: 0.0,
        tau: dt,
        tau1: dt,
        tau2: dt + 1.0 / 365.0,
        heat_rate,
        cost,
        r_f,
        grid_step: 1.0 / 365.0,
        settlement: Settlement::DayAhead,
        discount_inside_average: true,
    }
}

/// Leg whose pre-paid forward over `dt` is `prepaid` when `r = r_f`, `q = 0`.
fn leg(prepaid: f64, r_f: f64, sigma: f64, lambda: f64, m: f64, s: f64) -> MertonParams {
    MertonParams {
        s0: prepaid,
        r: r_f,
        q: 0.0,
        sigma,
        lambda,
        m,
        s,
    }
}

fn oracle_suite(options: &ValidateOptions) -> Result<Vec<Check>> {
    let suite = Suite::Oracle;
    let n = options.oracle_paths;
    let seed = options.seed;
    let mut checks = Vec::new();

    // Bivariate lognormal spread: quadrature and Kirk against terminal draws.
    let spread = SpreadInputs {
        x1: 100.0,
        x2: 90.0,
        k: 5.0,
        sigma1: 0.3,
        sigma2: 0.2,
        rho: 0.4,
        dt: 1.0,
        r_f: 0.05,
    };
    let quad = spread_price_quadrature(&spread, DEFAULT_NODES)?;
    let kirk = kirk_spread(&spread)?;
    let model = ModelConfig::Merton {
        electricity: leg(100.0, 0.05, 0.3, 0.0, 0.0, 0.0),
        gas: leg(90.0, 0.05, 0.2, 0.0, 0.0, 0.0),
        rho: 0.4,
    };
    let mc = mc_spark_spread(&model, &terminal_contract(1.0, 0.05, 1.0, 5.0), n, seed)?;
    checks.push(Check::within(suite, "quadrature_vs_mc", quad, mc.estimate, 3.0 * mc.std_error));
    checks.push(Check::within(suite, "kirk_vs_quadrature", kirk, quad, 0.005 * quad));

    // Single-asset Merton series against a fixed strike.
    let e = leg(100.0, 0.05, 0.2, 0.5, -0.1, 0.15);
    let merton = merton_series_price(&e, 100.0, 1.0, 1e-12)?;
    let model = ModelConfig::Merton {
        electricity: e,
        gas: MertonParams::gbm(100.0, 0.0, 0.0, 0.0),
        rho: 0.0,
    };
    let mc = mc_spark_spread(&model, &terminal_contract(1.0, 0.05, 1.0, 0.0), n, seed.wrapping_add(1))?;
    checks.push(Check::within(suite, "merton_series_vs_mc", merton, mc.estimate, 3.0 * mc.std_error));

    // Two-asset jump mixture with both inner pricers.
    let e = leg(100.0, 0.05, 0.3, 0.8, 0.1, 0.15);
    let g = leg(90.0, 0.05, 0.2, 0.4, -0.1, 0.2);
    let policy = adaptive_truncation(1e-6, 200, 1e-8)?;
    let quad = jump_series_price(&e, &g, 0.3, 5.0, 1.0, 0.05, &InnerPricer::quadrature(DEFAULT_NODES)?, &policy)?;
    let kirk = jump_series_price(&e, &g, 0.3, 5.0, 1.0, 0.05, &InnerPricer::Kirk, &policy)?;
    let model = ModelConfig::Merton {
        electricity: e,
        gas: g,
        rho: 0.3,
    };
    let mc = mc_spark_spread(&model, &terminal_contract(1.0, 0.05, 1.0, 5.0), n, seed.wrapping_add(2))?;
    let se3 = 3.0 * mc.std_error;
    checks.push(Check::within(suite, "series_quadrature_vs_mc", quad.price, mc.estimate, se3));
    checks.push(Check::within(
        suite,
        "series_kirk_vs_mc",
        kirk.price,
        mc.estimate,
        se3.max(0.01 * mc.estimate),
    ));
    Ok(checks)
}

/// Jump legs with one expected jump each over a unit horizon.
pub fn unit_intensity_legs() -> (MertonParams, MertonParams) {
    (
        leg(100.0, 0.05, 0.3, 1.0, 0.1, 0.15),
        leg(90.0, 0.05, 0.2, 1.0, -0.1, 0.2),
    )
}

/// Direct sum over all `(i, j)` with `i + j <= max_diagonal`.
pub fn brute_force_series(
    e: &MertonParams,
    g: &MertonParams,
    rho: f64,
    k: f64,
    horizon: f64,
    r_f: f64,
    max_diagonal: u64,
) -> Result<f64> {
    let disc = (-r_f * horizon).exp();
    let inner = InnerPricer::quadrature(DEFAULT_NODES)?;
    let mut acc = CompensatedSum::new();
    for i in 0..=max_diagonal {
        for j in 0..=(max_diagonal - i) {
            let t = term_transform(e, g, i, j, horizon, rho);
            if t.weight == 0.0 {
                continue;
            }
            let p = inner.price(&SpreadInputs {
                x1: t.x1_tilde * disc,
                x2: t.x2_tilde * disc,
                k,
                sigma1: t.sigma1_tilde,
                sigma2: t.sigma2_tilde,
                rho: t.rho_tilde,
                dt: horizon,
                r_f,
            })?;
            acc.add(t.weight * p);
        }
    }
    Ok(acc.value())
}

fn convergence_suite() -> Result<Vec<Check>> {
    let suite = Suite::Convergence;
    let (e, g) = unit_intensity_legs();
    // The tail bound is rigorous, so a 1e-9 target also certifies the brute-force match.
    let policy = adaptive_truncation(1e-6, 20, 1e-9)?;
    let inner = InnerPricer::quadrature(DEFAULT_NODES)?;
    let outcome = match jump_series_price(&e, &g, 0.3, 5.0, 1.0, 0.05, &inner, &policy) {
        Ok(o) => o,
        Err(Error::NotConverged(o)) => *o,
        Err(e) => return Err(e),
    };
    let r = &outcome.report;
    let brute = brute_force_series(&e, &g, 0.3, 5.0, 1.0, 0.05, 60)?;
    Ok(vec![
        Check::new(suite, "converged", f64::from(u8::from(r.converged)), 1.0, 1.0),
        Check::new(suite, "diagonals_used", (r.final_diagonal + 1) as f64, 1.0, 20.0),
        Check::new(suite, "tail_price_bound", r.tail_price_bound, 0.0, 1e-8),
        Check::within(suite, "brute_force_diagonal_60", outcome.price, brute, 1e-9),
    ])
}
