//! Seeded Monte Carlo valuation of the plant's dispatch option, used as the
//! reference for every analytic pricer.
//!
//! Paths are evaluated in fixed blocks of [`BLOCK_SIZE`]. Each block reduces to
//! `(count, mean, M2)` and blocks are merged in index order, so the estimate is
//! identical for any worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_correlation, Error, Result};
use crate::models::{ou_moments, Contract, MertonParams, SeasonalFunction, Settlement, TwoFactorJumpParams};
use crate::numeric::CompensatedSum;
use crate::pricing_closed::{deng_bounds, BoundsResult};
use crate::rng::Substreams;
use crate::simulate::{DeliveryWindow, MertonSimulator, PathPairSimulator, TimeGrid, TwoFactorSimulator};

pub const BLOCK_SIZE: usize = 1024;
pub const MIN_PATHS: usize = 100;
/// Half-width multiplier of the reported 95% interval.
pub const Z_95: f64 = 1.96;

/// Joint spot model for electricity and gas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    TwoFactor {
        electricity: TwoFactorJumpParams,
        gas: TwoFactorJumpParams,
        rho: f64,
    },
    Merton {
        electricity: MertonParams,
        gas: MertonParams,
        rho: f64,
    },
}

impl ModelConfig {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelConfig::TwoFactor { .. } => "two_factor",
            ModelConfig::Merton { .. } => "merton",
        }
    }

    pub fn rho(&self) -> f64 {
        match self {
            ModelConfig::TwoFactor { rho, .. } | ModelConfig::Merton { rho, .. } => *rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_correlation("model.rho", self.rho())?;
        match self {
            ModelConfig::TwoFactor { electricity, gas, .. } => {
                electricity.validate("model.electricity")?;
                gas.validate("model.gas")
            }
            ModelConfig::Merton { electricity, gas, .. } => {
                electricity.validate("model.electricity")?;
                gas.validate("model.gas")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub estimate: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    pub n_paths: usize,
    pub seed: u64,
    pub model_tag: String,
}

impl MCResult {
    /// True when `value` lies within `width` standard errors of the estimate.
    pub fn contains(&self, value: f64, width: f64) -> bool {
        (value - self.estimate).abs() <= width * self.std_error
    }
}

/// Streaming mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct RunningStats {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    fn from_block(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as u64;
        let first = values[0];
        if values.iter().all(|&v| v == first) {
            return Self { n, mean: first, m2: 0.0 };
        }
        let mean = values.iter().copied().collect::<CompensatedSum>().value() / n as f64;
        let m2 = values.iter().map(|v| (v - mean) * (v - mean)).collect::<CompensatedSum>().value();
        Self { n, mean, m2 }
    }

    fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        Self {
            n,
            mean: self.mean + delta * nb / n as f64,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n as f64,
        }
    }

    fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2.max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

/// Evaluates `payoff(index, scratch)` over all paths in deterministic blocks.
fn block_stats<F>(n_paths: usize, scratch_len: usize, payoff: F) -> RunningStats
where
    F: Fn(u64, &mut [f64], &mut [f64]) -> f64 + Sync,
{
    let n_blocks = n_paths.div_ceil(BLOCK_SIZE);
    let blocks: Vec<RunningStats> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_SIZE;
            let end = (start + BLOCK_SIZE).min(n_paths);
            let mut e = vec![0.0; scratch_len];
            let mut g = vec![0.0; scratch_len];
            let values: Vec<f64> = (start..end).map(|i| payoff(i as u64, &mut e, &mut g)).collect();
            RunningStats::from_block(&values)
        })
        .collect();
    blocks.into_iter().fold(RunningStats::default(), RunningStats::merge)
}

/// Grid from valuation time to the end of the settlement period.
pub fn simulation_grid(contract: &Contract) -> Result<(TimeGrid, Option<DeliveryWindow>)> {
    match contract.settlement {
        Settlement::DeliveryAverage => {
            let span = contract.tau2 - contract.t;
            let ratio = span / contract.grid_step;
            let n = ratio.round();
            if n < 1.0 || (ratio - n).abs() > 1e-6 * n {
                return Err(Error::invalid(
                    "contract.grid_step",
                    format!("must divide tau2 - t into whole steps, got ratio {ratio}"),
                ));
            }
            let grid = TimeGrid::new(contract.t, contract.tau2, n as usize)?;
            let window = DeliveryWindow::from_contract(&grid, contract)?;
            Ok((grid, Some(window)))
        }
        Settlement::DayAhead => {
            let span = contract.time_to_maturity();
            let n = ((span / contract.grid_step) - 1e-9).ceil().max(1.0);
            Ok((TimeGrid::new(contract.t, contract.tau, n as usize)?, None))
        }
    }
}

#[inline]
fn spread_payoff(f_e: f64, f_g: f64, contract: &Contract) -> f64 {
    let spread = f_e - contract.heat_rate * f_g - contract.cost;
    if spread > 0.0 {
        spread
    } else {
        0.0
    }
}

/// Monte Carlo value of `e^{-r_f (tau - t)} E[(F_e - heat_rate F_g - cost)^+]`.
///
/// Forwards are delivery-window averages of simulated daily spots, or the
/// spots at `tau` under day-ahead settlement. Merton models with day-ahead
/// settlement use one exact terminal draw per path; otherwise paths are
/// stepped on the contract's grid.
pub fn mc_spark_spread(model: &ModelConfig, contract: &Contract, n_paths: usize, seed: u64) -> Result<MCResult> {
    contract.validate()?;
    model.validate()?;
    if n_paths < MIN_PATHS {
        return Err(Error::invalid("n_paths", format!("must be >= {MIN_PATHS}, got {n_paths}")));
    }
    let (grid, window) = simulation_grid(contract)?;
    let stats = match model {
        ModelConfig::Merton { electricity, gas, rho } if window.is_none() => {
            let sim = MertonSimulator::terminal(electricity, gas, *rho, contract.time_to_maturity(), seed)?;
            block_stats(n_paths, 0, |i, _, _| {
                let (se, sg) = sim.sample_terminal(i);
                spread_payoff(se, sg, contract)
            })
        }
        ModelConfig::Merton { electricity, gas, rho } => {
            let sim = MertonSimulator::new(electricity, gas, *rho, grid, seed)?;
            path_stats(&sim, window.as_ref(), n_paths, contract)
        }
        ModelConfig::TwoFactor { electricity, gas, rho } => {
            let sim = TwoFactorSimulator::new(electricity, gas, *rho, grid, seed)?;
            path_stats(&sim, window.as_ref(), n_paths, contract)
        }
    };
    let disc = contract.discount_factor();
    let estimate = disc * stats.mean;
    let std_error = disc * stats.std_error();
    Ok(MCResult {
        estimate,
        std_error,
        ci95: (estimate - Z_95 * std_error, estimate + Z_95 * std_error),
        n_paths,
        seed,
        model_tag: model.tag().to_string(),
    })
}

fn path_stats<S: PathPairSimulator>(sim: &S, window: Option<&DeliveryWindow>, n_paths: usize, contract: &Contract) -> RunningStats {
    let last = sim.grid().n_steps;
    block_stats(n_paths, sim.grid().n_points(), |i, e, g| {
        sim.fill(i, e, g);
        let (fe, fg) = match window {
            Some(w) => (w.average(e), w.average(g)),
            None => (e[last], g[last]),
        };
        spread_payoff(fe, fg, contract)
    })
}

fn arithmetic_mean(p: &TwoFactorJumpParams, grid: &TimeGrid, k: usize) -> Result<f64> {
    let dt = grid.step();
    let elapsed = k as f64 * dt;
    let x = ou_moments(p.alpha, p.sigma, p.x0, elapsed)?.mean;
    let decay = (-p.beta * dt).exp();
    // sum_{l=1}^{k} decay^{k-l}
    let geometric = if decay == 1.0 {
        k as f64
    } else {
        (1.0 - decay.powi(k as i32)) / (1.0 - decay)
    };
    let y = p.y0 * (-p.beta * elapsed).exp() + p.eta * p.jump_intensity * dt * p.jump_mean * geometric;
    Ok(p.seasonal.eval(grid.time(k)) + x + y)
}

fn geometric_mean(p: &TwoFactorJumpParams, grid: &TimeGrid, k: usize) -> Result<f64> {
    let dt = grid.step();
    let elapsed = k as f64 * dt;
    let x = ou_moments(p.alpha, p.sigma, p.x0, elapsed)?;
    let mut log_mgf = CompensatedSum::new();
    log_mgf.add(x.mean + 0.5 * x.variance);
    log_mgf.add(p.y0 * (-p.beta * elapsed).exp());
    if p.jump_intensity > 0.0 {
        // Each step adds eta * (compound Poisson sum), decayed to time k.
        for l in 1..=k {
            let c = p.eta * (-p.beta * (k - l) as f64 * dt).exp();
            let mgf = c * p.jump_mean + 0.5 * c * c * p.jump_sd * p.jump_sd;
            log_mgf.add(p.jump_intensity * dt * mgf.exp_m1());
        }
    }
    Ok(p.seasonal.eval(grid.time(k)) * log_mgf.value().exp())
}

/// Expected forwards `(E[F_e], E[F_g])` under the simulated dynamics.
///
/// Two-factor means account for the aggregated end-of-step jumps used by the
/// simulator, so they match the Monte Carlo law exactly.
pub fn expected_forwards(model: &ModelConfig, contract: &Contract) -> Result<(f64, f64)> {
    contract.validate()?;
    model.validate()?;
    let (grid, window) = simulation_grid(contract)?;
    let points: Vec<(usize, f64)> = match &window {
        Some(w) => w.weights().iter().enumerate().map(|(i, &wt)| (w.first() + i, wt)).collect(),
        None => vec![(grid.n_steps, 1.0)],
    };
    let mut fe = CompensatedSum::new();
    let mut fg = CompensatedSum::new();
    for (k, wt) in points {
        let (me, mg) = match model {
            ModelConfig::Merton { electricity, gas, .. } => {
                let elapsed = grid.time(k) - grid.start;
                (electricity.expected_spot(elapsed), gas.expected_spot(elapsed))
            }
            ModelConfig::TwoFactor { electricity, gas, .. } => {
                (arithmetic_mean(electricity, &grid, k)?, geometric_mean(gas, &grid, k)?)
            }
        };
        fe.add(wt * me);
        fg.add(wt * mg);
    }
    Ok((fe.value(), fg.value()))
}

/// One row of a bound-containment check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentCase {
    pub case: usize,
    pub family: String,
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub lower_applicable: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub n_paths: usize,
    pub cases: Vec<ContainmentCase>,
    pub n_pass: usize,
    pub all_pass: bool,
}

impl SweepReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cases {
            w.serialize(c).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Checks the MC price against the expected-forward bounds at 3 standard errors.
///
/// With a positive cost only the upper bound is tested.
pub fn check_containment(case: usize, model: &ModelConfig, contract: &Contract, n_paths: usize, seed: u64) -> Result<ContainmentCase> {
    let (fe, fg) = expected_forwards(model, contract)?;
    let BoundsResult {
        lower,
        upper,
        cost_warning,
    } = deng_bounds(fe.max(0.0), fg, contract)?;
    let mc = mc_spark_spread(model, contract, n_paths, seed)?;
    let slack = 3.0 * mc.std_error;
    let lower_applicable = !cost_warning;
    let pass = mc.estimate <= upper + slack && (!lower_applicable || mc.estimate >= lower - slack);
    Ok(ContainmentCase {
        case,
        family: model.tag().to_string(),
        cost: contract.cost,
        lower,
        upper,
        estimate: mc.estimate,
        std_error: mc.std_error,
        lower_applicable,
        pass,
    })
}

pub const SWEEP_PATHS: usize = 20_000;

/// Randomised zero-cost containment sweep over both model families.
pub fn bound_containment_sweep(n_cases: usize, seed: u64) -> Result<SweepReport> {
    bound_containment_sweep_with(n_cases, seed, SWEEP_PATHS)
}

pub fn bound_containment_sweep_with(n_cases: usize, seed: u64, n_paths: usize) -> Result<SweepReport> {
    if n_cases == 0 {
        return Err(Error::invalid("n_cases", "must be >= 1"));
    }
    let streams = Substreams::new(seed);
    let cases = (0..n_cases)
        .map(|case| {
            let (model, contract) = random_case(&streams, case as u64);
            let mc_seed = seed ^ (case as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            check_containment(case, &model, &contract, n_paths, mc_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_pass = cases.iter().filter(|c| c.pass).count();
    Ok(SweepReport {
        seed,
        n_paths,
        all_pass: n_pass == cases.len(),
        n_pass,
        cases,
    })
}

const DAY: f64 = 1.0 / 365.0;

/// Zero-cost configuration drawn for sweep case `case`.
///
/// Electricity levels sit far above their noise so the arithmetic forward is
/// positive, which the upper bound presumes.
pub fn random_case(streams: &Substreams, case: u64) -> (ModelConfig, Contract) {
    let mut rng = streams.stream(case);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let tau = u(5.0, 60.0).round() * DAY;
    let days = u(1.0, 30.0).round();
    let heat_rate = u(6.0, 11.0);
    let settlement = if u(0.0, 1.0) < 0.3 {
        Settlement::DayAhead
    } else {
        Settlement::DeliveryAverage
    };
    let contract = Contract {
        t: 0.0,
        tau,
        tau1: tau,
        tau2: tau + days * DAY,
        heat_rate,
        cost: 0.0,
        r_f: u(0.0, 0.08),
        grid_step: DAY,
        settlement,
        discount_inside_average: u(0.0, 1.0) < 0.8,
    };
    let rho = u(-0.8, 0.8);
    let model = if case % 2 == 0 {
        let alpha_e = u(5.0, 40.0);
        let alpha_g = u(2.0, 20.0);
        let electricity = TwoFactorJumpParams {
            alpha: alpha_e,
            sigma: u(5.0, 40.0),
            beta: alpha_e + u(20.0, 150.0),
            eta: u(0.5, 1.5),
            jump_intensity: u(0.0, 30.0),
            jump_mean: u(0.0, 15.0),
            jump_sd: u(0.0, 8.0),
            seasonal: SeasonalFunction {
                c0: u(45.0, 90.0),
                c1: u(-5.0, 5.0),
                harmonics: vec![crate::models::Harmonic {
                    amplitude: u(0.0, 8.0),
                    period: 1.0,
                    phase: u(0.0, 6.28),
                }],
            },
            x0: u(-3.0, 3.0),
            y0: 0.0,
        };
        let gas = TwoFactorJumpParams {
            alpha: alpha_g,
            sigma: u(0.3, 1.5),
            beta: alpha_g + u(20.0, 100.0),
            eta: u(0.5, 1.0),
            jump_intensity: u(0.0, 20.0),
            jump_mean: u(-0.1, 0.3),
            jump_sd: u(0.0, 0.2),
            seasonal: SeasonalFunction {
                c0: u(2.5, 6.0),
                c1: 0.0,
                harmonics: vec![crate::models::Harmonic {
                    amplitude: u(0.0, 1.0),
                    period: 1.0,
                    phase: u(0.0, 6.28),
                }],
            },
            x0: u(-0.1, 0.1),
            y0: 0.0,
        };
        ModelConfig::TwoFactor { electricity, gas, rho }
    } else {
        let r = contract.r_f;
        let electricity = MertonParams {
            s0: u(30.0, 90.0),
            r,
            q: u(0.0, 0.05),
            sigma: u(0.1, 0.8),
            lambda: u(0.0, 3.0),
            m: u(-0.2, 0.3),
            s: u(0.0, 0.3),
        };
        let gas = MertonParams {
            s0: u(2.0, 8.0),
            r,
            q: u(0.0, 0.05),
            sigma: u(0.1, 0.7),
            lambda: u(0.0, 3.0),
            m: u(-0.2, 0.2),
            s: u(0.0, 0.3),
        };
        ModelConfig::Merton { electricity, gas, rho }
    };
    (model, contract)
}

/// Noise-free two-factor model and contract whose value is known exactly.
pub fn deterministic_fixture() -> (ModelConfig, Contract) {
    let quiet = |level: f64, x0: f64| TwoFactorJumpParams {
        alpha: 2.0,
        sigma: 0.0,
        beta: 20.0,
        eta: 0.0,
        jump_intensity: 0.0,
        jump_mean: 0.0,
        jump_sd: 0.0,
        seasonal: SeasonalFunction::constant(level),
        x0,
        y0: 0.0,
    };
    let contract = Contract {
        t: 0.0,
        tau: 10.0 * DAY,
        tau1: 10.0 * DAY,
        tau2: 20.0 * DAY,
        heat_rate: 7.0,
        cost: 0.0,
        r_f: 0.03,
        grid_step: DAY,
        settlement: Settlement::DeliveryAverage,
        discount_inside_average: true,
    };
    let model = ModelConfig::TwoFactor {
        electricity: quiet(60.0, 0.0),
        gas: quiet(4.0, 0.0),
        rho: 0.0,
    };
    (model, contract)
}
