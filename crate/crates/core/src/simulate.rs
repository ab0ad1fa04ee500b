//! Exact-step path simulation for both spot-model families, and delivery-window
//! forwards built from simulated paths.
//!
//! Ornstein-Uhlenbeck factors advance with their exact Gaussian transition, so
//! refining the grid leaves the law of `X` at grid times unchanged. Spike
//! factors decay exactly between steps; the compound-Poisson increment of a
//! step is aggregated and added at the step end. Merton log-prices advance
//! with their exact transition over any step length.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_correlation, ensure_finite, ensure_positive, Error, Result};
use crate::models::{Contract, MertonParams, TwoFactorJumpParams};
use crate::numeric::CompensatedSum;
use crate::rng::{Substreams, STREAM_POLICY};

/// Uniform time grid `start = t_0 < t_1 < ... < t_n = end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub start: f64,
    pub end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, n_steps: usize) -> Result<Self> {
        let grid = Self {
            start,
            end,
            n_steps,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("grid.start", self.start)?;
        ensure_finite("grid.end", self.end)?;
        if !(self.start < self.end) {
            return Err(Error::invalid("grid.end", "must exceed grid.start"));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("grid.n_steps", "must be >= 1"));
        }
        if !(self.step() > 0.0) {
            return Err(Error::invalid("grid.n_steps", "step underflows"));
        }
        Ok(())
    }

    #[inline]
    pub fn step(&self) -> f64 {
        (self.end - self.start) / self.n_steps as f64
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.end
        } else {
            self.start + i as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points()).map(|i| self.time(i)).collect()
    }

    /// Index of the grid point at `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.start) / self.step();
        let k = x.round();
        if k < 0.0 || k > self.n_steps as f64 || (x - k).abs() > 1e-6 {
            return None;
        }
        Some(k as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    TwoFactorElectricity,
    TwoFactorGas,
    MertonElectricity,
    MertonGas,
}

impl ModelTag {
    pub fn code(self) -> u32 {
        match self {
            ModelTag::TwoFactorElectricity => 0,
            ModelTag::TwoFactorGas => 1,
            ModelTag::MertonElectricity => 2,
            ModelTag::MertonGas => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => ModelTag::TwoFactorElectricity,
            1 => ModelTag::TwoFactorGas,
            2 => ModelTag::MertonElectricity,
            3 => ModelTag::MertonGas,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::TwoFactorElectricity => "two_factor_electricity",
            ModelTag::TwoFactorGas => "two_factor_gas",
            ModelTag::MertonElectricity => "merton_electricity",
            ModelTag::MertonGas => "merton_gas",
        }
    }

    /// Gas and Merton spots are geometric and must stay positive.
    pub fn is_positive(self) -> bool {
        !matches!(self, ModelTag::TwoFactorElectricity)
    }
}

/// Simulated spot paths, stored row-major (`n_paths x n_points`).
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    grid: TimeGrid,
    values: Vec<f64>,
    n_paths: usize,
    model_tag: ModelTag,
    seed: u64,
    stream_policy: String,
}

impl PathSet {
    pub fn new(grid: TimeGrid, n_paths: usize, values: Vec<f64>, model_tag: ModelTag, seed: u64) -> Result<Self> {
        grid.validate()?;
        let expected = n_paths
            .checked_mul(grid.n_points())
            .ok_or_else(|| Error::Format("path matrix size overflows".into()))?;
        if values.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} values for {n_paths} paths x {} points, got {}",
                grid.n_points(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("{} paths must be finite, found {v}", model_tag.as_str())));
        }
        if model_tag.is_positive() {
            if let Some(v) = values.iter().find(|v| **v <= 0.0) {
                return Err(Error::Format(format!("{} paths must be positive, found {v}", model_tag.as_str())));
            }
        }
        Ok(Self {
            grid,
            values,
            n_paths,
            model_tag,
            seed,
            stream_policy: STREAM_POLICY.to_string(),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn model_tag(&self) -> ModelTag {
        self.model_tag
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_policy(&self) -> &str {
        &self.stream_policy
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.n_points();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.grid.n_points())
    }

    /// Values of every path at grid index `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }
}

/// Sum of a Poisson number of i.i.d. `N(mean, sd^2)` jumps over a fixed interval.
#[derive(Debug, Clone)]
struct CompoundPoisson {
    count: Option<Poisson<f64>>,
    mean: f64,
    sd: f64,
}

impl CompoundPoisson {
    fn new(intensity: f64, interval: f64, mean: f64, sd: f64) -> Result<Self> {
        let rate = intensity * interval;
        let count = if rate > 0.0 {
            Some(Poisson::new(rate).map_err(|e| Error::invalid("jump_intensity", e.to_string()))?)
        } else {
            None
        };
        Ok(Self { count, mean, sd })
    }

    #[inline]
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let Some(count) = &self.count else {
            return 0.0;
        };
        let n = count.sample(rng);
        if n == 0.0 {
            return 0.0;
        }
        // The sum of n Gaussian jumps is Gaussian.
        let z: f64 = if self.sd > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
        n * self.mean + self.sd * n.sqrt() * z
    }
}

#[inline]
fn correlated_normals(rng: &mut ChaCha8Rng, rho: f64, rho_c: f64) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    (z1, rho * z1 + rho_c * z2)
}

/// A simulator producing one (electricity, gas) path pair per stream index.
pub trait PathPairSimulator: Sync {
    fn grid(&self) -> &TimeGrid;
    fn seed(&self) -> u64;
    fn tags(&self) -> (ModelTag, ModelTag);
    /// Writes path `index` into `e` and `g`, each of length `grid().n_points()`.
    fn fill(&self, index: u64, e: &mut [f64], g: &mut [f64]);
}

/// Simulates `n_paths` pairs in parallel. Rows depend only on `(seed, index)`.
pub fn simulate_pairs<S: PathPairSimulator>(sim: &S, n_paths: usize) -> Result<(PathSet, PathSet)> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths", "must be >= 1"));
    }
    let n = sim.grid().n_points();
    let mut e = vec![0.0; n_paths * n];
    let mut g = vec![0.0; n_paths * n];
    e.par_chunks_mut(n)
        .zip(g.par_chunks_mut(n))
        .enumerate()
        .for_each(|(i, (re, rg))| sim.fill(i as u64, re, rg));
    let (te, tg) = sim.tags();
    Ok((
        PathSet::new(*sim.grid(), n_paths, e, te, sim.seed())?,
        PathSet::new(*sim.grid(), n_paths, g, tg, sim.seed())?,
    ))
}

#[derive(Debug, Clone)]
struct FactorStepper {
    x0: f64,
    y0: f64,
    x_decay: f64,
    x_vol: f64,
    y_decay: f64,
    eta: f64,
    jumps: CompoundPoisson,
    levels: Vec<f64>,
}

impl FactorStepper {
    fn new(p: &TwoFactorJumpParams, grid: &TimeGrid) -> Result<Self> {
        let dt = grid.step();
        let x_vol = p.sigma * (-(-2.0 * p.alpha * dt).exp_m1() / (2.0 * p.alpha)).sqrt();
        Ok(Self {
            x0: p.x0,
            y0: p.y0,
            x_decay: (-p.alpha * dt).exp(),
            x_vol,
            y_decay: (-p.beta * dt).exp(),
            eta: p.eta,
            jumps: CompoundPoisson::new(p.jump_intensity, dt, p.jump_mean, p.jump_sd)?,
            levels: grid.times().iter().map(|&t| p.seasonal.eval(t)).collect(),
        })
    }
}

/// Two-factor mean-reverting jump model for electricity (arithmetic) and gas (geometric).
#[derive(Debug, Clone)]
pub struct TwoFactorSimulator {
    grid: TimeGrid,
    electricity: FactorStepper,
    gas: FactorStepper,
    rho: f64,
    rho_c: f64,
    streams: Substreams,
}

impl TwoFactorSimulator {
    pub fn new(
        params_e: &TwoFactorJumpParams,
        params_g: &TwoFactorJumpParams,
        rho: f64,
        grid: TimeGrid,
        seed: u64,
    ) -> Result<Self> {
        grid.validate()?;
        ensure_correlation("rho", rho)?;
        params_e.validate("electricity")?;
        params_g.validate("gas")?;
        let electricity = FactorStepper::new(params_e, &grid)?;
        let gas = FactorStepper::new(params_g, &grid)?;
        for (i, &level) in gas.levels.iter().enumerate() {
            if !(level > 0.0) {
                return Err(Error::NonPositiveLevel {
                    time: grid.time(i),
                    value: level,
                });
            }
        }
        Ok(Self {
            grid,
            electricity,
            gas,
            rho,
            rho_c: (1.0 - rho * rho).max(0.0).sqrt(),
            streams: Substreams::new(seed),
        })
    }
}

impl PathPairSimulator for TwoFactorSimulator {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn seed(&self) -> u64 {
        self.streams.seed()
    }

    fn tags(&self) -> (ModelTag, ModelTag) {
        (ModelTag::TwoFactorElectricity, ModelTag::TwoFactorGas)
    }

    fn fill(&self, index: u64, e: &mut [f64], g: &mut [f64]) {
        let mut rng = self.streams.stream(index);
        let (pe, pg) = (&self.electricity, &self.gas);
        let (mut xe, mut ye, mut xg, mut yg) = (pe.x0, pe.y0, pg.x0, pg.y0);
        e[0] = pe.levels[0] + xe + ye;
        g[0] = pg.levels[0] * (xg + yg).exp();
        for k in 1..self.grid.n_points() {
            let (ze, zg) = correlated_normals(&mut rng, self.rho, self.rho_c);
            xe = xe * pe.x_decay + pe.x_vol * ze;
            xg = xg * pg.x_decay + pg.x_vol * zg;
            ye = ye * pe.y_decay + pe.eta * pe.jumps.sample(&mut rng);
            yg = yg * pg.y_decay + pg.eta * pg.jumps.sample(&mut rng);
            e[k] = pe.levels[k] + xe + ye;
            g[k] = pg.levels[k] * (xg + yg).exp();
        }
    }
}

/// Simulates both commodities under the two-factor model.
pub fn simulate_two_factor(
    params_e: &TwoFactorJumpParams,
    params_g: &TwoFactorJumpParams,
    rho: f64,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<(PathSet, PathSet)> {
    let sim = TwoFactorSimulator::new(params_e, params_g, rho, grid, seed)?;
    simulate_pairs(&sim, n_paths)
}

/// Exact log-price transition of a Merton asset over a fixed interval.
#[derive(Debug, Clone)]
struct MertonStepper {
    s0: f64,
    drift: f64,
    vol: f64,
    jumps: CompoundPoisson,
}

impl MertonStepper {
    fn new(p: &MertonParams, interval: f64) -> Result<Self> {
        let drift = (p.r - p.q - 0.5 * p.sigma * p.sigma - p.lambda * p.kappa()) * interval;
        Ok(Self {
            s0: p.s0,
            drift,
            vol: p.sigma * interval.sqrt(),
            jumps: CompoundPoisson::new(p.lambda, interval, p.m, p.s)?,
        })
    }

    #[inline]
    fn log_increment(&self, z: f64, rng: &mut ChaCha8Rng) -> f64 {
        self.drift + self.vol * z + self.jumps.sample(rng)
    }
}

/// Two correlated Merton assets stepped exactly over a uniform grid.
#[derive(Debug, Clone)]
pub struct MertonSimulator {
    grid: TimeGrid,
    electricity: MertonStepper,
    gas: MertonStepper,
    rho: f64,
    rho_c: f64,
    streams: Substreams,
}

impl MertonSimulator {
    /// The grid's `start` is the time at which the spots equal `s0`.
    pub fn new(params_e: &MertonParams, params_g: &MertonParams, rho: f64, grid: TimeGrid, seed: u64) -> Result<Self> {
        grid.validate()?;
        ensure_correlation("rho", rho)?;
        params_e.validate("electricity")?;
        params_g.validate("gas")?;
        let dt = grid.step();
        Ok(Self {
            grid,
            electricity: MertonStepper::new(params_e, dt)?,
            gas: MertonStepper::new(params_g, dt)?,
            rho,
            rho_c: (1.0 - rho * rho).max(0.0).sqrt(),
            streams: Substreams::new(seed),
        })
    }

    /// Terminal-only simulator: a single exact step from 0 to `horizon`.
    pub fn terminal(params_e: &MertonParams, params_g: &MertonParams, rho: f64, horizon: f64, seed: u64) -> Result<Self> {
        ensure_positive("horizon", horizon)?;
        Self::new(params_e, params_g, rho, TimeGrid::new(0.0, horizon, 1)?, seed)
    }

    /// Spot pair at the end of the grid for path `index`.
    #[inline]
    pub fn sample_terminal(&self, index: u64) -> (f64, f64) {
        let mut rng = self.streams.stream(index);
        let (mut le, mut lg) = (0.0, 0.0);
        for _ in 0..self.grid.n_steps {
            let (ze, zg) = correlated_normals(&mut rng, self.rho, self.rho_c);
            le += self.electricity.log_increment(ze, &mut rng);
            lg += self.gas.log_increment(zg, &mut rng);
        }
        (self.electricity.s0 * le.exp(), self.gas.s0 * lg.exp())
    }
}

impl PathPairSimulator for MertonSimulator {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn seed(&self) -> u64 {
        self.streams.seed()
    }

    fn tags(&self) -> (ModelTag, ModelTag) {
        (ModelTag::MertonElectricity, ModelTag::MertonGas)
    }

    fn fill(&self, index: u64, e: &mut [f64], g: &mut [f64]) {
        let mut rng = self.streams.stream(index);
        let (mut le, mut lg) = (0.0, 0.0);
        e[0] = self.electricity.s0;
        g[0] = self.gas.s0;
        for k in 1..self.grid.n_points() {
            let (ze, zg) = correlated_normals(&mut rng, self.rho, self.rho_c);
            le += self.electricity.log_increment(ze, &mut rng);
            lg += self.gas.log_increment(zg, &mut rng);
            e[k] = self.electricity.s0 * le.exp();
            g[k] = self.gas.s0 * lg.exp();
        }
    }
}

/// Terminal samples of both Merton assets.
#[derive(Debug, Clone, PartialEq)]
pub struct MertonTerminal {
    pub electricity: Vec<f64>,
    pub gas: Vec<f64>,
    pub horizon: f64,
    pub seed: u64,
}

/// Exact terminal draws `S_i(T) = S_i(0) exp((r - q_i - sigma_i^2/2 - lambda_i kappa_i) T + sigma_i B_i(T) + sum J_i)`.
pub fn simulate_merton(
    params_e: &MertonParams,
    params_g: &MertonParams,
    rho: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<MertonTerminal> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths", "must be >= 1"));
    }
    let sim = MertonSimulator::terminal(params_e, params_g, rho, horizon, seed)?;
    let (electricity, gas) = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| sim.sample_terminal(i))
        .unzip();
    Ok(MertonTerminal {
        electricity,
        gas,
        horizon,
        seed,
    })
}

/// Averaging weights of a delivery window on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryWindow {
    first: usize,
    weights: Vec<f64>,
}

impl DeliveryWindow {
    /// Window `[tau1, tau2]`; each point is weighted `e^{-r_f (t_i - tau1)} / N`
    /// (or `1 / N` with `discount = false`).
    pub fn new(grid: &TimeGrid, tau1: f64, tau2: f64, r_f: f64, discount: bool) -> Result<Self> {
        if !(tau1 <= tau2) {
            return Err(Error::invalid("contract.tau2", "delivery window is empty"));
        }
        let first = grid
            .index_of(tau1)
            .ok_or_else(|| Error::invalid("contract.tau1", format!("{tau1} is not a point of the simulation grid")))?;
        let last = grid
            .index_of(tau2)
            .ok_or_else(|| Error::invalid("contract.tau2", format!("{tau2} is not a point of the simulation grid")))?;
        if last < first {
            return Err(Error::invalid("contract.tau2", "delivery window is empty"));
        }
        let n = (last - first + 1) as f64;
        let weights = (first..=last)
            .map(|i| {
                let d = if discount {
                    (-r_f * (grid.time(i) - tau1)).exp()
                } else {
                    1.0
                };
                d / n
            })
            .collect();
        Ok(Self { first, weights })
    }

    pub fn from_contract(grid: &TimeGrid, contract: &Contract) -> Result<Self> {
        Self::new(
            grid,
            contract.tau1,
            contract.tau2,
            contract.r_f,
            contract.discount_inside_average,
        )
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted average of one path over the window.
    #[inline]
    pub fn average(&self, row: &[f64]) -> f64 {
        let mut acc = CompensatedSum::new();
        for (w, s) in self.weights.iter().zip(&row[self.first..]) {
            acc.add(w * s);
        }
        acc.value()
    }
}

/// Per-path delivery-window forwards `(1/N) sum_i e^{-r_f (t_i - tau1)} S(t_i)`.
pub fn forward_from_paths(paths: &PathSet, contract: &Contract) -> Result<Vec<f64>> {
    let window = DeliveryWindow::from_contract(paths.grid(), contract)?;
    Ok(paths.rows().map(|row| window.average(row)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ou_moments, SeasonalFunction, Settlement};

    fn quiet(level: f64, x0: f64) -> TwoFactorJumpParams {
        TwoFactorJumpParams {
            alpha: 1.0,
            sigma: 0.0,
            beta: 5.0,
            eta: 0.0,
            jump_intensity: 0.0,
            jump_mean: 0.0,
            jump_sd: 0.0,
            seasonal: SeasonalFunction::constant(level),
            x0,
            y0: 0.0,
        }
    }

    fn noisy_gas() -> TwoFactorJumpParams {
        TwoFactorJumpParams {
            alpha: 3.0,
            sigma: 0.8,
            beta: 30.0,
            eta: 1.0,
            jump_intensity: 12.0,
            jump_mean: 0.4,
            jump_sd: 0.5,
            seasonal: SeasonalFunction::constant(3.0),
            x0: 0.0,
            y0: 0.0,
        }
    }

    fn contract(tau1: f64, tau2: f64, r_f: f64, step: f64) -> Contract {
        Contract {
            t: 0.0,
            tau: tau1,
            tau1,
            tau2,
            heat_rate: 1.0,
            cost: 0.0,
            r_f,
            grid_step: step,
            settlement: Settlement::DeliveryAverage,
            discount_inside_average: true,
        }
    }

    #[test]
    fn noise_free_paths_decay_deterministically() {
        let grid = TimeGrid::new(0.0, 2.0, 40).unwrap();
        let (e, g) = simulate_two_factor(&quiet(50.0, 1.0), &quiet(3.0, 0.5), 0.3, grid, 3, 9).unwrap();
        for row in e.rows() {
            for (k, v) in row.iter().enumerate() {
                let t = grid.time(k);
                assert!((v - (50.0 + (-t).exp())).abs() < 1e-12);
            }
        }
        for row in g.rows() {
            for (k, v) in row.iter().enumerate() {
                let t = grid.time(k);
                assert!((v - 3.0 * (0.5 * (-t).exp()).exp()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gas_paths_stay_positive() {
        let grid = TimeGrid::new(0.0, 1.0, 365).unwrap();
        let (_, g) = simulate_two_factor(&noisy_gas(), &noisy_gas(), -0.4, grid, 500, 3).unwrap();
        assert!(g.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let e = quiet(50.0, 0.0);
        assert!(simulate_two_factor(&e, &e, 1.2, grid, 10, 0).is_err());
        let mut g = quiet(3.0, 0.0);
        g.seasonal = SeasonalFunction::constant(-1.0);
        assert!(matches!(
            simulate_two_factor(&e, &g, 0.0, grid, 10, 0),
            Err(Error::NonPositiveLevel { .. })
        ));
        let p = MertonParams::gbm(100.0, 0.05, 0.0, 0.2);
        assert!(simulate_merton(&p, &p, 0.0, 0.0, 10, 0).is_err());
        assert!(simulate_merton(&p, &p, -1.5, 1.0, 10, 0).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 3).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn reproducible_and_prefix_stable() {
        let grid = TimeGrid::new(0.0, 0.5, 50).unwrap();
        let (a, _) = simulate_two_factor(&noisy_gas(), &noisy_gas(), 0.2, grid, 20, 77).unwrap();
        let (b, _) = simulate_two_factor(&noisy_gas(), &noisy_gas(), 0.2, grid, 20, 77).unwrap();
        assert_eq!(a.values(), b.values());
        let (c, _) = simulate_two_factor(&noisy_gas(), &noisy_gas(), 0.2, grid, 35, 77).unwrap();
        assert_eq!(a.values(), &c.values()[..a.values().len()]);
        let (d, _) = simulate_two_factor(&noisy_gas(), &noisy_gas(), 0.2, grid, 20, 78).unwrap();
        assert_ne!(a.values(), d.values());
    }

    #[test]
    fn unit_correlation_shares_brownian_increments() {
        let mut p = quiet(10.0, 0.0);
        p.sigma = 1.0;
        let grid = TimeGrid::new(0.0, 1.0, 30).unwrap();
        let (e, g) = simulate_two_factor(&p, &p, 1.0, grid, 10, 5).unwrap();
        // Same X on both legs: S_e - L = ln(S_g / L).
        for (re, rg) in e.rows().zip(g.rows()) {
            for (ve, vg) in re.iter().zip(rg) {
                assert!(((ve - 10.0) - (vg / 10.0).ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn merton_deterministic_growth() {
        let p = MertonParams::gbm(100.0, 0.05, 0.0, 0.0);
        let out = simulate_merton(&p, &p, 0.0, 2.0, 50, 1).unwrap();
        let exact = 100.0 * (0.1f64).exp();
        for v in out.electricity.iter().chain(&out.gas) {
            assert!((v - exact).abs() < 1e-12 * exact);
        }
    }

    #[test]
    fn stationary_variance_of_normal_factor() {
        // alpha T = 10, so the transient is below e^{-20}.
        let mut p = quiet(0.0, 0.0);
        p.alpha = 2.0;
        p.sigma = 0.6;
        let mut g = quiet(1.0, 0.0);
        g.sigma = 0.1;
        let grid = TimeGrid::new(0.0, 5.0, 25).unwrap();
        let n = 40_000;
        let (e, _) = simulate_two_factor(&p, &g, 0.0, grid, n, 11).unwrap();
        let xs = e.column(grid.n_steps);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = ou_moments(2.0, 0.6, 0.0, f64::INFINITY).unwrap().variance;
        let se = target * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((var - target).abs() < 4.0 * se, "var={var} target={target} se={se}");
    }

    #[test]
    fn ou_transition_matches_moments() {
        // Exact step: one draw per path over t = 0.5 from x0 = 1.
        let mut p = quiet(0.0, 1.0);
        p.sigma = 0.2;
        let grid = TimeGrid::new(0.0, 0.5, 1).unwrap();
        let n = 200_000;
        let (e, _) = simulate_two_factor(&p, &quiet(1.0, 0.0), 0.0, grid, n, 21).unwrap();
        let xs = e.column(1);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let m = ou_moments(1.0, 0.2, 1.0, 0.5).unwrap();
        assert!((mean - m.mean).abs() < 4.0 * (m.variance / n as f64).sqrt());
        assert!((var - m.variance).abs() < 4.0 * m.variance * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn forward_examples() {
        let grid = TimeGrid::new(0.0, 10.0 / 365.0, 10).unwrap();
        let flat = PathSet::new(grid, 2, vec![42.0; 22], ModelTag::MertonGas, 0).unwrap();
        let c = contract(2.0 / 365.0, 8.0 / 365.0, 0.0, 1.0 / 365.0);
        for f in forward_from_paths(&flat, &c).unwrap() {
            assert!((f - 42.0).abs() < 1e-12);
        }

        // One-point window.
        let ramp: Vec<f64> = (0..11).map(|i| 10.0 + i as f64).collect();
        let ramp = PathSet::new(grid, 1, ramp, ModelTag::MertonGas, 0).unwrap();
        let mut one = contract(4.0 / 365.0, 4.0 / 365.0, 0.05, 1.0 / 365.0);
        one.tau2 = one.tau1;
        assert_eq!(forward_from_paths(&ramp, &one).unwrap(), vec![14.0]);

        // {10, 12, 14} with daily discounting at 5%, evaluated by hand.
        let grid3 = TimeGrid::new(0.0, 2.0 / 365.0, 2).unwrap();
        let three = PathSet::new(grid3, 1, vec![10.0, 12.0, 14.0], ModelTag::MertonGas, 0).unwrap();
        let c3 = contract(0.0, 2.0 / 365.0, 0.05, 1.0 / 365.0);
        let f = forward_from_paths(&three, &c3).unwrap()[0];
        assert!((f - 11.998_173_728_636_825).abs() < 1e-13, "{f}");
        let mut flat3 = c3.clone();
        flat3.discount_inside_average = false;
        assert!((forward_from_paths(&three, &flat3).unwrap()[0] - 12.0).abs() < 1e-14);
    }

    #[test]
    fn forward_window_errors() {
        let grid = TimeGrid::new(0.0, 10.0 / 365.0, 10).unwrap();
        let flat = PathSet::new(grid, 1, vec![1.0; 11], ModelTag::MertonGas, 0).unwrap();
        let outside = contract(5.0 / 365.0, 12.0 / 365.0, 0.0, 1.0 / 365.0);
        assert!(forward_from_paths(&flat, &outside).is_err());
        let mut empty = contract(5.0 / 365.0, 6.0 / 365.0, 0.0, 1.0 / 365.0);
        empty.tau2 = 4.0 / 365.0;
        assert!(forward_from_paths(&flat, &empty).is_err());
        let off_grid = contract(5.5 / 365.0, 8.0 / 365.0, 0.0, 1.0 / 365.0);
        assert!(forward_from_paths(&flat, &off_grid).is_err());
    }

    #[test]
    fn pathset_dimension_and_sign_checks() {
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        assert!(PathSet::new(grid, 2, vec![1.0; 5], ModelTag::TwoFactorGas, 0).is_err());
        assert!(PathSet::new(grid, 1, vec![1.0, -1.0, 1.0], ModelTag::TwoFactorGas, 0).is_err());
        assert!(PathSet::new(grid, 1, vec![1.0, -1.0, 1.0], ModelTag::TwoFactorElectricity, 0).is_ok());
    }
}
