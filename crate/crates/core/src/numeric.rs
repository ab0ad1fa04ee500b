//! Small numerical kernels shared by the pricers: the normal CDF, compensated
//! summation, Poisson tail masses and Gauss-Hermite rules.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

use crate::error::{Error, Result};

/// Standard normal cumulative distribution function.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Neumaier (improved Kahan) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    statrs::function::factorial::ln_factorial(n)
}

/// Poisson probability mass `P(N = n)` for mean `mu`, evaluated in log space.
pub fn poisson_pmf(mu: f64, n: u64) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-mu + n as f64 * mu.ln() - ln_factorial(n)).exp()
}

/// Upper bound on `P(N > d)` for `N ~ Poisson(mu)`.
///
/// Far tails are summed term by term and closed with a geometric bound on the
/// remainder, so the result never underestimates the true mass.
pub fn poisson_tail(mu: f64, d: u64) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    if (d as f64) + 1.0 <= mu {
        // Bulk of the distribution lies beyond d: use the complement.
        let head = compensated_sum((0..=d).map(|n| poisson_pmf(mu, n)));
        return (1.0 - head).clamp(0.0, 1.0);
    }
    let mut n = d + 1;
    let mut term = poisson_pmf(mu, n);
    let mut acc = CompensatedSum::new();
    loop {
        acc.add(term);
        let ratio = mu / (n as f64 + 1.0);
        let next = term * ratio;
        // Terms beyond `next` decay at least geometrically with `ratio`.
        if next <= acc.value() * 1e-17 || next < f64::MIN_POSITIVE {
            let rest = next / (1.0 - ratio);
            return (acc.value() + rest).min(1.0);
        }
        term = next;
        n += 1;
    }
}

/// Gauss-Hermite rule in probabilists' form: `E[g(Z)] ~ sum_i w_i g(z_i)` for `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub const MIN_NODES: usize = 8;

    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_NODES {
            return Err(Error::invalid(
                "n_nodes",
                format!("need at least {} nodes, got {n}", Self::MIN_NODES),
            ));
        }
        if n > 400 {
            return Err(Error::invalid("n_nodes", format!("at most 400 nodes supported, got {n}")));
        }
        let (x, w) = physicists_rule(n);
        let sqrt_pi = PI.sqrt();
        let nodes = x.iter().map(|&xi| xi * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().map(|&wi| wi / sqrt_pi).collect();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[g(Z)]` for standard normal `Z`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        compensated_sum(self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * g(z)))
    }
}

// Roots of H_n by Newton iteration on the orthonormal recurrence, weight e^{-x^2}.
fn physicists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^{-1/4}
    const EPS: f64 = 1e-15;
    const MAX_ITER: usize = 100;

    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..MAX_ITER {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= EPS * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_points() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((norm_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-17);
        assert!(norm_cdf(-40.0) >= 0.0);
        assert_eq!(norm_cdf(f64::INFINITY), 1.0);
        assert_eq!(norm_cdf(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut values = vec![1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(values.iter().copied()), 2.0);
        values.reverse();
        assert_eq!(compensated_sum(values), 2.0);
    }

    #[test]
    fn gauss_hermite_moments() {
        for n in [8, 16, 64, 128] {
            let gh = GaussHermite::new(n).unwrap();
            assert!((gh.expect(|_| 1.0) - 1.0).abs() < 1e-13, "n={n}");
            assert!(gh.expect(|z| z).abs() < 1e-13);
            assert!((gh.expect(|z| z * z) - 1.0).abs() < 1e-12);
            assert!((gh.expect(|z| z.powi(4)) - 3.0).abs() < 1e-11);
            // E[e^{aZ}] = e^{a^2/2}; not polynomial, so only checked on larger rules.
            if n >= 16 {
                assert!((gh.expect(|z| (0.7 * z).exp()) - (0.245_f64).exp()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gauss_hermite_rejects_small_rules() {
        assert!(GaussHermite::new(7).is_err());
    }

    #[test]
    fn poisson_tail_matches_direct_sum() {
        for &mu in &[0.1, 1.0, 2.0, 7.5] {
            for d in 0..30u64 {
                let head = compensated_sum((0..=d).map(|n| poisson_pmf(mu, n)));
                let tail = poisson_tail(mu, d);
                assert!(tail >= 0.0 && tail <= 1.0);
                assert!((tail - (1.0 - head)).abs() < 1e-14, "mu={mu} d={d}");
            }
        }
        assert_eq!(poisson_tail(0.0, 0), 0.0);
        // P(Poisson(2) > 20), independently evaluated to 30 digits.
        let tail = poisson_tail(2.0, 20);
        assert!((tail - 6.108_071_948_390_485e-15).abs() < 1e-20);
    }
}
