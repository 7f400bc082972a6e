//! Brute-force and Monte Carlo checks of the decoy bounds and the deviation
//! terms.
//!
//! The sources here are exactly truncated: yields vanish above photon number
//! `M`, so the forward sums are exact and any violation is a real failure of
//! the bound, not a truncation artifact.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::mcdiarmid_deviation;
use crate::decoy::{vacuum_coefficients, width, DecoyCoefficients, MAX_INTENSITIES};
use crate::error::{domain, Error, Result};

/// Default truncation order. Poisson mass above 12 photons at `mu <= 1` is
/// below `1e-12`.
pub const DEFAULT_TRUNCATION: usize = 12;

/// Absolute slack allowed per bound evaluation.
pub const VALIDITY_TOLERANCE: f64 = 1e-9;

/// A photon-number-resolved source: yield `y[m]` and error rate `e[m]` for
/// `m = 0..=M`, zero yield above `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSource {
    pub y: Vec<f64>,
    pub e: Vec<f64>,
}

impl TruncatedSource {
    pub fn new(y: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        if y.len() < 2 || y.len() != e.len() {
            return domain(format!(
                "need matching yield and error vectors of length >= 2, got {} and {}",
                y.len(),
                e.len()
            ));
        }
        if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return domain("yields must lie in [0, 1]");
        }
        if e.iter().any(|v| !(0.0..=0.5).contains(v)) {
            return domain("error rates must lie in [0, 1/2]");
        }
        Ok(Self { y, e })
    }

    /// Uniformly random yields in `[0, 1]` and error rates in `[0, 1/2]`.
    pub fn random(truncation: usize, rng: &mut impl Rng) -> Self {
        let y = (0..=truncation).map(|_| rng.gen::<f64>()).collect();
        let e = (0..=truncation).map(|_| 0.5 * rng.gen::<f64>()).collect();
        Self { y, e }
    }

    /// Truncation order `M`.
    pub fn truncation(&self) -> usize {
        self.y.len() - 1
    }
}

/// Exact gain and error gain `(Q, QE)` of a Poissonian source at intensity
/// `mu`.
pub fn truncated_poisson_forward(source: &TruncatedSource, mu: f64) -> (f64, f64) {
    let mut weight = (-mu).exp();
    let mut q = 0.0;
    let mut qe = 0.0;
    for (m, (y, e)) in source.y.iter().zip(&source.e).enumerate() {
        if m > 0 {
            weight *= mu / m as f64;
        }
        q += weight * y;
        qe += weight * y * e;
    }
    (q, qe)
}

/// Violation counts from [`bound_validity_check`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub k: usize,
    pub trials: usize,
    pub vacuum_violations: usize,
    pub single_photon_violations: usize,
    pub error_violations: usize,
    /// Largest amount by which any bound was exceeded (0 if none).
    pub worst_excess: f64,
}

impl ValidityReport {
    pub fn violations(&self) -> usize {
        self.vacuum_violations + self.single_photon_violations + self.error_violations
    }

    fn merge(mut self, other: Self) -> Self {
        self.trials += other.trials;
        self.vacuum_violations += other.vacuum_violations;
        self.single_photon_violations += other.single_photon_violations;
        self.error_violations += other.error_violations;
        self.worst_excess = self.worst_excess.max(other.worst_excess);
        self
    }
}

/// Checks the three decoy bounds on random truncated sources and random
/// intensity sets with consecutive gaps of at least 0.1.
///
/// `k = 2` runs the formula as literally printed, where the single-photon
/// bound rests on one intensity; expect violations there.
pub fn bound_validity_check(trials: usize, k: usize, seed: u64) -> Result<ValidityReport> {
    if !(2..=MAX_INTENSITIES).contains(&k) {
        return domain(format!("k = {k} outside 2..={MAX_INTENSITIES}"));
    }
    let reports: Vec<ValidityReport> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<ValidityReport> {
            let mut rng = trial_rng(seed, trial);
            let mu = random_intensities(k, 0.1, &mut rng);
            let source = TruncatedSource::random(DEFAULT_TRUNCATION, &mut rng);
            let (a0, a1, a2) = if k == 2 {
                literal_two_intensity(&mu)?
            } else {
                let c = DecoyCoefficients::from_intensities(&mu)?;
                (c.a0, c.a1, c.a2)
            };
            let forward: Vec<(f64, f64)> =
                mu.iter().map(|&m| truncated_poisson_forward(&source, m)).collect();
            let y0_est: f64 = a0.iter().zip(&forward).map(|(a, (q, _))| a * q).sum();
            let y1_est: f64 = a1.iter().zip(&forward).map(|(a, (q, _))| a * q).sum();
            let e1_est: f64 = a2.iter().zip(&forward).map(|(a, (_, qe))| a * qe).sum();

            let excess = [
                y0_est - source.y[0],
                y1_est - source.y[1],
                source.y[1] * source.e[1] - e1_est,
            ];
            let mut report = ValidityReport { k, trials: 1, ..Default::default() };
            report.vacuum_violations = usize::from(excess[0] > VALIDITY_TOLERANCE);
            report.single_photon_violations = usize::from(excess[1] > VALIDITY_TOLERANCE);
            report.error_violations = usize::from(excess[2] > VALIDITY_TOLERANCE);
            report.worst_excess = excess.iter().copied().fold(0.0, f64::max);
            Ok(report)
        })
        .collect::<Result<_>>()?;
    Ok(reports
        .into_iter()
        .fold(ValidityReport { k, ..Default::default() }, ValidityReport::merge))
}

/// The printed formulas at `k = 2`: `k0 = 1`, the single-photon sum runs over
/// the second intensity only and every symmetric sum is empty (equal to 1).
fn literal_two_intensity(mu: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let a0 = vacuum_coefficients(mu)?;
    let (hi, lo) = (mu[0], mu[1]);
    let a1 = vec![0.0, -lo.exp() / (lo - hi)];
    let a2 = vec![hi.exp() / (hi - lo), lo.exp() / (lo - hi)];
    Ok((a0, a1, a2))
}

/// Strictly decreasing intensities in `[0, 1]` with every consecutive gap at
/// least `spacing`.
fn random_intensities(k: usize, spacing: f64, rng: &mut impl Rng) -> Vec<f64> {
    let slack = 1.0 - spacing * (k - 1) as f64;
    let lowest = rng.gen::<f64>() * 0.2 * slack;
    let budget = (slack - lowest) * rng.gen::<f64>();
    let shares: Vec<f64> = (0..k - 1).map(|_| -rng.gen::<f64>().ln()).collect();
    let total: f64 = shares.iter().sum();
    let mut mu = vec![lowest; k];
    for n in (0..k - 1).rev() {
        mu[n] = mu[n + 1] + spacing + budget * shares[n] / total;
    }
    mu
}

/// Outcome of [`coverage_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub eps: f64,
    pub s: usize,
    pub population: usize,
    pub trials: usize,
    /// Deviation threshold on the sample mean.
    pub threshold: f64,
    pub failures: usize,
}

impl CoverageReport {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.trials as f64
    }

    /// `eps + 3 sqrt(eps / trials)`.
    pub fn allowed_rate(&self) -> f64 {
        self.eps + 3.0 * (self.eps / self.trials as f64).sqrt()
    }

    pub fn passed(&self) -> bool {
        self.failure_rate() <= self.allowed_rate()
    }
}

/// Coverage of the one-sided deviation bound for the single-photon
/// estimator.
///
/// The population has `10 s` items. Item labels follow the intensity
/// probabilities of a reference `k`-intensity profile, and each item carries
/// the value `a1_n / p_n` of its label. Each trial draws `s` items without
/// replacement and counts a failure when the population mean exceeds the
/// sample mean by more than the deviation bound.
pub fn coverage_check(eps: f64, s: usize, k: usize, trials: usize, seed: u64) -> Result<CoverageReport> {
    if !(3..=MAX_INTENSITIES).contains(&k) {
        return domain(format!("k = {k} outside 3..={MAX_INTENSITIES}"));
    }
    let (mu, p) = reference_profile(k);
    let a1 = DecoyCoefficients::from_intensities(&mu)?.a1;
    let population_size = 10 * s;
    let mut population = Vec::with_capacity(population_size);
    let mut cumulative = 0.0;
    for (n, p_n) in p.iter().enumerate() {
        cumulative += p_n;
        let end = if n + 1 == k {
            population_size
        } else {
            (cumulative * population_size as f64).round() as usize
        };
        population.resize(end.max(population.len()), a1[n] / p_n);
    }
    coverage_on_population(&population, eps, s, trials, seed)
}

/// [`coverage_check`] on an explicit population.
pub fn coverage_on_population(
    population: &[f64],
    eps: f64,
    s: usize,
    trials: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if s == 0 || s > population.len() {
        return domain(format!("cannot draw {s} items from a population of {}", population.len()));
    }
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    let threshold = mcdiarmid_deviation(eps, s as f64, width(population)?)?;
    let population_mean = population.iter().sum::<f64>() / population.len() as f64;
    let failures = (0..trials)
        .into_par_iter()
        .filter(|&trial| {
            let mut rng = trial_rng(seed, trial);
            let sample_mean = index::sample(&mut rng, population.len(), s)
                .iter()
                .map(|i| population[i])
                .sum::<f64>()
                / s as f64;
            population_mean - sample_mean > threshold
        })
        .count();
    Ok(CoverageReport { eps, s, population: population.len(), trials, threshold, failures })
}

/// Evenly spaced intensities from 0.9 down to 0 with equal probabilities.
fn reference_profile(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mu = (0..k).map(|n| 0.9 * (k - 1 - n) as f64 / (k - 1) as f64).collect();
    (mu, vec![1.0 / k as f64; k])
}

/// Independent generator stream per trial.
fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}
