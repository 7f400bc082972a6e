//! Key-rate maximization over `p_X`, the intensities and their probabilities.
//!
//! The search runs in an unconstrained space of `2k - 1` coordinates that is
//! mapped onto the feasible region:
//!
//! * `p_X` is a logistic function of the first coordinate;
//! * the smallest intensity is pinned at `mu_min`, and the `k - 1` gaps above
//!   it are their minimum values plus a softmax share of the remaining slack,
//!   which keeps `mu_1 <= mu_max`;
//! * the intensity probabilities are a softmax with the last logit fixed at 0.
//!
//! Each restart is a Nelder-Mead simplex search from a scrambled Halton
//! point. Restarts are independent and run in parallel; the merge is a
//! maximum with a lexicographic tie-break, so the outcome does not depend on
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::decoy::{DecoyCoefficients, IntensityProfile, MAX_INTENSITIES};
use crate::error::{Error, Result};
use crate::rate::{solve_security_fixed_point_with, KeyRateReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationConfig {
    /// Number of intensities.
    pub k: usize,
    /// Raw key length.
    pub s_x: f64,
    /// Fixed smallest intensity.
    pub mu_min: f64,
    /// Minimum gap between consecutive non-vacuum intensities.
    pub spacing_min: f64,
    /// Minimum gap between the two smallest intensities.
    pub vacuum_gap_min: f64,
    pub mu_max: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Relative spread of simplex values at which a search stops.
    pub tolerance: f64,
    /// Evaluation budget per restart.
    pub max_evals: usize,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            k: 3,
            s_x: 1e7,
            mu_min: 1e-6,
            spacing_min: 0.1,
            vacuum_gap_min: 0.0,
            mu_max: 1.0,
            restarts: 32,
            seed: 0,
            tolerance: 1e-10,
            max_evals: 6000,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(3..=MAX_INTENSITIES).contains(&self.k) {
            return Err(Error::Config(format!("k = {} outside 3..={MAX_INTENSITIES}", self.k)));
        }
        if !(self.s_x >= 1.0) || !self.s_x.is_finite() {
            return Err(Error::Config(format!("s_X = {} must be at least 1", self.s_x)));
        }
        if !(self.mu_min >= 0.0 && self.mu_min < self.mu_max && self.mu_max <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= mu_min < mu_max <= 1 (mu_min = {}, mu_max = {})",
                self.mu_min, self.mu_max
            )));
        }
        if !(self.spacing_min >= 0.0) || !(self.vacuum_gap_min >= 0.0) {
            return Err(Error::Config("spacings must be non-negative".into()));
        }
        if self.slack() <= 0.0 {
            return Err(Error::Config(format!(
                "no room for {} intensities in [{}, {}] with spacing {}",
                self.k, self.mu_min, self.mu_max, self.spacing_min
            )));
        }
        if self.restarts == 0 || self.max_evals == 0 {
            return Err(Error::Config("restarts and max_evals must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Number of free coordinates, `2k - 1`.
    pub fn dimension(&self) -> usize {
        2 * self.k - 1
    }

    fn min_gaps(&self) -> Vec<f64> {
        let mut gaps = vec![self.spacing_min; self.k - 1];
        gaps[self.k - 2] = self.vacuum_gap_min;
        gaps
    }

    fn slack(&self) -> f64 {
        self.mu_max - self.mu_min - self.min_gaps().iter().sum::<f64>()
    }

    /// Maps search coordinates onto a feasible parameter point.
    pub fn decode(&self, coords: &[f64]) -> ParameterPoint {
        debug_assert_eq!(coords.len(), self.dimension());
        let k = self.k;
        let c: Vec<f64> = coords.iter().map(|v| v.clamp(-COORD_LIMIT, COORD_LIMIT)).collect();
        let p_x = 1.0 / (1.0 + (-c[0]).exp());

        let shares: Vec<f64> = c[1..k].iter().map(|v| v.exp()).collect();
        let denom = 1.0 + shares.iter().sum::<f64>();
        let slack = self.slack();
        let mut mu = vec![0.0; k];
        mu[k - 1] = self.mu_min;
        for (n, (min_gap, share)) in self.min_gaps().iter().zip(&shares).enumerate().rev() {
            mu[n] = mu[n + 1] + min_gap + slack * share / denom;
        }
        mu[0] = mu[0].min(self.mu_max);

        let weights: Vec<f64> = c[k..].iter().map(|v| v.exp()).chain(std::iter::once(1.0)).collect();
        let total: f64 = weights.iter().sum();
        let p_mu = weights.iter().map(|w| w / total).collect();
        ParameterPoint { p_x, mu, p_mu }
    }
}

const COORD_LIMIT: f64 = 30.0;

/// Objective values at or above this mark points with undefined bounds;
/// every defined rate is far below it.
const INFEASIBLE_FLOOR: f64 = 1.0;

/// One protocol parameter choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub p_x: f64,
    pub mu: Vec<f64>,
    pub p_mu: Vec<f64>,
}

impl ParameterPoint {
    pub fn profile(&self) -> Result<IntensityProfile> {
        IntensityProfile::new(self.mu.clone(), self.p_mu.clone())
    }
}

/// Evaluates the fixed-point key rate at a parameter point on the model
/// channel.
pub fn evaluate_point(
    channel: &ChannelParams,
    point: &ParameterPoint,
    s_x: f64,
    kappa: f64,
    eps_cor: f64,
) -> Result<KeyRateReport> {
    let profile = point.profile()?;
    let observed = channel.observe(&profile)?;
    let coeffs = DecoyCoefficients::compute(&profile)?;
    solve_security_fixed_point_with(&coeffs, &profile, &observed, point.p_x, s_x, kappa, eps_cor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_p_x: f64,
    pub best_mu: Vec<f64>,
    pub best_p_mu: Vec<f64>,
    pub best_report: KeyRateReport,
    /// Objective evaluations over all restarts.
    pub evals: usize,
    /// At least one restart met the tolerance and the best point is feasible.
    pub converged: bool,
}

impl OptimizationResult {
    pub fn point(&self) -> ParameterPoint {
        ParameterPoint { p_x: self.best_p_x, mu: self.best_mu.clone(), p_mu: self.best_p_mu.clone() }
    }
}

/// Maximizes the fixed-point key rate; deterministic for a given seed.
pub fn optimize(
    channel: &ChannelParams,
    config: &OptimizationConfig,
    kappa: f64,
    eps_cor: f64,
) -> Result<OptimizationResult> {
    config.validate()?;
    channel.validate()?;
    if !(kappa > 0.0 && kappa < 1.0) || !(eps_cor > 0.0 && eps_cor < 1.0) {
        return Err(Error::Config(format!("kappa = {kappa} and eps_cor = {eps_cor} must lie in (0, 1)")));
    }

    // Minimized objective: the negated unclamped rate. Points where the
    // single-photon bounds are undefined score above INFEASIBLE_FLOOR, graded
    // by how far the yield bound is below zero so the simplex can walk out.
    let objective = |coords: &[f64]| -> f64 {
        let point = config.decode(coords);
        match evaluate_point(channel, &point, config.s_x, kappa, eps_cor) {
            Ok(report) if report.raw_rate.is_finite() => -report.raw_rate,
            Ok(report) => {
                let deficit = if report.y_z1_lower > 0.0 {
                    -report.y_x1_lower
                } else {
                    -report.y_z1_lower
                };
                INFEASIBLE_FLOOR + deficit.max(0.0)
            }
            Err(_) => f64::INFINITY,
        }
    };

    let starts = start_points(config);
    let runs: Vec<SearchOutcome> = starts
        .par_iter()
        .map(|x0| refine(&objective, x0, config))
        .collect();

    let evals = runs.iter().map(|r| r.evals).sum();
    let best = runs
        .iter()
        .filter(|r| r.value < INFEASIBLE_FLOOR)
        .min_by(|a, b| {
            a.value
                .total_cmp(&b.value)
                .then_with(|| lexicographic(&a.point, &b.point))
        });

    let Some(best) = best else {
        let point = config.decode(&starts[0]);
        let mut report = evaluate_point(channel, &point, config.s_x, kappa, eps_cor)
            .unwrap_or_else(|_| placeholder_report(config.k));
        report.rate = 0.0;
        report.feasible = false;
        return Ok(OptimizationResult {
            best_p_x: point.p_x,
            best_mu: point.mu,
            best_p_mu: point.p_mu,
            best_report: report,
            evals,
            converged: false,
        });
    };

    let point = config.decode(&best.point);
    let report = evaluate_point(channel, &point, config.s_x, kappa, eps_cor)?;
    let converged = runs.iter().any(|r| r.converged) && report.raw_rate.is_finite();
    Ok(OptimizationResult {
        best_p_x: point.p_x,
        best_mu: point.mu,
        best_p_mu: point.p_mu,
        best_report: report,
        evals,
        converged,
    })
}

fn placeholder_report(k: usize) -> KeyRateReport {
    KeyRateReport {
        rate: 0.0,
        raw_rate: f64::NEG_INFINITY,
        l_final: 0.0,
        eps_sec: f64::NAN,
        eps_cor: f64::NAN,
        e_p: 0.5,
        e_z1: 0.5,
        y_z1_lower: 0.0,
        y_x1_lower: 0.0,
        lambda_ec: 0.0,
        b: vec![0.0; k],
        deviation_x: 0.0,
        s_z: 0.0,
        feasible: false,
        vacuous_gamma: false,
        iterations: 0,
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

const PRIMES: [u32; 19] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67];

fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let base = base as u64;
    let mut inv = 1.0 / base as f64;
    let mut result = 0.0;
    while index > 0 {
        result += (index % base) as f64 * inv;
        index /= base;
        inv /= base as f64;
    }
    result
}

/// Halton points with a seeded uniform shift (Cranley-Patterson rotation),
/// mapped to coordinate ranges that cover `p_X` in roughly `[0.3, 0.97]` and
/// moderate softmax logits.
fn start_points(config: &OptimizationConfig) -> Vec<Vec<f64>> {
    let dim = config.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (0..config.restarts)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    let u = (radical_inverse(i as u64 + 1, PRIMES[d]) + shift[d]).fract();
                    if d == 0 {
                        -0.85 + 4.3 * u
                    } else {
                        -2.5 + 5.0 * u
                    }
                })
                .collect()
        })
        .collect()
}

struct SearchOutcome {
    point: Vec<f64>,
    value: f64,
    evals: usize,
    converged: bool,
}

/// Nelder-Mead from `x0`, restarted from its own optimum with a fresh simplex
/// until a restart stops improving.
fn refine(f: &impl Fn(&[f64]) -> f64, x0: &[f64], config: &OptimizationConfig) -> SearchOutcome {
    let mut point = x0.to_vec();
    let mut value = f(&point);
    let mut evals = 1;
    let mut converged = false;
    let mut step = 0.5;
    for _ in 0..4 {
        let run = nelder_mead(f, &point, step, config.tolerance, config.max_evals);
        evals += run.evals;
        let improved = run.value < value
            && (value.is_infinite() || (value - run.value) > config.tolerance * value.abs());
        if run.value <= value {
            point = run.point;
            value = run.value;
        }
        converged |= run.converged;
        if !improved {
            break;
        }
        step = 0.1;
    }
    SearchOutcome { point, value, evals, converged }
}

struct SimplexRun {
    point: Vec<f64>,
    value: f64,
    evals: usize,
    converged: bool,
}

/// Adaptive Nelder-Mead (dimension-dependent coefficients) minimizing `f`.
fn nelder_mead(
    f: &impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    tolerance: f64,
    max_evals: usize,
) -> SimplexRun {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = f(&x);
        simplex.push((x, v));
    }
    let mut evals = n + 1;
    let mut converged = false;

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best.is_infinite() {
            break;
        }
        let spread = simplex
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if worst.is_finite() && (worst - best).abs() <= tolerance * best.abs().max(1e-300) && spread < 1e-6 {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / nf)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect()
        };

        let xr = along(alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(beta);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let x = along(gamma);
            let v = f(&x);
            (x, v)
        } else {
            let x = along(-gamma);
            let v = f(&x);
            (x, v)
        };
        evals += 1;
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink towards the best vertex
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = anchor.iter().zip(&vertex.0).map(|(a, v)| a + delta * (v - a)).collect();
            let v = f(&x);
            *vertex = (x, v);
        }
        evals += n;
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (point, value) = simplex.swap_remove(0);
    SimplexRun { point, value, evals, converged }
}
