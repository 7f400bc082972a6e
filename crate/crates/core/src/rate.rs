//! Final key-rate assembly and the secrecy-parameter fixed point.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    derive_sample_sizes, dot, e_p_upper, mcdiarmid_deviation, x_single_photon_lower,
    z_basis_estimates, SecurityBudget, CHI,
};
use crate::channel::ObservedStats;
use crate::decoy::{DecoyCoefficients, IntensityProfile};
use crate::error::{domain, Error, Result};

/// Iteration cap for [`solve_security_fixed_point`].
pub const FIXED_POINT_MAX_ITERATIONS: usize = 100;
/// Final key lengths closer than this (in bits) count as converged.
pub const FIXED_POINT_TOLERANCE_BITS: f64 = 0.5;

/// `H2(x) = -x log2 x - (1-x) log2(1-x)`, with `H2(0) = H2(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("binary entropy argument {x} outside [0, 1]"));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Shannon-limit error-correction leakage `<Q_X H2(E_X)>`.
pub fn lambda_ec(profile: &IntensityProfile, observed: &ObservedStats) -> Result<f64> {
    let x = &observed.x;
    if x.q.len() != profile.len() {
        return domain("observed statistics do not match the number of intensities");
    }
    let terms = x
        .q
        .iter()
        .zip(&x.e)
        .map(|(&q, &e)| Ok(q * binary_entropy(e)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(profile.weighted(&terms))
}

/// `b_n = p_X^2 (<e^-mu> a0_n + <mu e^-mu> a1_n (1 - H2(e_p)))`.
pub fn compute_b(
    coeffs: &DecoyCoefficients,
    profile: &IntensityProfile,
    p_x: f64,
    e_p: f64,
) -> Result<Vec<f64>> {
    if !(0.0..=0.5).contains(&e_p) {
        return domain(format!("phase error rate {e_p} outside [0, 1/2]"));
    }
    let vacuum = profile.mean(|m| (-m).exp());
    let single = profile.mean(|m| m * (-m).exp());
    let privacy = 1.0 - binary_entropy(e_p)?;
    let scale = p_x * p_x;
    Ok(coeffs
        .a0
        .iter()
        .zip(&coeffs.a1)
        .map(|(a0, a1)| scale * (vacuum * a0 + single * a1 * privacy))
        .collect())
}

/// Every intermediate quantity of a key-rate evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    /// Secure bits per pulse sent, clamped at zero.
    pub rate: f64,
    /// Unclamped rate; `-inf` when the bounds are undefined.
    pub raw_rate: f64,
    /// Final key length in bits.
    pub l_final: f64,
    pub eps_sec: f64,
    pub eps_cor: f64,
    pub e_p: f64,
    pub e_z1: f64,
    pub y_z1_lower: f64,
    pub y_x1_lower: f64,
    pub lambda_ec: f64,
    pub b: Vec<f64>,
    /// McDiarmid correction of the X-basis signal term.
    pub deviation_x: f64,
    pub s_z: f64,
    pub feasible: bool,
    /// The phase-error correction was not needed (negative radicand).
    pub vacuous_gamma: bool,
    /// Fixed-point iterations used; zero for a direct evaluation.
    pub iterations: usize,
}

impl KeyRateReport {
    fn infeasible(k: usize, eps_sec: f64, eps_cor: f64) -> Self {
        Self {
            rate: 0.0,
            raw_rate: f64::NEG_INFINITY,
            l_final: 0.0,
            eps_sec,
            eps_cor,
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
}

/// Final key length `R s_X / (p_X^2 <Q_X>)`.
pub fn final_key_length(rate: f64, s_x: f64, p_x: f64, observed: &ObservedStats) -> f64 {
    rate * s_x / (p_x * p_x * observed.mean_q_x)
}

/// Finite-key rate at a fixed secrecy parameter.
pub fn key_rate(
    profile: &IntensityProfile,
    observed: &ObservedStats,
    p_x: f64,
    s_x: f64,
    budget: &SecurityBudget,
) -> Result<KeyRateReport> {
    let coeffs = DecoyCoefficients::compute(profile)?;
    key_rate_with(&coeffs, profile, observed, p_x, s_x, budget)
}

/// [`key_rate`] with precomputed coefficients.
pub fn key_rate_with(
    coeffs: &DecoyCoefficients,
    profile: &IntensityProfile,
    observed: &ObservedStats,
    p_x: f64,
    s_x: f64,
    budget: &SecurityBudget,
) -> Result<KeyRateReport> {
    let k = profile.len();
    let sizes = derive_sample_sizes(s_x, p_x, observed)?;
    let mut report = KeyRateReport::infeasible(k, budget.eps_sec, budget.eps_cor);
    report.s_z = sizes.s_z;

    let z = z_basis_estimates(coeffs, profile, observed, &sizes, budget)?;
    report.e_z1 = z.e_z1;
    report.y_z1_lower = z.y1_lower;
    if !z.feasible {
        return Ok(report);
    }
    let y_x1 = x_single_photon_lower(coeffs, profile, observed, &sizes, budget)?;
    report.y_x1_lower = y_x1;
    let phase = e_p_upper(z.e_z1, z.y1_lower, y_x1, profile, observed, &sizes, budget)?;
    if !phase.feasible {
        return Ok(report);
    }

    let b = compute_b(coeffs, profile, p_x, phase.e_p)?;
    let signal = dot(&b, &observed.x.q);
    let deviation_x = observed.mean_q_x
        * mcdiarmid_deviation(budget.eps_test(), s_x, profile.scaled_width(&b))?;
    let leak = lambda_ec(profile, observed)?;
    let finite_size = observed.mean_q_x / s_x
        * (6.0 * (CHI / budget.eps_sec).log2() + (2.0 / budget.eps_cor).log2());
    let raw = signal - deviation_x - p_x * p_x * (leak + finite_size);

    report.raw_rate = raw;
    report.rate = raw.max(0.0);
    report.l_final = final_key_length(report.rate, s_x, p_x, observed);
    report.e_p = phase.e_p;
    report.lambda_ec = leak;
    report.b = b;
    report.deviation_x = deviation_x;
    report.feasible = true;
    report.vacuous_gamma = phase.gamma.vacuous;
    Ok(report)
}

/// Asymptotic rate: decoy bounds without any finite-size correction,
/// `e_p = e_Z1` and no raw-key length penalty.
pub fn asymptotic_key_rate(
    profile: &IntensityProfile,
    observed: &ObservedStats,
    p_x: f64,
) -> Result<f64> {
    let coeffs = DecoyCoefficients::compute(profile)?;
    let y0 = dot(&coeffs.a0, &observed.x.q).max(0.0);
    let y1 = dot(&coeffs.a1, &observed.x.q).max(0.0);
    let y1_z = dot(&coeffs.a1, &observed.z.q);
    if !(y1_z > 0.0) {
        return Ok(0.0);
    }
    let e1 = (dot(&coeffs.a2, &observed.z.error_gain()) / y1_z).clamp(0.0, 0.5);
    let vacuum = profile.mean(|m| (-m).exp());
    let single = profile.mean(|m| m * (-m).exp());
    let leak = lambda_ec(profile, observed)?;
    let raw = p_x * p_x * (vacuum * y0 + single * y1 * (1.0 - binary_entropy(e1)?) - leak);
    Ok(raw.max(0.0))
}

/// Resolves `eps_sec = kappa * l_final(eps_sec)` by fixed-point iteration
/// starting from `eps_sec = kappa * s_X`.
///
/// A zero rate at any iterate ends the iteration with an infeasible report
/// (`rate = 0`); `raw_rate` keeps the unclamped value of that iterate.
pub fn solve_security_fixed_point(
    profile: &IntensityProfile,
    observed: &ObservedStats,
    p_x: f64,
    s_x: f64,
    kappa: f64,
    eps_cor: f64,
) -> Result<KeyRateReport> {
    let coeffs = DecoyCoefficients::compute(profile)?;
    solve_security_fixed_point_with(&coeffs, profile, observed, p_x, s_x, kappa, eps_cor)
}

/// [`solve_security_fixed_point`] with precomputed coefficients.
pub fn solve_security_fixed_point_with(
    coeffs: &DecoyCoefficients,
    profile: &IntensityProfile,
    observed: &ObservedStats,
    p_x: f64,
    s_x: f64,
    kappa: f64,
    eps_cor: f64,
) -> Result<KeyRateReport> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return domain(format!("kappa = {kappa} outside (0, 1)"));
    }
    let mut eps_sec = kappa * s_x;
    let mut previous: Option<f64> = None;
    let mut trace = Vec::new();
    for iteration in 1..=FIXED_POINT_MAX_ITERATIONS {
        let budget = SecurityBudget::new(eps_sec, eps_cor)?;
        let mut report = key_rate_with(coeffs, profile, observed, p_x, s_x, &budget)?;
        report.iterations = iteration;
        if report.rate <= 0.0 {
            report.feasible = false;
            report.rate = 0.0;
            report.l_final = 0.0;
            return Ok(report);
        }
        trace.push(report.l_final);
        if let Some(prev) = previous {
            if (report.l_final - prev).abs() < FIXED_POINT_TOLERANCE_BITS {
                return Ok(report);
            }
        }
        previous = Some(report.l_final);
        eps_sec = kappa * report.l_final;
    }
    Err(Error::NoConvergence { iterations: FIXED_POINT_MAX_ITERATIONS, trace })
}
