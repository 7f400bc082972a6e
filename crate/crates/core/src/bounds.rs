//! Finite-sample corrections: McDiarmid deviation terms, the hypergeometric
//! phase-error correction and the finite-key single-photon bounds.
//!
//! Every observed combination `sum_n c_n Q_n` is an average of `s` draws of
//! a random variable taking the value `c_n / p_n` when the draw came from
//! intensity `n`. Draws without replacement form a centering sequence, so the
//! one-sided deviation of the sum is at most
//! `<Q> * Width({c_n / p_n}) * sqrt(ln(1/eps) / 2s)` except with probability
//! `eps`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::ObservedStats;
use crate::decoy::{DecoyCoefficients, IntensityProfile};
use crate::error::{domain, Result};

/// Number of sub-tests the secrecy parameter is split over: four from the
/// smooth-entropy chain rule, one for the raw key correction and four
/// concentration tests (X, Z, Z errors, phase error).
pub const CHI: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityBudget {
    /// Total secrecy failure probability.
    pub eps_sec: f64,
    /// Correctness failure probability.
    pub eps_cor: f64,
}

impl SecurityBudget {
    pub fn new(eps_sec: f64, eps_cor: f64) -> Result<Self> {
        for (name, v) in [("eps_sec", eps_sec), ("eps_cor", eps_cor)] {
            if !(v > 0.0 && v < 1.0) {
                return domain(format!("{name} = {v} outside (0, 1)"));
            }
        }
        Ok(Self { eps_sec, eps_cor })
    }

    /// Failure probability of each concentration test.
    pub fn eps_test(&self) -> f64 {
        self.eps_sec / CHI
    }
}

/// Expected sample counts entering the deviation terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizes {
    /// X-basis sifted key length, i.e. the raw key length.
    pub s_x: f64,
    /// Z-basis detections.
    pub s_z: f64,
    /// Z-basis detections in error.
    pub s_z_e: f64,
}

/// Output of [`z_basis_estimates`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZBasisEstimates {
    /// Lower bound on the Z-basis single-photon yield.
    pub y1_lower: f64,
    /// Upper bound on `sum_n a2_n Q_{Z,n} E_{Z,n}`.
    pub e1_product_upper: f64,
    /// Single-photon error rate bound, in `[0, 1/2]`.
    pub e_z1: f64,
    pub delta_z: f64,
    pub delta_z_e: f64,
    /// `false` when `y1_lower <= 0`; the key rate is then zero.
    pub feasible: bool,
}

/// Result of [`gamma_bar`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaBar {
    pub value: f64,
    /// The radicand was negative: no correction is required at this failure
    /// probability, and `value` is 0.
    pub vacuous: bool,
}

/// One-sided deviation `w * sqrt(ln(1/eps) / (2 s))`.
pub fn mcdiarmid_deviation(eps: f64, s: f64, w: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return domain(format!("failure probability {eps} outside (0, 1]"));
    }
    if !(s >= 1.0) {
        return domain(format!("sample count {s} below 1"));
    }
    if !(w >= 0.0) || !w.is_finite() {
        return domain(format!("width {w} is not a finite non-negative number"));
    }
    Ok(w * ((1.0 / eps).ln() / (2.0 * s)).sqrt())
}

/// Hypergeometric correction between the single-photon Z-basis error rate
/// and the phase error rate:
/// `sqrt((c+d)(1-b)b/(cd) * ln((c+d) / (2 pi c d (1-b) b a^2)))`.
pub fn gamma_bar(a: f64, b: f64, c: f64, d: f64) -> Result<GammaBar> {
    if !(a > 0.0 && a < 1.0) {
        return domain(format!("failure probability {a} outside (0, 1)"));
    }
    if !(0.0..=1.0).contains(&b) {
        return domain(format!("error rate {b} outside [0, 1]"));
    }
    if !(c > 0.0 && c.is_finite()) || !(d > 0.0 && d.is_finite()) {
        return domain(format!("sample sizes must be positive (c = {c}, d = {d})"));
    }
    let spread = (1.0 - b) * b;
    if spread == 0.0 {
        return Ok(GammaBar { value: 0.0, vacuous: false });
    }
    let ratio = (c + d) / (c * d);
    let log_arg = ratio / (2.0 * PI * spread * a * a);
    let log = if log_arg.is_finite() && log_arg > 0.0 {
        log_arg.ln()
    } else {
        // a^2 underflows or the quotient overflows
        ratio.ln() - (2.0 * PI).ln() - spread.ln() - 2.0 * a.ln()
    };
    let radicand = ratio * spread * log;
    if radicand < 0.0 {
        return Ok(GammaBar { value: 0.0, vacuous: true });
    }
    Ok(GammaBar { value: radicand.sqrt(), vacuous: false })
}

/// `s_Z = (1-p_X)^2 s_X <Q_Z> / (p_X^2 <Q_X>)` and `s_Z^e = s_Z <Q_Z E_Z> / <Q_Z>`.
pub fn derive_sample_sizes(s_x: f64, p_x: f64, observed: &ObservedStats) -> Result<SampleSizes> {
    if !(p_x > 0.0 && p_x < 1.0) {
        return domain(format!("p_X = {p_x} outside (0, 1)"));
    }
    if !(s_x >= 1.0) {
        return domain(format!("s_X = {s_x} below 1"));
    }
    if !(observed.mean_q_x > 0.0) || !(observed.mean_q_z > 0.0) {
        return Err(crate::Error::DegenerateChannel("mean gain is zero".into()));
    }
    let p_z = 1.0 - p_x;
    let s_z = p_z * p_z * s_x * observed.mean_q_z / (p_x * p_x * observed.mean_q_x);
    let s_z_e = s_z * observed.mean_qe_z / observed.mean_q_z;
    Ok(SampleSizes { s_x, s_z, s_z_e })
}

/// Finite-key bounds on the Z-basis single-photon yield and error rate.
pub fn z_basis_estimates(
    coeffs: &DecoyCoefficients,
    profile: &IntensityProfile,
    observed: &ObservedStats,
    sizes: &SampleSizes,
    budget: &SecurityBudget,
) -> Result<ZBasisEstimates> {
    let eps = budget.eps_test();
    let z = &observed.z;
    let s_z = sizes.s_z.max(1.0);

    let y1_observed = dot(&coeffs.a1, &z.q);
    let delta_z =
        observed.mean_q_z * mcdiarmid_deviation(eps, s_z, profile.scaled_width(&coeffs.a1))?;
    let y1_lower = y1_observed - delta_z;

    let e1_observed = dot(&coeffs.a2, &z.error_gain());
    // <Q_Z E_Z> sqrt(ln(1/eps) / 2 s_Z^e) rewritten with s_Z^e = s_Z <Q_Z E_Z> / <Q_Z>.
    let delta_z_e = (observed.mean_q_z * observed.mean_qe_z).sqrt()
        * mcdiarmid_deviation(eps, s_z, profile.scaled_width(&coeffs.a2))?;
    let e1_product_upper = e1_observed + delta_z_e;

    if !(y1_lower > 0.0) {
        return Ok(ZBasisEstimates {
            y1_lower,
            e1_product_upper,
            e_z1: 0.5,
            delta_z,
            delta_z_e,
            feasible: false,
        });
    }
    let e_z1 = (e1_product_upper / y1_lower).clamp(0.0, 0.5);
    Ok(ZBasisEstimates { y1_lower, e1_product_upper, e_z1, delta_z, delta_z_e, feasible: true })
}

/// Finite-key lower bound on the X-basis single-photon yield, used for the
/// `d` argument of the phase-error correction. Carries the X-basis test
/// failure probability.
pub fn x_single_photon_lower(
    coeffs: &DecoyCoefficients,
    profile: &IntensityProfile,
    observed: &ObservedStats,
    sizes: &SampleSizes,
    budget: &SecurityBudget,
) -> Result<f64> {
    let observed_sum = dot(&coeffs.a1, &observed.x.q);
    let delta = observed.mean_q_x
        * mcdiarmid_deviation(budget.eps_test(), sizes.s_x, profile.scaled_width(&coeffs.a1))?;
    Ok(observed_sum - delta)
}

/// Result of [`e_p_upper`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorBound {
    /// Upper bound on the phase error rate, in `[0, 1/2]`.
    pub e_p: f64,
    pub gamma: GammaBar,
    /// `false` when the single-photon event counts `c` or `d` are not
    /// positive.
    pub feasible: bool,
}

/// `e_p <= e_Z1 + gamma_bar(eps, e_Z1, c, d)` with
/// `c = s_Z Y_Z1 <mu e^-mu> / <Q_Z>` and `d = s_X Y_X1 <mu e^-mu> / <Q_X>`.
pub fn e_p_upper(
    e_z1: f64,
    y_z1: f64,
    y_x1: f64,
    profile: &IntensityProfile,
    observed: &ObservedStats,
    sizes: &SampleSizes,
    budget: &SecurityBudget,
) -> Result<PhaseErrorBound> {
    if !(0.0..=0.5).contains(&e_z1) {
        return domain(format!("e_Z1 = {e_z1} outside [0, 1/2]"));
    }
    let single_photon_fraction = profile.mean(|m| m * (-m).exp());
    let c = sizes.s_z * y_z1 * single_photon_fraction / observed.mean_q_z;
    let d = sizes.s_x * y_x1 * single_photon_fraction / observed.mean_q_x;
    if !(c > 0.0 && c.is_finite()) || !(d > 0.0 && d.is_finite()) {
        return Ok(PhaseErrorBound {
            e_p: 0.5,
            gamma: GammaBar { value: 0.0, vacuous: false },
            feasible: false,
        });
    }
    let gamma = gamma_bar(budget.eps_test(), e_z1, c, d)?;
    Ok(PhaseErrorBound { e_p: (e_z1 + gamma.value).min(0.5), gamma, feasible: true })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelParams;
    use approx::assert_relative_eq;

    #[test]
    fn deviation_values() {
        assert_eq!(mcdiarmid_deviation(1.0, 100.0, 5.0).unwrap(), 0.0);
        let e2 = (-2.0f64).exp();
        assert_relative_eq!(mcdiarmid_deviation(e2, 1.0, 1.0).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(mcdiarmid_deviation(e2, 4.0, 3.0).unwrap(), 1.5, max_relative = 1e-15);
        assert!(mcdiarmid_deviation(0.0, 10.0, 1.0).is_err());
        assert!(mcdiarmid_deviation(0.1, 0.5, 1.0).is_err());
        assert!(mcdiarmid_deviation(0.1, 10.0, -1.0).is_err());
    }

    #[test]
    fn deviation_monotonicity() {
        let eps = [1e-12, 1e-9, 1e-6, 1e-3, 0.1, 0.5];
        let sizes = [1.0, 10.0, 1e3, 1e6, 1e9];
        for w in eps.windows(2) {
            assert!(mcdiarmid_deviation(w[0], 1e4, 2.0).unwrap() > mcdiarmid_deviation(w[1], 1e4, 2.0).unwrap());
        }
        for s in sizes.windows(2) {
            assert!(mcdiarmid_deviation(1e-6, s[0], 2.0).unwrap() > mcdiarmid_deviation(1e-6, s[1], 2.0).unwrap());
        }
        let base = mcdiarmid_deviation(1e-6, 1e4, 1.0).unwrap();
        for w in [0.0, 0.5, 3.0, 17.0] {
            assert_relative_eq!(mcdiarmid_deviation(1e-6, 1e4, w).unwrap(), w * base, max_relative = 1e-15);
        }
    }

    #[test]
    fn gamma_bar_limits() {
        for b in [0.0, 1.0] {
            let g = gamma_bar(1e-10, b, 1e4, 1e5).unwrap();
            assert_eq!(g, GammaBar { value: 0.0, vacuous: false });
        }
        let g = gamma_bar(0.5, 0.5, 1e8, 1e8).unwrap();
        assert_eq!(g, GammaBar { value: 0.0, vacuous: true });
        assert!(gamma_bar(0.0, 0.1, 1.0, 1.0).is_err());
        assert!(gamma_bar(1.0, 0.1, 1.0, 1.0).is_err());
        assert!(gamma_bar(0.1, 0.1, 0.0, 1.0).is_err());
        assert!(gamma_bar(0.1, 0.1, 1.0, -1.0).is_err());
    }

    #[test]
    fn gamma_bar_direct_formula() {
        let (a, b, c, d) = (1e-10f64, 0.05f64, 1e4f64, 1e4f64);
        let expected = ((c + d) * (1.0 - b) * b / (c * d)
            * ((c + d) / (2.0 * PI * c * d * (1.0 - b) * b * a * a)).ln())
        .sqrt();
        assert_relative_eq!(gamma_bar(a, b, c, d).unwrap().value, expected, max_relative = 1e-14);
    }

    #[test]
    fn gamma_bar_grows_as_counts_shrink() {
        let mut last = 0.0;
        for c in [1e9, 1e8, 1e7, 1e6, 1e5, 1e4] {
            let g = gamma_bar(1e-10, 0.05, c, 10.0 * c).unwrap().value;
            assert!(g > last);
            last = g;
        }
    }

    #[test]
    fn sample_sizes() {
        let profile = IntensityProfile::new(vec![0.5, 0.2, 1e-6], vec![1.0 / 3.0; 3]).unwrap();
        let obs = ChannelParams::default().observe(&profile).unwrap();
        let s = derive_sample_sizes(1e6, 0.5, &obs).unwrap();
        assert_relative_eq!(s.s_z, 1e6, max_relative = 1e-14);
        let s = derive_sample_sizes(8.1e5, 0.9, &obs).unwrap();
        assert_relative_eq!(s.s_z, 1e4, max_relative = 1e-12);
        assert_relative_eq!(s.s_z_e / s.s_z, obs.mean_qe_z / obs.mean_q_z, max_relative = 1e-14);
        assert!(derive_sample_sizes(1e6, 0.0, &obs).is_err());
        assert!(derive_sample_sizes(1e6, 1.0, &obs).is_err());
    }

    fn setup(s_z: f64, eps: f64) -> (DecoyCoefficients, IntensityProfile, ObservedStats, SampleSizes, SecurityBudget) {
        let profile = IntensityProfile::new(vec![0.5, 0.2, 1e-6], vec![1.0 / 3.0; 3]).unwrap();
        let coeffs = DecoyCoefficients::compute(&profile).unwrap();
        let obs = ChannelParams::default().observe(&profile).unwrap();
        let sizes = derive_sample_sizes(s_z, 0.5, &obs).unwrap();
        let budget = SecurityBudget::new((eps * CHI).min(0.999_999), 1e-15).unwrap();
        (coeffs, profile, obs, sizes, budget)
    }

    fn asymptotic_ratio(coeffs: &DecoyCoefficients, obs: &ObservedStats) -> f64 {
        dot(&coeffs.a2, &obs.z.error_gain()) / dot(&coeffs.a1, &obs.z.q)
    }

    #[test]
    fn vanishing_deviation_gives_asymptotic_ratio() {
        let (coeffs, profile, obs, sizes, _) = setup(1e6, 0.1);
        let budget = SecurityBudget { eps_sec: CHI, eps_cor: 1e-15 };
        let est = z_basis_estimates(&coeffs, &profile, &obs, &sizes, &budget).unwrap();
        assert_eq!(est.delta_z, 0.0);
        assert_eq!(est.delta_z_e, 0.0);
        assert_relative_eq!(est.e_z1, asymptotic_ratio(&coeffs, &obs), max_relative = 1e-14);
    }

    #[test]
    fn e_z1_approaches_asymptote_monotonically() {
        let mut gaps = Vec::new();
        for s in [1e4, 1e6, 1e8] {
            let (coeffs, profile, obs, sizes, budget) = setup(s, 1e-10 / CHI);
            let est = z_basis_estimates(&coeffs, &profile, &obs, &sizes, &budget).unwrap();
            gaps.push(est.e_z1 - asymptotic_ratio(&coeffs, &obs));
        }
        assert!(gaps.iter().all(|g| *g >= 0.0));
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
        assert!(gaps[2] < 1e-2);
    }

    #[test]
    fn feasibility_smoke() {
        let (coeffs, profile, obs, sizes, budget) = setup(1e6, 1e-10 / CHI);
        let est = z_basis_estimates(&coeffs, &profile, &obs, &sizes, &budget).unwrap();
        assert!(est.feasible);
        assert!(est.y1_lower > 0.0);
        assert!((0.0..=0.5).contains(&est.e_z1));
    }

    #[test]
    fn infeasible_when_deviation_swamps_yield() {
        let (coeffs, profile, obs, sizes, budget) = setup(1.0, 1e-10 / CHI);
        let est = z_basis_estimates(&coeffs, &profile, &obs, &sizes, &budget).unwrap();
        assert!(!est.feasible);
        assert!(est.y1_lower <= 0.0);
    }

    #[test]
    fn phase_error_cases() {
        let (_, profile, obs, sizes, budget) = setup(1e6, 1e-10 / CHI);
        let zero = e_p_upper(0.0, 8e-4, 8e-4, &profile, &obs, &sizes, &budget).unwrap();
        assert_eq!(zero.e_p, 0.0);
        let ep = e_p_upper(0.03, 8e-4, 8e-4, &profile, &obs, &sizes, &budget).unwrap();
        assert!(ep.e_p > 0.03 && ep.e_p <= 0.5);
        let halved = SecurityBudget { eps_sec: budget.eps_sec / 2.0, ..budget };
        let ep2 = e_p_upper(0.03, 8e-4, 8e-4, &profile, &obs, &sizes, &halved).unwrap();
        assert!(ep2.e_p >= ep.e_p);
        let bad = e_p_upper(0.03, -1e-4, 8e-4, &profile, &obs, &sizes, &budget).unwrap();
        assert!(!bad.feasible);
        // A huge failure probability with large counts makes the radicand negative.
        let loose = SecurityBudget { eps_sec: 0.9 * CHI, eps_cor: 1e-15 };
        let big = SampleSizes { s_x: 1e12, s_z: 1e12, s_z_e: 1e10 };
        let v = e_p_upper(0.03, 8e-4, 8e-4, &profile, &obs, &big, &loose).unwrap();
        assert!(v.gamma.vacuous);
        assert_eq!(v.e_p, 0.03);
    }
}
