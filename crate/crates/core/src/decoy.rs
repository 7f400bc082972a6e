//! Decoy-state linear combinations.
//!
//! For a phase-randomized Poissonian source the observed gains satisfy
//! `Q_n e^{mu_n} = sum_m Y_m mu_n^m / m!`. Weighting these identities with
//! divided-difference style coefficients cancels the low photon-number terms
//! and leaves sign-definite remainders, which yields
//!
//! * `sum_n a0[n] Q_n <= Y_0`
//! * `sum_n a1[n] Q_n <= Y_1`
//! * `sum_n a2[n] Q_n E_n >= Y_1 e_1`
//!
//! `a0` and `a2` use the node set `k0..=k` (1-based) where `k0 = 1` for even
//! `k` and `2` for odd `k`. `a1` uses the complementary-parity node set
//! `(3 - k0)..=k`; the parity of the node count decides the sign of the
//! neglected higher-order terms, which is what makes `a1` a lower bound while
//! `a2` is an upper bound.

use crate::error::{domain, Error, Result};

/// Largest supported number of intensities. Beyond this the coefficients
/// lose too much precision for intensity gaps around 0.1.
pub const MAX_INTENSITIES: usize = 10;

/// Tolerance on `sum(p_mu) == 1`.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

/// Photon intensities `mu_1 > ... > mu_k` and the probability of using each.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityProfile {
    mu: Vec<f64>,
    p_mu: Vec<f64>,
}

impl IntensityProfile {
    pub fn new(mu: Vec<f64>, p_mu: Vec<f64>) -> Result<Self> {
        let k = mu.len();
        if k < 2 {
            return Err(Error::Profile(format!("need at least 2 intensities, got {k}")));
        }
        if k > MAX_INTENSITIES {
            return Err(Error::Profile(format!(
                "at most {MAX_INTENSITIES} intensities are supported, got {k}"
            )));
        }
        if p_mu.len() != k {
            return Err(Error::Profile(format!(
                "{k} intensities but {} probabilities",
                p_mu.len()
            )));
        }
        if mu.iter().any(|m| !m.is_finite()) || p_mu.iter().any(|p| !p.is_finite()) {
            return Err(Error::Profile("non-finite entry".into()));
        }
        if mu[0] > 1.0 {
            return Err(Error::Profile(format!("mu_1 = {} exceeds 1", mu[0])));
        }
        if mu[k - 1] < 0.0 {
            return Err(Error::Profile(format!("mu_k = {} is negative", mu[k - 1])));
        }
        if let Some(w) = mu.windows(2).position(|w| w[0] <= w[1]) {
            return Err(Error::Profile(format!(
                "intensities must be strictly decreasing (mu_{} = {} <= mu_{} = {})",
                w + 1,
                mu[w],
                w + 2,
                mu[w + 1]
            )));
        }
        if let Some(p) = p_mu.iter().find(|p| **p <= 0.0) {
            return Err(Error::Profile(format!("probability {p} is not positive")));
        }
        let total: f64 = p_mu.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::Profile(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { mu, p_mu })
    }

    /// Number of intensities `k`.
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn p_mu(&self) -> &[f64] {
        &self.p_mu
    }

    /// `k0 = 1` for even `k`, `2` for odd `k`.
    pub fn parity_offset(&self) -> usize {
        parity_offset(self.len())
    }

    /// Intensity average `<f(mu)> = sum_n p_n f(mu_n)`.
    pub fn mean(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.mu.iter().zip(&self.p_mu).map(|(&m, &p)| p * f(m)).sum()
    }

    /// Probability-weighted average of an arbitrary per-intensity vector.
    pub fn weighted(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().zip(&self.p_mu).map(|(v, p)| p * v).sum()
    }

    /// `Width({values[n] / p_n})`, the range of the per-detection random
    /// variable whose average reproduces `sum_n values[n] Q_n`.
    pub fn scaled_width(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let scaled: Vec<f64> = values.iter().zip(&self.p_mu).map(|(v, p)| v / p).collect();
        width(&scaled).expect("profile is non-empty")
    }
}

pub fn parity_offset(k: usize) -> usize {
    if k.is_multiple_of(2) {
        1
    } else {
        2
    }
}

/// Elementary symmetric polynomial `e_degree(values)`; `e_0 = 1`.
pub fn elementary_symmetric(values: &[f64], degree: usize) -> Result<f64> {
    if degree > values.len() {
        return domain(format!(
            "degree {degree} exceeds the number of values ({})",
            values.len()
        ));
    }
    // e[j] after processing a prefix of the values.
    let mut e = vec![0.0; degree + 1];
    e[0] = 1.0;
    for (i, &x) in values.iter().enumerate() {
        for j in (1..=degree.min(i + 1)).rev() {
            e[j] += x * e[j - 1];
        }
    }
    Ok(e[degree])
}

/// `Width(S) = sup S - inf S`.
pub fn width(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return domain("width of an empty set");
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(hi - lo)
}

/// Coefficients `a0`, `a1`, `a2` (indexed `0..k`, zeros outside each
/// summation range) together with the parity offset `k0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoyCoefficients {
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub k0: usize,
}

impl DecoyCoefficients {
    /// Coefficients for a validated profile. They depend on `mu` only.
    pub fn compute(profile: &IntensityProfile) -> Result<Self> {
        Self::from_intensities(profile.mu())
    }

    /// Coefficients from raw intensities. Requires `3 <= k <= 10` and
    /// pairwise distinct values; with `k = 2` the single-photon lower bound
    /// would rest on a single node and is not defined.
    pub fn from_intensities(mu: &[f64]) -> Result<Self> {
        let k = mu.len();
        if k < 3 {
            return Err(Error::Profile(format!(
                "single-photon bounds need at least 3 intensities, got {k}"
            )));
        }
        if k > MAX_INTENSITIES {
            return Err(Error::Profile(format!(
                "at most {MAX_INTENSITIES} intensities are supported, got {k}"
            )));
        }
        check_distinct(mu)?;
        let k0 = parity_offset(k);
        let main = (k0 - 1)..k;
        let complement = (2 - k0)..k;

        let mut a0 = vec![0.0; k];
        let mut a1 = vec![0.0; k];
        let mut a2 = vec![0.0; k];
        for n in main.clone() {
            let node = NodeTerms::new(mu, main.clone(), n)?;
            a0[n] = -mu[n].exp() * node.product_of_others / node.denominator;
            a2[n] = mu[n].exp() * node.symmetric / node.denominator;
        }
        for n in complement.clone() {
            let node = NodeTerms::new(mu, complement.clone(), n)?;
            a1[n] = -mu[n].exp() * node.symmetric / node.denominator;
        }
        Ok(Self { a0, a1, a2, k0 })
    }

    pub fn len(&self) -> usize {
        self.a0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a0.is_empty()
    }
}

/// Vacuum-yield coefficients `a0` alone. Unlike [`DecoyCoefficients`] this
/// is defined for `k = 2`.
pub fn vacuum_coefficients(mu: &[f64]) -> Result<Vec<f64>> {
    let k = mu.len();
    if !(2..=MAX_INTENSITIES).contains(&k) {
        return Err(Error::Profile(format!("need 2..={MAX_INTENSITIES} intensities, got {k}")));
    }
    check_distinct(mu)?;
    let k0 = parity_offset(k);
    let nodes = (k0 - 1)..k;
    let mut a0 = vec![0.0; k];
    for n in nodes.clone() {
        let node = NodeTerms::new(mu, nodes.clone(), n)?;
        a0[n] = -mu[n].exp() * node.product_of_others / node.denominator;
    }
    Ok(a0)
}

fn check_distinct(mu: &[f64]) -> Result<()> {
    for (i, a) in mu.iter().enumerate() {
        if !a.is_finite() {
            return domain(format!("intensity {a} is not finite"));
        }
        if mu[i + 1..].iter().any(|b| a == b) {
            return domain(format!("duplicate intensity {a}"));
        }
    }
    Ok(())
}

/// Products and symmetric sums over a node set with node `n` removed.
struct NodeTerms {
    product_of_others: f64,
    symmetric: f64,
    denominator: f64,
}

impl NodeTerms {
    fn new(mu: &[f64], nodes: std::ops::Range<usize>, n: usize) -> Result<Self> {
        let others: Vec<f64> = nodes.filter(|&j| j != n).map(|j| mu[j]).collect();
        let denominator: f64 = others.iter().map(|&m| mu[n] - m).product();
        if denominator == 0.0 {
            return domain("coincident intensities");
        }
        let degree = others.len().saturating_sub(1);
        Ok(Self {
            product_of_others: others.iter().product(),
            symmetric: elementary_symmetric(&others, degree)?,
            denominator,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn profile(mu: &[f64]) -> IntensityProfile {
        let k = mu.len();
        IntensityProfile::new(mu.to_vec(), vec![1.0 / k as f64; k]).unwrap()
    }

    #[test]
    fn elementary_symmetric_small_cases() {
        let v = [1.0, 2.0, 3.0];
        assert_eq!(elementary_symmetric(&v, 0).unwrap(), 1.0);
        assert_eq!(elementary_symmetric(&v, 1).unwrap(), 6.0);
        assert_eq!(elementary_symmetric(&v, 2).unwrap(), 11.0);
        assert_eq!(elementary_symmetric(&v, 3).unwrap(), 6.0);
        assert!(matches!(elementary_symmetric(&v, 4), Err(Error::Domain(_))));
        assert_eq!(elementary_symmetric(&[], 0).unwrap(), 1.0);
    }

    #[test]
    fn width_cases() {
        assert_eq!(width(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(width(&[4.5]).unwrap(), 0.0);
        assert!(width(&[]).is_err());
        // {a1_n / p_n} for the literal two-intensity single-photon term with
        // mu = (0.5, 0.1) and p = (0.5, 0.5): (0, e^0.1 / 0.4) / 0.5.
        let literal = [0.0, 0.1f64.exp() / 0.4 / 0.5];
        assert_relative_eq!(width(&literal).unwrap(), 5.525854590378239, max_relative = 1e-12);
    }

    #[test]
    fn two_intensity_vacuum_coefficients() {
        let a0 = vacuum_coefficients(&[0.5, 0.1]).unwrap();
        assert_relative_eq!(a0[0], -0.5f64.exp() * 0.1 / 0.4, max_relative = 1e-14);
        assert_relative_eq!(a0[1], 0.1f64.exp() * 0.5 / 0.4, max_relative = 1e-14);
        assert_relative_eq!(a0[0], -0.41218, epsilon = 1e-5);
        assert_relative_eq!(a0[1], 1.38146, epsilon = 1e-5);
    }

    #[test]
    fn two_intensities_rejected_for_full_coefficients() {
        assert!(matches!(
            DecoyCoefficients::from_intensities(&[0.5, 0.1]),
            Err(Error::Profile(_))
        ));
    }

    #[test]
    fn duplicate_intensities_are_domain_errors() {
        assert!(matches!(
            DecoyCoefficients::from_intensities(&[0.5, 0.2, 0.2]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(vacuum_coefficients(&[0.3, 0.3]), Err(Error::Domain(_))));
    }

    #[test]
    fn parity_zeros() {
        for k in 3..=MAX_INTENSITIES {
            let mu: Vec<f64> = (0..k).map(|i| 0.95 - 0.1 * i as f64).collect();
            let c = DecoyCoefficients::compute(&profile(&mu)).unwrap();
            if k % 2 == 1 {
                assert_eq!(c.k0, 2);
                assert_eq!(c.a0[0], 0.0);
                assert_eq!(c.a2[0], 0.0);
                assert_ne!(c.a1[0], 0.0);
            } else {
                assert_eq!(c.k0, 1);
                assert_eq!(c.a1[0], 0.0);
                assert_ne!(c.a0[0], 0.0);
                assert_ne!(c.a2[0], 0.0);
            }
        }
    }

    #[test]
    fn single_photon_sign_follows_denominator() {
        // k = 3: a1 runs over all three nodes, sign(a1_n) = -sign(prod_{j != n}(mu_n - mu_j)).
        let mu = [0.5, 0.2, 1e-6];
        let c = DecoyCoefficients::from_intensities(&mu).unwrap();
        for n in 0..3 {
            let denom: f64 = (0..3).filter(|&j| j != n).map(|j| mu[n] - mu[j]).product();
            assert_eq!(c.a1[n].signum(), -denom.signum());
        }
        assert!(c.a1[0] < 0.0 && c.a1[1] > 0.0 && c.a1[2] < 0.0);
    }

    #[test]
    fn three_intensity_values() {
        // Hand evaluation with mu = (0.5, 0.2, 1e-6).
        let (m1, m2, m3) = (0.5f64, 0.2f64, 1e-6f64);
        let c = DecoyCoefficients::from_intensities(&[m1, m2, m3]).unwrap();
        assert_relative_eq!(c.a0[1], -m2.exp() * m3 / (m2 - m3), max_relative = 1e-13);
        assert_relative_eq!(c.a0[2], -m3.exp() * m2 / (m3 - m2), max_relative = 1e-13);
        assert_relative_eq!(c.a2[1], m2.exp() / (m2 - m3), max_relative = 1e-13);
        assert_relative_eq!(c.a2[2], m3.exp() / (m3 - m2), max_relative = 1e-13);
        assert_relative_eq!(
            c.a1[0],
            -m1.exp() * (m2 + m3) / ((m1 - m2) * (m1 - m3)),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            c.a1[1],
            -m2.exp() * (m1 + m3) / ((m2 - m1) * (m2 - m3)),
            max_relative = 1e-13
        );
    }

    #[test]
    fn coefficients_ignore_probabilities() {
        let mu = vec![0.6, 0.35, 0.1, 1e-6];
        let a = IntensityProfile::new(mu.clone(), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = IntensityProfile::new(mu, vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        assert_eq!(DecoyCoefficients::compute(&a).unwrap(), DecoyCoefficients::compute(&b).unwrap());
    }

    #[test]
    fn profile_validation() {
        assert!(IntensityProfile::new(vec![0.5], vec![1.0]).is_err());
        assert!(IntensityProfile::new(vec![0.2, 0.5], vec![0.5, 0.5]).is_err());
        assert!(IntensityProfile::new(vec![1.2, 0.5], vec![0.5, 0.5]).is_err());
        assert!(IntensityProfile::new(vec![0.5, -0.1], vec![0.5, 0.5]).is_err());
        assert!(IntensityProfile::new(vec![0.5, 0.1], vec![0.6, 0.5]).is_err());
        assert!(IntensityProfile::new(vec![0.5, 0.1], vec![1.0, 0.0]).is_err());
        assert!(IntensityProfile::new(vec![0.5, 0.1], vec![0.5]).is_err());
        let mu: Vec<f64> = (0..11).map(|i| 1.0 - 0.09 * i as f64).collect();
        assert!(IntensityProfile::new(mu, vec![1.0 / 11.0; 11]).is_err());
        assert!(IntensityProfile::new(vec![1.0, 0.0], vec![0.25, 0.75]).is_ok());
    }
}
