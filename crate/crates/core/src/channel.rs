//! Fiber channel model and a seeded finite-sample generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::decoy::IntensityProfile;
use crate::rate::binary_entropy;
use crate::error::{domain, Error, Result};

/// Detector and link constants of a dedicated fiber link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// After-pulse probability.
    pub p_ap: f64,
    /// Dark-count probability.
    pub p_dc: f64,
    /// Optical misalignment error rate.
    pub e_mis: f64,
    /// Channel transmittance.
    pub eta_ch: f64,
    /// System transmittance.
    pub eta_sys: f64,
}

impl Default for ChannelParams {
    /// 100 km fiber link.
    fn default() -> Self {
        Self { p_ap: 4e-2, p_dc: 6e-7, e_mis: 5e-3, eta_ch: 1e-2, eta_sys: 1e-3 }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("p_ap", self.p_ap),
            ("p_dc", self.p_dc),
            ("e_mis", self.e_mis),
            ("eta_ch", self.eta_ch),
            ("eta_sys", self.eta_sys),
        ];
        for (name, v) in fields {
            if !(0.0..=1.0).contains(&v) {
                return domain(format!("channel parameter {name} = {v} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// `Q(mu) = (1 + p_ap)(2 p_dc + eta_sys mu)`.
    pub fn gain(&self, mu: f64) -> Result<f64> {
        check_mu(mu)?;
        Ok((1.0 + self.p_ap) * (2.0 * self.p_dc + self.eta_sys * mu))
    }

    /// `Q(mu) E(mu) = (1 + p_ap) p_dc + (e_mis eta_ch + p_ap eta_sys / 2) mu`.
    pub fn error_gain(&self, mu: f64) -> Result<f64> {
        check_mu(mu)?;
        Ok((1.0 + self.p_ap) * self.p_dc + (self.e_mis * self.eta_ch + self.p_ap * self.eta_sys / 2.0) * mu)
    }

    /// Error rate `E(mu) = Q(mu) E(mu) / Q(mu)`.
    pub fn error_rate(&self, mu: f64) -> Result<f64> {
        let q = self.gain(mu)?;
        if q <= 0.0 {
            return Err(Error::DegenerateChannel(format!("zero gain at mu = {mu}")));
        }
        Ok(self.error_gain(mu)? / q)
    }

    /// Noise-free expected statistics; identical in both bases.
    pub fn observe(&self, profile: &IntensityProfile) -> Result<ObservedStats> {
        let mut q = Vec::with_capacity(profile.len());
        let mut e = Vec::with_capacity(profile.len());
        for &mu in profile.mu() {
            q.push(self.gain(mu)?);
            e.push(self.error_rate(mu)?);
        }
        let basis = BasisStats::new(q, e)?;
        ObservedStats::new(profile, basis.clone(), basis)
    }

    /// Simulates `pulses` transmissions. Each pulse picks Alice's basis,
    /// Bob's basis and an intensity, then is detected with probability
    /// `Q(mu)` and is in error with probability `E(mu)` given a detection.
    /// Counts are drawn through exact binomial/multinomial splits, which has
    /// the same law as the per-pulse process.
    pub fn sample_finite(
        &self,
        profile: &IntensityProfile,
        p_x: f64,
        pulses: u64,
        seed: u64,
    ) -> Result<FiniteSample> {
        if pulses == 0 {
            return domain("pulse count must be at least 1");
        }
        if !(p_x > 0.0 && p_x < 1.0) {
            return domain(format!("p_X = {p_x} outside (0, 1)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p_z = 1.0 - p_x;
        // Sifted X, sifted Z, mismatched (discarded).
        let basis_probs = [p_x * p_x, p_z * p_z];
        let [x_total, z_total] = multinomial_split(&mut rng, pulses, &basis_probs)?;

        let mut x = BasisCounts::default();
        let mut z = BasisCounts::default();
        for (counts, total) in [(&mut x, x_total), (&mut z, z_total)] {
            let per_intensity = multinomial_split_vec(&mut rng, total, profile.p_mu())?;
            for (&mu, &n) in profile.mu().iter().zip(&per_intensity) {
                let det = binomial(&mut rng, n, self.gain(mu)?)?;
                let err = binomial(&mut rng, det, self.error_rate(mu)?)?;
                counts.pulses.push(n);
                counts.detections.push(det);
                counts.errors.push(err);
            }
        }
        Ok(FiniteSample { x, z })
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mu) {
        return domain(format!("intensity {mu} outside the model range [0, 1]"));
    }
    Ok(())
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> Result<u64> {
    if n == 0 || p <= 0.0 {
        return Ok(0);
    }
    if p >= 1.0 {
        return Ok(n);
    }
    let dist = Binomial::new(n, p).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Splits `n` items over the cells of `probs`; the remainder `1 - sum(probs)`
/// is an implicit discard cell.
fn multinomial_split<const N: usize>(
    rng: &mut ChaCha8Rng,
    n: u64,
    probs: &[f64; N],
) -> Result<[u64; N]> {
    let mut out = [0u64; N];
    let mut remaining = n;
    let mut mass = 1.0;
    for (slot, &p) in out.iter_mut().zip(probs) {
        let cond = if mass > 0.0 { (p / mass).min(1.0) } else { 0.0 };
        *slot = binomial(rng, remaining, cond)?;
        remaining -= *slot;
        mass -= p;
    }
    Ok(out)
}

/// Splits `n` items over cells whose probabilities sum to one.
fn multinomial_split_vec(rng: &mut ChaCha8Rng, n: u64, probs: &[f64]) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(probs.len());
    let mut remaining = n;
    let mut mass = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        let draw = if i + 1 == probs.len() {
            remaining
        } else {
            let cond = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
            binomial(rng, remaining, cond)?
        };
        out.push(draw);
        remaining -= draw;
        mass -= p;
    }
    Ok(out)
}

/// Per-intensity gains and error rates for one basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisStats {
    pub q: Vec<f64>,
    /// Error rates (not error gains).
    pub e: Vec<f64>,
}

impl BasisStats {
    pub fn new(q: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        if q.len() != e.len() {
            return domain("gain and error-rate vectors differ in length");
        }
        if let Some(v) = q.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return domain(format!("gain {v} outside [0, 1]"));
        }
        if let Some(v) = e.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return domain(format!("error rate {v} outside [0, 1]"));
        }
        Ok(Self { q, e })
    }

    /// Error gains `Q_n E_n`.
    pub fn error_gain(&self) -> Vec<f64> {
        self.q.iter().zip(&self.e).map(|(q, e)| q * e).collect()
    }
}

/// Observed statistics for both bases plus the intensity averages used by
/// the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedStats {
    pub x: BasisStats,
    pub z: BasisStats,
    /// `<Q_X>`
    pub mean_q_x: f64,
    /// `<Q_Z>`
    pub mean_q_z: f64,
    /// `<Q_Z E_Z>`
    pub mean_qe_z: f64,
    /// `<Q_X H2(E_X)>`
    pub mean_q_h_x: f64,
}

impl ObservedStats {
    pub fn new(profile: &IntensityProfile, x: BasisStats, z: BasisStats) -> Result<Self> {
        if x.q.len() != profile.len() || z.q.len() != profile.len() {
            return domain("observed statistics do not match the number of intensities");
        }
        let entropies: Vec<f64> = x.e.iter().map(|&e| binary_entropy(e)).collect::<Result<_>>()?;
        let q_h: Vec<f64> = x.q.iter().zip(&entropies).map(|(q, h)| q * h).collect();
        Ok(Self {
            mean_q_x: profile.weighted(&x.q),
            mean_q_z: profile.weighted(&z.q),
            mean_qe_z: profile.weighted(&z.error_gain()),
            mean_q_h_x: profile.weighted(&q_h),
            x,
            z,
        })
    }
}

/// Raw counts for one basis, per intensity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BasisCounts {
    pub pulses: Vec<u64>,
    pub detections: Vec<u64>,
    pub errors: Vec<u64>,
}

impl BasisCounts {
    pub fn total_detections(&self) -> u64 {
        self.detections.iter().sum()
    }

    pub fn total_errors(&self) -> u64 {
        self.errors.iter().sum()
    }

    pub fn gains(&self) -> Vec<f64> {
        self.pulses
            .iter()
            .zip(&self.detections)
            .map(|(&n, &d)| if n == 0 { 0.0 } else { d as f64 / n as f64 })
            .collect()
    }

    pub fn error_rates(&self) -> Vec<f64> {
        self.detections
            .iter()
            .zip(&self.errors)
            .map(|(&d, &e)| if d == 0 { 0.0 } else { e as f64 / d as f64 })
            .collect()
    }
}

/// Outcome of [`ChannelParams::sample_finite`].
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSample {
    pub x: BasisCounts,
    pub z: BasisCounts,
}

impl FiniteSample {
    /// Some intensity received no pulses in some basis, so its empirical gain
    /// is undefined.
    pub fn is_degenerate(&self) -> bool {
        self.x.pulses.iter().chain(&self.z.pulses).any(|&n| n == 0)
    }

    /// `s_X`: sifted X-basis detections.
    pub fn s_x(&self) -> u64 {
        self.x.total_detections()
    }

    /// `s_Z`: Z-basis detections.
    pub fn s_z(&self) -> u64 {
        self.z.total_detections()
    }

    /// `s_Z^e`: Z-basis detections in error.
    pub fn s_z_e(&self) -> u64 {
        self.z.total_errors()
    }

    /// Empirical statistics; fails on degenerate samples.
    pub fn observed(&self, profile: &IntensityProfile) -> Result<ObservedStats> {
        if self.is_degenerate() {
            return Err(Error::DegenerateChannel(
                "an intensity received no pulses in some basis".into(),
            ));
        }
        let x = BasisStats::new(self.x.gains(), self.x.error_rates())?;
        let z = BasisStats::new(self.z.gains(), self.z.error_rates())?;
        ObservedStats::new(profile, x, z)
    }
}
