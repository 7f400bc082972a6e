use finite_decoy::bounds::{e_p_upper, gamma_bar, mcdiarmid_deviation};
use finite_decoy::oracles::{truncated_poisson_forward, TruncatedSource};
use finite_decoy::rate::binary_entropy;
use finite_decoy::{
    key_rate, ChannelParams, DecoyCoefficients, IntensityProfile, SecurityBudget,
};
use finite_decoy::bounds::{derive_sample_sizes, z_basis_estimates};
use proptest::prelude::*;

fn source(len: usize) -> impl Strategy<Value = TruncatedSource> {
    (prop::collection::vec(0.0..=1.0f64, len), prop::collection::vec(0.0..=0.5f64, len))
        .prop_map(|(y, e)| TruncatedSource::new(y, e).unwrap())
}

/// Decreasing intensities with gaps of at least 0.1, smallest near zero.
fn intensities(k: usize) -> impl Strategy<Value = Vec<f64>> {
    (0.0..0.02f64, prop::collection::vec(0.0..1.0f64, k - 1), 0.0..1.0f64).prop_map(move |(low, shares, fill)| {
        let slack = 1.0 - 0.1 * (k - 1) as f64 - low;
        let total: f64 = shares.iter().sum::<f64>() + 1e-9;
        let mut mu = vec![low; k];
        for n in (0..k - 1).rev() {
            mu[n] = mu[n + 1] + 0.1 + fill * slack * (shares[n] + 1e-9 / (k - 1) as f64) / total;
        }
        mu
    })
}

fn profile(k: usize) -> impl Strategy<Value = IntensityProfile> {
    (intensities(k), prop::collection::vec(0.05..1.0f64, k)).prop_map(|(mu, w)| {
        let total: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|v| v / total).collect();
        let head: f64 = p[..p.len() - 1].iter().sum();
        *p.last_mut().unwrap() = 1.0 - head;
        IntensityProfile::new(mu, p).unwrap()
    })
}

proptest! {
    #[test]
    fn forward_model_is_linear_in_yields(
        a in source(13), b in source(13), mu in 0.0..1.0f64, s in 0.0..1.0f64,
    ) {
        let mix = TruncatedSource::new(
            a.y.iter().zip(&b.y).map(|(x, y)| s * x + (1.0 - s) * y).collect(),
            a.e.iter().map(|_| 0.0).collect(),
        ).unwrap();
        let (qa, _) = truncated_poisson_forward(&a, mu);
        let (qb, _) = truncated_poisson_forward(&b, mu);
        let (qm, qe) = truncated_poisson_forward(&mix, mu);
        prop_assert!((qm - (s * qa + (1.0 - s) * qb)).abs() <= 1e-14);
        prop_assert_eq!(qe, 0.0);
    }

    #[test]
    fn gain_is_a_probability(src in source(13), mu in 0.0..1.0f64) {
        let (q, qe) = truncated_poisson_forward(&src, mu);
        prop_assert!((0.0..=1.0 + 1e-15).contains(&q));
        prop_assert!(qe >= 0.0 && qe <= 0.5 * q + 1e-15);
    }

    #[test]
    fn decoy_bounds_hold_on_random_sources(k in 3usize..=7, seed_src in source(13), mu in intensities(7)) {
        let mu = mu[7 - k..].to_vec();
        let c = DecoyCoefficients::from_intensities(&mu).unwrap();
        let fwd: Vec<(f64, f64)> = mu.iter().map(|&m| truncated_poisson_forward(&seed_src, m)).collect();
        let y0: f64 = c.a0.iter().zip(&fwd).map(|(a, f)| a * f.0).sum();
        let y1: f64 = c.a1.iter().zip(&fwd).map(|(a, f)| a * f.0).sum();
        let e1: f64 = c.a2.iter().zip(&fwd).map(|(a, f)| a * f.1).sum();
        prop_assert!(y0 <= seed_src.y[0] + 1e-9);
        prop_assert!(y1 <= seed_src.y[1] + 1e-9);
        prop_assert!(e1 >= seed_src.y[1] * seed_src.e[1] - 1e-9);
    }

    #[test]
    fn parity_zeros(k in 3usize..=10, mu in intensities(10)) {
        let c = DecoyCoefficients::from_intensities(&mu[10 - k..]).unwrap();
        if k % 2 == 1 {
            prop_assert_eq!(c.a0[0], 0.0);
            prop_assert_eq!(c.a2[0], 0.0);
            prop_assert!(c.a1[0] != 0.0);
        } else {
            prop_assert_eq!(c.a1[0], 0.0);
            prop_assert!(c.a0[0] != 0.0);
        }
    }

    #[test]
    fn deviation_shrinks_with_samples_and_grows_with_confidence(
        eps in 1e-15..0.5f64, s in 1.0..1e12f64, w in 0.0..1e4f64, f in 1.0..100.0f64,
    ) {
        let d = mcdiarmid_deviation(eps, s, w).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(mcdiarmid_deviation(eps, s * f, w).unwrap() <= d);
        prop_assert!(mcdiarmid_deviation(eps / f, s, w).unwrap() >= d);
        prop_assert!(mcdiarmid_deviation(eps, s, w * f).unwrap() >= d);
    }

    #[test]
    fn gamma_bar_is_real_or_flagged(
        a in 1e-15..0.5f64, b in 0.0..=0.5f64, c in 1.0..1e12f64, d in 1.0..1e12f64,
    ) {
        let g = gamma_bar(a, b, c, d).unwrap();
        prop_assert!(g.value >= 0.0 && g.value.is_finite());
        if g.vacuous {
            prop_assert_eq!(g.value, 0.0);
        }
    }

    #[test]
    fn entropy_is_symmetric_and_bounded(x in 0.0..=1.0f64) {
        let h = binary_entropy(x).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!((h - binary_entropy(1.0 - x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn phase_error_stays_in_range(
        prof in profile(3), p_x in 0.2..0.95f64, s_x in 1e4..1e12f64, eps in 1e-12..1e-3f64,
    ) {
        let observed = ChannelParams::default().observe(&prof).unwrap();
        let coeffs = DecoyCoefficients::compute(&prof).unwrap();
        let budget = SecurityBudget::new(eps, 1e-15).unwrap();
        let sizes = derive_sample_sizes(s_x, p_x, &observed).unwrap();
        let z = z_basis_estimates(&coeffs, &prof, &observed, &sizes, &budget).unwrap();
        prop_assert!((0.0..=0.5).contains(&z.e_z1));
        if z.feasible {
            let y_x1 = z.y1_lower;
            let phase = e_p_upper(z.e_z1, z.y1_lower, y_x1, &prof, &observed, &sizes, &budget).unwrap();
            prop_assert!((0.0..=0.5).contains(&phase.e_p));
            prop_assert!(phase.e_p >= z.e_z1);
        }
    }

    #[test]
    fn rate_is_below_its_asymptote_and_monotone_in_eps(
        prof in profile(3), p_x in 0.3..0.95f64, s_x in 1e6..1e12f64,
    ) {
        let observed = ChannelParams::default().observe(&prof).unwrap();
        let loose = key_rate(&prof, &observed, p_x, s_x, &SecurityBudget::new(1e-6, 1e-15).unwrap()).unwrap();
        let tight = key_rate(&prof, &observed, p_x, s_x, &SecurityBudget::new(1e-12, 1e-15).unwrap()).unwrap();
        prop_assert!(tight.rate <= loose.rate);
        let asymptotic = finite_decoy::rate::asymptotic_key_rate(&prof, &observed, p_x).unwrap();
        prop_assert!(loose.rate <= asymptotic * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn coefficients_ignore_probabilities(mu in intensities(4), w in prop::collection::vec(0.1..1.0f64, 4)) {
        let total: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|v| v / total).collect();
        p[3] = 1.0 - p[..3].iter().sum::<f64>();
        let prof = IntensityProfile::new(mu.clone(), p).unwrap();
        prop_assert_eq!(DecoyCoefficients::compute(&prof).unwrap(), DecoyCoefficients::from_intensities(&mu).unwrap());
    }
}
