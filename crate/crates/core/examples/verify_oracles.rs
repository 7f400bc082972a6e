//! Brute-force bound checks and the Monte Carlo coverage check.
use finite_decoy::oracles::{bound_validity_check, coverage_check, truncated_poisson_forward, TruncatedSource};

fn main() -> finite_decoy::Result<()> {
    let single_photon = TruncatedSource::new(vec![0.0, 1.0, 0.0], vec![0.0, 0.1, 0.0])?;
    let (q, qe) = truncated_poisson_forward(&single_photon, 0.5);
    println!("single-photon source at mu = 0.5: Q = {q:.5}, QE = {qe:.5}");

    for k in [2, 3, 5, 8] {
        let r = bound_validity_check(1000, k, 7)?;
        println!(
            "k = {k}: {} violations in {} trials (vacuum {}, single photon {}, error {})",
            r.violations(),
            r.trials,
            r.vacuum_violations,
            r.single_photon_violations,
            r.error_violations
        );
    }

    let c = coverage_check(0.1, 1000, 3, 10_000, 7)?;
    println!(
        "coverage: deviation {:.4e} exceeded in {:.4} of draws (allowed {:.4})",
        c.threshold,
        c.failure_rate(),
        c.allowed_rate()
    );
    Ok(())
}
