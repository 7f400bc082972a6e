//! Decoy coefficients against a 50-digit evaluation of the same formulas.

use std::path::PathBuf;

use finite_decoy::DecoyCoefficients;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    mu: Vec<f64>,
    a0: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
}

#[test]
fn coefficients_match_extended_precision() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/coefficients.json");
    let cases: Vec<Case> = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(cases.len() >= 30);
    for case in &cases {
        let c = DecoyCoefficients::from_intensities(&case.mu).unwrap();
        for (got, want) in [(&c.a0, &case.a0), (&c.a1, &case.a1), (&c.a2, &case.a2)] {
            for (g, w) in got.iter().zip(want.iter()) {
                if *w == 0.0 {
                    assert_eq!(*g, 0.0);
                } else {
                    assert!(((g - w) / w).abs() <= 1e-9, "k={} mu={:?}: {g} vs {w}", case.mu.len(), case.mu);
                }
            }
        }
    }
}
