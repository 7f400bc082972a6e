//! Decoy coefficients for a three- and a four-intensity set.
use finite_decoy::DecoyCoefficients;

fn main() -> finite_decoy::Result<()> {
    for mu in [vec![0.5, 0.1, 1e-6], vec![0.8, 0.4, 0.15, 1e-6]] {
        let c = DecoyCoefficients::from_intensities(&mu)?;
        println!("mu = {mu:?} (k0 = {})", c.k0);
        println!("  a0 (vacuum yield)         {:?}", c.a0);
        println!("  a1 (single-photon yield)  {:?}", c.a1);
        println!("  a2 (single-photon error)  {:?}", c.a2);
    }
    Ok(())
}
