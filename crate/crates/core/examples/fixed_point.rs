//! Resolves eps_sec = kappa * l_final for one parameter point.
use finite_decoy::{solve_security_fixed_point, ChannelParams, IntensityProfile};

fn main() -> finite_decoy::Result<()> {
    let profile = IntensityProfile::new(vec![0.2185, 0.1185, 1e-6], vec![0.1154, 0.6685, 0.2161])?;
    let observed = ChannelParams::default().observe(&profile)?;
    let report = solve_security_fixed_point(&profile, &observed, 0.8125, 1e7, 1e-15, 1e-15)?;
    println!("R        = {:.6e}", report.rate);
    println!("l_final  = {:.1} bits", report.l_final);
    println!("eps_sec  = {:.3e} (= 1e-15 * l_final)", report.eps_sec);
    println!("settled after {} iterations", report.iterations);
    Ok(())
}
