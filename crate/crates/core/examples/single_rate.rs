//! Finite-key rate at fixed parameters and a fixed secrecy parameter.
use finite_decoy::rate::asymptotic_key_rate;
use finite_decoy::{key_rate, ChannelParams, IntensityProfile, SecurityBudget};

fn main() -> finite_decoy::Result<()> {
    let profile = IntensityProfile::new(vec![0.2185, 0.1185, 1e-6], vec![0.1154, 0.6685, 0.2161])?;
    let observed = ChannelParams::default().observe(&profile)?;
    let p_x = 0.8125;
    for s_x in [1e6, 1e7, 1e9, 1e11] {
        let report = key_rate(&profile, &observed, p_x, s_x, &SecurityBudget::new(1e-10, 1e-15)?)?;
        println!(
            "s_X = {s_x:.0e}: R = {:.4e}  e_p = {:.4}  Y1 >= {:.4e}",
            report.rate, report.e_p, report.y_z1_lower
        );
    }
    println!("no finite-size terms: R = {:.4e}", asymptotic_key_rate(&profile, &observed, p_x)?);
    Ok(())
}
