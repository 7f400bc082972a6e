//! Gains and error rates of the default fiber link, and a simulated run.
use finite_decoy::{ChannelParams, IntensityProfile};

fn main() -> finite_decoy::Result<()> {
    let channel = ChannelParams::default();
    let profile = IntensityProfile::new(vec![0.5, 0.1, 1e-6], vec![0.5, 0.3, 0.2])?;
    let observed = channel.observe(&profile)?;
    for (n, mu) in profile.mu().iter().enumerate() {
        println!("mu = {mu:<8} Q = {:.4e}  E = {:.4}", observed.x.q[n], observed.x.e[n]);
    }

    let sample = channel.sample_finite(&profile, 0.7, 10_000_000_000, 1)?;
    println!("simulated 1e10 pulses: s_X = {}, s_Z = {}, Z errors = {}", sample.s_x(), sample.s_z(), sample.s_z_e());
    let simulated = sample.observed(&profile)?;
    println!("simulated X gain at mu = 0.5: {:.4e}", simulated.x.q[0]);
    Ok(())
}
