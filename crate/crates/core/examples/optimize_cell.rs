//! Optimizes p_X, the intensities and their probabilities for one cell.
//!
//! Usage: cargo run --release --example optimize_cell -- [k] [log10 s_X]
use finite_decoy::{optimize, ChannelParams, OptimizationConfig};

fn main() -> finite_decoy::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let k = args.first().and_then(|a| a.parse().ok()).unwrap_or(3);
    let exponent: f64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(7.0);
    let config = OptimizationConfig { k, s_x: 10f64.powf(exponent), ..Default::default() };
    let result = optimize(&ChannelParams::default(), &config, 1e-15, 1e-15)?;
    println!("k = {k}, s_X = 1e{exponent}");
    println!("R_-5  = {:.4}", result.best_report.rate * 1e5);
    println!("p_X   = {:.4}", result.best_p_x);
    println!("mu    = {:.4?}", result.best_mu);
    println!("p_mu  = {:.4?}", result.best_p_mu);
    println!("{} evaluations, converged: {}", result.evals, result.converged);
    Ok(())
}
