//! Optimized rates over a (k, s_X) grid next to the published values.
//!
//! Usage: cargo run --release --example scan_table -- [k ...]
use finite_decoy::cli::{run_scan, scan_table, RunConfig};

fn main() -> finite_decoy::Result<()> {
    let ks: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let config = RunConfig { grid_k: if ks.is_empty() { vec![3] } else { ks }, ..RunConfig::default() };
    let rows = run_scan(&config)?;
    print!("{}", scan_table(&rows, true));
    Ok(())
}
