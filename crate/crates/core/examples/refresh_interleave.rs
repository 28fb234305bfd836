//! Runs mixed traffic for a million cycles and reports how refresh and data
//! bursts shared the bus.
//!
//! cargo run --release --example refresh_interleave

use rpc_dram_sim::harness::{self, FuzzOptions};
use rpc_dram_sim::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = Config::default();
    let mut opts = FuzzOptions::new(3, u64::MAX);
    opts.max_cycles = 1_000_000;
    let r = harness::fuzz(&cfg, opts)?;

    println!("cycles                 {}", r.cycles);
    println!("transactions           {}", r.transactions);
    println!("bursts during refresh  {}", r.bursts_during_refresh);
    println!("overdue banks          {:?}", r.overdue_banks);
    println!("violations             {}", r.violations.len());
    Ok(())
}
