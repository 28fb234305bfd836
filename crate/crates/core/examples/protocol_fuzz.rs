//! Randomized mixed traffic over several seeds, refereed by the device model.
//!
//! cargo run --release --example protocol_fuzz [seed] [count]

use rpc_dram_sim::harness::{self, FuzzOptions};
use rpc_dram_sim::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let count = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5000);
    let cfg = Config::default();

    for s in harness::derive_seeds(seed, 4) {
        let r = harness::fuzz(&cfg, FuzzOptions::new(s, count))?;
        println!(
            "seed {s:#018x}: {} txns, {} cycles, {} reads checked, clean: {}",
            r.transactions,
            r.cycles,
            r.reads_checked,
            r.is_clean()
        );
    }
    Ok(())
}
