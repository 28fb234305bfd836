//! Replays a trace file and checks every read against a reference memory.
//!
//! cargo run --example trace_replay [file]

use rpc_dram_sim::harness::{self, Workload};
use rpc_dram_sim::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| {
        concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/sample.trace").into()
    });
    let entries = harness::parse_trace(&std::fs::read_to_string(&path)?)?;
    for e in entries.iter().take(4) {
        println!("  {e}");
    }

    let cfg = Config::default();
    let result = harness::run(&cfg, &Workload::Trace(entries))?;
    harness::write_summary(
        &mut std::io::stdout(),
        &result,
        &cfg.energy,
        cfg.timing.freq_mhz,
    )?;
    Ok(())
}
