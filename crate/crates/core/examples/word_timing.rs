//! Reads one aligned word and prints how the bus cycles were spent.
//!
//! cargo run --example word_timing

use rpc_dram_sim::frontend::BusTransaction;
use rpc_dram_sim::harness::MemorySystem;
use rpc_dram_sim::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sys = MemorySystem::new(&Config::default())?;
    sys.run_until_ready()?;
    let before = sys.snapshot();
    let token = sys.submit(BusTransaction::read(0, 0, 4, 8))?;
    let done = sys.wait_for(token)?;
    sys.drain()?;
    let stats = sys.snapshot().stats - before.stats;

    println!("latency        {} cycles", done.completed - done.submitted);
    println!("data           {}", stats.data_cycles);
    println!("command        {}", stats.command_cycles);
    println!("pre/postamble  {}", stats.preamble_postamble_cycles);
    println!("idle           {}", stats.idle_cycles);
    Ok(())
}
