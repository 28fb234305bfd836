//! Bus utilization and throughput across burst sizes, both directions.
//!
//! cargo run --release --example burst_sweep [max_burst]

use rpc_dram_sim::harness;
use rpc_dram_sim::protocol::Direction;
use rpc_dram_sim::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = Config::default();
    if let Some(max) = std::env::args().nth(1) {
        cfg.harness.max_burst = max.parse()?;
    }
    cfg.validate()?;
    let freq = cfg.timing.freq_mhz;
    let result = harness::sweep_bursts(&cfg, &[Direction::Read, Direction::Write])?;

    println!(
        "{:>7}  {:>8}  {:>8}  {:>9}",
        "burst", "read", "write", "MB/s rd"
    );
    for size in cfg.harness.burst_sizes() {
        let rd = result.window(size, Direction::Read).unwrap();
        let wr = result.window(size, Direction::Write).unwrap();
        println!(
            "{size:>7}  {:>8.4}  {:>8.4}  {:>9.1}",
            rd.alpha(),
            wr.alpha(),
            rd.throughput(freq) / 1e6
        );
    }
    Ok(())
}
