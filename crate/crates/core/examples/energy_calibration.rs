//! Solves the background power for a target energy per byte, then shows how
//! energy per byte varies with burst size under the calibrated model.
//!
//! cargo run --release --example energy_calibration [target_pj_per_byte]

use rpc_dram_sim::harness::{self, Workload};
use rpc_dram_sim::protocol::Direction;
use rpc_dram_sim::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let target = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(250.0);
    let mut cfg = Config::default();
    let freq = cfg.timing.freq_mhz;
    let (params, window) = harness::calibrate_energy(&cfg, target)?;
    println!(
        "p_background = {:.3} mW (alpha {:.4})",
        params.p_background,
        window.alpha()
    );

    cfg.energy = params;
    for burst in [64u64, 512, 4096, 65536] {
        let w = Workload::Sequential {
            addr: 0,
            total_bytes: 2 << 20,
            burst_bytes: burst,
            direction: Direction::Write,
        };
        let r = harness::run(&cfg, &w)?;
        println!(
            "{burst:>6} B bursts: {:.1} pJ/B",
            r.windows[0].energy_per_byte(&cfg.energy, freq)?
        );
    }
    Ok(())
}
