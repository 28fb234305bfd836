use std::io::{self, Write};

use super::{SimulationResult, Window};
use crate::metrics::EnergyParams;

pub const CSV_HEADER: &str = "burst_bytes,direction,alpha,throughput_MBps,energy_pJ_per_B";

fn direction(w: &Window) -> &'static str {
    w.direction.map_or("mixed", |d| d.as_str())
}

/// One row per window. Energy is left empty when nothing was transferred.
pub fn write_csv(
    out: &mut dyn Write,
    windows: &[Window],
    energy: &EnergyParams,
    freq_mhz: f64,
) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for w in windows {
        let gamma = w
            .energy_per_byte(energy, freq_mhz)
            .map(|g| format!("{g:.3}"))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{:.6},{:.3},{}",
            w.burst_bytes,
            direction(w),
            w.alpha(),
            w.throughput(freq_mhz) / 1e6,
            gamma
        )?;
    }
    Ok(())
}

pub fn write_summary(
    out: &mut dyn Write,
    result: &SimulationResult,
    energy: &EnergyParams,
    freq_mhz: f64,
) -> io::Result<()> {
    writeln!(out, "transactions      {}", result.transactions)?;
    writeln!(out, "cycles simulated  {}", result.cycles)?;
    writeln!(out, "violations        {}", result.violations)?;
    writeln!(out, "rejected commands {}", result.rejected)?;
    writeln!(out, "oracle mismatches {}", result.mismatches)?;
    if !result.latencies.is_empty() {
        let mut l = result.latencies.clone();
        l.sort_unstable();
        let mean = l.iter().sum::<u64>() as f64 / l.len() as f64;
        writeln!(
            out,
            "latency cycles    mean {mean:.1}, median {}, max {}",
            l[l.len() / 2],
            l[l.len() - 1]
        )?;
    }
    for w in &result.windows {
        let gamma = w
            .energy_per_byte(energy, freq_mhz)
            .map(|g| format!("{g:.1} pJ/B"))
            .unwrap_or_else(|_| "-".into());
        writeln!(
            out,
            "{:>6} B {:<5}  alpha {:.4}  {:>7.1} MB/s  {}",
            w.burst_bytes,
            direction(w),
            w.alpha(),
            w.throughput(freq_mhz) / 1e6,
            gamma
        )?;
    }
    Ok(())
}
