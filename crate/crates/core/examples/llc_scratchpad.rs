//! Puts a small cache in front of the memory system, turns half of its ways
//! into scratchpad, and shows which accesses reach DRAM.
//!
//! cargo run --example llc_scratchpad

use rpc_dram_sim::harness::MemorySystem;
use rpc_dram_sim::hierarchy::Llc;
use rpc_dram_sim::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = Config::default();
    cfg.llc.enabled = true;
    cfg.llc.sets = 64;
    cfg.llc.ways = 4;
    let base = cfg.llc.spm_base;
    let mut llc = Llc::new(cfg.llc.clone(), MemorySystem::new(&cfg)?);

    llc.write(0x1000, b"cached line")?;
    let (data, outcome) = llc.read(0x1000, 11)?;
    println!(
        "{:?} {:?}, downstream {:?}",
        String::from_utf8_lossy(&data),
        outcome,
        llc.take_downstream()
    );

    llc.configure_spm(0b0011)?;
    println!("reconfiguration wrote back {:?}", llc.take_downstream());
    println!(
        "scratchpad aperture {} B at {base:#x}",
        llc.aperture_bytes()
    );
    llc.write(base + 100, b"on chip")?;
    let (data, outcome) = llc.read(base + 100, 7)?;
    println!(
        "{:?} {:?}, downstream {:?}",
        String::from_utf8_lossy(&data),
        outcome,
        llc.take_downstream()
    );

    llc.flush()?;
    let sys = llc.into_backing();
    println!(
        "dram cycles {}, data bytes {}",
        sys.cycle(),
        sys.snapshot().stats.bytes_transferred
    );
    Ok(())
}
