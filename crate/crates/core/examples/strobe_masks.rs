//! Derives first/last word masks for a sparse write strobe and performs the
//! write through the full stack.
//!
//! cargo run --example strobe_masks

use rpc_dram_sim::frontend::{compute_masks, BusTransaction};
use rpc_dram_sim::harness::MemorySystem;
use rpc_dram_sim::hierarchy::Backing;
use rpc_dram_sim::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut txn = BusTransaction::write(0, 0x40, 8, (0..64).collect());
    txn.strobes = vec![0xFF, 0xF0, 0x00, 0x0F, 0xFF, 0xFF, 0x3C, 0x00];

    for w in compute_masks(txn.addr, &txn.byte_enables()) {
        println!(
            "bytes {:#x}..{:#x}: {} word(s) at {:#x}, first {:#010x}, last {:#010x}",
            w.bytes.start, w.bytes.end, w.n_words, w.word_addr, w.first_mask, w.last_mask
        );
    }

    let mut sys = MemorySystem::new(&Config::default())?;
    sys.blocking(txn)?;
    let back = Backing::read(&mut sys, 0x40, 64)?;
    for row in back.chunks(16) {
        println!(
            "{}",
            row.iter()
                .map(|b| format!("{b:02x}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
    }
    Ok(())
}
