//! Loads a partial TOML profile over the defaults and compares utilization
//! of the two timing profiles at one burst size.
//!
//! cargo run --release --example config_profile

use rpc_dram_sim::harness;
use rpc_dram_sim::protocol::Direction;
use rpc_dram_sim::Config;

const SLOW: &str = r#"
[timing]
t_rcd = 10
t_rp = 10
t_ras = 20

[harness]
min_burst = 256
max_burst = 256
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let slow = Config::from_toml(SLOW)?;
    let fast = Config {
        harness: slow.harness.clone(),
        ..Config::default()
    };

    for (name, cfg) in [("default", &fast), ("slow", &slow)] {
        let r = harness::sweep_bursts(cfg, &[Direction::Read])?;
        println!(
            "{name:<8} t_rcd {:>2}  alpha at 256 B {:.4}",
            cfg.timing.t_rcd,
            r.windows[0].alpha()
        );
    }
    match Config::from_toml("[timing]\nt_rdc = 3\n") {
        Ok(_) => println!("typo accepted"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
