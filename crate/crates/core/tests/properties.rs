use proptest::prelude::*;

use rpc_dram_sim::frontend::BusTransaction;
use rpc_dram_sim::harness::{self, MemorySystem, Snapshot, TraceEntry, Workload};
use rpc_dram_sim::metrics::{energy_per_byte, utilization, BusStats, EnergyParams, EventCounts};
use rpc_dram_sim::protocol::Direction;
use rpc_dram_sim::Config;

fn entry() -> impl Strategy<Value = TraceEntry> {
    (0u64..400, any::<bool>(), 0u64..16384, 1u64..700).prop_map(|(cycle, write, addr, len)| {
        TraceEntry {
            cycle,
            direction: if write {
                Direction::Write
            } else {
                Direction::Read
            },
            addr,
            len,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn traces_read_back_what_was_written(entries in proptest::collection::vec(entry(), 0..40)) {
        let r = harness::run(&Config::default(), &Workload::Trace(entries.clone())).unwrap();
        prop_assert!(r.is_clean(), "{:?}", r);
        prop_assert_eq!(r.transactions, entries.len() as u64);
    }

    #[test]
    fn cached_traces_read_back_what_was_written(entries in proptest::collection::vec(entry(), 0..40), mask in 0u32..4) {
        let mut cfg = Config::default();
        cfg.llc.enabled = true;
        cfg.llc.sets = 8;
        cfg.llc.ways = 2;
        cfg.llc.spm_way_mask = mask & 0b11;
        let r = harness::run(&cfg, &Workload::Trace(entries)).unwrap();
        prop_assert!(r.is_clean(), "{:?}", r);
    }

    #[test]
    fn random_traffic_is_clean(seed in any::<u64>()) {
        let r = harness::run(&Config::default(), &Workload::Random { seed, count: 150, max_bytes: 2048 }).unwrap();
        prop_assert!(r.is_clean(), "{:?}", r);
    }

    #[test]
    fn more_idle_costs_more_energy(
        data in 1u64..100_000,
        idle in 1u64..100_000,
        acts in 0u64..1000,
    ) {
        let params = EnergyParams::default();
        let stats = BusStats {
            total_cycles: data + idle,
            data_cycles: data,
            idle_cycles: idle,
            bytes_transferred: data * 4,
            ..BusStats::default()
        };
        let events = EventCounts { activates: acts, precharges: acts, ..EventCounts::default() };
        let doubled = BusStats { total_cycles: data + 2 * idle, idle_cycles: 2 * idle, ..stats };
        let a = energy_per_byte(&stats, &events, &params, 200.0).unwrap();
        let b = energy_per_byte(&doubled, &events, &params, 200.0).unwrap();
        prop_assert!(b > a);
    }
}

#[test]
fn utilization_grows_with_burst_size() {
    let mut cfg = Config::default();
    cfg.harness.max_burst = 4096;
    let r = harness::sweep_bursts(&cfg, &[Direction::Read, Direction::Write]).unwrap();
    for dir in [Direction::Read, Direction::Write] {
        let alphas: Vec<f64> = cfg
            .harness
            .burst_sizes()
            .iter()
            .map(|&s| r.window(s, dir).unwrap().alpha())
            .collect();
        assert!(alphas.windows(2).all(|w| w[0] <= w[1]), "{dir}: {alphas:?}");
    }
}

#[test]
fn energy_per_byte_falls_with_burst_size() {
    let cfg = Config::default();
    let r = harness::sweep_bursts(&cfg, &[Direction::Write]).unwrap();
    let gammas: Vec<f64> = r
        .windows
        .iter()
        .map(|w| w.energy_per_byte(&cfg.energy, cfg.timing.freq_mhz).unwrap())
        .collect();
    assert!(gammas.windows(2).all(|g| g[1] <= g[0]), "{gammas:?}");
}

#[test]
fn steady_windows_agree() {
    let cfg = Config::default();
    let mut sys = MemorySystem::new(&cfg).unwrap();
    let beat = sys.beat_bytes();
    let mut addr = 0;
    let mut snaps = Vec::new();
    let window = 200_000;
    while snaps.len() < 3 {
        if sys.can_accept() {
            let data = harness::pattern(addr, 4096);
            sys.submit(BusTransaction::write(0, addr, beat, data))
                .unwrap();
            addr = (addr + 4096) % sys.capacity();
        }
        sys.step().unwrap();
        sys.take_events();
        if sys.cycle().is_multiple_of(window) && sys.cycle() >= window {
            snaps.push(sys.snapshot());
        }
    }
    let alpha = |a: &Snapshot, b: &Snapshot| utilization(&(b.stats - a.stats));
    let first = alpha(&snaps[0], &snaps[1]);
    let second = alpha(&snaps[1], &snaps[2]);
    assert!((first - second).abs() / first < 0.01, "{first} vs {second}");
}

fn spaced_writes(gap: u64) -> f64 {
    let cfg = Config::default();
    let entries = (0..40)
        .map(|k| TraceEntry {
            cycle: k * gap,
            direction: Direction::Write,
            addr: k * 256,
            len: 256,
        })
        .collect();
    let r = harness::run(&cfg, &Workload::Trace(entries)).unwrap();
    assert_eq!(r.windows[0].stats.bytes_transferred, 40 * 256);
    r.windows[0]
        .energy_per_byte(&cfg.energy, cfg.timing.freq_mhz)
        .unwrap()
}

#[test]
fn doubling_idle_time_costs_more_energy() {
    let sparse = spaced_writes(400);
    let sparser = spaced_writes(800);
    assert!(sparser > sparse, "{sparser} <= {sparse}");
}
