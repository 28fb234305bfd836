//! Simulation driver: workloads, burst sweeps, oracle verification and
//! randomized protocol fuzzing.

mod oracle;
mod report;
mod system;
mod trace;
mod traffic;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use oracle::{Mismatch, Oracle, SparseMemory};
pub use report::{write_csv, write_summary, CSV_HEADER};
pub use system::{MemorySystem, Snapshot};
pub use trace::{parse_trace, TraceEntry};
pub use traffic::{pattern, RandomTraffic};

use crate::config::Config;
use crate::error::{EnergyError, SimError};
use crate::frontend::{BusTransaction, FrontendEvent};
use crate::hierarchy::Llc;
use crate::metrics::{self, BusStats, EnergyParams, EventCounts};
use crate::protocol::{Cycle, Direction};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Workload {
    /// Back-to-back bursts per size and direction, each in a fresh system.
    Sweep {
        sizes: Vec<u64>,
        directions: Vec<Direction>,
    },
    /// Back-to-back bursts over `[addr, addr + total_bytes)`.
    Sequential {
        addr: u64,
        total_bytes: u64,
        burst_bytes: u64,
        direction: Direction,
    },
    /// Mixed reads and writes with random sizes, alignment, strobes and ids.
    Random {
        seed: u64,
        count: u64,
        max_bytes: u64,
    },
    Trace(Vec<TraceEntry>),
}

impl Workload {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |s: &u64| *s < 8 || !s.is_power_of_two();
        match self {
            Workload::Sweep { sizes, .. } if sizes.iter().any(bad) => Err(
                SimError::BadTransaction("burst sizes must be powers of two of at least 8".into()),
            ),
            Workload::Sequential { burst_bytes, .. } if bad(burst_bytes) => Err(
                SimError::BadTransaction("burst size must be a power of two of at least 8".into()),
            ),
            Workload::Random { max_bytes: 0, .. } => Err(SimError::BadTransaction(
                "max_bytes must be positive".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Sequential 64 KiB writes used to calibrate the energy model.
    pub fn mem_writes() -> Workload {
        Workload::Sequential {
            addr: 0,
            total_bytes: 2 << 20,
            burst_bytes: 64 << 10,
            direction: Direction::Write,
        }
    }
}

/// Measured interval of one run or sweep point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    /// Burst size of a sweep or sequential point; 0 for mixed traffic.
    pub burst_bytes: u64,
    pub direction: Option<Direction>,
    pub stats: BusStats,
    pub events: EventCounts,
}

impl Window {
    fn between(
        burst_bytes: u64,
        direction: Option<Direction>,
        start: Snapshot,
        end: Snapshot,
    ) -> Self {
        Window {
            burst_bytes,
            direction,
            stats: end.stats - start.stats,
            events: end.events - start.events,
        }
    }

    pub fn alpha(&self) -> f64 {
        metrics::utilization(&self.stats)
    }

    /// Bytes per second.
    pub fn throughput(&self, freq_mhz: f64) -> f64 {
        metrics::throughput(&self.stats, freq_mhz)
    }

    pub fn energy_per_byte(
        &self,
        params: &EnergyParams,
        freq_mhz: f64,
    ) -> Result<f64, EnergyError> {
        metrics::energy_per_byte(&self.stats, &self.events, params, freq_mhz)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimulationResult {
    pub windows: Vec<Window>,
    /// Submission to completion, per transaction in completion order.
    pub latencies: Vec<Cycle>,
    pub violations: usize,
    /// Commands the device refused.
    pub rejected: u64,
    /// Reads whose data differed from the reference memory.
    pub mismatches: u64,
    pub transactions: u64,
    /// Cycles simulated, summed over all systems.
    pub cycles: Cycle,
}

impl SimulationResult {
    pub fn window(&self, burst_bytes: u64, direction: Direction) -> Option<&Window> {
        self.windows
            .iter()
            .find(|w| w.burst_bytes == burst_bytes && w.direction == Some(direction))
    }

    pub fn is_clean(&self) -> bool {
        self.violations == 0 && self.rejected == 0 && self.mismatches == 0
    }

    fn absorb(&mut self, other: SimulationResult) {
        self.windows.extend(other.windows);
        self.latencies.extend(other.latencies);
        self.violations += other.violations;
        self.rejected += other.rejected;
        self.mismatches += other.mismatches;
        self.transactions += other.transactions;
        self.cycles += other.cycles;
    }
}

/// One system plus its reference memory and bookkeeping.
struct Run {
    sys: MemorySystem,
    oracle: Oracle,
    latencies: Vec<Cycle>,
    completed: u64,
    last_completion: Snapshot,
}

impl Run {
    fn new(config: &Config) -> Result<Self, SimError> {
        Ok(Run {
            sys: MemorySystem::new(config)?,
            oracle: Oracle::new(config.device.fill_byte),
            latencies: Vec::new(),
            completed: 0,
            last_completion: Snapshot::default(),
        })
    }

    fn submit_at(&mut self, cycle: Cycle, txn: BusTransaction) -> Result<u64, SimError> {
        self.oracle.track(self.sys.next_token(), &txn);
        self.sys.submit_at(cycle, txn)
    }

    /// Steps once; returns the number of transactions completed this cycle.
    fn step(&mut self) -> Result<u64, SimError> {
        self.sys.step()?;
        let mut done = 0;
        for ev in self.sys.take_events() {
            self.oracle.observe(&ev);
            if let FrontendEvent::Completed(c) = &ev {
                self.latencies.push(c.completed - c.submitted);
                done += 1;
            }
        }
        if done > 0 {
            self.completed += done;
            self.last_completion = self.sys.snapshot();
        }
        Ok(done)
    }

    fn drain(&mut self) -> Result<(), SimError> {
        while !self.sys.is_idle() {
            self.step()?;
        }
        self.sys.flush_bus_trace()?;
        Ok(())
    }

    fn finish(self, windows: Vec<Window>) -> SimulationResult {
        SimulationResult {
            windows,
            latencies: self.latencies,
            violations: self.sys.device().violation_log().len(),
            rejected: self.sys.controller().rejected_commands(),
            mismatches: self.oracle.mismatches(),
            transactions: self.completed,
            cycles: self.sys.cycle(),
        }
    }

    /// Injects bursts back to back. The window opens when burst `warmup`
    /// completes (at cycle 0 without warmup) and closes when burst
    /// `warmup + measured` completes; `extra` bursts keep the pipeline full
    /// until then and are left in flight.
    fn dma(
        &mut self,
        burst: u64,
        direction: Direction,
        base: u64,
        counts: (u64, u64, u64),
    ) -> Result<Window, SimError> {
        let (warmup, measured, extra) = counts;
        let total = warmup + measured + extra;
        let capacity = self.sys.capacity();
        let beat = self.sys.beat_bytes();
        let mut start = (warmup == 0).then(|| self.sys.snapshot());
        let mut submitted = 0;
        if measured == 0 {
            let s = self.sys.snapshot();
            return Ok(Window::between(burst, Some(direction), s, s));
        }
        loop {
            if submitted < total && self.sys.can_accept() {
                let addr = (base + submitted * burst) % capacity;
                let payload = match direction {
                    Direction::Write => pattern(submitted, burst as usize),
                    Direction::Read => Vec::new(),
                };
                let txn = BusTransaction::for_range(0, direction, addr, burst, beat, &payload);
                self.submit_at(self.sys.cycle(), txn)?;
                submitted += 1;
            }
            let before = self.completed;
            self.step()?;
            if start.is_none() && before < warmup && self.completed >= warmup {
                start = Some(self.last_completion);
            }
            if self.completed >= warmup + measured {
                return Ok(Window::between(
                    burst,
                    Some(direction),
                    start.unwrap(),
                    self.last_completion,
                ));
            }
        }
    }

    /// Feeds random traffic until `count` transactions were generated or the
    /// clock reaches `until`, whichever comes first.
    fn random(
        &mut self,
        traffic: &mut RandomTraffic,
        count: u64,
        until: Cycle,
    ) -> Result<u64, SimError> {
        let mut generated = 0;
        while generated < count && self.sys.cycle() < until {
            if self.sys.can_accept() {
                for (at, txn) in traffic.batch(self.sys.cycle(), count - generated) {
                    self.submit_at(at, txn)?;
                    generated += 1;
                }
            }
            self.step()?;
        }
        Ok(generated)
    }

    fn whole_run_window(&self) -> Window {
        Window::between(0, None, Snapshot::default(), self.last_completion)
    }
}

/// Runs a workload to completion. Deterministic for a fixed config and workload.
pub fn run(config: &Config, workload: &Workload) -> Result<SimulationResult, SimError> {
    config.validate()?;
    workload.validate()?;
    if config.llc.enabled && matches!(workload, Workload::Random { .. } | Workload::Trace(_)) {
        return run_cached(config, workload);
    }
    match workload {
        Workload::Sweep { sizes, directions } => {
            let points: Vec<(Direction, u64)> = directions
                .iter()
                .flat_map(|&d| sizes.iter().map(move |&s| (d, s)))
                .collect();
            let runs: Vec<SimulationResult> = points
                .par_iter()
                .enumerate()
                .map(|(i, &(d, s))| {
                    // a single bus trace file can only follow one point
                    if i == 0 {
                        sweep_point(config, d, s)
                    } else {
                        let mut quiet = config.clone();
                        quiet.output.bus_trace = None;
                        sweep_point(&quiet, d, s)
                    }
                })
                .collect::<Result<_, _>>()?;
            let mut merged = SimulationResult::default();
            for r in runs {
                merged.absorb(r);
            }
            merged.windows.sort_by_key(|w| (w.direction, w.burst_bytes));
            Ok(merged)
        }
        &Workload::Sequential {
            addr,
            total_bytes,
            burst_bytes,
            direction,
        } => {
            let mut run = Run::new(config)?;
            let n = total_bytes.div_ceil(burst_bytes);
            let warmup = config.harness.warmup_bursts.min(n / 2);
            let window = run.dma(burst_bytes, direction, addr, (warmup, n - warmup, 0))?;
            run.drain()?;
            Ok(run.finish(vec![window]))
        }
        &Workload::Random {
            seed,
            count,
            max_bytes,
        } => {
            let mut run = Run::new(config)?;
            let mut traffic =
                RandomTraffic::new(seed, run.sys.capacity(), max_bytes, run.sys.beat_bytes());
            run.random(&mut traffic, count, Cycle::MAX)?;
            run.drain()?;
            let w = run.whole_run_window();
            Ok(run.finish(vec![w]))
        }
        Workload::Trace(entries) => {
            let mut run = Run::new(config)?;
            let mut sorted = entries.clone();
            sorted.sort_by_key(|e| e.cycle);
            let beat = run.sys.beat_bytes();
            let mut next = 0;
            loop {
                while next < sorted.len() && sorted[next].cycle <= run.sys.cycle() {
                    let e = sorted[next];
                    let payload = match e.direction {
                        Direction::Write => pattern(next as u64, e.len as usize),
                        Direction::Read => Vec::new(),
                    };
                    let txn =
                        BusTransaction::for_range(0, e.direction, e.addr, e.len, beat, &payload);
                    run.submit_at(e.cycle, txn)?;
                    next += 1;
                }
                if next == sorted.len() && run.sys.is_idle() {
                    break;
                }
                run.step()?;
            }
            run.drain()?;
            let w = run.whole_run_window();
            Ok(run.finish(vec![w]))
        }
    }
}

/// Replays transactions one at a time through the cache stage.
fn run_cached(config: &Config, workload: &Workload) -> Result<SimulationResult, SimError> {
    let sys = MemorySystem::new(config)?;
    let beat = sys.beat_bytes();
    let txns: Vec<BusTransaction> = match workload {
        &Workload::Random {
            seed,
            count,
            max_bytes,
        } => {
            let mut traffic = RandomTraffic::new(seed, sys.capacity(), max_bytes, beat);
            (0..count).map(|_| traffic.next_transaction()).collect()
        }
        Workload::Trace(entries) => {
            let mut sorted = entries.clone();
            sorted.sort_by_key(|e| e.cycle);
            sorted
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let payload = match e.direction {
                        Direction::Write => pattern(i as u64, e.len as usize),
                        Direction::Read => Vec::new(),
                    };
                    BusTransaction::for_range(0, e.direction, e.addr, e.len, beat, &payload)
                })
                .collect()
        }
        _ => unreachable!("only mixed traffic runs through the cache"),
    };
    let mut llc = Llc::new(config.llc.clone(), sys);
    let mut reference = SparseMemory::new(config.device.fill_byte);
    let mut mismatches = 0;
    for txn in &txns {
        let span = txn.span();
        match txn.direction {
            Direction::Read => {
                let (data, _) = llc.read(span.start, span.len())?;
                if data != reference.read(span.start, span.len()) {
                    mismatches += 1;
                }
            }
            Direction::Write => {
                let enables = txn.byte_enables();
                let mut i = 0;
                while i < enables.len() {
                    if !enables[i] {
                        i += 1;
                        continue;
                    }
                    let from = i;
                    while i < enables.len() && enables[i] {
                        i += 1;
                    }
                    llc.write(span.start + from as u64, &txn.data[from..i])?;
                }
                reference.apply(txn);
            }
        }
    }
    llc.flush()?;
    let sys = llc.backing_mut();
    sys.drain()?;
    sys.flush_bus_trace()?;
    Ok(SimulationResult {
        windows: vec![Window::between(
            0,
            None,
            Snapshot::default(),
            sys.snapshot(),
        )],
        latencies: Vec::new(),
        violations: sys.device().violation_log().len(),
        rejected: sys.controller().rejected_commands(),
        mismatches,
        transactions: txns.len() as u64,
        cycles: sys.cycle(),
    })
}

fn sweep_point(
    config: &Config,
    direction: Direction,
    burst: u64,
) -> Result<SimulationResult, SimError> {
    let h = &config.harness;
    let measured = (h.measure_bytes / burst).max(h.min_measured_bursts);
    let warmup = h.warmup_bursts.max(h.warmup_bytes / burst);
    let extra = config.frontend.max_outstanding as u64 + 4;
    let mut run = Run::new(config)?;
    let window = run.dma(burst, direction, 0, (warmup, measured, extra))?;
    run.sys.flush_bus_trace()?;
    Ok(run.finish(vec![window]))
}

/// Utilization curve for the configured burst range, one window per size
/// and direction, sorted by direction then size.
pub fn sweep_bursts(
    config: &Config,
    directions: &[Direction],
) -> Result<SimulationResult, SimError> {
    run(
        config,
        &Workload::Sweep {
            sizes: config.harness.burst_sizes(),
            directions: directions.to_vec(),
        },
    )
}

/// Read transactions whose data differed from the reference memory.
pub fn verify_against_oracle(config: &Config, workload: &Workload) -> Result<u64, SimError> {
    Ok(run(config, workload)?.mismatches)
}

/// Energy model with the background power solved so that the sequential
/// write workload hits `target_pj_per_byte`. Returns the params and the
/// measured window.
pub fn calibrate_energy(
    config: &Config,
    target_pj_per_byte: f64,
) -> Result<(EnergyParams, Window), SimError> {
    let result = run(config, &Workload::mem_writes())?;
    let w = result.windows[0];
    let params = metrics::calibrate_background(
        &w.stats,
        &w.events,
        &config.energy,
        config.timing.freq_mhz,
        target_pj_per_byte,
    )
    .map_err(|e| SimError::BadTransaction(e.to_string()))?;
    Ok((params, w))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuzzReport {
    pub seed: u64,
    pub transactions: u64,
    pub cycles: Cycle,
    /// Device referee log, one line per rejected command.
    pub violations: Vec<String>,
    pub rejected: u64,
    pub mismatches: u64,
    pub first_mismatch: Option<Mismatch>,
    /// Banks past their refresh deadline when traffic stopped.
    pub overdue_banks: Vec<u32>,
    /// Column bursts issued while some bank was refreshing.
    pub bursts_during_refresh: u64,
    pub reads_checked: u64,
}

impl FuzzReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
            && self.rejected == 0
            && self.mismatches == 0
            && self.overdue_banks.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FuzzOptions {
    pub seed: u64,
    pub count: u64,
    /// Stop generating once the clock reaches this cycle.
    pub max_cycles: Cycle,
    pub max_bytes: u64,
    /// Corrupt a stored word and read it back, to prove the checker fires.
    pub inject_corruption: bool,
}

impl FuzzOptions {
    pub fn new(seed: u64, count: u64) -> Self {
        FuzzOptions {
            seed,
            count,
            max_cycles: Cycle::MAX,
            max_bytes: 4096,
            inject_corruption: false,
        }
    }
}

/// Randomized traffic against the device referee and the reference memory.
pub fn fuzz(config: &Config, opts: FuzzOptions) -> Result<FuzzReport, SimError> {
    let mut run = Run::new(config)?;
    let mut traffic = RandomTraffic::new(
        opts.seed,
        run.sys.capacity(),
        opts.max_bytes,
        run.sys.beat_bytes(),
    );
    run.random(&mut traffic, opts.count, opts.max_cycles)?;
    let overdue_banks = run.sys.device().check_refresh_deadlines(run.sys.cycle());
    run.drain()?;
    if opts.inject_corruption {
        let beat = run.sys.beat_bytes();
        let addr = 0x100;
        let data = pattern(opts.seed, 64);
        let now = run.sys.cycle();
        run.submit_at(
            now,
            BusTransaction::for_range(0, Direction::Write, addr, 64, beat, &data),
        )?;
        run.drain()?;
        run.sys.device_mut().corrupt_word(addr);
        let now = run.sys.cycle();
        run.submit_at(
            now,
            BusTransaction::for_range(0, Direction::Read, addr, 64, beat, &[]),
        )?;
        run.drain()?;
    }
    let dev = run.sys.device();
    Ok(FuzzReport {
        seed: opts.seed,
        transactions: run.completed,
        cycles: run.sys.cycle(),
        violations: dev.violation_report().lines().map(str::to_string).collect(),
        rejected: run.sys.controller().rejected_commands(),
        mismatches: run.oracle.mismatches(),
        first_mismatch: run.oracle.first_mismatch().cloned(),
        overdue_banks,
        bursts_during_refresh: run.sys.controller().bursts_during_refresh(),
        reads_checked: run.oracle.reads_checked(),
    })
}

/// Seeds derived from `seed` for multi-seed fuzzing.
pub fn derive_seeds(seed: u64, n: usize) -> Vec<u64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

#[cfg(test)]
mod tests;
