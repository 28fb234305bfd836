//! Command-line front end shared by the `rpcsim` binary and the tests.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration, usage or trace
//! parse error, 3 protocol violation (or any fuzz failure), 4 oracle mismatch.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Config, CONFIG_ENV};
use crate::error::SimError;
use crate::harness::{self, FuzzOptions, Workload};
use crate::protocol::Direction;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PROTOCOL: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "rpcsim",
    version,
    about = "Cycle-accurate RPC DRAM interface simulator"
)]
pub struct Cli {
    /// TOML configuration file
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Overrides harness.seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (CSV for sweep and trace, TOML snippet for calibrate-energy)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Per-cycle data bus dump
    #[arg(long, global = true)]
    pub bus_trace: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Read,
    Write,
    Both,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Bus utilization over power-of-two burst sizes
    Sweep {
        #[arg(long, value_enum, default_value = "both")]
        direction: DirectionArg,
        #[arg(long)]
        min_burst: Option<u64>,
        #[arg(long)]
        max_burst: Option<u64>,
    },
    /// Replays a trace file and checks read data against the reference memory
    Trace { file: PathBuf },
    /// Randomized traffic against the protocol referee and the reference memory
    Fuzz {
        #[arg(long, default_value_t = 10_000)]
        count: u64,
        /// Consecutive seeds to run, starting at --seed
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 4096)]
        max_bytes: u64,
        /// Corrupt a stored word to check that mismatches are caught
        #[arg(long)]
        inject_corruption: bool,
    },
    /// Solves the background power for the sequential 64 KiB write workload
    CalibrateEnergy {
        #[arg(long, default_value_t = 250.0)]
        target: f64,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::Config(_) | SimError::Trace(_) => EXIT_CONFIG,
            _ => EXIT_OTHER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: EXIT_OTHER,
            message: e.to_string(),
        }
    }
}

/// Parses `args` and runs the command, writing reports to `stdout` and
/// diagnostics to `stderr`. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path).map_err(SimError::from)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.harness.seed = seed;
    }
    if let Some(path) = &cli.bus_trace {
        cfg.output.bus_trace = Some(path.clone());
    }
    if let Some(path) = &cli.out {
        cfg.output.csv = Some(path.clone());
    }
    Ok(cfg)
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let mut cfg = load_config(cli)?;
    let freq = cfg.timing.freq_mhz;
    match &cli.command {
        Command::Sweep {
            direction,
            min_burst,
            max_burst,
        } => {
            if let Some(v) = min_burst {
                cfg.harness.min_burst = *v;
            }
            if let Some(v) = max_burst {
                cfg.harness.max_burst = *v;
            }
            cfg.validate().map_err(SimError::from)?;
            let directions = match direction {
                DirectionArg::Read => vec![Direction::Read],
                DirectionArg::Write => vec![Direction::Write],
                DirectionArg::Both => vec![Direction::Read, Direction::Write],
            };
            let result = harness::sweep_bursts(&cfg, &directions)?;
            match &cfg.output.csv {
                Some(path) => {
                    let mut f = BufWriter::new(File::create(path)?);
                    harness::write_csv(&mut f, &result.windows, &cfg.energy, freq)?;
                    f.flush()?;
                    harness::write_summary(stdout, &result, &cfg.energy, freq)?;
                }
                None => {
                    harness::write_csv(stdout, &result.windows, &cfg.energy, freq)?;
                    harness::write_summary(stderr, &result, &cfg.energy, freq)?;
                }
            }
            Ok(if result.violations > 0 || result.rejected > 0 {
                EXIT_PROTOCOL
            } else {
                EXIT_OK
            })
        }
        Command::Trace { file } => {
            let text = std::fs::read_to_string(file).map_err(|e| Failure {
                code: EXIT_CONFIG,
                message: format!("{}: {e}", file.display()),
            })?;
            let entries = harness::parse_trace(&text).map_err(SimError::from)?;
            let result = harness::run(&cfg, &Workload::Trace(entries))?;
            harness::write_summary(stdout, &result, &cfg.energy, freq)?;
            if let Some(path) = &cfg.output.csv {
                let mut f = BufWriter::new(File::create(path)?);
                harness::write_csv(&mut f, &result.windows, &cfg.energy, freq)?;
                f.flush()?;
            }
            Ok(if result.violations > 0 || result.rejected > 0 {
                EXIT_PROTOCOL
            } else if result.mismatches > 0 {
                EXIT_MISMATCH
            } else {
                EXIT_OK
            })
        }
        Command::Fuzz {
            count,
            seeds,
            max_bytes,
            inject_corruption,
        } => {
            let first = cfg.harness.seed;
            for seed in first..first + seeds {
                let mut opts = FuzzOptions::new(seed, *count);
                opts.max_bytes = *max_bytes;
                opts.inject_corruption = *inject_corruption;
                let report = harness::fuzz(&cfg, opts)?;
                writeln!(
                    stdout,
                    "seed {seed}: {} transactions, {} cycles, {} reads checked, {} violations, {} mismatches",
                    report.transactions,
                    report.cycles,
                    report.reads_checked,
                    report.violations.len(),
                    report.mismatches
                )?;
                if !report.is_clean() {
                    for v in report.violations.iter().take(10) {
                        writeln!(stderr, "violation: {v}")?;
                    }
                    if let Some(m) = &report.first_mismatch {
                        writeln!(
                            stderr,
                            "mismatch at {:#x}: expected {:#04x}, read {:#04x}",
                            m.addr, m.expected, m.actual
                        )?;
                    }
                    if !report.overdue_banks.is_empty() {
                        writeln!(
                            stderr,
                            "refresh overdue on banks {:?}",
                            report.overdue_banks
                        )?;
                    }
                    writeln!(
                        stderr,
                        "fuzz failed; reproduce with --seed {seed} --count {count}"
                    )?;
                    return Ok(EXIT_PROTOCOL);
                }
            }
            Ok(EXIT_OK)
        }
        Command::CalibrateEnergy { target } => {
            let (params, window) = harness::calibrate_energy(&cfg, *target)?;
            let achieved = window.energy_per_byte(&params, freq).map_err(|e| Failure {
                code: EXIT_OTHER,
                message: e.to_string(),
            })?;
            writeln!(stdout, "alpha        {:.4}", window.alpha())?;
            writeln!(
                stdout,
                "throughput   {:.1} MB/s",
                window.throughput(freq) / 1e6
            )?;
            writeln!(stdout, "p_background {:.3} mW", params.p_background)?;
            writeln!(stdout, "energy       {achieved:.2} pJ/B")?;
            if let Some(path) = &cli.out {
                std::fs::write(
                    path,
                    format!("[energy]\np_background = {:.3}\n", params.p_background),
                )?;
            }
            Ok(EXIT_OK)
        }
    }
}
