use std::fmt;

use thiserror::Error;

use crate::protocol::Cycle;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("cannot read config `{path}`: {message}")]
    Io { path: String, message: String },
}

impl ConfigError {
    pub fn invalid(key: &str, message: &str) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            message: message.to_string(),
        }
    }
}

/// Named timing constraint checked by the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    Rcd,
    Ras,
    Rp,
    Rtp,
    Wr,
    Rfc,
    InitStep,
    /// Data bus still held by an earlier command.
    Bus,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constraint::Rcd => "t_rcd",
            Constraint::Ras => "t_ras",
            Constraint::Rp => "t_rp",
            Constraint::Rtp => "t_rtp",
            Constraint::Wr => "t_wr",
            Constraint::Rfc => "t_rfc",
            Constraint::InitStep => "t_init_step",
            Constraint::Bus => "db_bus",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateViolation {
    NoOpenRow { bank: u32 },
    BankActive { bank: u32 },
    BankRefreshing { bank: u32 },
    BankOutOfRange { bank: u32 },
    RowOutOfRange { row: u32 },
    PageOverrun { col: u32, n_words: u32 },
    EmptyBurst,
    InitOutOfOrder { expected: u32, got: u32 },
    AlreadyInitialized,
}

impl fmt::Display for StateViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateViolation::NoOpenRow { bank } => write!(f, "bank {bank} has no open row"),
            StateViolation::BankActive { bank } => write!(f, "bank {bank} already active"),
            StateViolation::BankRefreshing { bank } => write!(f, "bank {bank} is refreshing"),
            StateViolation::BankOutOfRange { bank } => write!(f, "bank {bank} does not exist"),
            StateViolation::RowOutOfRange { row } => write!(f, "row {row} does not exist"),
            StateViolation::PageOverrun { col, n_words } => {
                write!(
                    f,
                    "burst of {n_words} words at column {col} leaves the page"
                )
            }
            StateViolation::EmptyBurst => f.write_str("burst of zero words"),
            StateViolation::InitOutOfOrder { expected, got } => {
                write!(f, "init step {got} issued, expected {expected}")
            }
            StateViolation::AlreadyInitialized => f.write_str("init step after initialization"),
        }
    }
}

/// Why the device rejected a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("timing violation {constraint}: required gap {required}, actual {actual}")]
    TimingViolation {
        constraint: Constraint,
        required: u64,
        actual: u64,
    },
    #[error("state violation: {0}")]
    StateViolation(StateViolation),
    #[error("device not initialized")]
    NotInitialized,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no progress for {idle_cycles} cycles (stalled at cycle {cycle})")]
    DeadlockDetected { cycle: Cycle, idle_cycles: u64 },
    #[error("address range {addr:#x}+{len} outside the {capacity} byte device")]
    AddressOutOfRange { addr: u64, len: u64, capacity: u64 },
    #[error("malformed transaction: {0}")]
    BadTransaction(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Llc(#[from] LlcError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlcError {
    #[error("address {addr:#x} beyond the {aperture} byte scratchpad aperture")]
    SpmOutOfRange { addr: u64, aperture: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EnergyError {
    #[error("no bytes transferred")]
    ZeroBytes,
}
