//! Shared protocol vocabulary: word geometry, timing parameters, the device
//! command set and the word-granular address arithmetic every other stage
//! builds on.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Controller clock cycle index.
pub type Cycle = u64;

/// Bytes in one native DRAM word (256 bit).
pub const WORD_BYTES: usize = 32;

/// One 256-bit DRAM word.
pub type Word = [u8; WORD_BYTES];

/// Byte-enable mask covering all 32 bytes of a word.
pub const FULL_MASK: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Read,
    Write,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Read => "read",
            Direction::Write => "write",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Physical word geometry of the data bus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordGeometry {
    pub word_bytes: usize,
    pub dq_pins: usize,
    pub bytes_per_bus_cycle: usize,
    pub cycles_per_word: u64,
}

impl WordGeometry {
    /// 16 DQ pins with DDR signalling: 4 bytes per cycle, one word per 8 cycles.
    pub const RPC: WordGeometry = WordGeometry {
        word_bytes: WORD_BYTES,
        dq_pins: 16,
        bytes_per_bus_cycle: 4,
        cycles_per_word: 8,
    };

    pub fn is_consistent(&self) -> bool {
        self.word_bytes == self.bytes_per_bus_cycle * self.cycles_per_word as usize
            && self.bytes_per_bus_cycle == 2 * self.dq_pins / 8
    }
}

/// Bus cycles spent moving `n_words` words over the data bus.
pub fn word_cycles(n_words: u64) -> u64 {
    n_words * WordGeometry::RPC.cycles_per_word
}

/// Peak data-bus bandwidth in bytes per second at full utilization.
pub fn peak_bandwidth(freq_mhz: f64) -> f64 {
    assert!(freq_mhz > 0.0, "clock frequency must be positive");
    freq_mhz * 1e6 * WordGeometry::RPC.bytes_per_bus_cycle as f64
}

/// Word-granular cover of a byte range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordSpan {
    pub first_word_addr: u64,
    pub n_words: u64,
    /// Offset of the first covered byte inside the first word.
    pub head_offset: usize,
    /// Offset of the last covered byte inside the last word.
    pub tail_offset: usize,
}

impl WordSpan {
    /// The byte range this cover was derived from.
    pub fn byte_range(&self) -> Range<u64> {
        let start = self.first_word_addr + self.head_offset as u64;
        let last_word = self.first_word_addr + (self.n_words - 1) * WORD_BYTES as u64;
        start..last_word + self.tail_offset as u64 + 1
    }
}

/// Covers `[addr, addr + len)` with whole words.
pub fn bytes_to_words(addr: u64, len: u64) -> WordSpan {
    assert!(len >= 1, "byte range must not be empty");
    let wb = WORD_BYTES as u64;
    let first = addr / wb * wb;
    let last_byte = addr + len - 1;
    let last = last_byte / wb * wb;
    WordSpan {
        first_word_addr: first,
        n_words: (last - first) / wb + 1,
        head_offset: (addr % wb) as usize,
        tail_offset: (last_byte % wb) as usize,
    }
}

/// Byte-enable mask with bits `from..=to` set.
pub fn byte_mask(from: usize, to: usize) -> u32 {
    debug_assert!(from <= to && to < WORD_BYTES);
    let upper = if to == 31 {
        u32::MAX
    } else {
        (1u32 << (to + 1)) - 1
    };
    upper & (u32::MAX << from)
}

/// Protocol timing constraints, all in controller clock cycles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingParams {
    pub freq_mhz: f64,
    /// Activate to read/write.
    pub t_rcd: u64,
    /// Activate to precharge.
    pub t_ras: u64,
    /// Precharge to activate or refresh.
    pub t_rp: u64,
    /// End of read data to precharge.
    pub t_rtp: u64,
    /// End of write data to precharge (write recovery).
    pub t_wr: u64,
    /// Refresh duration; the bank rejects datapath commands meanwhile.
    pub t_rfc: u64,
    /// Per-bank refresh deadline.
    pub t_refi: u64,
    /// Maximum spacing between ZQ calibrations.
    pub t_zqi: u64,
    /// Bus occupancy of one ZQ calibration command.
    pub t_zq: u64,
    /// Minimum duration of each initialization step, in order.
    pub t_init_steps: Vec<u64>,
    /// Bus cycles taken by one serialized command packet.
    pub t_cmd_cycles: u64,
    pub t_preamble: u64,
    pub t_postamble: u64,
    /// Largest contiguous burst span; also the row (page) size.
    pub page_bytes: u64,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            freq_mhz: 200.0,
            t_rcd: 6,
            t_ras: 14,
            t_rp: 6,
            t_rtp: 2,
            t_wr: 12,
            t_rfc: 40,
            t_refi: 7800,
            t_zqi: 200_000,
            t_zq: 16,
            t_init_steps: vec![200, 100, 64, 32],
            t_cmd_cycles: 2,
            t_preamble: 2,
            t_postamble: 1,
            page_bytes: 2048,
        }
    }
}

impl TimingParams {
    /// Bus cycles carrying the first/last write masks (2 x 32 bit).
    pub const MASK_CYCLES: u64 = 2;

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("timing.t_rcd", self.t_rcd),
            ("timing.t_ras", self.t_ras),
            ("timing.t_rp", self.t_rp),
            ("timing.t_rtp", self.t_rtp),
            ("timing.t_wr", self.t_wr),
            ("timing.t_rfc", self.t_rfc),
            ("timing.t_refi", self.t_refi),
            ("timing.t_zqi", self.t_zqi),
            ("timing.t_zq", self.t_zq),
            ("timing.t_cmd_cycles", self.t_cmd_cycles),
            ("timing.t_preamble", self.t_preamble),
            ("timing.t_postamble", self.t_postamble),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(ConfigError::invalid(key, "must be greater than zero"));
            }
        }
        if self.freq_mhz.is_nan() || self.freq_mhz <= 0.0 {
            return Err(ConfigError::invalid(
                "timing.freq_mhz",
                "must be greater than zero",
            ));
        }
        if self.t_init_steps.is_empty() || self.t_init_steps.contains(&0) {
            return Err(ConfigError::invalid(
                "timing.t_init_steps",
                "needs at least one step and every duration must be greater than zero",
            ));
        }
        if self.t_init_steps.iter().any(|&d| d < self.t_cmd_cycles) {
            return Err(ConfigError::invalid(
                "timing.t_init_steps",
                "each step must last at least timing.t_cmd_cycles",
            ));
        }
        if self.t_refi <= self.t_rfc {
            return Err(ConfigError::invalid(
                "timing.t_refi",
                "must exceed timing.t_rfc",
            ));
        }
        if self.t_zq < self.t_cmd_cycles {
            return Err(ConfigError::invalid(
                "timing.t_zq",
                "must be at least timing.t_cmd_cycles",
            ));
        }
        if !self.page_bytes.is_power_of_two() || self.page_bytes < WORD_BYTES as u64 {
            return Err(ConfigError::invalid(
                "timing.page_bytes",
                "must be a power of two and a multiple of the 32 byte word",
            ));
        }
        Ok(())
    }

    pub fn page_words(&self) -> u32 {
        (self.page_bytes / WORD_BYTES as u64) as u32
    }

    /// Cycles the data bus is held by `cmd`, counted from its issue cycle.
    pub fn bus_occupancy(&self, cmd: &RpcCommand) -> u64 {
        match *cmd {
            RpcCommand::Read { n_words, .. } => {
                self.t_cmd_cycles + self.t_preamble + word_cycles(n_words as u64) + self.t_postamble
            }
            RpcCommand::Write { n_words, .. } => {
                self.t_cmd_cycles
                    + Self::MASK_CYCLES
                    + self.t_preamble
                    + word_cycles(n_words as u64)
                    + self.t_postamble
            }
            RpcCommand::ZqCal => self.t_zq,
            _ => self.t_cmd_cycles,
        }
    }

    /// Data beats of a read or write as `[start, end)` offsets from issue.
    pub fn data_window(&self, cmd: &RpcCommand) -> Option<Range<u64>> {
        match *cmd {
            RpcCommand::Read { n_words, .. } => {
                let start = self.t_cmd_cycles + self.t_preamble;
                Some(start..start + word_cycles(n_words as u64))
            }
            RpcCommand::Write { n_words, .. } => {
                let start = self.t_cmd_cycles + Self::MASK_CYCLES + self.t_preamble;
                Some(start..start + word_cycles(n_words as u64))
            }
            _ => None,
        }
    }
}

/// Set of banks addressed by one refresh command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BankSet(pub u32);

impl BankSet {
    pub fn single(bank: u32) -> Self {
        BankSet(1 << bank)
    }

    pub fn contains(self, bank: u32) -> bool {
        self.0 & (1 << bank) != 0
    }

    pub fn iter(self) -> impl Iterator<Item = u32> {
        (0..32).filter(move |&b| self.contains(b))
    }
}

/// A device-level command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RpcCommand {
    Activate {
        bank: u32,
        row: u32,
    },
    Read {
        bank: u32,
        col: u32,
        n_words: u32,
    },
    Write {
        bank: u32,
        col: u32,
        n_words: u32,
        first_mask: u32,
        last_mask: u32,
    },
    Precharge {
        bank: u32,
    },
    Refresh {
        banks: BankSet,
    },
    ZqCal,
    InitStep {
        index: u32,
    },
}

impl RpcCommand {
    pub fn name(&self) -> &'static str {
        match self {
            RpcCommand::Activate { .. } => "ACT",
            RpcCommand::Read { .. } => "RD",
            RpcCommand::Write { .. } => "WR",
            RpcCommand::Precharge { .. } => "PRE",
            RpcCommand::Refresh { .. } => "REF",
            RpcCommand::ZqCal => "ZQC",
            RpcCommand::InitStep { .. } => "INIT",
        }
    }

    pub fn is_datapath(&self) -> bool {
        matches!(
            self,
            RpcCommand::Activate { .. }
                | RpcCommand::Read { .. }
                | RpcCommand::Write { .. }
                | RpcCommand::Precharge { .. }
        )
    }
}

impl fmt::Display for RpcCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RpcCommand::Activate { bank, row } => write!(f, "ACT b{bank} r{row}"),
            RpcCommand::Read { bank, col, n_words } => write!(f, "RD b{bank} c{col} n{n_words}"),
            RpcCommand::Write {
                bank,
                col,
                n_words,
                first_mask,
                last_mask,
            } => write!(
                f,
                "WR b{bank} c{col} n{n_words} fm{first_mask:08x} lm{last_mask:08x}"
            ),
            RpcCommand::Precharge { bank } => write!(f, "PRE b{bank}"),
            RpcCommand::Refresh { banks } => write!(f, "REF {:#x}", banks.0),
            RpcCommand::ZqCal => write!(f, "ZQC"),
            RpcCommand::InitStep { index } => write!(f, "INIT {index}"),
        }
    }
}

/// Bank/row/column decomposition of a word address.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DramLocation {
    pub bank: u32,
    pub row: u32,
    /// Column in words.
    pub col: u32,
}

/// Maps byte addresses onto banks, rows and word columns. Consecutive pages
/// rotate across banks so sequential traffic alternates banks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AddressMap {
    pub banks: u32,
    pub rows: u32,
    pub page_bytes: u64,
}

impl AddressMap {
    pub fn capacity(&self) -> u64 {
        self.banks as u64 * self.rows as u64 * self.page_bytes
    }

    pub fn locate(&self, addr: u64) -> DramLocation {
        let page = addr / self.page_bytes;
        DramLocation {
            bank: (page % self.banks as u64) as u32,
            row: (page / self.banks as u64) as u32,
            col: ((addr % self.page_bytes) / WORD_BYTES as u64) as u32,
        }
    }

    pub fn address_of(&self, loc: DramLocation) -> u64 {
        let page = loc.row as u64 * self.banks as u64 + loc.bank as u64;
        page * self.page_bytes + loc.col as u64 * WORD_BYTES as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force cover: enumerate every byte and collect the words it falls in.
    fn byte_map_oracle(addr: u64, len: u64) -> (u64, u64, usize, usize) {
        let words: std::collections::BTreeSet<u64> = (addr..addr + len).map(|b| b / 32).collect();
        let first = *words.iter().next().unwrap();
        (
            first * 32,
            words.len() as u64,
            (addr - first * 32) as usize,
            ((addr + len - 1) % 32) as usize,
        )
    }

    #[test]
    fn rpc_geometry_is_consistent() {
        assert!(WordGeometry::RPC.is_consistent());
        assert_eq!(WordGeometry::RPC.word_bytes, 4 * 8);
    }

    #[test]
    fn word_cycles_examples() {
        assert_eq!(word_cycles(1), 8);
        assert_eq!(word_cycles(0), 0);
        assert_eq!(word_cycles(64), 512);
    }

    #[test]
    fn bytes_to_words_examples() {
        let s = bytes_to_words(0, 32);
        assert_eq!(
            (s.first_word_addr, s.n_words, s.head_offset, s.tail_offset),
            (0, 1, 0, 31)
        );
        let s = bytes_to_words(4, 60);
        assert_eq!(
            (s.first_word_addr, s.n_words, s.head_offset, s.tail_offset),
            (0, 2, 4, 31)
        );
        assert_eq!(byte_map_oracle(4, 60), (0, 2, 4, 31));
        let s = bytes_to_words(60, 8);
        assert_eq!(
            (s.first_word_addr, s.n_words, s.head_offset, s.tail_offset),
            (32, 2, 28, 3)
        );
        assert_eq!(byte_map_oracle(60, 8), (32, 2, 28, 3));
    }

    #[test]
    fn bytes_to_words_matches_oracle_exhaustively() {
        for base in [0u64, 4096, 1 << 40] {
            for off in 0..64 {
                for len in 1..=128 {
                    let addr = base + off;
                    let s = bytes_to_words(addr, len);
                    let o = byte_map_oracle(addr, len);
                    assert_eq!(
                        (s.first_word_addr, s.n_words, s.head_offset, s.tail_offset),
                        o
                    );
                    assert_eq!(s.byte_range(), addr..addr + len);
                }
            }
        }
    }

    #[test]
    fn peak_bandwidth_examples() {
        assert_eq!(peak_bandwidth(200.0), 800e6);
        assert_eq!(peak_bandwidth(933.0), 3732e6);
    }

    #[test]
    #[should_panic]
    fn peak_bandwidth_rejects_zero() {
        peak_bandwidth(0.0);
    }

    #[test]
    fn byte_mask_edges() {
        assert_eq!(byte_mask(0, 31), FULL_MASK);
        assert_eq!(byte_mask(4, 31), 0xffff_fff0);
        assert_eq!(byte_mask(0, 3), 0xf);
        assert_eq!(byte_mask(5, 5), 1 << 5);
    }

    #[test]
    fn default_timing_is_valid() {
        TimingParams::default().validate().unwrap();
        let mut t = TimingParams::default();
        t.t_rfc = t.t_refi;
        assert!(t.validate().is_err());
        let t = TimingParams {
            page_bytes: 3000,
            ..TimingParams::default()
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn address_map_round_trips() {
        let map = AddressMap {
            banks: 4,
            rows: 4096,
            page_bytes: 2048,
        };
        assert_eq!(map.capacity(), 32 << 20);
        let loc = map.locate(0x1800 + 64);
        assert_eq!(
            loc,
            DramLocation {
                bank: 3,
                row: 0,
                col: 2
            }
        );
        assert_eq!(map.address_of(loc), 0x1800 + 64);
        assert_eq!(map.locate(0x2000).bank, 0);
        assert_eq!(map.locate(0x2000).row, 1);
    }

    proptest::proptest! {
        #[test]
        fn word_cycles_linear(n in 0u64..1_000_000) {
            proptest::prop_assert_eq!(word_cycles(n), 8 * n);
        }

        #[test]
        fn word_span_round_trip(addr in 0u64..(1 << 48), len in 1u64..100_000) {
            let s = bytes_to_words(addr, len);
            proptest::prop_assert_eq!(s.byte_range(), addr..addr + len);
            proptest::prop_assert_eq!(s.first_word_addr % 32, 0);
        }
    }
}
