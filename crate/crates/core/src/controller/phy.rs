//! Digital PHY timing model. The transmit side plays out the beats the timing
//! FSM scheduled on the data bus; the receive side packs read data beats
//! back into 256-bit words and hands them upstream after the sampling and
//! clock-domain-crossing delays.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::metrics::{BeatClass, BusStats};
use crate::protocol::{Cycle, Direction, RpcCommand, Word, WordGeometry, WORD_BYTES};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhyConfig {
    /// Output strobe offset; delays write completion reporting.
    pub tx_strobe_offset: u64,
    /// Input sampling delay applied to received words.
    pub rx_sample_delay: u64,
    /// Clock-domain-crossing latency of the receive path.
    pub cdc_delay: u64,
}

impl Default for PhyConfig {
    fn default() -> Self {
        PhyConfig {
            tx_strobe_offset: 1,
            rx_sample_delay: 1,
            cdc_delay: 2,
        }
    }
}

/// What the data bus carries in one cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeatKind {
    Idle,
    Command {
        cmd: RpcCommand,
        slice: u8,
    },
    Mask {
        index: u8,
    },
    Preamble,
    /// Four bytes: two 16-bit DDR halves on the 16 DQ pins.
    Data {
        direction: Direction,
        bytes: [u8; 4],
    },
    Postamble,
}

impl BeatKind {
    pub fn class(&self) -> BeatClass {
        match self {
            BeatKind::Idle => BeatClass::Idle,
            BeatKind::Command { .. } => BeatClass::Command,
            BeatKind::Mask { .. } => BeatClass::Mask,
            BeatKind::Preamble | BeatKind::Postamble => BeatClass::Strobe,
            BeatKind::Data { .. } => BeatClass::Data,
        }
    }

    /// The rising- and falling-edge halves driven on the DQ pins.
    pub fn ddr_halves(&self) -> Option<[u16; 2]> {
        match self {
            BeatKind::Data { bytes, .. } => Some([
                u16::from_le_bytes([bytes[0], bytes[1]]),
                u16::from_le_bytes([bytes[2], bytes[3]]),
            ]),
            _ => None,
        }
    }
}

impl fmt::Display for BeatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BeatKind::Idle => f.write_str("idle"),
            BeatKind::Command { cmd, slice } => write!(f, "cmd {slice} {cmd}"),
            BeatKind::Mask { index } => write!(f, "mask {index}"),
            BeatKind::Preamble => f.write_str("preamble"),
            BeatKind::Data { direction, bytes } => write!(
                f,
                "data {} {:02x}{:02x}{:02x}{:02x}",
                if *direction == Direction::Read {
                    'R'
                } else {
                    'W'
                },
                bytes[0],
                bytes[1],
                bytes[2],
                bytes[3]
            ),
            BeatKind::Postamble => f.write_str("postamble"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BusBeat {
    pub cycle: Cycle,
    pub content: BeatKind,
}

/// One PHY step: the bus content of this cycle plus a read word becoming
/// visible upstream, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhyObservation {
    pub beat: BeatKind,
    pub word: Option<Word>,
}

pub struct Phy {
    config: PhyConfig,
    tx: VecDeque<BusBeat>,
    rx_word: Word,
    rx_fill: usize,
    cdc: VecDeque<(Cycle, Word)>,
    stats: BusStats,
    trace: Option<Box<dyn Write + Send>>,
}

impl Phy {
    pub fn new(config: PhyConfig) -> Self {
        Phy {
            config,
            tx: VecDeque::new(),
            rx_word: [0; WORD_BYTES],
            rx_fill: 0,
            cdc: VecDeque::new(),
            stats: BusStats::default(),
            trace: None,
        }
    }

    pub fn config(&self) -> &PhyConfig {
        &self.config
    }

    /// Emits one text line per non-idle bus cycle: `<cycle> <kind> <operands>`.
    pub fn set_trace(&mut self, sink: Box<dyn Write + Send>) {
        self.trace = Some(sink);
    }

    pub fn flush_trace(&mut self) -> std::io::Result<()> {
        match &mut self.trace {
            Some(t) => t.flush(),
            None => Ok(()),
        }
    }

    pub fn stats(&self) -> &BusStats {
        &self.stats
    }

    /// Queues beats; cycles must be increasing and not before earlier beats.
    pub fn schedule(&mut self, beat: BusBeat) {
        debug_assert!(self.tx.back().is_none_or(|b| b.cycle < beat.cycle));
        self.tx.push_back(beat);
    }

    pub fn is_idle(&self) -> bool {
        self.tx.is_empty() && self.cdc.is_empty() && self.rx_fill == 0
    }

    pub fn step(&mut self, cycle: Cycle) -> PhyObservation {
        let beat = match self.tx.front() {
            Some(b) if b.cycle == cycle => self.tx.pop_front().unwrap().content,
            Some(b) => {
                debug_assert!(b.cycle > cycle, "beat scheduled in the past");
                BeatKind::Idle
            }
            None => BeatKind::Idle,
        };
        self.stats.record(beat.class());
        if let BeatKind::Data {
            direction: Direction::Read,
            bytes,
        } = beat
        {
            let bpc = WordGeometry::RPC.bytes_per_bus_cycle;
            self.rx_word[self.rx_fill..self.rx_fill + bpc].copy_from_slice(&bytes);
            self.rx_fill += bpc;
            if self.rx_fill == WORD_BYTES {
                self.rx_fill = 0;
                let ready = cycle + self.config.rx_sample_delay + self.config.cdc_delay;
                self.cdc.push_back((ready, self.rx_word));
            }
        }
        if beat != BeatKind::Idle {
            if let Some(t) = &mut self.trace {
                let _ = writeln!(t, "{cycle} {beat}");
            }
        }
        let word = match self.cdc.front() {
            Some(&(ready, w)) if ready <= cycle => {
                self.cdc.pop_front();
                Some(w)
            }
            _ => None,
        };
        PhyObservation { beat, word }
    }
}
