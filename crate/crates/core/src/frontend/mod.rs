//! Bus frontend: serializes initiator traffic, converts it to word-granular
//! requests split at page boundaries, buffers write data until a request is
//! complete and streams read data back beat by beat.

mod transaction;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use transaction::{
    chop, compute_masks, convert_width, run_masks, serialize, split, BusTransaction, ByteSpan,
    MaskedWrite,
};

use crate::controller::{Controller, ControllerEvent, DatapathRequest, TaggedRequest};
use crate::error::ConfigError;
use crate::protocol::{Cycle, Direction, Word, WORD_BYTES};

const TAG_SHIFT: u32 = 32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    pub data_width_bits: u32,
    pub write_buffer_bytes: u64,
    pub read_buffer_bytes: u64,
    /// Transactions held past the serializer at once.
    pub max_outstanding: usize,
    pub address_bits: u32,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            data_width_bits: 64,
            write_buffer_bytes: 8192,
            read_buffer_bytes: 8192,
            max_outstanding: 16,
            address_bits: 48,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.data_width_bits.is_power_of_two() || !(32..=512).contains(&self.data_width_bits) {
            return Err(ConfigError::invalid(
                "frontend.data_width_bits",
                "must be a power of two between 32 and 512",
            ));
        }
        if self.write_buffer_bytes < WORD_BYTES as u64 {
            return Err(ConfigError::invalid(
                "frontend.write_buffer_bytes",
                "must hold at least one word",
            ));
        }
        if self.read_buffer_bytes < WORD_BYTES as u64 {
            return Err(ConfigError::invalid(
                "frontend.read_buffer_bytes",
                "must hold at least one word",
            ));
        }
        if self.max_outstanding == 0 {
            return Err(ConfigError::invalid(
                "frontend.max_outstanding",
                "must be at least 1",
            ));
        }
        if !(12..=64).contains(&self.address_bits) {
            return Err(ConfigError::invalid(
                "frontend.address_bits",
                "must be between 12 and 64",
            ));
        }
        Ok(())
    }

    pub fn data_width_bytes(&self) -> u32 {
        self.data_width_bits / 8
    }

    /// Largest beat a transaction may use; strobes cover at most 32 bytes.
    pub fn max_beat_bytes(&self) -> u32 {
        self.data_width_bytes().min(32)
    }

    fn write_words(&self) -> u64 {
        self.write_buffer_bytes / WORD_BYTES as u64
    }

    fn read_words(&self) -> u64 {
        self.read_buffer_bytes / WORD_BYTES as u64
    }
}

/// A finished transaction as seen by its initiator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub token: u64,
    pub id: u32,
    pub direction: Direction,
    pub span: ByteSpan,
    /// Read data covering the span; empty for writes.
    pub data: Vec<u8>,
    pub submitted: Cycle,
    pub accepted: Cycle,
    pub completed: Cycle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FrontendEvent {
    /// The transaction left the serializer; this fixes its global order.
    Accepted {
        token: u64,
        seq: u64,
    },
    Completed(Completion),
}

#[derive(Clone, Copy, Debug)]
struct Planned {
    request: DatapathRequest,
    bytes: ByteSpan,
}

struct Pending {
    arrival: Cycle,
    order: u64,
    token: u64,
    txn: BusTransaction,
}

struct Active {
    seq: u64,
    token: u64,
    txn: BusTransaction,
    span: ByteSpan,
    plan: Vec<Planned>,
    released: usize,
    done: usize,
    submitted: Cycle,
    accepted: Cycle,
    // write side
    beats_in: u32,
    received_upto: u64,
    alloc_end_word: u64,
    freed_word: u64,
    // read side
    data: Vec<u8>,
    arrived_upto: u64,
    forwarded_upto: u64,
}

impl Active {
    /// Words still held in the write buffer for this transaction.
    fn held_words(&self) -> u64 {
        self.alloc_end_word - self.freed_word
    }

    fn refresh_freed(&mut self) {
        let next = match self.plan.get(self.done) {
            Some(p) => (p.request.word_addr / WORD_BYTES as u64).min(self.alloc_end_word),
            None => self.alloc_end_word,
        };
        self.freed_word = self.freed_word.max(next);
    }

    fn is_complete(&self) -> bool {
        match self.txn.direction {
            Direction::Write => self.done == self.plan.len() && self.beats_in == self.txn.beats,
            Direction::Read => self.forwarded_upto == self.span.end,
        }
    }
}

/// Read word sitting in the read buffer until its bytes have been forwarded.
struct HeldWord {
    seq: u64,
    until: u64,
}

pub struct Frontend {
    config: FrontendConfig,
    page_bytes: u64,
    capacity: u64,
    serializer: VecDeque<Pending>,
    arrivals: u64,
    active: VecDeque<Active>,
    next_seq: u64,
    /// Beat bytes waiting in the datawidth converter: (seq, remaining range).
    staging: Option<(u64, ByteSpan)>,
    read_reserved: u64,
    read_held: VecDeque<HeldWord>,
    upstream_ready: bool,
    progress: u64,
    peak_read_words: u64,
}

impl Frontend {
    /// `capacity` is the size of the memory behind the controller.
    pub fn new(config: FrontendConfig, page_bytes: u64, capacity: u64) -> Self {
        Frontend {
            config,
            page_bytes,
            capacity,
            serializer: VecDeque::new(),
            arrivals: 0,
            active: VecDeque::new(),
            next_seq: 0,
            staging: None,
            read_reserved: 0,
            read_held: VecDeque::new(),
            upstream_ready: true,
            progress: 0,
            peak_read_words: 0,
        }
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    /// Checks a transaction against the bus and memory limits.
    pub fn check(&self, txn: &BusTransaction) -> Result<(), String> {
        txn.validate(self.config.max_beat_bytes(), self.config.address_bits)?;
        if txn.span().end > self.capacity {
            return Err(format!(
                "span {:#x}..{:#x} beyond memory",
                txn.span().start,
                txn.span().end
            ));
        }
        Ok(())
    }

    /// Presents a transaction at `cycle`. `token` is echoed in events.
    pub fn submit(&mut self, cycle: Cycle, token: u64, txn: BusTransaction) {
        debug_assert!(self.check(&txn).is_ok());
        let p = Pending {
            arrival: cycle,
            order: self.arrivals,
            token,
            txn,
        };
        self.arrivals += 1;
        let key = |p: &Pending| (p.arrival, p.txn.id, p.order);
        let at = self.serializer.partition_point(|q| key(q) <= key(&p));
        self.serializer.insert(at, p);
    }

    /// True when a newly submitted transaction would be taken next cycle.
    pub fn can_accept(&self) -> bool {
        self.serializer.is_empty() && self.active.len() < self.config.max_outstanding
    }

    pub fn set_upstream_ready(&mut self, ready: bool) {
        self.upstream_ready = ready;
    }

    pub fn is_idle(&self) -> bool {
        self.serializer.is_empty() && self.active.is_empty() && self.staging.is_none()
    }

    /// Monotone counter bumped whenever data or requests move.
    pub fn progress(&self) -> u64 {
        self.progress
    }

    pub fn write_buffer_words(&self) -> u64 {
        self.active
            .iter()
            .filter(|a| a.txn.direction == Direction::Write)
            .map(Active::held_words)
            .sum()
    }

    pub fn read_buffer_words(&self) -> u64 {
        self.read_held.len() as u64
    }

    pub fn peak_read_buffer_words(&self) -> u64 {
        self.peak_read_words
    }

    fn plan(&self, txn: &BusTransaction) -> Vec<Planned> {
        let span = txn.span();
        let mut out = Vec::new();
        match txn.direction {
            Direction::Read => {
                let max_words = self
                    .config
                    .read_words()
                    .min(self.page_bytes / WORD_BYTES as u64);
                for chunk in split(span, self.page_bytes) {
                    for piece in chop(chunk, max_words) {
                        let ws = crate::protocol::bytes_to_words(piece.start, piece.len());
                        out.push(Planned {
                            request: DatapathRequest::read(ws.first_word_addr, ws.n_words as u32),
                            bytes: piece,
                        });
                    }
                }
            }
            Direction::Write => {
                let max_words = self
                    .config
                    .write_words()
                    .min(self.page_bytes / WORD_BYTES as u64);
                let enables = txn.byte_enables();
                for chunk in split(span, self.page_bytes) {
                    let lo = (chunk.start - span.start) as usize;
                    let hi = (chunk.end - span.start) as usize;
                    for run in compute_masks(chunk.start, &enables[lo..hi]) {
                        for piece in chop(run.bytes, max_words) {
                            let m = run_masks(piece);
                            out.push(Planned {
                                request: DatapathRequest::write(
                                    m.word_addr,
                                    m.n_words,
                                    m.first_mask,
                                    m.last_mask,
                                ),
                                bytes: piece,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Input half of a cycle: serializer, write data channel, request release.
    pub fn step_input(
        &mut self,
        cycle: Cycle,
        ctrl: &mut Controller,
        out: &mut Vec<FrontendEvent>,
    ) {
        self.accept(cycle, out);
        self.write_channel();
        self.release(ctrl);
    }

    fn accept(&mut self, cycle: Cycle, out: &mut Vec<FrontendEvent>) {
        if self.active.len() >= self.config.max_outstanding {
            return;
        }
        match self.serializer.front() {
            Some(p) if p.arrival <= cycle => {}
            _ => return,
        }
        let p = self.serializer.pop_front().unwrap();
        let seq = self.next_seq;
        self.next_seq += 1;
        let span = p.txn.span();
        let plan = self.plan(&p.txn);
        let first_word = span.start / WORD_BYTES as u64;
        let data = if p.txn.direction == Direction::Read {
            vec![0; span.len() as usize]
        } else {
            Vec::new()
        };
        self.active.push_back(Active {
            seq,
            token: p.token,
            span,
            plan,
            released: 0,
            done: 0,
            submitted: p.arrival,
            accepted: cycle,
            beats_in: 0,
            received_upto: span.start,
            alloc_end_word: first_word,
            freed_word: first_word,
            data,
            arrived_upto: span.start,
            forwarded_upto: span.start,
            txn: p.txn,
        });
        self.progress += 1;
        out.push(FrontendEvent::Accepted {
            token: p.token,
            seq,
        });
    }

    /// Moves at most one new beat per cycle into the datawidth converter and
    /// drains it into word slots of the write buffer as space allows.
    fn write_channel(&mut self) {
        self.flush_staging();
        if self.staging.is_some() {
            return;
        }
        let Some(a) = self
            .active
            .iter_mut()
            .find(|a| a.txn.direction == Direction::Write && a.beats_in < a.txn.beats)
        else {
            return;
        };
        let bb = a.txn.beat_bytes as u64;
        let start = a.span.start + a.beats_in as u64 * bb;
        a.beats_in += 1;
        self.staging = Some((a.seq, ByteSpan::new(start, start + bb)));
        self.progress += 1;
        self.flush_staging();
    }

    fn flush_staging(&mut self) {
        let Some((seq, mut rest)) = self.staging else {
            return;
        };
        let mut used = self.write_buffer_words();
        let cap = self.config.write_words();
        let a = self
            .active
            .iter_mut()
            .find(|a| a.seq == seq)
            .expect("staged beat without transaction");
        while !rest.is_empty() {
            let word = rest.start / WORD_BYTES as u64;
            if word >= a.alloc_end_word {
                if used >= cap {
                    break;
                }
                a.alloc_end_word = word + 1;
                used += 1;
            }
            rest.start = ((word + 1) * WORD_BYTES as u64).min(rest.end);
            a.received_upto = rest.start;
        }
        // words no pending request needs are released right away
        a.refresh_freed();
        self.staging = if rest.is_empty() {
            None
        } else {
            Some((seq, rest))
        };
    }

    /// Hands the next request, in global order, to the controller once its
    /// write data is fully buffered or its read data has reserved space.
    fn release(&mut self, ctrl: &mut Controller) {
        if !ctrl.can_accept() {
            return;
        }
        let read_cap = self.config.read_words();
        let Some(a) = self.active.iter_mut().find(|a| a.released < a.plan.len()) else {
            return;
        };
        let p = a.plan[a.released];
        let tag = (a.seq << TAG_SHIFT) | a.released as u64;
        let data = match a.txn.direction {
            Direction::Write => {
                if a.received_upto < p.bytes.end {
                    return;
                }
                (0..p.request.n_words as u64)
                    .map(|k| {
                        let base = p.request.word_addr + k * WORD_BYTES as u64;
                        let mut w: Word = [0; WORD_BYTES];
                        for (i, byte) in w.iter_mut().enumerate() {
                            let addr = base + i as u64;
                            if addr >= a.span.start && addr < a.span.end {
                                *byte = a.txn.data[(addr - a.span.start) as usize];
                            }
                        }
                        w
                    })
                    .collect()
            }
            Direction::Read => {
                if self.read_reserved + p.request.n_words as u64 > read_cap {
                    return;
                }
                self.read_reserved += p.request.n_words as u64;
                Vec::new()
            }
        };
        a.released += 1;
        self.progress += 1;
        ctrl.submit(TaggedRequest {
            tag,
            request: p.request,
            data,
        });
    }

    /// Output half of a cycle: controller completions, read forwarding,
    /// transaction retirement.
    pub fn step_output(
        &mut self,
        cycle: Cycle,
        events: &[ControllerEvent],
        out: &mut Vec<FrontendEvent>,
    ) {
        for ev in events {
            match *ev {
                ControllerEvent::WriteDone { tag } => {
                    let a = self.find(tag >> TAG_SHIFT);
                    debug_assert_eq!(
                        a.done as u64,
                        tag & ((1 << TAG_SHIFT) - 1),
                        "writes finish in order"
                    );
                    a.done += 1;
                    a.refresh_freed();
                }
                ControllerEvent::ReadWord {
                    tag,
                    index,
                    ref word,
                } => {
                    let seq = tag >> TAG_SHIFT;
                    let req_idx = (tag & ((1 << TAG_SHIFT) - 1)) as usize;
                    let a = self.find(seq);
                    let p = a.plan[req_idx];
                    let base = p.request.word_addr + index as u64 * WORD_BYTES as u64;
                    let lo = base.max(p.bytes.start);
                    let hi = (base + WORD_BYTES as u64).min(p.bytes.end);
                    let dst = (lo - a.span.start) as usize..(hi - a.span.start) as usize;
                    a.data[dst].copy_from_slice(&word[(lo - base) as usize..(hi - base) as usize]);
                    a.arrived_upto = hi;
                    if index + 1 == p.request.n_words {
                        a.done += 1;
                    }
                    self.read_held.push_back(HeldWord { seq, until: hi });
                    self.progress += 1;
                }
            }
        }
        self.peak_read_words = self.peak_read_words.max(self.read_held.len() as u64);
        if self.upstream_ready {
            self.forward_read_beat();
        }
        self.retire(cycle, out);
    }

    fn find(&mut self, seq: u64) -> &mut Active {
        self.active
            .iter_mut()
            .find(|a| a.seq == seq)
            .expect("event for unknown transaction")
    }

    fn forward_read_beat(&mut self) {
        let Some(a) = self
            .active
            .iter_mut()
            .find(|a| a.txn.direction == Direction::Read && a.forwarded_upto < a.span.end)
        else {
            return;
        };
        let beat_end = (a.forwarded_upto + a.txn.beat_bytes as u64).min(a.span.end);
        if a.arrived_upto < beat_end {
            return;
        }
        a.forwarded_upto = beat_end;
        let seq = a.seq;
        self.progress += 1;
        while let Some(h) = self.read_held.front() {
            if h.seq != seq || h.until > beat_end {
                break;
            }
            self.read_held.pop_front();
            self.read_reserved -= 1;
        }
    }

    fn retire(&mut self, cycle: Cycle, out: &mut Vec<FrontendEvent>) {
        let mut i = 0;
        while i < self.active.len() {
            let a = &self.active[i];
            if a.is_complete() && self.staging.is_none_or(|(s, _)| s != a.seq) {
                let a = self.active.remove(i).unwrap();
                if a.txn.direction == Direction::Read {
                    // read words past the span end never get forwarded
                    self.release_stale_reads(a.seq, &a);
                }
                self.progress += 1;
                out.push(FrontendEvent::Completed(Completion {
                    token: a.token,
                    id: a.txn.id,
                    direction: a.txn.direction,
                    span: a.span,
                    data: a.data,
                    submitted: a.submitted,
                    accepted: a.accepted,
                    completed: cycle,
                }));
            } else {
                i += 1;
            }
        }
    }

    fn release_stale_reads(&mut self, seq: u64, a: &Active) {
        debug_assert!(a.done == a.plan.len());
        let before = self.read_held.len();
        self.read_held.retain(|h| h.seq != seq);
        self.read_reserved -= (before - self.read_held.len()) as u64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fe(cfg: FrontendConfig) -> Frontend {
        Frontend::new(cfg, 2048, 32 << 20)
    }

    #[test]
    fn read_plan_splits_at_pages() {
        let f = fe(FrontendConfig::default());
        let plan = f.plan(&BusTransaction::read(0, 0x7C0, 16, 8));
        let reqs: Vec<_> = plan
            .iter()
            .map(|p| (p.request.word_addr, p.request.n_words))
            .collect();
        assert_eq!(reqs, vec![(0x7C0, 2), (0x800, 2)]);
    }

    #[test]
    fn small_write_buffer_limits_request_size() {
        let cfg = FrontendConfig {
            write_buffer_bytes: 64,
            ..FrontendConfig::default()
        };
        let f = fe(cfg);
        let plan = f.plan(&BusTransaction::write(0, 0, 8, vec![1; 256]));
        assert_eq!(plan.len(), 4);
        assert!(plan.iter().all(|p| p.request.n_words == 2));
    }

    #[test]
    fn sparse_strobes_decompose() {
        let f = fe(FrontendConfig::default());
        let mut t = BusTransaction::write(0, 0, 8, vec![7; 32]);
        t.strobes = vec![0xff, 0, 0xff, 0];
        let plan = f.plan(&t);
        assert_eq!(plan.len(), 2);
        assert_eq!(plan[0].request.first_mask & plan[0].request.last_mask, 0xff);
        assert_eq!(
            plan[1].request.first_mask & plan[1].request.last_mask,
            0xff_0000
        );
    }

    #[test]
    fn config_validation() {
        assert!(FrontendConfig::default().validate().is_ok());
        let bad = FrontendConfig {
            data_width_bits: 48,
            ..FrontendConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FrontendConfig {
            write_buffer_bytes: 16,
            ..FrontendConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
