//! On-chip bus transactions and the pure stages of the frontend pipeline:
//! serialization, datawidth conversion, page splitting and mask derivation.

use crate::protocol::{byte_mask, bytes_to_words, Cycle, Direction, WordSpan, WORD_BYTES};

/// Half-open byte range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ByteSpan {
    pub start: u64,
    pub end: u64,
}

impl ByteSpan {
    pub fn new(start: u64, end: u64) -> Self {
        debug_assert!(start <= end);
        ByteSpan { start, end }
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// A burst request from an initiator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BusTransaction {
    pub id: u32,
    pub direction: Direction,
    pub addr: u64,
    pub beats: u32,
    pub beat_bytes: u32,
    /// Per-beat byte enables, bit `j` covering byte `j` of that beat. Writes only.
    pub strobes: Vec<u32>,
    /// Payload covering the whole span. Writes only.
    pub data: Vec<u8>,
}

impl BusTransaction {
    pub fn read(id: u32, addr: u64, beats: u32, beat_bytes: u32) -> Self {
        BusTransaction {
            id,
            direction: Direction::Read,
            addr,
            beats,
            beat_bytes,
            strobes: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Fully enabled write of `data`, which must fill whole beats.
    pub fn write(id: u32, addr: u64, beat_bytes: u32, data: Vec<u8>) -> Self {
        assert_eq!(
            data.len() % beat_bytes as usize,
            0,
            "payload must fill whole beats"
        );
        let beats = (data.len() / beat_bytes as usize) as u32;
        let all = if beat_bytes == 32 {
            u32::MAX
        } else {
            (1u32 << beat_bytes) - 1
        };
        BusTransaction {
            id,
            direction: Direction::Write,
            addr,
            beats,
            beat_bytes,
            strobes: vec![all; beats as usize],
            data,
        }
    }

    /// Transaction covering `[addr, addr + len)` with beats aligned to
    /// `beat_bytes`. For writes, bytes outside the range are strobed off.
    pub fn for_range(
        id: u32,
        direction: Direction,
        addr: u64,
        len: u64,
        beat_bytes: u32,
        payload: &[u8],
    ) -> Self {
        assert!(len > 0);
        let bb = beat_bytes as u64;
        let start = addr / bb * bb;
        let end = (addr + len).div_ceil(bb) * bb;
        let beats = ((end - start) / bb) as u32;
        match direction {
            Direction::Read => BusTransaction::read(id, start, beats, beat_bytes),
            Direction::Write => {
                assert_eq!(payload.len() as u64, len);
                let mut data = vec![0u8; (end - start) as usize];
                let off = (addr - start) as usize;
                data[off..off + len as usize].copy_from_slice(payload);
                let strobes = (0..beats)
                    .map(|k| {
                        let b0 = start + k as u64 * bb;
                        (0..beat_bytes).fold(0u32, |m, j| {
                            let b = b0 + j as u64;
                            if b >= addr && b < addr + len {
                                m | 1 << j
                            } else {
                                m
                            }
                        })
                    })
                    .collect();
                BusTransaction {
                    id,
                    direction,
                    addr: start,
                    beats,
                    beat_bytes,
                    strobes,
                    data,
                }
            }
        }
    }

    pub fn span(&self) -> ByteSpan {
        ByteSpan::new(
            self.addr,
            self.addr + self.beats as u64 * self.beat_bytes as u64,
        )
    }

    /// Whether each byte of the span is written; all true for reads.
    pub fn byte_enables(&self) -> Vec<bool> {
        let span = self.span();
        if self.direction == Direction::Read {
            return vec![true; span.len() as usize];
        }
        let mut out = Vec::with_capacity(span.len() as usize);
        for &s in &self.strobes {
            for j in 0..self.beat_bytes {
                out.push(s & (1 << j) != 0);
            }
        }
        out
    }

    pub fn validate(&self, max_beat_bytes: u32, address_bits: u32) -> Result<(), String> {
        if self.beats == 0 {
            return Err("transaction without beats".into());
        }
        if !self.beat_bytes.is_power_of_two() || self.beat_bytes > max_beat_bytes {
            return Err(format!(
                "beat size {} not a power of two up to {max_beat_bytes}",
                self.beat_bytes
            ));
        }
        if address_bits < 64 && self.span().end > 1u64 << address_bits {
            return Err(format!(
                "span ends beyond the {address_bits} bit address space"
            ));
        }
        if self.direction == Direction::Write {
            if self.strobes.len() != self.beats as usize {
                return Err("one strobe bitmap per beat required".into());
            }
            if self.data.len() as u64 != self.span().len() {
                return Err("payload length differs from span".into());
            }
            let lanes = if self.beat_bytes == 32 {
                u32::MAX
            } else {
                (1u32 << self.beat_bytes) - 1
            };
            if self.strobes.iter().any(|s| s & !lanes != 0) {
                return Err("strobe bit beyond the beat".into());
            }
        }
        Ok(())
    }
}

/// First come, first serve across initiators; same-cycle arrivals by id.
pub fn serialize(mut arrivals: Vec<(Cycle, BusTransaction)>) -> Vec<BusTransaction> {
    arrivals.sort_by_key(|(cycle, t)| (*cycle, t.id));
    arrivals.into_iter().map(|(_, t)| t).collect()
}

/// Word cover of the transaction's byte span.
pub fn convert_width(txn: &BusTransaction) -> WordSpan {
    let span = txn.span();
    bytes_to_words(span.start, span.len())
}

/// Splits a span so no piece crosses a `page_bytes` boundary.
pub fn split(span: ByteSpan, page_bytes: u64) -> Vec<ByteSpan> {
    if span.is_empty() {
        return Vec::new();
    }
    let pages = (span.end - 1) / page_bytes - span.start / page_bytes + 1;
    let mut out = Vec::with_capacity(pages as usize);
    let mut start = span.start;
    while start < span.end {
        let boundary = (start / page_bytes + 1) * page_bytes;
        let end = boundary.min(span.end);
        out.push(ByteSpan::new(start, end));
        start = end;
    }
    out
}

/// Splits a span at word boundaries into pieces of at most `max_words` words.
pub fn chop(span: ByteSpan, max_words: u64) -> Vec<ByteSpan> {
    let limit = max_words * WORD_BYTES as u64;
    let mut out = Vec::new();
    let mut start = span.start;
    while start < span.end {
        let word_start = start / WORD_BYTES as u64 * WORD_BYTES as u64;
        let end = (word_start + limit).min(span.end);
        out.push(ByteSpan::new(start, end));
        start = end;
    }
    out
}

/// A contiguous write expressed with first/last masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskedWrite {
    pub word_addr: u64,
    pub n_words: u32,
    pub first_mask: u32,
    pub last_mask: u32,
    pub bytes: ByteSpan,
}

/// Masks for one contiguous run of written bytes.
pub fn run_masks(run: ByteSpan) -> MaskedWrite {
    let ws = bytes_to_words(run.start, run.len());
    MaskedWrite {
        word_addr: ws.first_word_addr,
        n_words: ws.n_words as u32,
        first_mask: byte_mask(ws.head_offset, WORD_BYTES - 1),
        last_mask: byte_mask(0, ws.tail_offset),
        bytes: run,
    }
}

/// Derives first/last masks from byte enables starting at `start`. A single
/// contiguous run yields one write; sparse patterns yield one write per
/// maximal run of enabled bytes.
pub fn compute_masks(start: u64, enables: &[bool]) -> Vec<MaskedWrite> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < enables.len() {
        if !enables[i] {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < enables.len() && enables[i] {
            i += 1;
        }
        out.push(run_masks(ByteSpan::new(
            start + run_start as u64,
            start + i as u64,
        )));
    }
    out
}
