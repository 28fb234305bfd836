//! Flat byte-array reference memory. Writes apply in serialized order at the
//! moment the frontend accepts them; reads snapshot their expected bytes at
//! the same point and are compared on completion.

use std::collections::HashMap;

use crate::frontend::{BusTransaction, FrontendEvent};
use crate::protocol::Direction;

const CHUNK: u64 = 4096;

/// Byte-addressable memory allocated in 4 KiB chunks on first write.
#[derive(Clone, Debug)]
pub struct SparseMemory {
    fill: u8,
    chunks: HashMap<u64, Box<[u8]>>,
}

impl SparseMemory {
    pub fn new(fill: u8) -> Self {
        SparseMemory {
            fill,
            chunks: HashMap::new(),
        }
    }

    pub fn get(&self, addr: u64) -> u8 {
        self.chunks
            .get(&(addr / CHUNK))
            .map_or(self.fill, |c| c[(addr % CHUNK) as usize])
    }

    pub fn set(&mut self, addr: u64, value: u8) {
        let fill = self.fill;
        let chunk = self
            .chunks
            .entry(addr / CHUNK)
            .or_insert_with(|| vec![fill; CHUNK as usize].into_boxed_slice());
        chunk[(addr % CHUNK) as usize] = value;
    }

    pub fn read(&self, addr: u64, len: u64) -> Vec<u8> {
        (addr..addr + len).map(|a| self.get(a)).collect()
    }

    pub fn write(&mut self, addr: u64, data: &[u8]) {
        for (i, &b) in data.iter().enumerate() {
            self.set(addr + i as u64, b);
        }
    }

    /// Applies the strobe-enabled bytes of a write transaction.
    pub fn apply(&mut self, txn: &BusTransaction) {
        let start = txn.span().start;
        for (i, on) in txn.byte_enables().into_iter().enumerate() {
            if on {
                self.set(start + i as u64, txn.data[i]);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub token: u64,
    pub addr: u64,
    pub expected: u8,
    pub actual: u8,
}

pub struct Oracle {
    memory: SparseMemory,
    pending: HashMap<u64, BusTransaction>,
    expected: HashMap<u64, Vec<u8>>,
    mismatches: u64,
    reads_checked: u64,
    first_mismatch: Option<Mismatch>,
}

impl Oracle {
    pub fn new(fill: u8) -> Self {
        Oracle {
            memory: SparseMemory::new(fill),
            pending: HashMap::new(),
            expected: HashMap::new(),
            mismatches: 0,
            reads_checked: 0,
            first_mismatch: None,
        }
    }

    /// Registers a transaction before it is submitted under `token`.
    pub fn track(&mut self, token: u64, txn: &BusTransaction) {
        self.pending.insert(token, txn.clone());
    }

    pub fn observe(&mut self, event: &FrontendEvent) {
        match event {
            FrontendEvent::Accepted { token, .. } => {
                let Some(txn) = self.pending.remove(token) else {
                    return;
                };
                match txn.direction {
                    Direction::Write => self.memory.apply(&txn),
                    Direction::Read => {
                        let span = txn.span();
                        self.expected
                            .insert(*token, self.memory.read(span.start, span.len()));
                    }
                }
            }
            FrontendEvent::Completed(c) if c.direction == Direction::Read => {
                let Some(expected) = self.expected.remove(&c.token) else {
                    return;
                };
                self.reads_checked += 1;
                if let Some(i) = (0..expected.len()).find(|&i| expected[i] != c.data[i]) {
                    self.mismatches += 1;
                    self.first_mismatch.get_or_insert(Mismatch {
                        token: c.token,
                        addr: c.span.start + i as u64,
                        expected: expected[i],
                        actual: c.data[i],
                    });
                }
            }
            FrontendEvent::Completed(_) => {}
        }
    }

    /// Read transactions whose data differed from the reference.
    pub fn mismatches(&self) -> u64 {
        self.mismatches
    }

    pub fn reads_checked(&self) -> u64 {
        self.reads_checked
    }

    pub fn first_mismatch(&self) -> Option<&Mismatch> {
        self.first_mismatch.as_ref()
    }

    pub fn memory(&self) -> &SparseMemory {
        &self.memory
    }
}
