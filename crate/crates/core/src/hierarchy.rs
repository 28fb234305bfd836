//! Last-level cache whose ways can individually serve as scratchpad memory.
//!
//! Cache ways are write-back, write-allocate with LRU replacement. Ways in the
//! scratchpad mask are removed from replacement and back a separate address
//! aperture starting at `spm_base`; scratchpad accesses never reach memory.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, LlcError, SimError};
use crate::protocol::Direction;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlcConfig {
    /// Insert the cache stage in front of the memory system.
    pub enabled: bool,
    pub sets: u32,
    pub ways: u32,
    pub line_bytes: u32,
    pub spm_way_mask: u32,
    pub spm_base: u64,
}

impl Default for LlcConfig {
    fn default() -> Self {
        LlcConfig {
            enabled: false,
            sets: 256,
            ways: 8,
            line_bytes: 64,
            spm_way_mask: 0,
            spm_base: 0x4000_0000,
        }
    }
}

impl LlcConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sets == 0 || !self.sets.is_power_of_two() {
            return Err(ConfigError::invalid("llc.sets", "must be a power of two"));
        }
        if self.ways == 0 || self.ways > 32 {
            return Err(ConfigError::invalid("llc.ways", "must be between 1 and 32"));
        }
        if !self.line_bytes.is_power_of_two() || self.line_bytes < 8 {
            return Err(ConfigError::invalid(
                "llc.line_bytes",
                "must be a power of two of at least 8",
            ));
        }
        if self.spm_way_mask & !self.all_ways() != 0 {
            return Err(ConfigError::invalid(
                "llc.spm_way_mask",
                "names a way beyond llc.ways",
            ));
        }
        Ok(())
    }

    pub fn all_ways(&self) -> u32 {
        if self.ways == 32 {
            u32::MAX
        } else {
            (1 << self.ways) - 1
        }
    }

    pub fn way_bytes(&self) -> u64 {
        self.sets as u64 * self.line_bytes as u64
    }

    pub fn aperture_bytes(&self, mask: u32) -> u64 {
        mask.count_ones() as u64 * self.way_bytes()
    }
}

/// Memory behind the cache. Accesses complete before returning.
pub trait Backing {
    fn read(&mut self, addr: u64, len: u64) -> Result<Vec<u8>, SimError>;
    fn write(&mut self, addr: u64, data: &[u8]) -> Result<(), SimError>;
}

/// Plain byte array, used as a reference backing store.
#[derive(Clone, Debug)]
pub struct FlatMemory {
    pub bytes: Vec<u8>,
}

impl FlatMemory {
    pub fn new(capacity: u64, fill: u8) -> Self {
        FlatMemory {
            bytes: vec![fill; capacity as usize],
        }
    }

    fn range(&self, addr: u64, len: u64) -> Result<std::ops::Range<usize>, SimError> {
        let capacity = self.bytes.len() as u64;
        if addr.checked_add(len).is_none_or(|end| end > capacity) {
            return Err(SimError::AddressOutOfRange {
                addr,
                len,
                capacity,
            });
        }
        Ok(addr as usize..(addr + len) as usize)
    }
}

impl Backing for FlatMemory {
    fn read(&mut self, addr: u64, len: u64) -> Result<Vec<u8>, SimError> {
        let r = self.range(addr, len)?;
        Ok(self.bytes[r].to_vec())
    }

    fn write(&mut self, addr: u64, data: &[u8]) -> Result<(), SimError> {
        let r = self.range(addr, data.len() as u64)?;
        self.bytes[r].copy_from_slice(data);
        Ok(())
    }
}

/// One transfer the cache issued to its backing store.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Downstream {
    pub direction: Direction,
    pub addr: u64,
    pub len: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LlcStats {
    pub hits: u64,
    pub misses: u64,
    pub writebacks: u64,
    pub spm_accesses: u64,
    pub bypassed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Hit,
    Miss,
    Scratchpad,
    Bypass,
}

#[derive(Clone, Copy, Debug, Default)]
struct Line {
    valid: bool,
    dirty: bool,
    tag: u64,
    last_use: u64,
}

pub struct Llc<B: Backing> {
    config: LlcConfig,
    spm_mask: u32,
    lines: Vec<Line>,
    data: Vec<u8>,
    clock: u64,
    backing: B,
    downstream: Vec<Downstream>,
    stats: LlcStats,
}

impl<B: Backing> Llc<B> {
    pub fn new(config: LlcConfig, backing: B) -> Self {
        let n = (config.sets * config.ways) as usize;
        Llc {
            spm_mask: config.spm_way_mask,
            lines: vec![Line::default(); n],
            data: vec![0; n * config.line_bytes as usize],
            clock: 0,
            config,
            backing,
            downstream: Vec::new(),
            stats: LlcStats::default(),
        }
    }

    pub fn config(&self) -> &LlcConfig {
        &self.config
    }

    pub fn spm_mask(&self) -> u32 {
        self.spm_mask
    }

    pub fn aperture_bytes(&self) -> u64 {
        self.config.aperture_bytes(self.spm_mask)
    }

    pub fn stats(&self) -> LlcStats {
        self.stats
    }

    pub fn backing(&self) -> &B {
        &self.backing
    }

    pub fn backing_mut(&mut self) -> &mut B {
        &mut self.backing
    }

    pub fn into_backing(self) -> B {
        self.backing
    }

    /// Transfers sent downstream since the last call.
    pub fn take_downstream(&mut self) -> Vec<Downstream> {
        std::mem::take(&mut self.downstream)
    }

    /// True if any valid cache line sits in a scratchpad way.
    pub fn spm_ways_hold_tags(&self) -> bool {
        self.lines
            .iter()
            .enumerate()
            .any(|(i, l)| l.valid && self.spm_mask & (1 << self.way_of(i)) != 0)
    }

    fn way_of(&self, index: usize) -> u32 {
        index as u32 % self.config.ways
    }

    fn slot(&self, set: u64, way: u32) -> usize {
        set as usize * self.config.ways as usize + way as usize
    }

    fn line_data(&mut self, slot: usize) -> &mut [u8] {
        let lb = self.config.line_bytes as usize;
        &mut self.data[slot * lb..(slot + 1) * lb]
    }

    /// Reassigns ways between cache and scratchpad. Dirty lines of ways that
    /// become scratchpad are written back first. Scratchpad contents start
    /// zeroed after any change; ways returning to the cache start invalid.
    pub fn configure_spm(&mut self, mask: u32) -> Result<(), SimError> {
        if mask & !self.config.all_ways() != 0 {
            return Err(
                ConfigError::invalid("llc.spm_way_mask", "names a way beyond llc.ways").into(),
            );
        }
        if mask == self.spm_mask {
            return Ok(());
        }
        let lb = self.config.line_bytes as u64;
        let newly_spm = mask & !self.spm_mask;
        for set in 0..self.config.sets as u64 {
            for way in 0..self.config.ways {
                let slot = self.slot(set, way);
                if newly_spm & (1 << way) != 0 {
                    let line = self.lines[slot];
                    if line.valid && line.dirty {
                        let addr = (line.tag * self.config.sets as u64 + set) * lb;
                        self.write_back(addr, slot)?;
                    }
                }
                self.lines[slot] = if self.spm_mask & (1 << way) != 0 || newly_spm & (1 << way) != 0
                {
                    Line::default()
                } else {
                    self.lines[slot]
                };
            }
        }
        self.spm_mask = mask;
        for set in 0..self.config.sets as u64 {
            for way in 0..self.config.ways {
                if mask & (1 << way) != 0 {
                    let slot = self.slot(set, way);
                    self.line_data(slot).fill(0);
                }
            }
        }
        Ok(())
    }

    fn write_back(&mut self, addr: u64, slot: usize) -> Result<(), SimError> {
        let bytes = self.line_data(slot).to_vec();
        self.backing.write(addr, &bytes)?;
        self.downstream.push(Downstream {
            direction: Direction::Write,
            addr,
            len: bytes.len() as u64,
        });
        self.stats.writebacks += 1;
        Ok(())
    }

    /// Writes every dirty cache line back, leaving lines valid and clean.
    pub fn flush(&mut self) -> Result<(), SimError> {
        let lb = self.config.line_bytes as u64;
        for slot in 0..self.lines.len() {
            let line = self.lines[slot];
            if line.valid && line.dirty {
                let set = (slot / self.config.ways as usize) as u64;
                self.write_back((line.tag * self.config.sets as u64 + set) * lb, slot)?;
                self.lines[slot].dirty = false;
            }
        }
        Ok(())
    }

    pub fn read(&mut self, addr: u64, len: u64) -> Result<(Vec<u8>, Outcome), SimError> {
        let mut buf = vec![0; len as usize];
        let outcome = self.access(addr, Direction::Read, &mut buf)?;
        Ok((buf, outcome))
    }

    pub fn write(&mut self, addr: u64, data: &[u8]) -> Result<Outcome, SimError> {
        let mut buf = data.to_vec();
        self.access(addr, Direction::Write, &mut buf)
    }

    /// Reads into or writes from `buf`. The outcome is the worst seen over
    /// the lines touched.
    pub fn access(
        &mut self,
        addr: u64,
        direction: Direction,
        buf: &mut [u8],
    ) -> Result<Outcome, SimError> {
        if buf.is_empty() {
            return Ok(Outcome::Hit);
        }
        if addr >= self.config.spm_base {
            return self.access_spm(addr - self.config.spm_base, direction, buf);
        }
        if self.spm_mask == self.config.all_ways() {
            self.stats.bypassed += 1;
            let len = buf.len() as u64;
            match direction {
                Direction::Read => buf.copy_from_slice(&self.backing.read(addr, len)?),
                Direction::Write => self.backing.write(addr, buf)?,
            }
            self.downstream.push(Downstream {
                direction,
                addr,
                len,
            });
            return Ok(Outcome::Bypass);
        }
        let lb = self.config.line_bytes as u64;
        let mut outcome = Outcome::Hit;
        let mut pos = 0usize;
        while pos < buf.len() {
            let a = addr + pos as u64;
            let offset = (a % lb) as usize;
            let n = (lb as usize - offset).min(buf.len() - pos);
            let (slot, hit) = self.lookup(a / lb)?;
            if !hit {
                outcome = Outcome::Miss;
            }
            let line = self.line_data(slot);
            match direction {
                Direction::Read => buf[pos..pos + n].copy_from_slice(&line[offset..offset + n]),
                Direction::Write => line[offset..offset + n].copy_from_slice(&buf[pos..pos + n]),
            }
            if direction == Direction::Write {
                self.lines[slot].dirty = true;
            }
            pos += n;
        }
        Ok(outcome)
    }

    /// Finds or allocates the line holding `line_addr`.
    fn lookup(&mut self, line_addr: u64) -> Result<(usize, bool), SimError> {
        self.clock += 1;
        let sets = self.config.sets as u64;
        let set = line_addr % sets;
        let tag = line_addr / sets;
        let cache_ways: Vec<u32> = (0..self.config.ways)
            .filter(|w| self.spm_mask & (1 << w) == 0)
            .collect();
        for &way in &cache_ways {
            let slot = self.slot(set, way);
            let l = &mut self.lines[slot];
            if l.valid && l.tag == tag {
                l.last_use = self.clock;
                self.stats.hits += 1;
                return Ok((slot, true));
            }
        }
        self.stats.misses += 1;
        let victim = cache_ways
            .iter()
            .map(|&w| self.slot(set, w))
            .min_by_key(|&s| (self.lines[s].valid, self.lines[s].last_use))
            .expect("at least one cache way");
        let lb = self.config.line_bytes as u64;
        let old = self.lines[victim];
        if old.valid && old.dirty {
            self.write_back((old.tag * sets + set) * lb, victim)?;
        }
        let addr = line_addr * lb;
        let fill = self.backing.read(addr, lb)?;
        self.downstream.push(Downstream {
            direction: Direction::Read,
            addr,
            len: lb,
        });
        self.line_data(victim).copy_from_slice(&fill);
        self.lines[victim] = Line {
            valid: true,
            dirty: false,
            tag,
            last_use: self.clock,
        };
        Ok((victim, false))
    }

    fn access_spm(
        &mut self,
        offset: u64,
        direction: Direction,
        buf: &mut [u8],
    ) -> Result<Outcome, SimError> {
        let aperture = self.aperture_bytes();
        if offset + buf.len() as u64 > aperture {
            return Err(LlcError::SpmOutOfRange {
                addr: self.config.spm_base + offset,
                aperture,
            }
            .into());
        }
        self.stats.spm_accesses += 1;
        let lb = self.config.line_bytes as u64;
        let spm_ways: Vec<u32> = (0..self.config.ways)
            .filter(|w| self.spm_mask & (1 << w) != 0)
            .collect();
        let mut pos = 0usize;
        while pos < buf.len() {
            let o = offset + pos as u64;
            let line_idx = o / lb;
            let within = (o % lb) as usize;
            let n = (lb as usize - within).min(buf.len() - pos);
            let set = line_idx % self.config.sets as u64;
            let way = spm_ways[(line_idx / self.config.sets as u64) as usize];
            let slot = self.slot(set, way);
            let line = self.line_data(slot);
            match direction {
                Direction::Read => buf[pos..pos + n].copy_from_slice(&line[within..within + n]),
                Direction::Write => line[within..within + n].copy_from_slice(&buf[pos..pos + n]),
            }
            pos += n;
        }
        Ok(Outcome::Scratchpad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LlcConfig {
        LlcConfig {
            enabled: true,
            sets: 4,
            ways: 4,
            line_bytes: 16,
            spm_way_mask: 0,
            spm_base: 0x10_000,
        }
    }

    fn llc(cfg: LlcConfig) -> Llc<FlatMemory> {
        Llc::new(cfg, FlatMemory::new(0x4000, 0))
    }

    #[test]
    fn pure_cache_has_no_aperture() {
        let c = llc(small());
        assert_eq!(c.aperture_bytes(), 0);
    }

    #[test]
    fn cold_miss_reads_one_line() {
        let mut c = llc(small());
        let (_, o) = c.read(0x24, 4).unwrap();
        assert_eq!(o, Outcome::Miss);
        assert_eq!(
            c.take_downstream(),
            vec![Downstream {
                direction: Direction::Read,
                addr: 0x20,
                len: 16
            }]
        );
        let (_, o) = c.read(0x20, 16).unwrap();
        assert_eq!(o, Outcome::Hit);
        assert!(c.take_downstream().is_empty());
    }

    #[test]
    fn spm_round_trip_stays_local() {
        let mut c = llc(LlcConfig {
            spm_way_mask: 0b0011,
            ..small()
        });
        assert_eq!(c.aperture_bytes(), 2 * 4 * 16);
        let data: Vec<u8> = (0..100).collect();
        assert_eq!(c.write(0x10_010, &data).unwrap(), Outcome::Scratchpad);
        assert_eq!(c.read(0x10_010, 100).unwrap().0, data);
        assert!(c.take_downstream().is_empty());
        let err = c.read(0x10_000 + 128, 1).unwrap_err();
        assert!(matches!(err, SimError::Llc(LlcError::SpmOutOfRange { .. })));
    }

    #[test]
    fn converting_dirty_way_writes_back_its_lines() {
        let mut c = llc(small());
        // four lines mapping to set 0 fill ways 0..3 in order
        for k in 0..4u64 {
            c.write(k * 64, &[k as u8 + 1; 16]).unwrap();
        }
        // one clean line in set 1, way 0
        c.read(0x10, 1).unwrap();
        c.take_downstream();
        c.configure_spm(0b0001).unwrap();
        assert_eq!(
            c.take_downstream(),
            vec![Downstream {
                direction: Direction::Write,
                addr: 0,
                len: 16
            }]
        );
        assert_eq!(c.backing().bytes[0..16], [1; 16]);
        assert!(!c.spm_ways_hold_tags());
        c.configure_spm(0).unwrap();
        assert!(c.lines.iter().step_by(4).all(|l| !l.valid));
        // the other ways kept their dirty data
        assert_eq!(c.read(64, 16).unwrap(), (vec![2; 16], Outcome::Hit));
    }

    #[test]
    fn all_spm_bypasses_cache() {
        let mut c = llc(LlcConfig {
            spm_way_mask: 0b1111,
            ..small()
        });
        c.write(0x100, &[9; 8]).unwrap();
        assert_eq!(c.read(0x100, 8).unwrap(), (vec![9; 8], Outcome::Bypass));
        assert_eq!(c.take_downstream().len(), 2);
        assert_eq!(c.stats().hits + c.stats().misses, 0);
    }

    #[test]
    fn lru_never_picks_spm_way() {
        let mut c = llc(LlcConfig {
            spm_way_mask: 0b0101,
            ..small()
        });
        for k in 0..20u64 {
            c.write(k * 64, &[k as u8; 16]).unwrap();
            assert!(!c.spm_ways_hold_tags());
        }
        for k in 0..20u64 {
            assert_eq!(c.read(k * 64, 16).unwrap().0, vec![k as u8; 16]);
        }
    }

    #[test]
    fn lru_evicts_least_recent() {
        let mut c = llc(small());
        for k in 0..4u64 {
            c.read(k * 64, 1).unwrap();
        }
        c.read(0, 1).unwrap();
        c.take_downstream();
        c.read(4 * 64, 1).unwrap();
        // line 64 was least recently used, so reading it again misses
        c.take_downstream();
        assert_eq!(c.read(64, 1).unwrap().1, Outcome::Miss);
        assert_eq!(c.read(0, 1).unwrap().1, Outcome::Hit);
    }
}
