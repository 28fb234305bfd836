//! Behavioral DRAM chip: per-bank state machines, a timing checker that
//! referees every command it receives, refresh-deadline tracking and
//! word-granular backing storage.
//!
//! The device never trusts the controller. Every command is checked against
//! the configured [`TimingParams`] using the device's own bookkeeping, and a
//! rejected command leaves the state untouched and lands in the violation log.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Constraint, ProtocolError, StateViolation};
use crate::protocol::{
    AddressMap, Cycle, DramLocation, RpcCommand, TimingParams, Word, WORD_BYTES,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceConfig {
    pub banks: u32,
    pub rows: u32,
    /// Byte returned for never-written memory.
    pub fill_byte: u8,
    /// A bank is overdue once `t_refi * refresh_slack` passes without refresh.
    pub refresh_slack: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            banks: 4,
            rows: 4096,
            fill_byte: 0x5A,
            refresh_slack: 1.0,
        }
    }
}

impl DeviceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.banks == 0 || self.banks > 32 {
            return Err(ConfigError::invalid(
                "device.banks",
                "must be between 1 and 32",
            ));
        }
        if self.rows == 0 {
            return Err(ConfigError::invalid(
                "device.rows",
                "must be greater than zero",
            ));
        }
        if self.refresh_slack.is_nan() || self.refresh_slack < 1.0 {
            return Err(ConfigError::invalid(
                "device.refresh_slack",
                "must be at least 1.0",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BankPhase {
    Idle,
    Active,
    Refreshing,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BankState {
    pub phase: BankPhase,
    pub open_row: Option<u32>,
    pub last_activate: Option<Cycle>,
    pub last_read: Option<Cycle>,
    pub last_write: Option<Cycle>,
    pub last_precharge: Option<Cycle>,
    pub last_refresh: Option<Cycle>,
    refresh_until: Cycle,
    read_data_end: Cycle,
    write_data_end: Cycle,
}

impl BankState {
    fn new() -> Self {
        BankState {
            phase: BankPhase::Idle,
            open_row: None,
            last_activate: None,
            last_read: None,
            last_write: None,
            last_precharge: None,
            last_refresh: None,
            refresh_until: 0,
            read_data_end: 0,
            write_data_end: 0,
        }
    }

    fn settle(&mut self, cycle: Cycle) {
        if self.phase == BankPhase::Refreshing && cycle >= self.refresh_until {
            self.phase = BankPhase::Idle;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub cycle: Cycle,
    pub error: ProtocolError,
    pub command: RpcCommand,
}

fn gap_check(
    constraint: Constraint,
    since: Option<Cycle>,
    required: u64,
    cycle: Cycle,
) -> Result<(), ProtocolError> {
    match since {
        Some(t) if cycle < t + required => Err(ProtocolError::TimingViolation {
            constraint,
            required,
            actual: cycle - t,
        }),
        _ => Ok(()),
    }
}

pub struct DramDevice {
    timing: TimingParams,
    config: DeviceConfig,
    map: AddressMap,
    banks: Vec<BankState>,
    next_init_step: u32,
    last_init_step: Option<Cycle>,
    initialized_at: Option<Cycle>,
    last_zq: Option<Cycle>,
    last_issue: Option<Cycle>,
    bus_free_at: Cycle,
    storage: HashMap<u64, Word>,
    violations: Vec<Violation>,
}

impl DramDevice {
    pub fn new(timing: TimingParams, config: DeviceConfig) -> Self {
        let map = AddressMap {
            banks: config.banks,
            rows: config.rows,
            page_bytes: timing.page_bytes,
        };
        DramDevice {
            banks: (0..config.banks).map(|_| BankState::new()).collect(),
            timing,
            config,
            map,
            next_init_step: 0,
            last_init_step: None,
            initialized_at: None,
            last_zq: None,
            last_issue: None,
            bus_free_at: 0,
            storage: HashMap::new(),
            violations: Vec::new(),
        }
    }

    pub fn address_map(&self) -> AddressMap {
        self.map
    }

    pub fn bank(&self, bank: u32) -> &BankState {
        &self.banks[bank as usize]
    }

    /// Phase of `bank` as seen at `cycle`.
    pub fn phase_at(&self, bank: u32, cycle: Cycle) -> BankPhase {
        let b = &self.banks[bank as usize];
        if b.phase == BankPhase::Refreshing && cycle >= b.refresh_until {
            BankPhase::Idle
        } else {
            b.phase
        }
    }

    pub fn is_initialized(&self, cycle: Cycle) -> bool {
        self.initialized_at.is_some_and(|t| cycle >= t)
    }

    pub fn zq_age(&self, cycle: Cycle) -> Option<u64> {
        self.last_zq
            .or(self.initialized_at)
            .map(|t| cycle.saturating_sub(t))
    }

    pub fn violation_log(&self) -> &[Violation] {
        &self.violations
    }

    /// One line per violation: cycle, constraint, command.
    pub fn violation_report(&self) -> String {
        let mut out = String::new();
        for v in &self.violations {
            let what = match v.error {
                ProtocolError::TimingViolation {
                    constraint,
                    required,
                    actual,
                } => {
                    format!("{constraint} (required {required}, actual {actual})")
                }
                ProtocolError::StateViolation(s) => format!("state: {s}"),
                ProtocolError::NotInitialized => "not_initialized".to_string(),
            };
            let _ = writeln!(out, "{} {} {}", v.cycle, what, v.command);
        }
        out
    }

    /// Checks `cmd` at `cycle` and applies its state change when legal.
    pub fn apply_command(&mut self, cmd: &RpcCommand, cycle: Cycle) -> Result<(), ProtocolError> {
        let result = self.check(cmd, cycle);
        match result {
            Ok(()) => self.commit(cmd, cycle),
            Err(error) => self.violations.push(Violation {
                cycle,
                error,
                command: *cmd,
            }),
        }
        result
    }

    fn bank_mut(&mut self, bank: u32, cycle: Cycle) -> Result<&mut BankState, ProtocolError> {
        let b = self
            .banks
            .get_mut(bank as usize)
            .ok_or(ProtocolError::StateViolation(
                StateViolation::BankOutOfRange { bank },
            ))?;
        b.settle(cycle);
        Ok(b)
    }

    fn check(&mut self, cmd: &RpcCommand, cycle: Cycle) -> Result<(), ProtocolError> {
        if let Some(last) = self.last_issue {
            if cycle < self.bus_free_at {
                return Err(ProtocolError::TimingViolation {
                    constraint: Constraint::Bus,
                    required: self.bus_free_at - last,
                    actual: cycle - last,
                });
            }
        }
        if let RpcCommand::InitStep { index } = *cmd {
            if self.initialized_at.is_some() {
                return Err(ProtocolError::StateViolation(
                    StateViolation::AlreadyInitialized,
                ));
            }
            if index != self.next_init_step {
                return Err(ProtocolError::StateViolation(
                    StateViolation::InitOutOfOrder {
                        expected: self.next_init_step,
                        got: index,
                    },
                ));
            }
            if index > 0 {
                let required = self.timing.t_init_steps[index as usize - 1];
                gap_check(Constraint::InitStep, self.last_init_step, required, cycle)?;
            }
            return Ok(());
        }
        if !self.is_initialized(cycle) {
            return Err(ProtocolError::NotInitialized);
        }
        let t = self.timing.clone();
        let page_words = t.page_words();
        let rows = self.config.rows;
        match *cmd {
            RpcCommand::Activate { bank, row } => {
                let b = self.bank_mut(bank, cycle)?;
                match b.phase {
                    BankPhase::Active => {
                        return Err(ProtocolError::StateViolation(StateViolation::BankActive {
                            bank,
                        }))
                    }
                    BankPhase::Refreshing => {
                        return Err(ProtocolError::StateViolation(
                            StateViolation::BankRefreshing { bank },
                        ))
                    }
                    BankPhase::Idle => {}
                }
                if row >= rows {
                    return Err(ProtocolError::StateViolation(
                        StateViolation::RowOutOfRange { row },
                    ));
                }
                gap_check(Constraint::Rp, b.last_precharge, t.t_rp, cycle)?;
            }
            RpcCommand::Read { bank, col, n_words }
            | RpcCommand::Write {
                bank, col, n_words, ..
            } => {
                let b = self.bank_mut(bank, cycle)?;
                match b.phase {
                    BankPhase::Idle => {
                        return Err(ProtocolError::StateViolation(StateViolation::NoOpenRow {
                            bank,
                        }))
                    }
                    BankPhase::Refreshing => {
                        return Err(ProtocolError::StateViolation(
                            StateViolation::BankRefreshing { bank },
                        ))
                    }
                    BankPhase::Active => {}
                }
                if n_words == 0 {
                    return Err(ProtocolError::StateViolation(StateViolation::EmptyBurst));
                }
                if col + n_words > page_words {
                    return Err(ProtocolError::StateViolation(StateViolation::PageOverrun {
                        col,
                        n_words,
                    }));
                }
                gap_check(Constraint::Rcd, b.last_activate, t.t_rcd, cycle)?;
            }
            RpcCommand::Precharge { bank } => {
                let b = self.bank_mut(bank, cycle)?;
                match b.phase {
                    BankPhase::Idle => {
                        return Err(ProtocolError::StateViolation(StateViolation::NoOpenRow {
                            bank,
                        }))
                    }
                    BankPhase::Refreshing => {
                        return Err(ProtocolError::StateViolation(
                            StateViolation::BankRefreshing { bank },
                        ))
                    }
                    BankPhase::Active => {}
                }
                gap_check(Constraint::Ras, b.last_activate, t.t_ras, cycle)?;
                if b.last_read.is_some() {
                    gap_check(Constraint::Rtp, Some(b.read_data_end), t.t_rtp, cycle)?;
                }
                if b.last_write.is_some() {
                    gap_check(Constraint::Wr, Some(b.write_data_end), t.t_wr, cycle)?;
                }
            }
            RpcCommand::Refresh { banks } => {
                for bank in banks.iter() {
                    let b = self.bank_mut(bank, cycle)?;
                    match b.phase {
                        BankPhase::Active => {
                            return Err(ProtocolError::StateViolation(StateViolation::BankActive {
                                bank,
                            }))
                        }
                        BankPhase::Refreshing => {
                            return Err(ProtocolError::StateViolation(
                                StateViolation::BankRefreshing { bank },
                            ))
                        }
                        BankPhase::Idle => {}
                    }
                    gap_check(Constraint::Rp, b.last_precharge, t.t_rp, cycle)?;
                }
            }
            RpcCommand::ZqCal => {
                for bank in 0..self.config.banks {
                    let b = self.bank_mut(bank, cycle)?;
                    match b.phase {
                        BankPhase::Active => {
                            return Err(ProtocolError::StateViolation(StateViolation::BankActive {
                                bank,
                            }))
                        }
                        BankPhase::Refreshing => {
                            return Err(ProtocolError::StateViolation(
                                StateViolation::BankRefreshing { bank },
                            ))
                        }
                        BankPhase::Idle => {}
                    }
                }
            }
            RpcCommand::InitStep { .. } => unreachable!(),
        }
        Ok(())
    }

    fn commit(&mut self, cmd: &RpcCommand, cycle: Cycle) {
        let t = &self.timing;
        self.last_issue = Some(cycle);
        self.bus_free_at = cycle + t.bus_occupancy(cmd);
        let data_end = t.data_window(cmd).map(|w| cycle + w.end);
        let t_rfc = t.t_rfc;
        match *cmd {
            RpcCommand::InitStep { index } => {
                self.next_init_step = index + 1;
                self.last_init_step = Some(cycle);
                if self.next_init_step as usize == self.timing.t_init_steps.len() {
                    self.initialized_at = Some(cycle + self.timing.t_init_steps[index as usize]);
                }
            }
            RpcCommand::Activate { bank, row } => {
                let b = &mut self.banks[bank as usize];
                b.phase = BankPhase::Active;
                b.open_row = Some(row);
                b.last_activate = Some(cycle);
            }
            RpcCommand::Read { bank, .. } => {
                let b = &mut self.banks[bank as usize];
                b.last_read = Some(cycle);
                b.read_data_end = data_end.unwrap();
            }
            RpcCommand::Write { bank, .. } => {
                let b = &mut self.banks[bank as usize];
                b.last_write = Some(cycle);
                b.write_data_end = data_end.unwrap();
            }
            RpcCommand::Precharge { bank } => {
                let b = &mut self.banks[bank as usize];
                b.phase = BankPhase::Idle;
                b.open_row = None;
                b.last_precharge = Some(cycle);
            }
            RpcCommand::Refresh { banks } => {
                for bank in banks.iter() {
                    let b = &mut self.banks[bank as usize];
                    b.phase = BankPhase::Refreshing;
                    b.refresh_until = cycle + t_rfc;
                    b.last_refresh = Some(cycle);
                }
            }
            RpcCommand::ZqCal => self.last_zq = Some(cycle),
        }
    }

    /// Banks whose last refresh (or initialization) is older than the
    /// refresh deadline scaled by the slack factor.
    pub fn check_refresh_deadlines(&self, cycle: Cycle) -> Vec<u32> {
        let Some(init) = self.initialized_at else {
            return Vec::new();
        };
        let limit = (self.timing.t_refi as f64 * self.config.refresh_slack) as u64;
        self.banks
            .iter()
            .enumerate()
            .filter(|(_, b)| {
                let since = b.last_refresh.unwrap_or(init);
                cycle.saturating_sub(since) > limit
            })
            .map(|(i, _)| i as u32)
            .collect()
    }

    fn word_addr(&self, bank: u32, row: u32, col: u32) -> u64 {
        self.map.address_of(DramLocation { bank, row, col })
    }

    fn open_row(&self, bank: u32) -> u32 {
        self.banks[bank as usize]
            .open_row
            .expect("data access requires an open row")
    }

    /// Data returned by an accepted read of the open row.
    pub fn read_words(&self, bank: u32, col: u32, n_words: u32) -> Vec<Word> {
        let row = self.open_row(bank);
        (col..col + n_words)
            .map(|c| self.peek_word(self.word_addr(bank, row, c)))
            .collect()
    }

    /// Stores an accepted write into the open row. `first_mask` applies to the
    /// first word and `last_mask` to the last; a single-word write uses both.
    pub fn write_words(
        &mut self,
        bank: u32,
        col: u32,
        words: &[Word],
        first_mask: u32,
        last_mask: u32,
    ) {
        let row = self.open_row(bank);
        let n = words.len();
        for (i, data) in words.iter().enumerate() {
            let mut mask = u32::MAX;
            if i == 0 {
                mask &= first_mask;
            }
            if i + 1 == n {
                mask &= last_mask;
            }
            let addr = self.word_addr(bank, row, col + i as u32);
            let mut word = self.peek_word(addr);
            for (byte, src) in word.iter_mut().zip(data) {
                if mask & 1 != 0 {
                    *byte = *src;
                }
                mask >>= 1;
            }
            self.storage.insert(addr, word);
        }
    }

    /// Stored value of the word at byte address `addr` (word aligned).
    pub fn peek_word(&self, addr: u64) -> Word {
        debug_assert_eq!(addr % WORD_BYTES as u64, 0);
        self.storage
            .get(&addr)
            .copied()
            .unwrap_or([self.config.fill_byte; WORD_BYTES])
    }

    /// Test hook: flips every bit of the stored word at `addr`.
    pub fn corrupt_word(&mut self, addr: u64) {
        let addr = addr / WORD_BYTES as u64 * WORD_BYTES as u64;
        let mut w = self.peek_word(addr);
        for b in &mut w {
            *b = !*b;
        }
        self.storage.insert(addr, w);
    }

    /// Word addresses that have been written at least once.
    pub fn written_words(&self) -> impl Iterator<Item = u64> + '_ {
        self.storage.keys().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::BankSet;

    fn timing() -> TimingParams {
        TimingParams {
            t_init_steps: vec![4],
            ..TimingParams::default()
        }
    }

    /// Device with the init sequence already applied; ready at cycle 4.
    fn ready() -> DramDevice {
        let mut d = DramDevice::new(timing(), DeviceConfig::default());
        d.apply_command(&RpcCommand::InitStep { index: 0 }, 0)
            .unwrap();
        assert!(d.is_initialized(4));
        d
    }

    fn act(bank: u32, row: u32) -> RpcCommand {
        RpcCommand::Activate { bank, row }
    }

    fn rd(bank: u32, col: u32, n: u32) -> RpcCommand {
        RpcCommand::Read {
            bank,
            col,
            n_words: n,
        }
    }

    #[test]
    fn read_exactly_at_trcd_is_accepted() {
        let mut d = ready();
        let t = timing();
        d.apply_command(&act(0, 5), 100).unwrap();
        d.apply_command(&rd(0, 0, 1), 100 + t.t_rcd).unwrap();
        assert!(d.violation_log().is_empty());
    }

    #[test]
    fn read_one_cycle_early_violates_trcd() {
        let mut d = ready();
        let t = timing();
        d.apply_command(&act(0, 5), 100).unwrap();
        let err = d
            .apply_command(&rd(0, 0, 1), 100 + t.t_rcd - 1)
            .unwrap_err();
        assert_eq!(
            err,
            ProtocolError::TimingViolation {
                constraint: Constraint::Rcd,
                required: t.t_rcd,
                actual: t.t_rcd - 1
            }
        );
        assert_eq!(d.violation_log().len(), 1);
        assert!(d.violation_report().contains("t_rcd"));
    }

    #[test]
    fn refresh_interleaves_with_read_on_other_bank() {
        let mut d = ready();
        let t = timing();
        d.apply_command(&act(0, 5), 100).unwrap();
        let rd_at = 100 + t.t_rcd;
        d.apply_command(&rd(0, 0, 4), rd_at).unwrap();
        let busy = t.bus_occupancy(&rd(0, 0, 4));
        d.apply_command(
            &RpcCommand::Refresh {
                banks: BankSet::single(1),
            },
            rd_at + busy,
        )
        .unwrap();
        assert_eq!(d.phase_at(1, rd_at + busy + 1), BankPhase::Refreshing);
        assert_eq!(d.phase_at(0, rd_at + busy + 1), BankPhase::Active);
    }

    #[test]
    fn refreshing_bank_rejects_datapath_until_trfc() {
        let mut d = ready();
        let t = timing();
        d.apply_command(
            &RpcCommand::Refresh {
                banks: BankSet::single(2),
            },
            10,
        )
        .unwrap();
        let err = d.apply_command(&act(2, 0), 10 + t.t_rfc - 1).unwrap_err();
        assert_eq!(
            err,
            ProtocolError::StateViolation(StateViolation::BankRefreshing { bank: 2 })
        );
        d.apply_command(&act(2, 0), 10 + t.t_rfc).unwrap();
    }

    #[test]
    fn state_violations() {
        let mut d = ready();
        assert_eq!(
            d.apply_command(&rd(1, 0, 1), 10),
            Err(ProtocolError::StateViolation(StateViolation::NoOpenRow {
                bank: 1
            }))
        );
        d.apply_command(&act(1, 0), 10).unwrap();
        assert_eq!(
            d.apply_command(&act(1, 3), 20),
            Err(ProtocolError::StateViolation(StateViolation::BankActive {
                bank: 1
            }))
        );
        assert!(matches!(
            d.apply_command(&rd(1, 60, 8), 30),
            Err(ProtocolError::StateViolation(
                StateViolation::PageOverrun { .. }
            ))
        ));
    }

    #[test]
    fn commands_before_init_are_rejected() {
        let mut d = DramDevice::new(timing(), DeviceConfig::default());
        assert_eq!(
            d.apply_command(&act(0, 0), 0),
            Err(ProtocolError::NotInitialized)
        );
        d.apply_command(&RpcCommand::InitStep { index: 0 }, 1)
            .unwrap();
        assert_eq!(
            d.apply_command(&act(0, 0), 3),
            Err(ProtocolError::NotInitialized)
        );
        d.apply_command(&act(0, 0), 5).unwrap();
    }

    #[test]
    fn init_steps_respect_order_and_duration() {
        let t = TimingParams {
            t_init_steps: vec![10, 5],
            ..TimingParams::default()
        };
        let mut d = DramDevice::new(t, DeviceConfig::default());
        assert!(d
            .apply_command(&RpcCommand::InitStep { index: 1 }, 0)
            .is_err());
        d.apply_command(&RpcCommand::InitStep { index: 0 }, 0)
            .unwrap();
        assert!(matches!(
            d.apply_command(&RpcCommand::InitStep { index: 1 }, 9),
            Err(ProtocolError::TimingViolation {
                constraint: Constraint::InitStep,
                ..
            })
        ));
        d.apply_command(&RpcCommand::InitStep { index: 1 }, 10)
            .unwrap();
        assert!(!d.is_initialized(14));
        assert!(d.is_initialized(15));
    }

    #[test]
    fn precharge_waits_for_ras_and_write_recovery() {
        let mut d = ready();
        let t = timing();
        d.apply_command(&act(0, 0), 10).unwrap();
        assert!(matches!(
            d.apply_command(&RpcCommand::Precharge { bank: 0 }, 10 + t.t_ras - 1),
            Err(ProtocolError::TimingViolation {
                constraint: Constraint::Ras,
                ..
            })
        ));
        let wr = RpcCommand::Write {
            bank: 0,
            col: 0,
            n_words: 1,
            first_mask: !0,
            last_mask: !0,
        };
        let wr_at = 10 + t.t_rcd;
        d.apply_command(&wr, wr_at).unwrap();
        let data_end = wr_at + t.data_window(&wr).unwrap().end;
        let pre = RpcCommand::Precharge { bank: 0 };
        assert!(matches!(
            d.apply_command(&pre, data_end + t.t_wr - 1),
            Err(ProtocolError::TimingViolation {
                constraint: Constraint::Wr,
                ..
            })
        ));
        d.apply_command(&pre, data_end + t.t_wr).unwrap();
        assert!(matches!(
            d.apply_command(&act(0, 1), data_end + t.t_wr + t.t_rp - 1),
            Err(ProtocolError::TimingViolation {
                constraint: Constraint::Rp,
                ..
            })
        ));
    }

    #[test]
    fn bus_overlap_is_rejected() {
        let mut d = ready();
        d.apply_command(&act(0, 0), 10).unwrap();
        let err = d.apply_command(&act(1, 0), 11).unwrap_err();
        assert!(matches!(
            err,
            ProtocolError::TimingViolation {
                constraint: Constraint::Bus,
                ..
            }
        ));
    }

    #[test]
    fn masked_write_keeps_fill_outside_mask() {
        let mut d = ready();
        d.apply_command(&act(0, 0), 10).unwrap();
        d.write_words(
            0,
            0,
            &[[0xAB; 32]],
            crate::protocol::byte_mask(4, 31),
            u32::MAX,
        );
        let w = d.read_words(0, 0, 1)[0];
        // byte-map oracle
        let expected: Vec<u8> = (0..32).map(|i| if i >= 4 { 0xAB } else { 0x5A }).collect();
        assert_eq!(w.to_vec(), expected);
    }

    #[test]
    fn unwritten_and_full_words() {
        let mut d = ready();
        d.apply_command(&act(3, 7), 10).unwrap();
        assert_eq!(d.read_words(3, 5, 1)[0], [0x5A; 32]);
        let data: Word = std::array::from_fn(|i| i as u8);
        d.write_words(3, 5, &[data], u32::MAX, u32::MAX);
        assert_eq!(d.read_words(3, 5, 1)[0], data);
        let addr = d.address_map().address_of(DramLocation {
            bank: 3,
            row: 7,
            col: 5,
        });
        assert_eq!(d.peek_word(addr), data);
    }

    #[test]
    fn refresh_deadline_tracking() {
        let d = ready();
        assert!(d.check_refresh_deadlines(0).is_empty());
        let t = timing();
        assert!(d.check_refresh_deadlines(4 + t.t_refi).is_empty());
        let mut d = ready();
        d.apply_command(
            &RpcCommand::Refresh {
                banks: BankSet(0b1110),
            },
            2 * t.t_refi,
        )
        .unwrap();
        assert_eq!(d.check_refresh_deadlines(2 * t.t_refi + 1), vec![0]);
    }

    #[test]
    fn zq_needs_idle_banks_and_resets_age() {
        let mut d = ready();
        d.apply_command(&act(0, 0), 10).unwrap();
        assert!(d.apply_command(&RpcCommand::ZqCal, 20).is_err());
        d.apply_command(&RpcCommand::Precharge { bank: 0 }, 30)
            .unwrap();
        d.apply_command(&RpcCommand::ZqCal, 40).unwrap();
        assert_eq!(d.zq_age(50), Some(10));
    }

    proptest::proptest! {
        /// Random masked writes agree with a flat byte array applying the same masks.
        #[test]
        fn storage_matches_flat_oracle(ops in proptest::collection::vec(
            (0u32..4, 0u32..16, 1u32..4, proptest::num::u32::ANY, proptest::num::u32::ANY, proptest::num::u8::ANY), 1..40)
        ) {
            let mut d = ready();
            let map = d.address_map();
            let mut flat = vec![0x5Au8; 4 * 2048];
            let mut cycle = 100;
            for (bank, col, n, fm, lm, seed) in ops {
                d.apply_command(&act(bank, 0), cycle).unwrap();
                let words: Vec<Word> = (0..n).map(|i| [seed.wrapping_add(i as u8); 32]).collect();
                d.write_words(bank, col, &words, fm, lm);
                for (i, w) in words.iter().enumerate() {
                    let base = map.address_of(DramLocation { bank, row: 0, col: col + i as u32 }) as usize;
                    for b in 0..32 {
                        let first = i == 0 && fm & (1 << b) == 0;
                        let last = i + 1 == n as usize && lm & (1 << b) == 0;
                        if !first && !last {
                            flat[base + b] = w[b];
                        }
                    }
                }
                d.apply_command(&RpcCommand::Precharge { bank }, cycle + 100).unwrap();
                cycle += 200;
            }
            for bank in 0..4 {
                d.apply_command(&act(bank, 0), cycle).unwrap();
                let got = d.read_words(bank, 0, 64);
                for (c, w) in got.iter().enumerate() {
                    let base = map.address_of(DramLocation { bank, row: 0, col: c as u32 }) as usize;
                    proptest::prop_assert_eq!(&w[..], &flat[base..base + 32]);
                }
                cycle += 10;
            }
        }
    }
}
