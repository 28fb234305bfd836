//! The controller's own view of bank timing. Each bank keeps the earliest
//! cycle at which the next command of each kind may go out; issuing a command
//! pushes those horizons forward.

use crate::protocol::{Cycle, RpcCommand, TimingParams};

#[derive(Clone, Debug, Default)]
struct Horizon {
    open_row: Option<u32>,
    activate_at: Cycle,
    column_at: Cycle,
    precharge_at: Cycle,
    refresh_until: Cycle,
    last_refresh: Option<Cycle>,
}

pub(crate) struct BankTracker {
    timing: TimingParams,
    banks: Vec<Horizon>,
}

impl BankTracker {
    pub fn new(timing: TimingParams, banks: u32) -> Self {
        BankTracker {
            timing,
            banks: vec![Horizon::default(); banks as usize],
        }
    }

    #[cfg(test)]
    pub fn is_refreshing(&self, bank: u32, cycle: Cycle) -> bool {
        cycle < self.banks[bank as usize].refresh_until
    }

    pub fn any_refreshing(&self, cycle: Cycle) -> bool {
        self.banks.iter().any(|b| cycle < b.refresh_until)
    }

    fn closed_and_settled(&self, bank: u32, cycle: Cycle) -> bool {
        let b = &self.banks[bank as usize];
        b.open_row.is_none() && cycle >= b.activate_at && cycle >= b.refresh_until
    }

    /// Earliest-horizon check for `cmd` at `cycle`; the data bus is checked
    /// by the caller.
    pub fn ready(&self, cmd: &RpcCommand, cycle: Cycle) -> bool {
        match *cmd {
            RpcCommand::Activate { bank, .. } => self.closed_and_settled(bank, cycle),
            RpcCommand::Read { bank, .. } | RpcCommand::Write { bank, .. } => {
                let b = &self.banks[bank as usize];
                b.open_row.is_some() && cycle >= b.column_at
            }
            RpcCommand::Precharge { bank } => {
                let b = &self.banks[bank as usize];
                b.open_row.is_some() && cycle >= b.precharge_at
            }
            RpcCommand::Refresh { banks } => {
                banks.iter().all(|b| self.closed_and_settled(b, cycle))
            }
            RpcCommand::ZqCal => {
                (0..self.banks.len() as u32).all(|b| self.closed_and_settled(b, cycle))
            }
            RpcCommand::InitStep { .. } => true,
        }
    }

    pub fn record(&mut self, cmd: &RpcCommand, cycle: Cycle) {
        let t = &self.timing;
        match *cmd {
            RpcCommand::Activate { bank, row } => {
                let b = &mut self.banks[bank as usize];
                b.open_row = Some(row);
                b.column_at = cycle + t.t_rcd;
                b.precharge_at = cycle + t.t_ras;
            }
            RpcCommand::Read { bank, .. } | RpcCommand::Write { bank, .. } => {
                let data_end = cycle + t.data_window(cmd).expect("column command").end;
                let recovery = if matches!(cmd, RpcCommand::Read { .. }) {
                    t.t_rtp
                } else {
                    t.t_wr
                };
                let b = &mut self.banks[bank as usize];
                b.precharge_at = b.precharge_at.max(data_end + recovery);
            }
            RpcCommand::Precharge { bank } => {
                let b = &mut self.banks[bank as usize];
                b.open_row = None;
                b.activate_at = cycle + t.t_rp;
            }
            RpcCommand::Refresh { banks } => {
                for bank in banks.iter() {
                    let b = &mut self.banks[bank as usize];
                    b.refresh_until = cycle + t.t_rfc;
                    b.last_refresh = Some(cycle);
                }
            }
            RpcCommand::ZqCal | RpcCommand::InitStep { .. } => {}
        }
    }

    /// Cycle by which `bank` must be refreshed again.
    pub fn refresh_deadline(&self, bank: u32, init_done: Cycle) -> Cycle {
        self.banks[bank as usize].last_refresh.unwrap_or(init_done) + self.timing.t_refi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::BankSet;

    #[test]
    fn horizons_follow_constraints() {
        let t = TimingParams::default();
        let mut tr = BankTracker::new(t.clone(), 4);
        let act = RpcCommand::Activate { bank: 0, row: 1 };
        assert!(tr.ready(&act, 0));
        tr.record(&act, 10);
        let rd = RpcCommand::Read {
            bank: 0,
            col: 0,
            n_words: 1,
        };
        assert!(!tr.ready(&rd, 10 + t.t_rcd - 1));
        assert!(tr.ready(&rd, 10 + t.t_rcd));
        tr.record(&rd, 20);
        let pre = RpcCommand::Precharge { bank: 0 };
        let earliest = 20 + t.data_window(&rd).unwrap().end + t.t_rtp;
        assert!(!tr.ready(&pre, earliest - 1));
        assert!(tr.ready(&pre, earliest));
        tr.record(&pre, earliest);
        assert!(!tr.ready(&act, earliest + t.t_rp - 1));
        assert!(tr.ready(&act, earliest + t.t_rp));
    }

    #[test]
    fn refresh_blocks_only_its_bank() {
        let t = TimingParams::default();
        let mut tr = BankTracker::new(t.clone(), 4);
        tr.record(
            &RpcCommand::Refresh {
                banks: BankSet::single(2),
            },
            100,
        );
        assert!(tr.is_refreshing(2, 100 + t.t_rfc - 1));
        assert!(!tr.ready(&RpcCommand::Activate { bank: 2, row: 0 }, 120));
        assert!(tr.ready(&RpcCommand::Activate { bank: 1, row: 0 }, 120));
        assert!(!tr.ready(&RpcCommand::ZqCal, 120));
        assert!(tr.ready(&RpcCommand::Activate { bank: 2, row: 0 }, 100 + t.t_rfc));
        assert_eq!(tr.refresh_deadline(2, 0), 100 + t.t_refi);
        assert_eq!(tr.refresh_deadline(1, 50), 50 + t.t_refi);
    }
}
