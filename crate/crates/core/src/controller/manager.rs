//! Management command source: init sequence, per-bank refresh and ZQ
//! calibration.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::protocol::{BankSet, Cycle, RpcCommand, TimingParams};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManagerConfig {
    /// Period after which every bank has been refreshed once.
    pub refresh_interval: u64,
    pub zq_interval: u64,
    /// A refresh this close to its deadline blocks new activates to its bank.
    pub refresh_priority_window: u64,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        ManagerConfig {
            refresh_interval: 6400,
            zq_interval: 100_000,
            refresh_priority_window: 1000,
        }
    }
}

impl ManagerConfig {
    pub fn validate(&self, timing: &TimingParams, banks: u32) -> Result<(), ConfigError> {
        if self.refresh_interval == 0 || self.refresh_interval > timing.t_refi {
            return Err(ConfigError::invalid(
                "manager.refresh_interval",
                "must be non-zero and no larger than timing.t_refi",
            ));
        }
        if self.refresh_interval < banks as u64 {
            return Err(ConfigError::invalid(
                "manager.refresh_interval",
                "must leave at least one cycle between per-bank refreshes",
            ));
        }
        if self.zq_interval == 0 || self.zq_interval > timing.t_zqi {
            return Err(ConfigError::invalid(
                "manager.zq_interval",
                "must be non-zero and no larger than timing.t_zqi",
            ));
        }
        Ok(())
    }
}

pub struct Manager {
    config: ManagerConfig,
    init_durations: Vec<u64>,
    banks: u32,
    init_next: usize,
    init_ready_at: Cycle,
    init_in_flight: bool,
    init_done_at: Option<Cycle>,
    next_refresh_bank: u32,
    next_refresh_at: Cycle,
    next_zq_at: Cycle,
}

impl Manager {
    pub fn new(config: ManagerConfig, timing: &TimingParams, banks: u32) -> Self {
        Manager {
            config,
            init_durations: timing.t_init_steps.clone(),
            banks,
            init_next: 0,
            init_ready_at: 0,
            init_in_flight: false,
            init_done_at: None,
            next_refresh_bank: 0,
            next_refresh_at: Cycle::MAX,
            next_zq_at: Cycle::MAX,
        }
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.config
    }

    /// Cycle from which datapath commands may be issued.
    pub fn init_done_at(&self) -> Option<Cycle> {
        self.init_done_at
    }

    pub fn is_ready(&self, cycle: Cycle) -> bool {
        self.init_done_at.is_some_and(|t| cycle >= t)
    }

    /// Spacing between consecutive single-bank refreshes.
    pub fn per_bank_interval(&self) -> u64 {
        self.config.refresh_interval / self.banks as u64
    }

    /// At most one management command per cycle. Refresh wins over ZQ; a
    /// deferred ZQ goes out on a later tick.
    pub fn tick(&mut self, cycle: Cycle) -> Option<RpcCommand> {
        match self.init_done_at {
            None => {
                if !self.init_in_flight
                    && self.init_next < self.init_durations.len()
                    && cycle >= self.init_ready_at
                {
                    self.init_in_flight = true;
                    return Some(RpcCommand::InitStep {
                        index: self.init_next as u32,
                    });
                }
                None
            }
            Some(_) => {
                if cycle >= self.next_refresh_at {
                    let bank = self.next_refresh_bank;
                    self.next_refresh_bank = (bank + 1) % self.banks;
                    self.next_refresh_at += self.per_bank_interval();
                    Some(RpcCommand::Refresh {
                        banks: BankSet::single(bank),
                    })
                } else if cycle >= self.next_zq_at {
                    self.next_zq_at += self.config.zq_interval;
                    Some(RpcCommand::ZqCal)
                } else {
                    None
                }
            }
        }
    }

    /// Init progress follows the cycle each step actually went out on the bus.
    pub fn on_issued(&mut self, cmd: &RpcCommand, cycle: Cycle) {
        if let RpcCommand::InitStep { index } = *cmd {
            let duration = self.init_durations[index as usize];
            self.init_in_flight = false;
            self.init_next = index as usize + 1;
            self.init_ready_at = cycle + duration;
            if self.init_next == self.init_durations.len() {
                let done = cycle + duration;
                self.init_done_at = Some(done);
                self.next_refresh_at = done + self.per_bank_interval();
                self.next_zq_at = done + self.config.zq_interval;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manager(cfg: ManagerConfig) -> Manager {
        let t = TimingParams {
            t_init_steps: vec![10, 20],
            ..TimingParams::default()
        };
        Manager::new(cfg, &t, 4)
    }

    /// Drives the manager issuing every command on the cycle it is emitted.
    fn run(m: &mut Manager, cycles: Cycle) -> Vec<(Cycle, RpcCommand)> {
        let mut out = Vec::new();
        for c in 0..cycles {
            if let Some(cmd) = m.tick(c) {
                m.on_issued(&cmd, c);
                out.push((c, cmd));
            }
        }
        out
    }

    #[test]
    fn cold_start_emits_first_init_step() {
        let mut m = manager(ManagerConfig::default());
        assert_eq!(m.tick(0), Some(RpcCommand::InitStep { index: 0 }));
        // nothing else until the step has been issued and its duration elapsed
        assert_eq!(m.tick(1), None);
        m.on_issued(&RpcCommand::InitStep { index: 0 }, 1);
        assert_eq!(m.tick(10), None);
        assert_eq!(m.tick(11), Some(RpcCommand::InitStep { index: 1 }));
        m.on_issued(&RpcCommand::InitStep { index: 1 }, 11);
        assert_eq!(m.init_done_at(), Some(31));
    }

    #[test]
    fn refresh_round_robin_on_schedule() {
        let cfg = ManagerConfig {
            refresh_interval: 400,
            zq_interval: 100_000,
            refresh_priority_window: 10,
        };
        let mut m = manager(cfg);
        let out = run(&mut m, 30 + 100 * 9);
        let refreshes: Vec<_> = out
            .iter()
            .filter_map(|(c, cmd)| match cmd {
                RpcCommand::Refresh { banks } => Some((*c, banks.0)),
                _ => None,
            })
            .collect();
        // init done at 30; one bank every 100 cycles
        assert_eq!(refreshes[0], (130, 1));
        assert_eq!(refreshes[1], (230, 2));
        assert_eq!(refreshes[3], (430, 8));
        assert_eq!(refreshes[4], (530, 1));
        assert!(refreshes.iter().all(|(c, _)| (c - 30) % 100 == 0));
    }

    #[test]
    fn refresh_beats_zq_on_collision() {
        // enumerate the schedule: every ZQ that falls on a refresh slot is
        // emitted exactly one cycle later
        let cfg = ManagerConfig {
            refresh_interval: 400,
            zq_interval: 250,
            refresh_priority_window: 10,
        };
        let mut m = manager(cfg);
        let out = run(&mut m, 5000);
        let mut collisions = 0;
        for k in 1.. {
            let due = 30 + 250 * k;
            if due >= 4990 {
                break;
            }
            let at_due = out.iter().find(|(c, _)| *c == due).map(|(_, cmd)| *cmd);
            if (due - 30) % 100 == 0 {
                collisions += 1;
                assert!(matches!(at_due, Some(RpcCommand::Refresh { .. })));
                assert!(out.contains(&(due + 1, RpcCommand::ZqCal)));
            } else {
                assert_eq!(at_due, Some(RpcCommand::ZqCal));
            }
        }
        assert!(collisions > 0);
        let mut seen = std::collections::HashSet::new();
        assert!(out.iter().all(|(c, _)| seen.insert(*c)));
    }

    #[test]
    fn config_validation() {
        let t = TimingParams::default();
        assert!(ManagerConfig::default().validate(&t, 4).is_ok());
        let bad = ManagerConfig {
            refresh_interval: t.t_refi + 1,
            ..ManagerConfig::default()
        };
        assert!(bad.validate(&t, 4).is_err());
    }
}
