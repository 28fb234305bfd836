//! Memory controller: command FSM, manager, timing FSM and PHY.
//!
//! Requests enter a FIFO and are decomposed into activate / column / precharge
//! triples once they reach the lookahead window. Every cycle the timing FSM
//! issues the oldest command whose constraints are met while the data bus is
//! free. Column bursts go out strictly in request order; activates and
//! precharges of neighbouring requests may slot in around them.

mod command;
mod manager;
mod phy;
mod timing;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use command::{decompose, DatapathRequest};
pub use manager::{Manager, ManagerConfig};
pub use phy::{BeatKind, BusBeat, Phy, PhyConfig, PhyObservation};

use crate::device::DramDevice;
use crate::error::ConfigError;
use crate::metrics::{BusStats, EventCounts};
use crate::protocol::{AddressMap, Cycle, Direction, RpcCommand, TimingParams, Word, WORD_BYTES};
use timing::BankTracker;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Requests buffered in front of the command FSM.
    pub queue_depth: usize,
    /// Requests decomposed and eligible for command issue at once.
    pub lookahead: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            queue_depth: 4,
            lookahead: 2,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.lookahead == 0 {
            return Err(ConfigError::invalid(
                "controller.lookahead",
                "must be at least 1",
            ));
        }
        if self.queue_depth < self.lookahead {
            return Err(ConfigError::invalid(
                "controller.queue_depth",
                "must be at least controller.lookahead",
            ));
        }
        Ok(())
    }
}

/// A datapath request with the tag the frontend uses to match completions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedRequest {
    pub tag: u64,
    pub request: DatapathRequest,
    /// Write payload, one word per request word.
    pub data: Vec<Word>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ControllerEvent {
    /// The last data beat of a write left the PHY.
    WriteDone { tag: u64 },
    /// A read word became visible upstream.
    ReadWord { tag: u64, index: u32, word: Word },
}

struct InFlight {
    tag: u64,
    seq: u64,
    commands: [RpcCommand; 3],
    next: usize,
    bank: u32,
    data: Vec<Word>,
}

impl InFlight {
    fn column_issued(&self) -> bool {
        self.next > 1
    }
}

struct ReadLabel {
    tag: u64,
    n_words: u32,
    received: u32,
}

pub struct Controller {
    timing: TimingParams,
    map: AddressMap,
    config: ControllerConfig,
    manager: Manager,
    tracker: BankTracker,
    phy: Phy,
    queue: VecDeque<TaggedRequest>,
    window: Vec<InFlight>,
    management: VecDeque<(u64, RpcCommand)>,
    next_seq: u64,
    bus_free_at: Cycle,
    read_labels: VecDeque<ReadLabel>,
    write_done: VecDeque<(Cycle, u64)>,
    events: EventCounts,
    rejected: u64,
    interleaved_bursts: u64,
}

impl Controller {
    pub fn new(
        timing: TimingParams,
        map: AddressMap,
        config: ControllerConfig,
        manager: ManagerConfig,
        phy: PhyConfig,
    ) -> Self {
        Controller {
            manager: Manager::new(manager, &timing, map.banks),
            tracker: BankTracker::new(timing.clone(), map.banks),
            phy: Phy::new(phy),
            timing,
            map,
            config,
            queue: VecDeque::new(),
            window: Vec::new(),
            management: VecDeque::new(),
            next_seq: 0,
            bus_free_at: 0,
            read_labels: VecDeque::new(),
            write_done: VecDeque::new(),
            events: EventCounts::default(),
            rejected: 0,
            interleaved_bursts: 0,
        }
    }

    pub fn can_accept(&self) -> bool {
        self.queue.len() + self.window.len() < self.config.queue_depth
    }

    pub fn submit(&mut self, req: TaggedRequest) {
        debug_assert!(self.can_accept());
        debug_assert!(req.request.is_valid(self.map.page_bytes));
        debug_assert!(
            req.request.direction == Direction::Read
                || req.data.len() == req.request.n_words as usize
        );
        self.queue.push_back(req);
    }

    pub fn manager(&self) -> &Manager {
        &self.manager
    }

    pub fn phy_mut(&mut self) -> &mut Phy {
        &mut self.phy
    }

    pub fn bus_stats(&self) -> &BusStats {
        self.phy.stats()
    }

    pub fn events(&self) -> &EventCounts {
        &self.events
    }

    /// Commands the device refused. Always zero for a correct controller.
    pub fn rejected_commands(&self) -> u64 {
        self.rejected
    }

    /// Column bursts issued while another bank was refreshing.
    pub fn bursts_during_refresh(&self) -> u64 {
        self.interleaved_bursts
    }

    /// No datapath work queued, in flight, or still draining through the PHY.
    pub fn is_drained(&self) -> bool {
        self.queue.is_empty()
            && self.window.is_empty()
            && self.read_labels.is_empty()
            && self.write_done.is_empty()
            && self.phy.is_idle()
    }

    /// Advances one cycle: manager, command FSM, timing FSM, then the PHY.
    pub fn step(
        &mut self,
        cycle: Cycle,
        device: &mut DramDevice,
        out: &mut Vec<ControllerEvent>,
    ) -> BeatKind {
        if let Some(cmd) = self.manager.tick(cycle) {
            self.management.push_back((self.next_seq, cmd));
            self.next_seq += 1;
        }
        while self.window.len() < self.config.lookahead {
            let Some(req) = self.queue.pop_front() else {
                break;
            };
            let commands = decompose(&req.request, &self.map);
            let bank = self.map.locate(req.request.word_addr).bank;
            self.window.push(InFlight {
                tag: req.tag,
                seq: self.next_seq,
                commands,
                next: 0,
                bank,
                data: req.data,
            });
            self.next_seq += 1;
        }
        if cycle >= self.bus_free_at {
            if let Some(pick) = self.schedule(cycle) {
                self.issue(pick, cycle, device);
            }
        }
        let obs = self.phy.step(cycle);
        if let Some(word) = obs.word {
            let label = self
                .read_labels
                .front_mut()
                .expect("read word without an outstanding read");
            out.push(ControllerEvent::ReadWord {
                tag: label.tag,
                index: label.received,
                word,
            });
            label.received += 1;
            if label.received == label.n_words {
                self.read_labels.pop_front();
            }
        }
        while let Some(&(at, tag)) = self.write_done.front() {
            if at > cycle {
                break;
            }
            self.write_done.pop_front();
            out.push(ControllerEvent::WriteDone { tag });
        }
        obs.beat
    }

    /// Picks the oldest eligible command, management or datapath.
    fn schedule(&self, cycle: Cycle) -> Option<Pick> {
        let mut best: Option<(u64, Pick)> = None;
        let mut consider = |seq: u64, pick: Pick| {
            if best.is_none_or(|(s, _)| seq < s) {
                best = Some((seq, pick));
            }
        };
        if let Some(&(seq, cmd)) = self.management.front() {
            if self.tracker.ready(&cmd, cycle) {
                consider(seq, Pick::Management);
            }
        }
        if self.manager.is_ready(cycle) {
            for (i, f) in self.window.iter().enumerate() {
                if self.datapath_eligible(i, f, cycle) {
                    consider(f.seq, Pick::Datapath(i));
                }
            }
        }
        best.map(|(_, p)| p)
    }

    fn datapath_eligible(&self, idx: usize, f: &InFlight, cycle: Cycle) -> bool {
        let cmd = &f.commands[f.next];
        match f.next {
            0 => {
                // activates never overtake older work on the same bank
                if self.window[..idx].iter().any(|o| o.bank == f.bank) {
                    return false;
                }
                if self.management_blocks(f, cycle) {
                    return false;
                }
            }
            1 if !self.window[..idx].iter().all(InFlight::column_issued) => {
                return false;
            }
            _ => {}
        }
        self.tracker.ready(cmd, cycle)
    }

    /// Older management commands hold their banks; younger refreshes do too
    /// once their deadline is inside the priority window.
    fn management_blocks(&self, f: &InFlight, cycle: Cycle) -> bool {
        let init_done = self.manager.init_done_at().unwrap_or(0);
        let window = self.manager.config().refresh_priority_window;
        self.management.iter().any(|&(seq, cmd)| match cmd {
            RpcCommand::Refresh { banks } if banks.contains(f.bank) => {
                seq < f.seq || self.tracker.refresh_deadline(f.bank, init_done) <= cycle + window
            }
            RpcCommand::ZqCal => seq < f.seq,
            _ => false,
        })
    }

    fn issue(&mut self, pick: Pick, cycle: Cycle, device: &mut DramDevice) {
        let (cmd, accepted) = match pick {
            Pick::Management => {
                let (_, cmd) = self.management.pop_front().unwrap();
                let accepted = device.apply_command(&cmd, cycle).is_ok();
                self.manager.on_issued(&cmd, cycle);
                (cmd, accepted)
            }
            Pick::Datapath(i) => {
                let f = &self.window[i];
                let cmd = f.commands[f.next];
                (cmd, device.apply_command(&cmd, cycle).is_ok())
            }
        };
        if !accepted {
            self.rejected += 1;
        }
        self.tracker.record(&cmd, cycle);
        self.events.record(&cmd);
        self.bus_free_at = cycle + self.timing.bus_occupancy(&cmd);

        let cmd_cycles = if cmd == RpcCommand::ZqCal {
            self.timing.t_zq
        } else {
            self.timing.t_cmd_cycles
        };
        let mut at = cycle;
        for slice in 0..cmd_cycles {
            self.phy.schedule(BusBeat {
                cycle: at,
                content: BeatKind::Command {
                    cmd,
                    slice: slice as u8,
                },
            });
            at += 1;
        }

        if let Pick::Datapath(i) = pick {
            if matches!(cmd, RpcCommand::Read { .. } | RpcCommand::Write { .. })
                && self.tracker.any_refreshing(cycle)
            {
                self.interleaved_bursts += 1;
            }
            match cmd {
                RpcCommand::Read { bank, col, n_words } => {
                    let words = if accepted {
                        device.read_words(bank, col, n_words)
                    } else {
                        vec![[0; WORD_BYTES]; n_words as usize]
                    };
                    at = self.schedule_burst(at, Direction::Read, &words, false);
                    debug_assert_eq!(at, self.bus_free_at);
                    let tag = self.window[i].tag;
                    self.read_labels.push_back(ReadLabel {
                        tag,
                        n_words,
                        received: 0,
                    });
                }
                RpcCommand::Write {
                    bank,
                    col,
                    first_mask,
                    last_mask,
                    ..
                } => {
                    let words = std::mem::take(&mut self.window[i].data);
                    if accepted {
                        device.write_words(bank, col, &words, first_mask, last_mask);
                    }
                    at = self.schedule_burst(at, Direction::Write, &words, true);
                    debug_assert_eq!(at, self.bus_free_at);
                    let done = at - self.timing.t_postamble + self.phy.config().tx_strobe_offset;
                    self.write_done.push_back((done, self.window[i].tag));
                }
                _ => {}
            }
            self.window[i].next += 1;
            if self.window[i].next == 3 {
                self.window.remove(i);
            }
        }
    }

    fn schedule_burst(
        &mut self,
        mut at: Cycle,
        direction: Direction,
        words: &[Word],
        masks: bool,
    ) -> Cycle {
        if masks {
            for index in 0..TimingParams::MASK_CYCLES {
                self.phy.schedule(BusBeat {
                    cycle: at,
                    content: BeatKind::Mask { index: index as u8 },
                });
                at += 1;
            }
        }
        for _ in 0..self.timing.t_preamble {
            self.phy.schedule(BusBeat {
                cycle: at,
                content: BeatKind::Preamble,
            });
            at += 1;
        }
        for word in words {
            for chunk in word.chunks_exact(4) {
                let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
                self.phy.schedule(BusBeat {
                    cycle: at,
                    content: BeatKind::Data { direction, bytes },
                });
                at += 1;
            }
        }
        for _ in 0..self.timing.t_postamble {
            self.phy.schedule(BusBeat {
                cycle: at,
                content: BeatKind::Postamble,
            });
            at += 1;
        }
        at
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pick {
    Management,
    Datapath(usize),
}
