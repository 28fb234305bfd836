//! The wired-up memory system: frontend, controller and device advanced one
//! global cycle at a time.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};

use crate::config::Config;
use crate::controller::{Controller, ControllerEvent};
use crate::device::DramDevice;
use crate::error::SimError;
use crate::frontend::{BusTransaction, Completion, Frontend, FrontendEvent};
use crate::hierarchy::Backing;
use crate::metrics::{BusStats, EventCounts};
use crate::protocol::{Cycle, Direction};

/// Bus statistics and command counts at one point in time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Snapshot {
    pub cycle: Cycle,
    pub stats: BusStats,
    pub events: EventCounts,
}

pub struct MemorySystem {
    device: DramDevice,
    controller: Controller,
    frontend: Frontend,
    cycle: Cycle,
    ctrl_events: Vec<ControllerEvent>,
    events: VecDeque<FrontendEvent>,
    scratch: Vec<FrontendEvent>,
    next_token: u64,
    deadlock_cycles: u64,
    last_progress: (u64, Cycle),
}

impl MemorySystem {
    pub fn new(config: &Config) -> Result<Self, SimError> {
        config.validate()?;
        let map = config.address_map();
        let mut sys = MemorySystem {
            device: DramDevice::new(config.timing.clone(), config.device.clone()),
            controller: Controller::new(
                config.timing.clone(),
                map,
                config.controller.clone(),
                config.manager.clone(),
                config.phy.clone(),
            ),
            frontend: Frontend::new(config.frontend.clone(), map.page_bytes, map.capacity()),
            cycle: 0,
            ctrl_events: Vec::new(),
            events: VecDeque::new(),
            scratch: Vec::new(),
            next_token: 0,
            deadlock_cycles: config.harness.deadlock_cycles,
            last_progress: (0, 0),
        };
        if let Some(path) = &config.output.bus_trace {
            sys.set_bus_trace(Box::new(BufWriter::new(File::create(path)?)));
        }
        Ok(sys)
    }

    pub fn set_bus_trace(&mut self, sink: Box<dyn Write + Send>) {
        self.controller.phy_mut().set_trace(sink);
    }

    pub fn flush_bus_trace(&mut self) -> std::io::Result<()> {
        self.controller.phy_mut().flush_trace()
    }

    pub fn cycle(&self) -> Cycle {
        self.cycle
    }

    pub fn device(&self) -> &DramDevice {
        &self.device
    }

    pub fn device_mut(&mut self) -> &mut DramDevice {
        &mut self.device
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn frontend(&self) -> &Frontend {
        &self.frontend
    }

    pub fn frontend_mut(&mut self) -> &mut Frontend {
        &mut self.frontend
    }

    /// Bytes per beat on the initiator side.
    pub fn beat_bytes(&self) -> u32 {
        self.frontend.config().max_beat_bytes()
    }

    pub fn capacity(&self) -> u64 {
        self.device.address_map().capacity()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            cycle: self.cycle,
            stats: *self.controller.bus_stats(),
            events: *self.controller.events(),
        }
    }

    pub fn can_accept(&self) -> bool {
        self.frontend.can_accept()
    }

    /// Submits a transaction arriving now.
    pub fn submit(&mut self, txn: BusTransaction) -> Result<u64, SimError> {
        self.submit_at(self.cycle, txn)
    }

    /// Submits a transaction arriving at `cycle` (not before the current cycle).
    pub fn submit_at(&mut self, cycle: Cycle, txn: BusTransaction) -> Result<u64, SimError> {
        let span = txn.span();
        if span.end > self.capacity() {
            return Err(SimError::AddressOutOfRange {
                addr: span.start,
                len: span.len(),
                capacity: self.capacity(),
            });
        }
        self.frontend
            .check(&txn)
            .map_err(SimError::BadTransaction)?;
        let token = self.next_token;
        self.next_token += 1;
        self.frontend.submit(cycle.max(self.cycle), token, txn);
        Ok(token)
    }

    /// Token the next `submit` will return.
    pub fn next_token(&self) -> u64 {
        self.next_token
    }

    pub fn is_idle(&self) -> bool {
        self.frontend.is_idle() && self.controller.is_drained()
    }

    /// Advances one cycle.
    pub fn step(&mut self) -> Result<(), SimError> {
        let cycle = self.cycle;
        self.scratch.clear();
        self.frontend
            .step_input(cycle, &mut self.controller, &mut self.scratch);
        self.ctrl_events.clear();
        self.controller
            .step(cycle, &mut self.device, &mut self.ctrl_events);
        self.frontend
            .step_output(cycle, &self.ctrl_events, &mut self.scratch);
        self.events.extend(self.scratch.drain(..));

        // refresh and calibration keep running during a deadlock, so only
        // datapath commands count
        let e = self.controller.events();
        let progress = self.frontend.progress() + e.activates + e.reads + e.writes + e.precharges;
        if progress != self.last_progress.0 || self.is_idle() {
            self.last_progress = (progress, cycle);
        } else if cycle - self.last_progress.1 >= self.deadlock_cycles {
            return Err(SimError::DeadlockDetected {
                cycle,
                idle_cycles: cycle - self.last_progress.1,
            });
        }
        self.cycle += 1;
        Ok(())
    }

    /// Events since the last call.
    pub fn take_events(&mut self) -> Vec<FrontendEvent> {
        self.events.drain(..).collect()
    }

    /// Steps until all submitted work has completed.
    pub fn drain(&mut self) -> Result<(), SimError> {
        while !self.is_idle() {
            self.step()?;
        }
        Ok(())
    }

    /// Steps until `token` completes. Other events stay queued.
    pub fn wait_for(&mut self, token: u64) -> Result<Completion, SimError> {
        loop {
            let pos = self
                .events
                .iter()
                .position(|e| matches!(e, FrontendEvent::Completed(c) if c.token == token));
            if let Some(i) = pos {
                let Some(FrontendEvent::Completed(c)) = self.events.remove(i) else {
                    unreachable!()
                };
                return Ok(c);
            }
            self.step()?;
        }
    }

    /// Submits `txn` and waits for it, consuming both of its events.
    pub fn blocking(&mut self, txn: BusTransaction) -> Result<Completion, SimError> {
        let token = self.submit(txn)?;
        let c = self.wait_for(token)?;
        self.events
            .retain(|e| !matches!(e, FrontendEvent::Accepted { token: t, .. } if *t == token));
        Ok(c)
    }

    /// Steps until the device has finished its initialization sequence.
    pub fn run_until_ready(&mut self) -> Result<(), SimError> {
        while !self.controller.manager().is_ready(self.cycle) {
            self.step()?;
        }
        Ok(())
    }
}

/// Blocking accesses, one transaction at a time.
impl Backing for MemorySystem {
    fn read(&mut self, addr: u64, len: u64) -> Result<Vec<u8>, SimError> {
        let txn = BusTransaction::for_range(0, Direction::Read, addr, len, self.beat_bytes(), &[]);
        let c = self.blocking(txn)?;
        let off = (addr - c.span.start) as usize;
        Ok(c.data[off..off + len as usize].to_vec())
    }

    fn write(&mut self, addr: u64, data: &[u8]) -> Result<(), SimError> {
        if data.is_empty() {
            return Ok(());
        }
        let txn = BusTransaction::for_range(
            0,
            Direction::Write,
            addr,
            data.len() as u64,
            self.beat_bytes(),
            data,
        );
        self.blocking(txn)?;
        Ok(())
    }
}
