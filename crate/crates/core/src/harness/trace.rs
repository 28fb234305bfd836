//! Trace files: one transfer per line, `<issue_cycle> <R|W> 0x<hex addr> <len_bytes>`.
//! Blank lines and lines starting with `#` are skipped.

use std::fmt;

use crate::error::TraceError;
use crate::protocol::{Cycle, Direction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub cycle: Cycle,
    pub direction: Direction,
    pub addr: u64,
    pub len: u64,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.direction {
            Direction::Read => 'R',
            Direction::Write => 'W',
        };
        write!(f, "{} {} {:#x} {}", self.cycle, d, self.addr, self.len)
    }
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceEntry>, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_line(line).map_err(|message| TraceError {
            line: i + 1,
            message,
        })?);
    }
    Ok(out)
}

fn parse_line(line: &str) -> Result<TraceEntry, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let [cycle, dir, addr, len] = fields[..] else {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    };
    let cycle = cycle
        .parse()
        .map_err(|_| format!("bad issue cycle `{cycle}`"))?;
    let direction = match dir {
        "R" | "r" => Direction::Read,
        "W" | "w" => Direction::Write,
        _ => return Err(format!("direction must be R or W, found `{dir}`")),
    };
    let hex = addr
        .strip_prefix("0x")
        .or_else(|| addr.strip_prefix("0X"))
        .ok_or_else(|| format!("address `{addr}` lacks 0x prefix"))?;
    let addr = u64::from_str_radix(hex, 16).map_err(|_| format!("bad hex address `{addr}`"))?;
    let len: u64 = len.parse().map_err(|_| format!("bad length `{len}`"))?;
    if len == 0 {
        return Err("zero-length transfer".into());
    }
    Ok(TraceEntry {
        cycle,
        direction,
        addr,
        len,
    })
}
