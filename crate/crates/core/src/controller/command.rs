//! Command FSM: turns datapath requests into device commands.

use crate::protocol::{AddressMap, Direction, RpcCommand, WORD_BYTES};

/// A word-granular read or write handed over by the frontend.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatapathRequest {
    pub direction: Direction,
    /// Word-aligned byte address.
    pub word_addr: u64,
    pub n_words: u32,
    pub first_mask: u32,
    pub last_mask: u32,
}

impl DatapathRequest {
    pub fn read(word_addr: u64, n_words: u32) -> Self {
        DatapathRequest {
            direction: Direction::Read,
            word_addr,
            n_words,
            first_mask: !0,
            last_mask: !0,
        }
    }

    pub fn write(word_addr: u64, n_words: u32, first_mask: u32, last_mask: u32) -> Self {
        DatapathRequest {
            direction: Direction::Write,
            word_addr,
            n_words,
            first_mask,
            last_mask,
        }
    }

    pub fn end_addr(&self) -> u64 {
        self.word_addr + self.n_words as u64 * WORD_BYTES as u64
    }

    /// Non-empty, word aligned and inside one page.
    pub fn is_valid(&self, page_bytes: u64) -> bool {
        self.n_words >= 1
            && self.word_addr.is_multiple_of(WORD_BYTES as u64)
            && self.word_addr / page_bytes == (self.end_addr() - 1) / page_bytes
    }
}

/// Close-page decomposition: activate, one column burst, precharge.
pub fn decompose(req: &DatapathRequest, map: &AddressMap) -> [RpcCommand; 3] {
    debug_assert!(req.is_valid(map.page_bytes));
    let loc = map.locate(req.word_addr);
    let column = match req.direction {
        Direction::Read => RpcCommand::Read {
            bank: loc.bank,
            col: loc.col,
            n_words: req.n_words,
        },
        Direction::Write => RpcCommand::Write {
            bank: loc.bank,
            col: loc.col,
            n_words: req.n_words,
            first_mask: req.first_mask,
            last_mask: req.last_mask,
        },
    };
    [
        RpcCommand::Activate {
            bank: loc.bank,
            row: loc.row,
        },
        column,
        RpcCommand::Precharge { bank: loc.bank },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAP: AddressMap = AddressMap {
        banks: 4,
        rows: 4096,
        page_bytes: 2048,
    };

    #[test]
    fn single_word_read() {
        let cmds = decompose(&DatapathRequest::read(0, 1), &MAP);
        assert_eq!(
            cmds,
            [
                RpcCommand::Activate { bank: 0, row: 0 },
                RpcCommand::Read {
                    bank: 0,
                    col: 0,
                    n_words: 1
                },
                RpcCommand::Precharge { bank: 0 },
            ]
        );
    }

    #[test]
    fn masked_write_carries_masks() {
        let req = DatapathRequest::write(0x2040, 2, 0xffff_fff0, 0x0000_00ff);
        let cmds = decompose(&req, &MAP);
        // page 4 -> bank 0 row 1, column 2
        assert_eq!(cmds[0], RpcCommand::Activate { bank: 0, row: 1 });
        assert_eq!(
            cmds[1],
            RpcCommand::Write {
                bank: 0,
                col: 2,
                n_words: 2,
                first_mask: 0xffff_fff0,
                last_mask: 0xff
            }
        );
        assert_eq!(cmds[2], RpcCommand::Precharge { bank: 0 });
    }

    #[test]
    fn full_page_read_is_one_burst() {
        let req = DatapathRequest::read(0x800, 64);
        assert!(req.is_valid(2048));
        let cmds = decompose(&req, &MAP);
        assert_eq!(
            cmds[1],
            RpcCommand::Read {
                bank: 1,
                col: 0,
                n_words: 64
            }
        );
        assert!(!DatapathRequest::read(0x820, 64).is_valid(2048));
        assert!(!DatapathRequest::read(0x800, 0).is_valid(2048));
    }
}
