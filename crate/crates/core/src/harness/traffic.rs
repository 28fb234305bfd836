//! Traffic sources.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::frontend::BusTransaction;
use crate::protocol::{Cycle, Direction};

/// Deterministic payload for burst `k`.
pub fn pattern(k: u64, len: usize) -> Vec<u8> {
    let mut x = k.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..len)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            x as u8
        })
        .collect()
}

/// Mixed reads and writes from several initiators. Sizes are mostly small,
/// addresses land in a window a few pages wide so reads often hit earlier
/// writes, and a quarter of the writes carry random sparse strobes.
pub struct RandomTraffic {
    rng: ChaCha8Rng,
    capacity: u64,
    max_bytes: u64,
    max_beat: u32,
    region: (u64, u64),
    issued: u64,
}

impl RandomTraffic {
    const REGION_BYTES: u64 = 64 << 10;
    const REGION_LIFETIME: u64 = 500;

    pub fn new(seed: u64, capacity: u64, max_bytes: u64, max_beat: u32) -> Self {
        let mut t = RandomTraffic {
            rng: ChaCha8Rng::seed_from_u64(seed),
            capacity,
            max_bytes: max_bytes.max(1),
            max_beat,
            region: (0, 0),
            issued: 0,
        };
        t.move_region();
        t
    }

    fn move_region(&mut self) {
        let size = Self::REGION_BYTES.min(self.capacity);
        let base = self.rng.gen_range(0..=(self.capacity - size) / 32) * 32;
        self.region = (base, size);
    }

    fn length(&mut self) -> u64 {
        let roll: f64 = self.rng.gen();
        let hi = if roll < 0.6 {
            64
        } else if roll < 0.9 {
            1024
        } else {
            self.max_bytes
        };
        self.rng.gen_range(1..=hi.min(self.max_bytes))
    }

    pub fn next_transaction(&mut self) -> BusTransaction {
        if self.issued.is_multiple_of(Self::REGION_LIFETIME) && self.issued > 0 {
            self.move_region();
        }
        self.issued += 1;
        let id = self.rng.gen_range(0..4);
        let beat = 1u32 << self.rng.gen_range(0..=self.max_beat.trailing_zeros());
        let (base, size) = self.region;
        let len = self.length().min(size - 64);
        // keep the beat-aligned span inside the region
        let slack = size - len - 2 * beat as u64;
        let addr = base + beat as u64 + self.rng.gen_range(0..=slack);
        if self.rng.gen_bool(0.5) {
            return BusTransaction::for_range(id, Direction::Read, addr, len, beat, &[]);
        }
        let payload: Vec<u8> = (0..len).map(|_| self.rng.gen()).collect();
        let mut txn = BusTransaction::for_range(id, Direction::Write, addr, len, beat, &payload);
        if self.rng.gen_bool(0.25) {
            for s in &mut txn.strobes {
                *s &= self.rng.gen::<u32>();
            }
        }
        txn
    }

    /// One to three transactions arriving within the next few cycles.
    pub fn batch(&mut self, now: Cycle, limit: u64) -> Vec<(Cycle, BusTransaction)> {
        let n = self.rng.gen_range(1..=3u64).min(limit);
        (0..n)
            .map(|_| {
                let at = now + self.rng.gen_range(0..3);
                (at, self.next_transaction())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_is_deterministic_and_varied() {
        assert_eq!(pattern(3, 16), pattern(3, 16));
        assert_ne!(pattern(3, 16), pattern(4, 16));
    }

    #[test]
    fn transactions_are_valid_and_in_range() {
        let cap = 32 << 20;
        let mut t = RandomTraffic::new(9, cap, 4096, 8);
        for _ in 0..5000 {
            let txn = t.next_transaction();
            txn.validate(8, 48).unwrap();
            assert!(txn.span().end <= cap);
        }
    }

    #[test]
    fn same_seed_same_traffic() {
        let mut a = RandomTraffic::new(5, 1 << 20, 512, 8);
        let mut b = RandomTraffic::new(5, 1 << 20, 512, 8);
        for _ in 0..100 {
            assert_eq!(a.next_transaction(), b.next_transaction());
        }
    }
}
