use crate::hash_provider::Digest;

/// A stored chain element plus the bookkeeping that schedules its moves.
///
/// `position` and `destination` are in padded coordinates: the chain is
/// treated as the tail of a chain of `2^σ` elements, where `σ` is the number
/// of pebbles at exposure time. For chains whose length is a power of two
/// these are plain exposure positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pebble {
    pub position: u64,
    pub destination: u64,
    pub start_increment: u64,
    pub dest_increment: u64,
    pub move_increment: u64,
    pub value: Digest,
    /// Hash applications separating this pebble's value from the seed.
    pub distance_from_seed: u64,
    /// Retired: stands for `position = destination = +∞`.
    pub disposed: bool,
    /// Instrumentation: backward moves made during exposure.
    pub back_moves: u32,
    /// The index `j` this pebble was created with.
    pub origin_index: u32,
}

impl Pebble {
    /// Fresh pebble `j` at rest on position `2^j`.
    pub fn initialize(j: u32, value: Digest) -> Self {
        assert!(j >= 1, "pebble indices start at 1");
        let unit = 1u64 << j;
        Pebble {
            position: unit,
            destination: unit,
            start_increment: 3 * unit,
            dest_increment: 2 * unit,
            move_increment: 2 * unit,
            value,
            distance_from_seed: 0,
            disposed: false,
            back_moves: 0,
            origin_index: j,
        }
    }

    pub fn at_rest(&self) -> bool {
        self.position == self.destination
    }

    pub(crate) fn sort_key(&self) -> (bool, u64, std::cmp::Reverse<u64>) {
        (self.disposed, self.position, std::cmp::Reverse(self.destination))
    }
}

pub(crate) fn sort_pebbles(pebbles: &mut [Pebble]) {
    pebbles.sort_by_key(Pebble::sort_key);
}
