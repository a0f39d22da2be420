//! Deterministic sub-seed derivation.

/// Stream tags keep independent uses of one base seed apart.
pub mod stream {
    pub const REALIZATION: u64 = 1;
    pub const ACTIONS: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const POOL: u64 = 4;
    pub const INIT: u64 = 5;
    pub const TRAIN: u64 = 6;
    pub const CELL: u64 = 7;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed number `index` of stream `tag` under `base`.
pub fn derive(base: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(base) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn children_are_distinct() {
        let mut seen = HashSet::new();
        for tag in 0..4 {
            for i in 0..1000 {
                assert!(seen.insert(derive(42, tag, i)));
            }
        }
        assert_eq!(derive(7, 1, 3), derive(7, 1, 3));
        assert_ne!(derive(7, 1, 3), derive(8, 1, 3));
    }
}
