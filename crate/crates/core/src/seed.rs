//! Seed derivation. Every random stream in a run is a pure function of the
//! root seed and its coordinates, so results never depend on scheduling.

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a root seed together with a path of coordinates.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Seed for the atom run on block `(i, j)` of sampling round `round`.
pub fn block_seed(root: u64, round: usize, i: usize, j: usize) -> u64 {
    derive_seed(root, &[1, round as u64, i as u64, j as u64])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates_change_the_seed() {
        let base = block_seed(42, 0, 0, 0);
        assert_eq!(base, block_seed(42, 0, 0, 0));
        assert_ne!(base, block_seed(42, 0, 0, 1));
        assert_ne!(base, block_seed(42, 0, 1, 0));
        assert_ne!(base, block_seed(42, 1, 0, 0));
        assert_ne!(base, block_seed(43, 0, 0, 0));
        assert_ne!(block_seed(1, 0, 1, 2), block_seed(1, 0, 2, 1));
    }
}
