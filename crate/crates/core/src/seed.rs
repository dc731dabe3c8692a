//! Hierarchical seeds: every random component derives its own stream from
//! one root seed and a fixed path of labels.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed of `root` along `path`. Stable across platforms and releases.
pub fn derive_seed<S: AsRef<str>>(root: u64, path: &[S]) -> u64 {
    let mut state = splitmix64(root);
    for label in path {
        let mut h = FNV_OFFSET;
        for b in label.as_ref().bytes().chain(std::iter::once(0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        state = splitmix64(state ^ h);
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_path_sensitive() {
        assert_eq!(derive_seed(7, &["gru", "a"]), derive_seed(7, &["gru", "a"]));
        assert_ne!(derive_seed(7, &["gru", "a"]), derive_seed(8, &["gru", "a"]));
        assert_ne!(derive_seed(7, &["gru", "a"]), derive_seed(7, &["a", "gru"]));
        assert_ne!(derive_seed(7, &["ab"]), derive_seed(7, &["a", "b"]));
        let empty: [&str; 0] = [];
        assert_eq!(derive_seed(7, &empty), splitmix64(7));
        assert_eq!(derive_seed(0, &["x"]), derive_seed(0, &[String::from("x")]));
        // reference value from an independent implementation of the same derivation
        assert_eq!(
            derive_seed(42, &["gru", "city", "0", "F3"]),
            16_194_701_199_850_164_899
        );
    }
}
