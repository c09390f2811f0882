//! Seeded randomness. Every random operation takes a generator derived from a
//! root seed and a purpose label, so unrelated operations never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// FNV-1a, used only to turn purpose labels into stream ids.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Generator for `purpose` under `seed`. Distinct purposes get distinct streams.
pub fn derive(seed: u64, purpose: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label_hash(purpose));
    rng
}

/// Child seed for `purpose`, for handing to code that wants a plain integer.
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    use rand::Rng as _;
    derive(seed, purpose).random()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn same_label_same_stream() {
        let a: Vec<u64> = (0..4).map({
            let mut r = derive(3, "dropout");
            move |_| r.random()
        }).collect();
        let b: Vec<u64> = (0..4).map({
            let mut r = derive(3, "dropout");
            move |_| r.random()
        }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_split_streams() {
        let a: u64 = derive(3, "dropout").random();
        let b: u64 = derive(3, "flip").random();
        assert_ne!(a, b);
        assert_ne!(derive_seed(0, "a"), derive_seed(1, "a"));
    }
}
