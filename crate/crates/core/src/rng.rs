//! Counter-based random streams.
//!
//! Every random quantity in a simulation is addressed by a path such as
//! `(master seed, grid cell, replicate, purpose, generation, type, index)`.
//! The path is hashed into a 64-bit [`StreamKey`], and the stream's `i`-th
//! output is a bijective mix of the key and `i`. Nothing is carried between
//! families, so any family's brood can be regenerated on demand and replicates
//! can run on any number of threads with identical results.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const ROOT_SALT: u64 = 0x6A09_E667_F3BC_C909;
const OUTPUT_SALT: u64 = 0xBB67_AE85_84CA_A73B;

/// SplitMix64 finalizer; a bijection on `u64` with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform double in `[0, 1)` from the top 53 bits.
#[inline]
pub fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        Self(mix64(seed ^ ROOT_SALT))
    }

    #[inline]
    pub fn child(self, tag: u64) -> Self {
        Self(mix64(self.0 ^ mix64(tag.wrapping_add(GOLDEN_GAMMA))))
    }

    pub fn rng(self) -> CounterRng {
        CounterRng {
            key: self.0,
            counter: 0,
        }
    }

    /// First output of this key's stream as a uniform in `[0, 1)`.
    #[inline]
    pub fn first_unit(self) -> f64 {
        unit_f64(output(self.0, 0))
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

#[inline]
fn output(key: u64, counter: u64) -> u64 {
    mix64(key ^ mix64(counter.wrapping_mul(GOLDEN_GAMMA) ^ OUTPUT_SALT))
}

/// Stateless-in-spirit generator: output `i` depends only on `(key, i)`.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn counter(&self) -> u64 {
        self.counter
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let out = output(self.key, self.counter);
        self.counter = self.counter.wrapping_add(1);
        out
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// What a stream is used for; keeps the sub-trees of one replicate disjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
enum Purpose {
    Aggregate = 1,
    Families = 2,
    Sampling = 3,
}

/// Root of all randomness for one replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    /// Parameter-grid cell; distinct cells never share streams.
    pub cell: u64,
    pub replicate: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            cell: 0,
            replicate: 0,
        }
    }

    pub fn with_cell(self, cell: u64) -> Self {
        Self { cell, ..self }
    }

    pub fn with_replicate(self, replicate: u64) -> Self {
        Self { replicate, ..self }
    }

    pub fn key(&self) -> StreamKey {
        StreamKey::root(self.master_seed)
            .child(self.cell)
            .child(self.replicate)
    }

    /// Stream for the grouped (multinomial) step out of `generation`, for
    /// parents of `parent_type`.
    pub fn aggregate_key(&self, generation: usize, parent_type: usize) -> StreamKey {
        self.key()
            .child(Purpose::Aggregate as u64)
            .child(generation as u64)
            .child(parent_type as u64)
    }

    /// Prefix for the broods of `parent_type` parents in `generation`; the
    /// brood of parent `s` is drawn from `family_prefix(..).child(s)`.
    pub fn family_prefix(&self, generation: usize, parent_type: usize) -> StreamKey {
        self.key()
            .child(Purpose::Families as u64)
            .child(generation as u64)
            .child(parent_type as u64)
    }

    /// Stream for choosing the sampled individuals of `generation`.
    pub fn sampling_key(&self, generation: usize) -> StreamKey {
        self.key()
            .child(Purpose::Sampling as u64)
            .child(generation as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_replayable() {
        let key = SeedSpec::new(7)
            .with_replicate(3)
            .family_prefix(4, 1)
            .child(99);
        let a: Vec<u64> = {
            let mut r = key.rng();
            (0..5).map(|_| r.next_u64()).collect()
        };
        let mut r = key.rng();
        let b: Vec<u64> = (0..5).map(|_| r.next_u64()).collect();
        assert_eq!(a, b);
        assert_eq!(unit_f64(a[0]), key.first_unit());
    }

    #[test]
    fn distinct_paths_give_distinct_streams() {
        let s = SeedSpec::new(1);
        let keys = [
            s.key(),
            s.with_replicate(1).key(),
            s.with_cell(1).key(),
            s.aggregate_key(0, 0),
            s.family_prefix(0, 0),
            s.sampling_key(0),
            s.family_prefix(0, 1),
            s.family_prefix(1, 0),
        ];
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                assert_ne!(keys[i], keys[j], "{i} vs {j}");
            }
        }
    }

    #[test]
    fn unit_draws_look_uniform() {
        let prefix = SeedSpec::new(2024).family_prefix(0, 0);
        let n = 200_000;
        let mut bins = [0u32; 10];
        let mut sum = 0.0;
        for i in 0..n {
            let u = prefix.child(i).first_unit();
            assert!((0.0..1.0).contains(&u));
            bins[(u * 10.0) as usize] += 1;
            sum += u;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / 12.0f64 / n as f64).sqrt());
        // chi-square with 9 df; 99.9% quantile is 27.9
        let expected = n as f64 / 10.0;
        let chi2: f64 = bins
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 27.9, "chi2 = {chi2}");
    }
}
