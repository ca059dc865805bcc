//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator. A root seed is turned into a stage
//! seed by labeled hashing (first 8 bytes of SHA-256 over the little-endian
//! root seed followed by the UTF-8 label), and per-item substreams select the
//! ChaCha stream number. Two substreams with different indices never share
//! output, and the stream for index `i` does not depend on whether any other
//! index was generated first.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            stream: 0,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `index` of the stage named `label` under `root`.
    pub fn substream(root: u64, label: &str, index: u64) -> Self {
        let seed = derive_seed(root, label);
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(index);
        Rng {
            seed,
            stream: index,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw from the inclusive range `[lo, hi]`.
    pub fn uniform_int(&mut self, lo: i64, hi: i64) -> Result<i64> {
        if lo > hi {
            return Err(Error::InvalidRange { lo, hi });
        }
        Ok(self.inner.random_range(lo..=hi))
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_range() {
        let mut rng = Rng::new(1);
        for _ in 0..10 {
            assert_eq!(rng.uniform_int(5, 5).unwrap(), 5);
        }
    }

    #[test]
    fn inverted_range_is_an_error() {
        assert!(matches!(
            Rng::new(1).uniform_int(3, 2),
            Err(Error::InvalidRange { lo: 3, hi: 2 })
        ));
    }

    #[test]
    fn uniform_int_bins_are_flat() {
        let mut rng = Rng::new(20240611);
        let mut bins = [0usize; 10];
        let n = 10_000;
        for _ in 0..n {
            let v = rng.uniform_int(1, 10).unwrap();
            assert!((1..=10).contains(&v));
            bins[(v - 1) as usize] += 1;
        }
        for (i, &b) in bins.iter().enumerate() {
            let freq = b as f64 / n as f64;
            assert!((freq - 0.10).abs() <= 0.02, "bin {} freq {freq}", i + 1);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<i64> = {
            let mut r = Rng::new(99);
            (0..50).map(|_| r.uniform_int(0, 1000).unwrap()).collect()
        };
        let b: Vec<i64> = {
            let mut r = Rng::new(99);
            (0..50).map(|_| r.uniform_int(0, 1000).unwrap()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn substreams_are_distinct_and_order_independent() {
        let draw = |r: &mut Rng| (0..8).map(|_| r.next_u64()).collect::<Vec<_>>();
        let forward: Vec<_> = (0..5)
            .map(|i| draw(&mut Rng::substream(7, "sim", i)))
            .collect();
        let backward: Vec<_> = (0..5)
            .rev()
            .map(|i| draw(&mut Rng::substream(7, "sim", i)))
            .collect();
        for i in 0..5 {
            assert_eq!(forward[i], backward[4 - i]);
            for j in (i + 1)..5 {
                assert_ne!(forward[i], forward[j]);
            }
        }
        assert_ne!(
            draw(&mut Rng::substream(7, "train", 0)),
            draw(&mut Rng::substream(7, "test", 0))
        );
    }
}
