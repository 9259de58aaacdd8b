//! BPSK over AWGN, channel LLRs and reproducible random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Noise standard deviation for unit-energy BPSK at the given Eb/N0 and code rate.
pub fn snr_to_sigma(ebn0_db: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Param(format!("rate {rate} outside (0, 1]")));
    }
    let ebn0 = 10f64.powf(ebn0_db / 10.0);
    Ok((1.0 / (2.0 * rate * ebn0)).sqrt())
}

/// Identifies an independent random stream: same `(seed, stream_id)`, same numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// A sub-stream derived from this one, e.g. one per trial.
    pub fn substream(&self, index: u64) -> RngStream {
        // splitmix64 finalizer keeps neighbouring (stream, index) pairs apart.
        let mut z = self.stream_id.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(index.wrapping_add(1));
        z ^= index.rotate_left(32);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        RngStream { seed: self.seed, stream_id: z }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Channel LLRs: natural log domain, positive favours bit 0.
pub type ChannelLlrVector = Vec<f64>;

/// Modulates `codeword` as `1 − 2x`, adds N(0, σ²) noise and returns `2y/σ²`.
pub fn transmit<R: Rng + ?Sized>(codeword: &[u8], sigma: f64, rng: &mut R) -> ChannelLlrVector {
    let scale = 2.0 / (sigma * sigma);
    codeword
        .iter()
        .map(|&x| {
            let n: f64 = rng.sample(StandardNormal);
            let y = 1.0 - 2.0 * f64::from(x) + sigma * n;
            scale * y
        })
        .collect()
}

/// Uniform random bits.
pub fn random_bits<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<u8> {
    (0..len).map(|_| rng.gen::<bool>() as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_reference_points() {
        assert!((snr_to_sigma(0.0, 1.0).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((snr_to_sigma(1.0, 0.5).unwrap() - 0.891_250_938_133_745_5).abs() < 1e-12);
        assert!(snr_to_sigma(200.0, 0.5).unwrap() < 1e-9);
        assert!(snr_to_sigma(1.0, 0.0).is_err());
        assert!(snr_to_sigma(1.0, 1.5).is_err());
    }

    #[test]
    fn near_noiseless_signs() {
        let cw = [0u8, 1, 1, 0, 1, 0, 0, 0];
        let llr = transmit(&cw, 1e-3, &mut RngStream::new(3, 0).rng());
        for (x, l) in cw.iter().zip(&llr) {
            assert_eq!(*x == 0, *l > 0.0);
        }
    }

    #[test]
    fn same_stream_same_noise() {
        let cw = vec![0u8; 64];
        let s = RngStream::new(42, 7);
        assert_eq!(transmit(&cw, 0.9, &mut s.rng()), transmit(&cw, 0.9, &mut s.rng()));
        assert_ne!(transmit(&cw, 0.9, &mut s.rng()), transmit(&cw, 0.9, &mut s.substream(1).rng()));
    }

    #[test]
    fn substreams_are_distinct() {
        let s = RngStream::new(1, 0);
        let ids: std::collections::HashSet<u64> = (0..10_000).map(|i| s.substream(i).stream_id).collect();
        assert_eq!(ids.len(), 10_000);
    }
}
