//! One Monte-Carlo trial: random payload → CRC → polar encode → BPSK/AWGN.

use rayon::prelude::*;

use crate::channel::{random_bits, transmit, RngStream};
use crate::polar::{polar_encode, CodeConfig};
use crate::{Error, Result};

/// Trials simulated per parallel block.
const BLOCK: u64 = 2048;

/// Everything known about a transmitted block, including the truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub id: u64,
    /// Transmitted u-vector (length N).
    pub u: Vec<u8>,
    /// Channel LLRs (length N).
    pub llr: Vec<f64>,
}

impl Trial {
    /// Deterministic in `(stream, id)`.
    pub fn generate(code: &CodeConfig, sigma: f64, stream: &RngStream, id: u64) -> Trial {
        let mut rng = stream.substream(id).rng();
        let payload = random_bits(code.payload_len(), &mut rng);
        let info = code.crc_attach(&payload).expect("payload length matches code");
        let u = code.embed(&info).expect("info length matches code");
        let x = polar_encode(&u).expect("block length is a power of two");
        let llr = transmit(&x, sigma, &mut rng);
        Trial { id, u, llr }
    }

    /// True when `u_hat` differs from the transmitted word on any non-frozen bit.
    pub fn is_block_error(&self, u_hat: &[u8], code: &CodeConfig) -> bool {
        code.info_positions().iter().any(|&i| u_hat[i] != self.u[i])
    }

    /// FNV-1a digest of the channel LLR bits, for paired-noise audits.
    pub fn llr_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for l in &self.llr {
            for b in l.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Runs `per_trial` over trial ids `0, 1, …` in parallel blocks and
/// concatenates the outputs in id order, stopping at the first item that
/// brings the accumulated `size` to `count`.
pub(crate) fn collect_ordered<T, F, S>(count: usize, size: S, per_trial: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Vec<T> + Sync,
    S: Fn(&T) -> usize,
{
    let mut out = Vec::new();
    let mut total = 0;
    let mut next = 0u64;
    while total < count {
        if next > u64::from(u32::MAX) {
            return Err(Error::Param("trial ids exhausted before reaching the sample count".into()));
        }
        let block: Vec<Vec<T>> = (next..next + BLOCK).into_par_iter().map(&per_trial).collect();
        for item in block.into_iter().flatten() {
            if total >= count {
                break;
            }
            total += size(&item);
            out.push(item);
        }
        next += BLOCK;
    }
    Ok(out)
}
