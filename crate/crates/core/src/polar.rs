//! Polar code construction, the Arıkan transform and CRC handling.
//!
//! Indices are in natural order throughout: `x = u · F^{⊗n}` with
//! `F = [[1, 0], [1, 1]]` and no bit-reversal permutation.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A CRC generator: `len` check bits, `poly` without the implicit leading `x^len` term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Crc {
    pub len: usize,
    pub poly: u64,
}

impl Crc {
    /// CRC-8, x^8 + x^2 + x + 1, zero initial state and no final XOR.
    pub const CRC8: Crc = Crc { len: 8, poly: 0x07 };

    pub fn new(len: usize, poly: u64) -> Result<Self> {
        if len == 0 || len > 32 {
            return Err(Error::Param(format!("crc length {len} outside 1..=32")));
        }
        if poly >> len != 0 {
            return Err(Error::Param(format!("crc poly {poly:#x} wider than {len} bits")));
        }
        Ok(Crc { len, poly })
    }

    /// Remainder of `bits · x^len` modulo the generator, MSB first.
    pub fn remainder(&self, bits: &[u8]) -> u64 {
        let mask = (1u64 << self.len) - 1;
        let top = 1u64 << (self.len - 1);
        let mut reg = 0u64;
        for &b in bits {
            let feedback = ((reg & top) != 0) ^ (b & 1 == 1);
            reg = (reg << 1) & mask;
            if feedback {
                reg ^= self.poly;
            }
        }
        reg
    }

    /// Appends the check bits to `payload`.
    pub fn attach(&self, payload: &[u8]) -> Vec<u8> {
        let rem = self.remainder(payload);
        let mut out = Vec::with_capacity(payload.len() + self.len);
        out.extend_from_slice(payload);
        out.extend((0..self.len).rev().map(|s| ((rem >> s) & 1) as u8));
        out
    }

    /// True when `bits` (payload followed by check bits) divides evenly.
    pub fn check(&self, bits: &[u8]) -> bool {
        if bits.len() < self.len {
            return false;
        }
        let (payload, tail) = bits.split_at(bits.len() - self.len);
        let rem = self.remainder(payload);
        tail.iter()
            .zip((0..self.len).rev())
            .all(|(&b, s)| u64::from(b & 1) == (rem >> s) & 1)
    }
}

/// How the frozen set was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// Gaussian-approximation density evolution at the design SNR.
    Ga,
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Construction::Ga => f.write_str("ga"),
        }
    }
}

/// A fully specified polar code with CRC.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeConfig {
    block_len: usize,
    nonfrozen_count: usize,
    crc: Crc,
    design_snr_db: f64,
    construction: Construction,
    frozen: Vec<bool>,
    info_positions: Vec<usize>,
    /// Position of each bit index inside the non-frozen ordering, if any.
    info_slot: Vec<Option<usize>>,
}

impl CodeConfig {
    /// Builds a code with a GA-constructed frozen set.
    pub fn new(block_len: usize, nonfrozen_count: usize, crc: Crc, design_snr_db: f64) -> Result<Self> {
        let frozen_set = construct_frozen_set(block_len, nonfrozen_count, design_snr_db)?;
        Self::with_frozen_set(block_len, nonfrozen_count, crc, design_snr_db, &frozen_set)
    }

    /// Builds a code from an explicit frozen set.
    pub fn with_frozen_set(
        block_len: usize,
        nonfrozen_count: usize,
        crc: Crc,
        design_snr_db: f64,
        frozen_set: &[usize],
    ) -> Result<Self> {
        check_dims(block_len, nonfrozen_count)?;
        if crc.len > nonfrozen_count {
            return Err(Error::Param(format!(
                "crc length {} exceeds non-frozen count {nonfrozen_count}",
                crc.len
            )));
        }
        if frozen_set.len() != block_len - nonfrozen_count {
            return Err(Error::Param(format!(
                "frozen set has {} entries, expected {}",
                frozen_set.len(),
                block_len - nonfrozen_count
            )));
        }
        let mut frozen = vec![false; block_len];
        for &i in frozen_set {
            if i >= block_len || frozen[i] {
                return Err(Error::Param(format!("bad frozen index {i}")));
            }
            frozen[i] = true;
        }
        let info_positions: Vec<usize> = (0..block_len).filter(|&i| !frozen[i]).collect();
        let mut info_slot = vec![None; block_len];
        for (slot, &i) in info_positions.iter().enumerate() {
            info_slot[i] = Some(slot);
        }
        Ok(CodeConfig {
            block_len,
            nonfrozen_count,
            crc,
            design_snr_db,
            construction: Construction::Ga,
            frozen,
            info_positions,
            info_slot,
        })
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn log_block_len(&self) -> usize {
        self.block_len.trailing_zeros() as usize
    }

    pub fn nonfrozen_count(&self) -> usize {
        self.nonfrozen_count
    }

    pub fn payload_len(&self) -> usize {
        self.nonfrozen_count - self.crc.len
    }

    pub fn crc(&self) -> Crc {
        self.crc
    }

    pub fn design_snr_db(&self) -> f64 {
        self.design_snr_db
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    /// K / N.
    pub fn rate(&self) -> f64 {
        self.nonfrozen_count as f64 / self.block_len as f64
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    pub fn frozen_set(&self) -> Vec<usize> {
        (0..self.block_len).filter(|&i| self.frozen[i]).collect()
    }

    /// Non-frozen bit indices, ascending.
    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// Slot of bit index `i` in the non-frozen ordering.
    pub fn info_slot(&self, i: usize) -> Option<usize> {
        self.info_slot.get(i).copied().flatten()
    }

    /// Stable 64-bit digest of the frozen set (FNV-1a over the indices).
    pub fn frozen_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for i in self.frozen_set() {
            for b in (i as u32).to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Payload → payload ∥ CRC.
    pub fn crc_attach(&self, payload: &[u8]) -> Result<Vec<u8>> {
        if payload.len() != self.payload_len() {
            return Err(Error::Param(format!(
                "payload has {} bits, expected {}",
                payload.len(),
                self.payload_len()
            )));
        }
        Ok(self.crc.attach(payload))
    }

    /// CRC test over the K non-frozen bits.
    pub fn crc_check(&self, info: &[u8]) -> bool {
        info.len() == self.nonfrozen_count && self.crc.check(info)
    }

    /// Places the K non-frozen bits into a length-N u-vector (frozen bits 0).
    pub fn embed(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.nonfrozen_count {
            return Err(Error::Param(format!(
                "info vector has {} bits, expected {}",
                info.len(),
                self.nonfrozen_count
            )));
        }
        let mut u = vec![0u8; self.block_len];
        for (&pos, &b) in self.info_positions.iter().zip(info) {
            u[pos] = b;
        }
        Ok(u)
    }

    /// Restricts a u-vector to the non-frozen positions.
    pub fn extract(&self, u: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&i| u[i]).collect()
    }

    pub fn to_file(&self) -> CodeFile {
        CodeFile {
            n: self.block_len,
            k: self.nonfrozen_count,
            crc_len: self.crc.len,
            crc_poly: format!("{:#04x}", self.crc.poly),
            design_snr_db: self.design_snr_db,
            construction: self.construction,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(&self.to_file()).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        CodeFile::parse(&text)?.build()
    }
}

/// The plain-text (`key = value`) form of a [`CodeConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeFile {
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_crc_len")]
    pub crc_len: usize,
    pub crc_poly: String,
    pub design_snr_db: f64,
    pub construction: Construction,
}

fn default_crc_len() -> usize {
    8
}

impl CodeFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn build(&self) -> Result<CodeConfig> {
        let digits = self.crc_poly.trim_start_matches("0x").trim_start_matches("0X");
        let poly = u64::from_str_radix(digits, 16)
            .map_err(|e| Error::Format(format!("crc_poly {:?}: {e}", self.crc_poly)))?;
        let crc = Crc::new(self.crc_len, poly)?;
        match self.construction {
            Construction::Ga => CodeConfig::new(self.n, self.k, crc, self.design_snr_db),
        }
    }
}

fn check_dims(n: usize, k: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Param(format!("block length {n} is not a power of two >= 2")));
    }
    if k == 0 || k >= n {
        return Err(Error::Param(format!("non-frozen count {k} not in 1..{n}")));
    }
    Ok(())
}

/// Chung's approximation of the GA φ function, capped at 1 (it exceeds 1 below x ≈ 0.03).
fn phi(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < 10.0 {
        (-0.4527 * x.powf(0.86) + 0.0218).exp().min(1.0)
    } else {
        (std::f64::consts::PI / x).sqrt() * (-x / 4.0).exp() * (1.0 - 10.0 / (7.0 * x))
    }
}

/// Inverse of [`phi`] by bisection; φ is strictly decreasing on (0, ∞).
fn phi_inv(y: f64) -> f64 {
    if y >= 1.0 {
        return 0.0;
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while phi(hi) > y {
        hi *= 2.0;
        if hi > 1e6 {
            return hi;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Mean LLR of every synthetic channel under Gaussian approximation.
///
/// Channel `i` takes the check-node (`f`) branch at depth `d` when bit
/// `n-1-d` of `i` is 0, and the variable-node (`g`) branch otherwise.
pub fn ga_channel_means(block_len: usize, channel_mean: f64) -> Vec<f64> {
    let mut means = vec![channel_mean];
    while means.len() < block_len {
        // Each level appends one low-order bit: 0 → check node, 1 → variable node.
        means = means
            .iter()
            .flat_map(|&m| {
                let p = phi(m);
                [phi_inv(1.0 - (1.0 - p) * (1.0 - p)), 2.0 * m]
            })
            .collect();
    }
    means
}

/// The N−K least reliable indices under GA density evolution at `design_snr_db`
/// (Eb/N0 with rate K/N), sorted ascending.
pub fn construct_frozen_set(block_len: usize, nonfrozen_count: usize, design_snr_db: f64) -> Result<Vec<usize>> {
    check_dims(block_len, nonfrozen_count)?;
    let sigma = crate::channel::snr_to_sigma(design_snr_db, nonfrozen_count as f64 / block_len as f64)?;
    let means = ga_channel_means(block_len, 2.0 / (sigma * sigma));
    let mut order: Vec<usize> = (0..block_len).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    let mut frozen: Vec<usize> = order[..block_len - nonfrozen_count].to_vec();
    frozen.sort_unstable();
    Ok(frozen)
}

/// In-place Arıkan transform `x = u · F^{⊗n}` over GF(2).
pub fn polar_transform_in_place(bits: &mut [u8]) {
    let n = bits.len();
    let mut half = 1;
    while half < n {
        for block in bits.chunks_mut(2 * half) {
            let (left, right) = block.split_at_mut(half);
            for (l, r) in left.iter_mut().zip(right.iter()) {
                *l ^= *r;
            }
        }
        half *= 2;
    }
}

/// `x = u · F^{⊗n}`; the transform is its own inverse.
pub fn polar_encode(u: &[u8]) -> Result<Vec<u8>> {
    if u.len() < 2 || !u.len().is_power_of_two() {
        return Err(Error::Param(format!("u has length {}, not a power of two", u.len())));
    }
    let mut x = u.to_vec();
    polar_transform_in_place(&mut x);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n2_freezes_index_zero() {
        for snr in [-5.0, 0.0, 1.0, 8.0] {
            assert_eq!(construct_frozen_set(2, 1, snr).unwrap(), vec![0]);
        }
    }

    #[test]
    fn n64_cardinality() {
        let f = construct_frozen_set(64, 32, 1.0).unwrap();
        assert_eq!(f.len(), 32);
        assert!(f.iter().all(|&i| i < 64));
        assert!(f.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn construction_rejects_bad_dims() {
        assert!(construct_frozen_set(48, 24, 1.0).is_err());
        assert!(construct_frozen_set(64, 0, 1.0).is_err());
        assert!(construct_frozen_set(64, 64, 1.0).is_err());
    }

    #[test]
    fn phi_inverse_roundtrip() {
        for x in [0.05, 0.5, 3.0, 8.0, 15.0, 25.0, 120.0] {
            assert!((phi_inv(phi(x)) - x).abs() < 1e-6 * x.max(1.0), "{x}");
        }
    }

    #[test]
    fn encode_n4_last_bit() {
        assert_eq!(polar_encode(&[0, 0, 0, 1]).unwrap(), vec![1, 1, 1, 1]);
        assert_eq!(polar_encode(&[1, 0, 0, 0]).unwrap(), vec![1, 0, 0, 0]);
        assert_eq!(polar_encode(&[0; 8]).unwrap(), vec![0; 8]);
    }

    #[test]
    fn encode_rejects_bad_length() {
        assert!(polar_encode(&[0, 1, 0]).is_err());
    }

    #[test]
    fn crc_zero_payload() {
        let c = Crc::CRC8;
        assert_eq!(c.attach(&[0; 24])[24..], [0; 8]);
        assert!(c.check(&[0; 32]));
    }

    #[test]
    fn crc_single_flip_detected() {
        let c = Crc::CRC8;
        let payload: Vec<u8> = (0..24).map(|i| ((i * 7 + 3) % 5 % 2) as u8).collect();
        let word = c.attach(&payload);
        assert!(c.check(&word));
        for i in 0..word.len() {
            let mut w = word.clone();
            w[i] ^= 1;
            assert!(!c.check(&w), "flip at {i} undetected");
        }
    }

    #[test]
    fn config_file_roundtrip() {
        let code = CodeConfig::new(64, 32, Crc::CRC8, 1.0).unwrap();
        let file = code.to_file();
        let text = toml::to_string(&file).unwrap();
        assert!(text.contains("crc_poly = \"0x07\""));
        let back = CodeFile::parse(&text).unwrap().build().unwrap();
        assert_eq!(back, code);
    }

    #[test]
    fn config_rejects_wrong_payload() {
        let code = CodeConfig::new(64, 32, Crc::CRC8, 1.0).unwrap();
        assert_eq!(code.payload_len(), 24);
        assert!(code.crc_attach(&[0; 23]).is_err());
        assert!(code.embed(&[0; 31]).is_err());
    }
}
