//! Labelled LLR-trace datasets and their binary file format.
//!
//! Layout (little-endian): magic `DLSCFDS1`, `u32` version, `u32` N, `u32` K,
//! `u64` CRC polynomial including the leading term, `u64` frozen-set hash,
//! `f64` Eb/N0, `u64` sample count, `u8` trial-grouping flag, `u8` split
//! (0 training, 1 validation); then per sample `u32` trial id, N `f32`
//! features and a `u16` label index (K means undo).

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::polar::CodeConfig;
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"DLSCFDS1";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Training,
    Validation,
}

/// Identity of the code a dataset was generated for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodeFingerprint {
    pub block_len: usize,
    pub nonfrozen_count: usize,
    /// Generator with its leading `x^len` term, e.g. `0x107` for CRC-8.
    pub crc_poly: u64,
    pub frozen_hash: u64,
}

impl CodeFingerprint {
    pub fn of(code: &CodeConfig) -> Self {
        let crc = code.crc();
        CodeFingerprint {
            block_len: code.block_len(),
            nonfrozen_count: code.nonfrozen_count(),
            crc_poly: (1u64 << crc.len) | crc.poly,
            frozen_hash: code.frozen_hash(),
        }
    }
}

/// `|ᾱ|` features with a one-hot label stored as its index.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub trial_id: u32,
    pub features: Vec<f32>,
    /// `0..K` flips that slot, `K` is undo.
    pub label: u16,
}

impl TrainingSample {
    pub fn one_hot(&self, output_dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; output_dim];
        v[self.label as usize] = 1.0;
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub fingerprint: CodeFingerprint,
    pub snr_db: f64,
    /// Samples of one trial are contiguous and share a trial id.
    pub trial_grouped: bool,
    pub split: Split,
    pub samples: Vec<TrainingSample>,
}

impl Dataset {
    pub fn new(code: &CodeConfig, snr_db: f64, split: Split, trial_grouped: bool) -> Self {
        Dataset { fingerprint: CodeFingerprint::of(code), snr_db, trial_grouped, split, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn undo_label(&self) -> u16 {
        self.fingerprint.nonfrozen_count as u16
    }

    /// Fraction of samples labelled undo.
    pub fn undo_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let undo = self.undo_label();
        self.samples.iter().filter(|s| s.label == undo).count() as f64 / self.samples.len() as f64
    }

    /// Index ranges of consecutive samples sharing a trial id.
    pub fn groups(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.samples.len() {
            if i == self.samples.len() || !self.trial_grouped || self.samples[i].trial_id != self.samples[start].trial_id {
                if start < i {
                    out.push(start..i);
                }
                start = i;
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let fp = &self.fingerprint;
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(fp.block_len as u32).to_le_bytes())?;
        w.write_all(&(fp.nonfrozen_count as u32).to_le_bytes())?;
        w.write_all(&fp.crc_poly.to_le_bytes())?;
        w.write_all(&fp.frozen_hash.to_le_bytes())?;
        w.write_all(&self.snr_db.to_le_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        w.write_all(&[u8::from(self.trial_grouped), matches!(self.split, Split::Validation) as u8])?;
        for s in &self.samples {
            if s.features.len() != fp.block_len {
                return Err(Error::Shape(format!("sample has {} features, expected {}", s.features.len(), fp.block_len)));
            }
            w.write_all(&s.trial_id.to_le_bytes())?;
            for f in &s.features {
                w.write_all(&f.to_le_bytes())?;
            }
            w.write_all(&s.label.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        fn take<const L: usize, R: Read>(r: &mut R) -> Result<[u8; L]> {
            let mut b = [0u8; L];
            r.read_exact(&mut b)?;
            Ok(b)
        }
        if &take::<8, _>(r)? != DATASET_MAGIC {
            return Err(Error::Format("not a dataset file".into()));
        }
        let version = u32::from_le_bytes(take(r)?);
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let block_len = u32::from_le_bytes(take(r)?) as usize;
        let nonfrozen_count = u32::from_le_bytes(take(r)?) as usize;
        let crc_poly = u64::from_le_bytes(take(r)?);
        let frozen_hash = u64::from_le_bytes(take(r)?);
        let snr_db = f64::from_le_bytes(take(r)?);
        let count = u64::from_le_bytes(take(r)?) as usize;
        let [grouped, split] = take::<2, _>(r)?;
        let split = match split {
            0 => Split::Training,
            1 => Split::Validation,
            x => return Err(Error::Format(format!("bad split tag {x}"))),
        };
        let mut samples = Vec::with_capacity(count.min(1 << 24));
        let mut buf = vec![0u8; 4 * block_len];
        for _ in 0..count {
            let trial_id = u32::from_le_bytes(take(r)?);
            r.read_exact(&mut buf)?;
            let features = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            let label = u16::from_le_bytes(take(r)?);
            if label as usize > nonfrozen_count {
                return Err(Error::Format(format!("label {label} exceeds K = {nonfrozen_count}")));
            }
            samples.push(TrainingSample { trial_id, features, label });
        }
        Ok(Dataset {
            fingerprint: CodeFingerprint { block_len, nonfrozen_count, crc_poly, frozen_hash },
            snr_db,
            trial_grouped: grouped != 0,
            split,
            samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::Crc;

    #[test]
    fn groups_follow_trial_ids() {
        let code = CodeConfig::new(16, 8, Crc::new(4, 0x3).unwrap(), 1.0).unwrap();
        let mut ds = Dataset::new(&code, 1.0, Split::Training, true);
        for id in [4u32, 4, 7, 9, 9, 9] {
            ds.samples.push(TrainingSample { trial_id: id, features: vec![0.0; 16], label: 0 });
        }
        assert_eq!(ds.groups(), vec![0..2, 2..3, 3..6]);
        ds.trial_grouped = false;
        assert_eq!(ds.groups().len(), 6);
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(Dataset::read_from(&mut &b"DLSCFNET\x01\0\0\0"[..]).is_err());
    }
}
