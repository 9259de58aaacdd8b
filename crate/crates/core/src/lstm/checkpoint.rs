//! Versioned binary checkpoint.
//!
//! Layout (little-endian): magic `DLSCFNET`, `u32` version, `u32` N, `u32` K,
//! `u32` num_layers, `u32` hidden_size, `u32` input_chunk, `u32` output_dim,
//! `u8` head source (0 cell, 1 hidden), `f64` dropout, `u32` tensor count; then
//! per tensor `u32` rank, `u32` dims, and `f32` values in row-major order.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{HeadSource, LayerParams, LstmNet, LstmParams, NetworkConfig};
use crate::polar::CodeConfig;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DLSCFNET";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Code dimensions stored alongside the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub block_len: usize,
    pub nonfrozen_count: usize,
}

impl CheckpointHeader {
    pub fn of(code: &CodeConfig) -> Self {
        CheckpointHeader { block_len: code.block_len(), nonfrozen_count: code.nonfrozen_count() }
    }

    /// Errors unless the checkpoint was trained for a code of this shape.
    pub fn check(&self, code: &CodeConfig) -> Result<()> {
        if *self != Self::of(code) {
            return Err(Error::Shape(format!(
                "checkpoint is for N = {}, K = {}; code has N = {}, K = {}",
                self.block_len,
                self.nonfrozen_count,
                code.block_len(),
                code.nonfrozen_count()
            )));
        }
        Ok(())
    }
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

pub fn write_checkpoint<W: Write>(w: &mut W, header: CheckpointHeader, net: &LstmNet<f32>) -> Result<()> {
    let c = &net.config;
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION as usize)?;
    for v in [header.block_len, header.nonfrozen_count, c.num_layers, c.hidden_size, c.input_chunk, c.output_dim] {
        put_u32(w, v)?;
    }
    w.write_all(&[match c.head_source {
        HeadSource::Cell => 0,
        HeadSource::Hidden => 1,
    }])?;
    w.write_all(&c.dropout.to_le_bytes())?;
    let tensors = net.params.tensors();
    put_u32(w, tensors.len())?;
    for t in tensors {
        put_u32(w, t.ndim())?;
        for &d in t.shape() {
            put_u32(w, d)?;
        }
        for &x in t.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(CheckpointHeader, LstmNet<f32>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a network checkpoint".into()));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let block_len = get_u32(r)?;
    let nonfrozen_count = get_u32(r)?;
    let num_layers = get_u32(r)?;
    let hidden_size = get_u32(r)?;
    let input_chunk = get_u32(r)?;
    let output_dim = get_u32(r)?;
    let mut hs = [0u8; 1];
    r.read_exact(&mut hs)?;
    let head_source = match hs[0] {
        0 => HeadSource::Cell,
        1 => HeadSource::Hidden,
        x => return Err(Error::Format(format!("bad head source {x}"))),
    };
    let mut db = [0u8; 8];
    r.read_exact(&mut db)?;
    let dropout = f64::from_le_bytes(db);
    let config = NetworkConfig { num_layers, hidden_size, input_chunk, output_dim, dropout, head_source };
    config.validate()?;
    if output_dim != nonfrozen_count + 1 {
        return Err(Error::Format(format!("output_dim {output_dim} != K + 1 = {}", nonfrozen_count + 1)));
    }
    let template = LstmParams::<f32>::zeros(&config);
    let count = get_u32(r)?;
    if count != template.tensors().len() {
        return Err(Error::Format(format!("expected {} tensors, found {count}", template.tensors().len())));
    }
    let mut flat: Vec<Vec<f32>> = Vec::with_capacity(count);
    for want in template.tensors() {
        let rank = get_u32(r)?;
        let shape: Vec<usize> = (0..rank).map(|_| get_u32(r)).collect::<Result<_>>()?;
        if shape != want.shape() {
            return Err(Error::Format(format!("tensor shape {shape:?}, expected {:?}", want.shape())));
        }
        let data: Vec<f32> = (0..want.len()).map(|_| get_f32(r)).collect::<Result<_>>()?;
        flat.push(data);
    }
    let mut it = flat.into_iter();
    let mut next2 = |rows: usize, cols: usize| Array2::from_shape_vec((rows, cols), it.next().expect("counted")).expect("checked");
    let mut layers = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let input = if l == 0 { input_chunk } else { hidden_size };
        let w_x = next2(input, 4 * hidden_size);
        let w_h = next2(hidden_size, 4 * hidden_size);
        let b = next2(1, 4 * hidden_size).into_shape_with_order(4 * hidden_size).expect("1-row");
        layers.push(LayerParams { w_x, w_h, b: Array1::from(b.to_vec()) });
    }
    let head_w = next2(hidden_size, output_dim);
    let head_b = Array1::from(next2(1, output_dim).into_iter().collect::<Vec<_>>());
    let net = LstmNet::from_params(config, LstmParams { layers, head_w, head_b })?;
    Ok((CheckpointHeader { block_len, nonfrozen_count }, net))
}

pub fn save_checkpoint(path: &Path, header: CheckpointHeader, net: &LstmNet<f32>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut w, header, net)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, LstmNet<f32>)> {
    read_checkpoint(&mut BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::RngStream;

    #[test]
    fn roundtrip_is_exact() {
        let mut cfg = NetworkConfig::new(2, 5, 4, 9);
        cfg.dropout = 0.05;
        let net = LstmNet::<f32>::new(cfg, &RngStream::new(9, 1)).unwrap();
        let header = CheckpointHeader { block_len: 16, nonfrozen_count: 8 };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, header, &net).unwrap();
        let (h2, net2) = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(h2, header);
        assert_eq!(net2, net);
        buf[0] = b'X';
        assert!(read_checkpoint(&mut buf.as_slice()).is_err());
    }
}
