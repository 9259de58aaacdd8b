//! Polar-code decoding laboratory: SC, SC-flip and SC-list decoders, an LSTM
//! action scorer trained to pick (and undo) bit flips, and the Monte-Carlo
//! harness used to compare them.

pub mod channel;
pub mod dataset;
pub mod dlflip;
pub mod eval;
pub mod lstm;
pub mod polar;
pub mod baselines;
pub mod sc;
pub mod training;
pub mod trial;

pub use channel::{snr_to_sigma, transmit, ChannelLlrVector, RngStream};
pub use polar::{construct_frozen_set, polar_encode, CodeConfig, Crc};
pub use sc::{ca_scl_decode, first_error_index, sc_decode, DecodeResult, FlipSet, Kernel};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
