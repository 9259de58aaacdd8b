//! Monte-Carlo experiments: first-error identification rates and BLER sweeps.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::baselines::{dscf_flip_order, magnitude_flip_order, DscfDecoder};
use crate::channel::{snr_to_sigma, RngStream};
use crate::dlflip::{initial_action_order, ActionScorer, DlFlipDecoder};
use crate::polar::CodeConfig;
use crate::sc::{ca_scl_decode, first_error_index, sc_decode, FlipSet, Kernel};
use crate::trial::{collect_ordered, Trial};
use crate::{Error, Result};

/// Trials decoded per parallel block in a BLER sweep.
const SWEEP_BLOCK: u64 = 1024;

/// Who proposes the single-bit flips of attempts `1..T`.
#[derive(Clone, Copy)]
pub enum FlipProposer<'a> {
    /// Always proposes the true first error first.
    Genie,
    /// Ascending `|ᾱ|`.
    Magnitude,
    /// D-SCF metric with the given α.
    Dscf { alpha: f64 },
    /// Descending network scores.
    Scorer(&'a (dyn ActionScorer + Sync)),
}

impl FlipProposer<'_> {
    pub fn name(&self) -> String {
        match self {
            FlipProposer::Genie => "genie".into(),
            FlipProposer::Magnitude => "magnitude".into(),
            FlipProposer::Dscf { alpha } => format!("dscf(alpha={alpha})"),
            FlipProposer::Scorer(_) => "lstm".into(),
        }
    }

    /// First `count` proposed bit indices for a failed first attempt.
    fn propose(&self, trace: &[f64], code: &CodeConfig, truth: usize, count: usize) -> Vec<usize> {
        match self {
            FlipProposer::Genie => {
                let mut v = vec![truth];
                v.extend(code.info_positions().iter().copied().filter(|&i| i != truth).take(count.saturating_sub(1)));
                v.truncate(count);
                v
            }
            FlipProposer::Magnitude => magnitude_flip_order(trace, code, count).singleton_indices(),
            FlipProposer::Dscf { alpha } => dscf_flip_order(trace, code, *alpha, count).singleton_indices(),
            FlipProposer::Scorer(s) => {
                let info = code.info_positions();
                initial_action_order(&s.score(trace), count).into_iter().map(|slot| info[slot]).collect()
            }
        }
    }
}

/// Attempt-wise first-error identification counts.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentificationReport {
    pub proposer: String,
    pub block_len: usize,
    pub nonfrozen_count: usize,
    pub ebn0_db: f64,
    /// Failed first attempts examined.
    pub failures: usize,
    /// `successes[m]`: trials whose true first error was proposal `m + 1`.
    pub successes: Vec<usize>,
}

impl IdentificationReport {
    pub fn rate(&self, attempt: usize) -> f64 {
        self.successes[attempt - 1] as f64 / self.failures as f64
    }

    pub fn cumulative_rate(&self, attempt: usize) -> f64 {
        self.successes[..attempt].iter().sum::<usize>() as f64 / self.failures as f64
    }

    /// Columns `attempt,successes,failures_total,rate,cumulative_rate`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("attempt,successes,failures_total,rate,cumulative_rate\n");
        for m in 1..=self.successes.len() {
            let _ = writeln!(
                out,
                "{m},{},{},{:.6},{:.6}",
                self.successes[m - 1],
                self.failures,
                self.rate(m),
                self.cumulative_rate(m)
            );
        }
        out
    }
}

/// Collects `min_failures` trials whose plain SC pass fails the CRC and
/// counts how often the m-th proposed flip is the true first error.
pub fn run_identification_experiment(
    proposer: FlipProposer<'_>,
    code: &CodeConfig,
    ebn0_db: f64,
    attempts: usize,
    min_failures: usize,
    stream: &RngStream,
) -> Result<IdentificationReport> {
    if min_failures == 0 || attempts == 0 {
        return Err(Error::Param("min_failures and attempts must be at least 1".into()));
    }
    let sigma = snr_to_sigma(ebn0_db, code.rate())?;
    let hits = collect_ordered(min_failures, |_| 1, |id| {
        let trial = Trial::generate(code, sigma, stream, id);
        let r = sc_decode(&trial.llr, code, &FlipSet::empty(), Kernel::Exact).expect("valid trial");
        if r.crc_ok {
            return Vec::new();
        }
        let truth = first_error_index(&r.u_hat, &trial.u, code).expect("CRC failure implies an error");
        let proposals = proposer.propose(&r.trace, code, truth, attempts);
        vec![proposals.iter().position(|&p| p == truth)]
    })?;
    let mut successes = vec![0; attempts];
    for m in hits.iter().flatten() {
        successes[*m] += 1;
    }
    Ok(IdentificationReport {
        proposer: proposer.name(),
        block_len: code.block_len(),
        nonfrozen_count: code.nonfrozen_count(),
        ebn0_db,
        failures: hits.len(),
        successes,
    })
}

/// Decoders compared in a BLER sweep.
#[derive(Clone, Copy)]
pub enum BlerDecoder<'a> {
    Sc,
    CaScl { list_size: usize },
    Dscf { alpha: f64, budget: usize },
    DlScf { scorer: &'a (dyn ActionScorer + Sync), budget: usize },
}

impl BlerDecoder<'_> {
    pub fn id(&self) -> String {
        match self {
            BlerDecoder::Sc => "SC".into(),
            BlerDecoder::CaScl { list_size } => format!("CA-SCL-{list_size}"),
            BlerDecoder::Dscf { budget, .. } => format!("D-SCF-T{budget}"),
            BlerDecoder::DlScf { budget, .. } => format!("DL-SCF-T{budget}"),
        }
    }

    /// Decoded u-vector.
    pub fn decode(&self, llr: &[f64], code: &CodeConfig) -> Result<Vec<u8>> {
        Ok(match self {
            BlerDecoder::Sc => sc_decode(llr, code, &FlipSet::empty(), Kernel::Exact)?.u_hat,
            BlerDecoder::CaScl { list_size } => ca_scl_decode(llr, code, *list_size, Kernel::Exact)?.u_hat,
            BlerDecoder::Dscf { alpha, budget } => DscfDecoder::new(*alpha, *budget).decode(llr, code)?.result.u_hat,
            BlerDecoder::DlScf { scorer, budget } => DlFlipDecoder::new(*scorer, *budget).decode(llr, code)?.result.u_hat,
        })
    }
}

/// One (decoder, Eb/N0) result.
#[derive(Clone, Debug, PartialEq)]
pub struct BlerPoint {
    pub decoder: String,
    pub n: usize,
    pub k: usize,
    pub ebn0_db: f64,
    pub trials: usize,
    pub block_errors: usize,
    pub bler: f64,
    /// Order-sensitive digest of the channel LLRs of every counted trial.
    pub noise_digest: u64,
}

pub const BLER_CSV_HEADER: &str = "decoder,n,k,ebn0_db,trials,block_errors,bler";

pub fn bler_csv(points: &[BlerPoint]) -> String {
    let mut out = format!("{BLER_CSV_HEADER}\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{},{},{},{:.6e}", p.decoder, p.n, p.k, p.ebn0_db, p.trials, p.block_errors, p.bler);
    }
    out
}

fn digest_step(acc: u64, hash: u64) -> u64 {
    (acc ^ hash).wrapping_mul(0x0100_0000_01b3).rotate_left(17)
}

/// For every Eb/N0 in `grid`, every decoder sees the same trial sequence and
/// stops after `max_block_errors` errors or `max_trials` trials. Trial
/// streams are `stream.substream(grid index)`.
pub fn run_bler_sweep(
    decoders: &[BlerDecoder<'_>],
    code: &CodeConfig,
    grid: &[f64],
    max_block_errors: usize,
    max_trials: usize,
    stream: &RngStream,
) -> Result<Vec<BlerPoint>> {
    if grid.is_empty() || decoders.is_empty() {
        return Err(Error::Param("empty SNR grid or decoder list".into()));
    }
    if max_block_errors == 0 || max_trials == 0 {
        return Err(Error::Param("stopping limits must be at least 1".into()));
    }
    let mut points = Vec::with_capacity(grid.len() * decoders.len());
    for (gi, &ebn0) in grid.iter().enumerate() {
        let sigma = snr_to_sigma(ebn0, code.rate())?;
        let trial_stream = stream.substream(gi as u64);
        let mut trials = vec![0usize; decoders.len()];
        let mut errors = vec![0usize; decoders.len()];
        let mut digest = vec![0u64; decoders.len()];
        let active = |t: &[usize], e: &[usize], d: usize| t[d] < max_trials && e[d] < max_block_errors;
        let mut next = 0u64;
        while (0..decoders.len()).any(|d| active(&trials, &errors, d)) {
            let live: Vec<usize> = (0..decoders.len()).filter(|&d| active(&trials, &errors, d)).collect();
            let end = (next + SWEEP_BLOCK).min(max_trials as u64);
            let block: Vec<(u64, Vec<bool>)> = (next..end)
                .into_par_iter()
                .map(|id| {
                    let trial = Trial::generate(code, sigma, &trial_stream, id);
                    let fails = live
                        .iter()
                        .map(|&d| {
                            let u_hat = decoders[d].decode(&trial.llr, code).expect("valid trial");
                            trial.is_block_error(&u_hat, code)
                        })
                        .collect();
                    (trial.llr_hash(), fails)
                })
                .collect();
            for (hash, fails) in block {
                for (&d, &fail) in live.iter().zip(&fails) {
                    if active(&trials, &errors, d) {
                        trials[d] += 1;
                        errors[d] += usize::from(fail);
                        digest[d] = digest_step(digest[d], hash);
                    }
                }
            }
            next = end;
        }
        for (d, dec) in decoders.iter().enumerate() {
            points.push(BlerPoint {
                decoder: dec.id(),
                n: code.block_len(),
                k: code.nonfrozen_count(),
                ebn0_db: ebn0,
                trials: trials[d],
                block_errors: errors[d],
                bler: errors[d] as f64 / trials[d] as f64,
                noise_digest: digest[d],
            });
        }
    }
    Ok(points)
}

/// Session logs of the scorer-guided decoder on trials `0..trials`, each
/// preceded by a header line with the trial id and its LLR digest.
pub fn session_logs(
    scorer: &(dyn ActionScorer + Sync),
    code: &CodeConfig,
    ebn0_db: f64,
    budget: usize,
    trials: usize,
    stream: &RngStream,
) -> Result<String> {
    let sigma = snr_to_sigma(ebn0_db, code.rate())?;
    let decoder = DlFlipDecoder::new(scorer, budget);
    let texts: Vec<Result<String>> = (0..trials as u64)
        .into_par_iter()
        .map(|id| {
            let trial = Trial::generate(code, sigma, stream, id);
            let out = decoder.decode(&trial.llr, code)?;
            Ok(format!("# trial {id} llr {:016x}\n{}", trial.llr_hash(), out.log.to_text()))
        })
        .collect();
    texts.into_iter().collect::<Result<Vec<_>>>().map(|v| v.concat())
}
