//! Reference flip strategies: LLR-magnitude SC-flip and dynamic SC-flip (D-SCF).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::channel::{snr_to_sigma, RngStream};
use crate::polar::CodeConfig;
use crate::sc::{sc_decode_unchecked, DecodeResult, FlipSet, Kernel};
use crate::trial::Trial;
use crate::{Error, Result};

/// Default α grid for [`optimize_alpha`].
pub const DEFAULT_ALPHA_GRID: [f64; 13] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4];

/// Ranked flip sets, best first, with the score that ranked them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlipCandidateList {
    pub entries: Vec<(FlipSet, f64)>,
}

impl FlipCandidateList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The leading index of every singleton entry, in order.
    pub fn singleton_indices(&self) -> Vec<usize> {
        self.entries.iter().filter_map(|(s, _)| (s.len() == 1).then(|| s.indices()[0])).collect()
    }
}

/// Singletons over non-frozen indices, ascending `|ᾱ_i|`, ties to the smaller index.
pub fn magnitude_flip_order(trace: &[f64], code: &CodeConfig, t_max: usize) -> FlipCandidateList {
    let mut idx: Vec<usize> = code.info_positions().to_vec();
    idx.sort_by(|&a, &b| trace[a].abs().total_cmp(&trace[b].abs()).then(a.cmp(&b)));
    idx.truncate(t_max);
    FlipCandidateList {
        entries: idx.into_iter().map(|i| (FlipSet::from_indices([i]), trace[i].abs())).collect(),
    }
}

/// D-SCF metric of `flips`; lower means more likely to be the error set.
///
/// `Σ_{j∈flips}|ᾱ_j| + (1/α)·Σ ln(1+exp(−α|ᾱ_j|))` with the second sum over
/// non-frozen `j ≤ max(flips)`, `j ∉ flips`.
pub fn dscf_metric(trace: &[f64], flips: &FlipSet, alpha: f64, code: &CodeConfig) -> Result<f64> {
    let Some(last) = flips.max_index() else {
        return Err(Error::Param("D-SCF metric of an empty flip set".into()));
    };
    if !(alpha > 0.0) {
        return Err(Error::Param(format!("alpha must be positive, got {alpha}")));
    }
    Ok(dscf_metric_unchecked(trace, flips, last, alpha, code))
}

fn dscf_metric_unchecked(trace: &[f64], flips: &FlipSet, last: usize, alpha: f64, code: &CodeConfig) -> f64 {
    let mut flipped = 0.0;
    let mut penalty = 0.0;
    for &j in code.info_positions().iter().take_while(|&&j| j <= last) {
        let mag = trace[j].abs();
        if flips.contains(j) {
            flipped += mag;
        } else {
            penalty += (-alpha * mag).exp().ln_1p();
        }
    }
    flipped + penalty / alpha
}

/// Single-flip candidates ranked by the D-SCF metric, truncated to `t_max`.
pub fn dscf_flip_order(trace: &[f64], code: &CodeConfig, alpha: f64, t_max: usize) -> FlipCandidateList {
    let mut entries: Vec<(FlipSet, f64)> = code
        .info_positions()
        .iter()
        .map(|&j| {
            let set = FlipSet::from_indices([j]);
            let m = dscf_metric_unchecked(trace, &set, j, alpha, code);
            (set, m)
        })
        .collect();
    entries.sort_by(rank);
    entries.truncate(t_max);
    FlipCandidateList { entries }
}

fn rank(a: &(FlipSet, f64), b: &(FlipSet, f64)) -> std::cmp::Ordering {
    a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0))
}

/// Result of a D-SCF run together with every flip set it tried, in order
/// (the initial SC attempt is the empty set).
#[derive(Clone, Debug)]
pub struct DscfOutcome {
    pub result: DecodeResult,
    pub attempts: Vec<FlipSet>,
}

/// Dynamic SC-flip decoder.
#[derive(Clone, Debug)]
pub struct DscfDecoder {
    pub alpha: f64,
    /// Total SC attempts, the initial one included.
    pub t_max: usize,
    /// Largest flip-set size considered.
    pub max_order: usize,
    pub kernel: Kernel,
}

impl DscfDecoder {
    pub fn new(alpha: f64, t_max: usize) -> Self {
        DscfDecoder {
            alpha,
            t_max: t_max.max(1),
            max_order: t_max.saturating_sub(1).max(1),
            kernel: Kernel::Exact,
        }
    }

    pub fn decode(&self, llr: &[f64], code: &CodeConfig) -> Result<DscfOutcome> {
        if llr.len() != code.block_len() {
            return Err(Error::Param(format!("llr length {} != N", llr.len())));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Param(format!("alpha must be positive, got {}", self.alpha)));
        }
        let mut result = sc_decode_unchecked(llr, code, &FlipSet::empty(), self.kernel);
        let mut attempts = vec![FlipSet::empty()];
        if result.crc_ok || self.t_max == 1 {
            return Ok(DscfOutcome { result, attempts });
        }
        let mut queue = dscf_flip_order(&result.trace, code, self.alpha, self.t_max - 1).entries;
        while attempts.len() < self.t_max && !queue.is_empty() {
            let (flips, _) = queue.remove(0);
            result = sc_decode_unchecked(llr, code, &flips, self.kernel);
            attempts.push(flips.clone());
            if result.crc_ok {
                break;
            }
            let remaining = self.t_max - attempts.len();
            if remaining == 0 || flips.len() >= self.max_order {
                continue;
            }
            let last = flips.max_index().expect("non-empty flip set");
            for &j in code.info_positions().iter().filter(|&&j| j > last) {
                let child = flips.with(j);
                let m = dscf_metric_unchecked(&result.trace, &child, j, self.alpha, code);
                queue.push((child, m));
            }
            queue.sort_by(rank);
            // Only the best `remaining` entries can ever be popped.
            queue.truncate(remaining);
        }
        Ok(DscfOutcome { result, attempts })
    }
}

/// Convenience wrapper over [`DscfDecoder`].
pub fn dscf_decode(llr: &[f64], code: &CodeConfig, alpha: f64, t_max: usize) -> Result<DecodeResult> {
    DscfDecoder::new(alpha, t_max).decode(llr, code).map(|o| o.result)
}

/// Per-α outcome of an α sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaSweepPoint {
    pub alpha: f64,
    pub block_errors: usize,
    pub trials: usize,
}

/// Picks the grid α with the lowest D-SCF block-error count over `trials`
/// paired-noise trials; equal counts go to the smaller α.
pub fn optimize_alpha(
    code: &CodeConfig,
    ebn0_db: f64,
    grid: &[f64],
    trials: usize,
    t_max: usize,
    stream: &RngStream,
) -> Result<(f64, Vec<AlphaSweepPoint>)> {
    if grid.is_empty() {
        return Err(Error::Param("empty alpha grid".into()));
    }
    if grid.len() == 1 {
        return Ok((grid[0], Vec::new()));
    }
    let sigma = snr_to_sigma(ebn0_db, code.rate())?;
    let counts: Vec<usize> = (0..trials as u64)
        .into_par_iter()
        .map(|id| {
            let trial = Trial::generate(code, sigma, stream, id);
            grid.iter()
                .map(|&a| {
                    let out = DscfDecoder::new(a, t_max).decode(&trial.llr, code).expect("valid inputs");
                    usize::from(trial.is_block_error(&out.result.u_hat, code))
                })
                .collect::<Vec<_>>()
        })
        .reduce(|| vec![0; grid.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    let chosen = (0..grid.len())
        .min_by(|&a, &b| counts[a].cmp(&counts[b]).then(grid[a].total_cmp(&grid[b])))
        .expect("non-empty grid");
    let sweep = grid
        .iter()
        .zip(&counts)
        .map(|(&alpha, &block_errors)| AlphaSweepPoint { alpha, block_errors, trials })
        .collect();
    Ok((grid[chosen], sweep))
}

/// Plain-text cache of optimized α values keyed by `(N, K, Eb/N0)`.
///
/// One entry per line: `n k ebn0_db alpha`; `#` starts a comment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlphaTable {
    entries: BTreeMap<(usize, usize, i64), f64>,
}

fn snr_key(ebn0_db: f64) -> i64 {
    (ebn0_db * 1000.0).round() as i64
}

impl AlphaTable {
    pub fn get(&self, n: usize, k: usize, ebn0_db: f64) -> Option<f64> {
        self.entries.get(&(n, k, snr_key(ebn0_db))).copied()
    }

    pub fn insert(&mut self, n: usize, k: usize, ebn0_db: f64, alpha: f64) {
        self.entries.insert((n, k, snr_key(ebn0_db)), alpha);
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table = AlphaTable::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("alpha table line {}: {line:?}", lineno + 1));
            if fields.len() != 4 {
                return Err(bad());
            }
            let n = fields[0].parse().map_err(|_| bad())?;
            let k = fields[1].parse().map_err(|_| bad())?;
            let snr: f64 = fields[2].parse().map_err(|_| bad())?;
            let alpha: f64 = fields[3].parse().map_err(|_| bad())?;
            table.insert(n, k, snr, alpha);
        }
        Ok(table)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# n k ebn0_db alpha\n");
        for (&(n, k, snr), alpha) in &self.entries {
            let _ = writeln!(out, "{n} {k} {:.3} {alpha}", snr as f64 / 1000.0);
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::Crc;

    fn toy_code() -> CodeConfig {
        // Non-frozen {3,5,6,7}.
        CodeConfig::with_frozen_set(8, 4, Crc::new(1, 1).unwrap(), 1.0, &[0, 1, 2, 4]).unwrap()
    }

    #[test]
    fn magnitude_order_sorts_and_breaks_ties() {
        let code = toy_code();
        let mut trace = vec![9.0; 8];
        trace[3] = 5.0;
        trace[5] = -0.1;
        trace[6] = 2.0;
        trace[7] = 2.0;
        let order = magnitude_flip_order(&trace, &code, 8);
        assert_eq!(order.singleton_indices(), vec![5, 6, 7, 3]);
        assert_eq!(magnitude_flip_order(&trace, &code, 1).singleton_indices(), vec![5]);
    }

    #[test]
    fn metric_limits() {
        let code = toy_code();
        let trace = [0.0, 0.0, 0.0, 1.5, 0.0, -2.5, 0.7, 3.0];
        let set = FlipSet::from_indices([5, 7]);
        let big = dscf_metric(&trace, &set, 1e6, &code).unwrap();
        assert!((big - 5.5).abs() < 1e-6);
        assert!(dscf_metric(&trace, &FlipSet::empty(), 1.0, &code).is_err());
        assert!(dscf_metric(&trace, &set, 0.0, &code).is_err());
    }

    #[test]
    fn metric_counts_ln2_for_zero_magnitudes() {
        let code = toy_code();
        let mut trace = [0.0; 8];
        trace[6] = 1.25;
        // Non-frozen before 6: {3, 5}.
        let m = dscf_metric(&trace, &FlipSet::from_indices([6]), 1.0, &code).unwrap();
        assert!((m - (1.25 + 2.0 * std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn metric_grows_when_extended() {
        let code = toy_code();
        let trace = [0.0, 0.0, 0.0, 1.5, 0.0, -2.5, 0.7, 3.0];
        let a = dscf_metric(&trace, &FlipSet::from_indices([5]), 0.8, &code).unwrap();
        let b = dscf_metric(&trace, &FlipSet::from_indices([5, 7]), 0.8, &code).unwrap();
        assert!(b >= a);
    }

    #[test]
    fn alpha_table_roundtrip() {
        let mut t = AlphaTable::default();
        t.insert(64, 32, 1.0, 0.6);
        t.insert(128, 64, 1.5, 0.4);
        let back = AlphaTable::parse(&t.render()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.get(64, 32, 1.0), Some(0.6));
        assert_eq!(back.get(64, 32, 2.0), None);
        assert!(AlphaTable::parse("64 32 1.0").is_err());
    }

    #[test]
    fn single_point_grid() {
        let code = toy_code();
        let (a, _) = optimize_alpha(&code, 1.0, &[0.7], 10, 3, &RngStream::new(1, 0)).unwrap();
        assert_eq!(a, 0.7);
        assert!(optimize_alpha(&code, 1.0, &[], 10, 3, &RngStream::new(1, 0)).is_err());
    }
}
