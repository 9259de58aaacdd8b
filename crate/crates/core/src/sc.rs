//! Successive-cancellation decoding with LLR trace capture and forced flips,
//! plus the CRC-aided SC-list benchmark.

use std::fmt;

use crate::polar::CodeConfig;
use crate::{Error, Result};

/// LLRs are clamped to ±`LLR_CLAMP` after every update of the recursion.
pub const LLR_CLAMP: f64 = 30.0;

/// Check-node update flavour.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Kernel {
    /// `2·atanh(tanh(a/2)·tanh(b/2))`
    #[default]
    Exact,
    /// `sign(a)·sign(b)·min(|a|, |b|)`
    MinSum,
}

impl Kernel {
    #[inline]
    pub fn f(self, a: f64, b: f64) -> f64 {
        let v = match self {
            Kernel::Exact => 2.0 * ((0.5 * a).tanh() * (0.5 * b).tanh()).atanh(),
            Kernel::MinSum => {
                let m = a.abs().min(b.abs());
                if (a < 0.0) ^ (b < 0.0) {
                    -m
                } else {
                    m
                }
            }
        };
        clamp(v)
    }

    /// Variable-node update; `a` is the upper-half LLR, `u` the known partial sum.
    #[inline]
    pub fn g(self, a: f64, b: f64, u: u8) -> f64 {
        clamp(if u & 1 == 0 { b + a } else { b - a })
    }
}

#[inline]
pub(crate) fn clamp(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-LLR_CLAMP, LLR_CLAMP)
    }
}

/// Hard decision: 0 for non-negative LLR.
#[inline]
pub fn hard_decision(llr: f64) -> u8 {
    u8::from(llr < 0.0)
}

/// Ordered set of non-frozen bit indices whose decisions get inverted.
///
/// Stored sorted ascending, without duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlipSet(Vec<usize>);

impl FlipSet {
    pub fn empty() -> Self {
        FlipSet(Vec::new())
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        FlipSet(v)
    }

    /// This set plus `index`.
    pub fn with(&self, index: usize) -> Self {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&index) {
            v.insert(pos, index);
        }
        FlipSet(v)
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn validate(&self, code: &CodeConfig) -> Result<()> {
        match self.0.iter().find(|&&i| i >= code.block_len() || code.is_frozen(i)) {
            Some(i) => Err(Error::Param(format!("flip index {i} is frozen or out of range"))),
            None => Ok(()),
        }
    }
}

impl fmt::Display for FlipSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, i) in self.0.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

/// Outcome of one SC (or SC-list) pass.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub u_hat: Vec<u8>,
    pub info_hat: Vec<u8>,
    /// Decision LLR ᾱ_i at every bit index, frozen and non-frozen.
    pub trace: Vec<f64>,
    pub crc_ok: bool,
}

/// Incremental SC recursion state: one decision LLR at a time, in index order.
///
/// Depth `d` buffers (node size `s = N >> d`) live at `[s, 2s)` of `alpha`
/// and `left_beta`.
#[derive(Clone, Debug)]
pub struct ScState {
    log_n: usize,
    kernel: Kernel,
    alpha: Vec<f64>,
    left_beta: Vec<u8>,
    scratch: Vec<u8>,
}

impl ScState {
    pub fn new(channel: &[f64], kernel: Kernel) -> Self {
        let n = channel.len();
        debug_assert!(n.is_power_of_two());
        let mut alpha = vec![0.0; 2 * n];
        for (a, &l) in alpha[n..].iter_mut().zip(channel) {
            *a = clamp(l);
        }
        ScState {
            log_n: n.trailing_zeros() as usize,
            kernel,
            alpha,
            left_beta: vec![0; 2 * n],
            scratch: vec![0; n],
        }
    }

    /// Decision LLR of bit `i`; bits `0..i` must already be set, in order.
    pub fn leaf_llr(&mut self, i: usize) -> f64 {
        let n = 1usize << self.log_n;
        let start = if i == 0 {
            0
        } else {
            let d = self.log_n - 1 - i.trailing_zeros() as usize;
            let s = n >> d;
            let h = s / 2;
            for j in 0..h {
                self.alpha[h + j] = self.kernel.g(self.alpha[s + j], self.alpha[s + h + j], self.left_beta[h + j]);
            }
            d + 1
        };
        for d in start..self.log_n {
            let s = n >> d;
            let h = s / 2;
            for j in 0..h {
                self.alpha[h + j] = self.kernel.f(self.alpha[s + j], self.alpha[s + h + j]);
            }
        }
        self.alpha[1]
    }

    /// Records the decision for bit `i` and folds completed partial sums upward.
    pub fn set_bit(&mut self, i: usize, bit: u8) {
        let mut len = 1;
        let mut depth = self.log_n;
        self.scratch[0] = bit;
        while depth > 0 && (i >> (self.log_n - depth)) & 1 == 1 {
            for j in 0..len {
                let c = self.scratch[j];
                self.scratch[len + j] = c;
                self.scratch[j] = self.left_beta[len + j] ^ c;
            }
            len *= 2;
            depth -= 1;
        }
        if depth > 0 {
            self.left_beta[len..2 * len].copy_from_slice(&self.scratch[..len]);
        }
    }
}

/// Plain SC with optional forced flips. Empty `flips` is vanilla SC.
pub fn sc_decode(llr: &[f64], code: &CodeConfig, flips: &FlipSet, kernel: Kernel) -> Result<DecodeResult> {
    check_llr(llr, code)?;
    flips.validate(code)?;
    Ok(sc_decode_unchecked(llr, code, flips, kernel))
}

pub(crate) fn sc_decode_unchecked(llr: &[f64], code: &CodeConfig, flips: &FlipSet, kernel: Kernel) -> DecodeResult {
    let n = code.block_len();
    let mut state = ScState::new(llr, kernel);
    let mut u_hat = vec![0u8; n];
    let mut trace = vec![0.0; n];
    for i in 0..n {
        let l = state.leaf_llr(i);
        trace[i] = l;
        let bit = if code.is_frozen(i) {
            0
        } else {
            hard_decision(l) ^ u8::from(flips.contains(i))
        };
        u_hat[i] = bit;
        state.set_bit(i, bit);
    }
    finish(code, u_hat, trace)
}

fn finish(code: &CodeConfig, u_hat: Vec<u8>, trace: Vec<f64>) -> DecodeResult {
    let info_hat = code.extract(&u_hat);
    let crc_ok = code.crc_check(&info_hat);
    DecodeResult { u_hat, info_hat, trace, crc_ok }
}

fn check_llr(llr: &[f64], code: &CodeConfig) -> Result<()> {
    if llr.len() != code.block_len() {
        return Err(Error::Param(format!(
            "llr vector has length {}, expected {}",
            llr.len(),
            code.block_len()
        )));
    }
    Ok(())
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Path-metric increment for deciding `bit` against decision LLR `llr`.
#[inline]
pub fn path_penalty(llr: f64, bit: u8) -> f64 {
    if bit == 0 {
        log1p_exp(-llr)
    } else {
        log1p_exp(llr)
    }
}

#[derive(Clone)]
struct ListPath {
    state: ScState,
    u_hat: Vec<u8>,
    trace: Vec<f64>,
    metric: f64,
}

/// CRC-aided SC-list decoding with `list_size` surviving paths.
///
/// Among final paths passing the CRC the lowest metric wins; if none pass,
/// the lowest metric overall is returned with `crc_ok = false`. Ties go to
/// the lower path index, and within a parent to the hard decision.
pub fn ca_scl_decode(llr: &[f64], code: &CodeConfig, list_size: usize, kernel: Kernel) -> Result<DecodeResult> {
    check_llr(llr, code)?;
    if list_size == 0 {
        return Err(Error::Param("list size must be at least 1".into()));
    }
    let n = code.block_len();
    let mut paths = vec![ListPath {
        state: ScState::new(llr, kernel),
        u_hat: vec![0; n],
        trace: vec![0.0; n],
        metric: 0.0,
    }];
    for i in 0..n {
        let leaf: Vec<f64> = paths.iter_mut().map(|p| p.state.leaf_llr(i)).collect();
        if code.is_frozen(i) {
            for (p, &l) in paths.iter_mut().zip(&leaf) {
                p.trace[i] = l;
                p.metric += path_penalty(l, 0);
                p.state.set_bit(i, 0);
            }
            continue;
        }
        // (metric, parent, bit), hard decision first within each parent.
        let mut cands: Vec<(f64, usize, u8)> = Vec::with_capacity(2 * paths.len());
        for (pi, (p, &l)) in paths.iter().zip(&leaf).enumerate() {
            let hard = hard_decision(l);
            for bit in [hard, hard ^ 1] {
                cands.push((p.metric + path_penalty(l, bit), pi, bit));
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cands.truncate(list_size);
        let mut next = Vec::with_capacity(cands.len());
        for (metric, pi, bit) in cands {
            let mut p = paths[pi].clone();
            p.trace[i] = leaf[pi];
            p.u_hat[i] = bit;
            p.metric = metric;
            p.state.set_bit(i, bit);
            next.push(p);
        }
        paths = next;
    }
    let results: Vec<(f64, DecodeResult)> = paths
        .into_iter()
        .map(|p| (p.metric, finish(code, p.u_hat, p.trace)))
        .collect();
    let best = |pred: &dyn Fn(&DecodeResult) -> bool| {
        results
            .iter()
            .enumerate()
            .filter(|(_, (_, r))| pred(r))
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    };
    let pick = best(&|r| r.crc_ok).or_else(|| best(&|_| true)).expect("list is never empty");
    Ok(results.into_iter().nth(pick).map(|(_, r)| r).expect("index in range"))
}

/// Smallest non-frozen index where `result` disagrees with `u_true` (the Type-1 error).
pub fn first_error_index(u_hat: &[u8], u_true: &[u8], code: &CodeConfig) -> Option<usize> {
    code.info_positions().iter().copied().find(|&i| u_hat[i] != u_true[i])
}
