//! SC-flip decoding driven by an action scorer.
//!
//! After a failed SC attempt the scorer rates every non-frozen bit as the
//! first error, plus one "undo" slot. The controller keeps a stack of search
//! nodes: each node owns a flip set, a ranked candidate list and a cursor.
//! Undo moves on to the current node's next candidate; extending pushes a
//! child whose flip set includes the flip just tried. A node whose cursor is
//! exhausted is popped (implicit undo).

use std::collections::HashSet;
use std::fmt;

use crate::lstm::ActionScores;
use crate::polar::CodeConfig;
use crate::sc::{sc_decode_unchecked, DecodeResult, FlipSet, Kernel};
use crate::{Error, Result};

/// Anything that maps an LLR trace to action scores.
pub trait ActionScorer {
    fn score(&self, trace: &[f64]) -> ActionScores;
}

impl<T: ActionScorer + ?Sized> ActionScorer for &T {
    fn score(&self, trace: &[f64]) -> ActionScores {
        (**self).score(trace)
    }
}

/// Flip slots sorted by descending probability, ties to the smaller slot,
/// truncated to `t`. The undo slot is ignored.
pub fn initial_action_order(scores: &ActionScores, t: usize) -> Vec<usize> {
    ranked_slots(scores, |_| true, t)
}

fn ranked_slots(scores: &ActionScores, keep: impl Fn(usize) -> bool, t: usize) -> Vec<usize> {
    let mut slots: Vec<usize> = (0..scores.flip_slots()).filter(|&s| keep(s)).collect();
    slots.sort_by(|&a, &b| scores.flip(b).total_cmp(&scores.flip(a)).then(a.cmp(&b)));
    slots.truncate(t);
    slots
}

/// What to do after a failed attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Undo,
    /// Keep the last flip and additionally flip this non-frozen slot.
    ExtendWith(usize),
}

/// Undo iff the undo score is strictly larger than every flip score;
/// otherwise extend with the best flip slot not already in `flipped_slots`.
pub fn decide_next(scores: &ActionScores, flipped_slots: &[usize]) -> Action {
    let undo = scores.undo();
    let beats_all = (0..scores.flip_slots()).all(|s| undo > scores.flip(s));
    if beats_all {
        return Action::Undo;
    }
    match ranked_slots(scores, |s| !flipped_slots.contains(&s), 1).first() {
        Some(&s) => Action::ExtendWith(s),
        None => Action::Undo,
    }
}

/// One node of the flip search.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchNode {
    pub flip_set: FlipSet,
    /// Non-frozen bit indices, best first.
    pub candidates: Vec<usize>,
    pub cursor: usize,
    /// Attempt (0-based record index) whose trace produced `candidates`.
    pub origin: usize,
}

/// Decision recorded after an attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoggedAction {
    /// Root order built from the first trace.
    Order,
    Undo,
    Extend(usize),
    /// Attempt passed the CRC or exhausted the budget.
    Stop,
}

impl fmt::Display for LoggedAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoggedAction::Order => f.write_str("order"),
            LoggedAction::Undo => f.write_str("undo"),
            LoggedAction::Extend(i) => write!(f, "extend:{i}"),
            LoggedAction::Stop => f.write_str("stop"),
        }
    }
}

/// One SC attempt inside a session.
#[derive(Clone, Debug)]
pub struct AttemptRecord {
    pub flips: FlipSet,
    pub result: DecodeResult,
    /// Record whose trace proposed `last_flip`; `None` for the first attempt.
    pub parent: Option<usize>,
    /// Bit index added on top of the parent node's flip set.
    pub last_flip: Option<usize>,
    pub action: LoggedAction,
}

/// Full history of one decoding session.
#[derive(Clone, Debug, Default)]
pub struct SessionLog {
    pub attempts: Vec<AttemptRecord>,
    pub scorer_calls: usize,
    /// Exhausted nodes popped from the stack.
    pub implicit_undos: usize,
}

impl SessionLog {
    /// Tab-separated lines: attempt number, flip set, crc_ok, action.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, r) in self.attempts.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", i + 1, r.flips, r.result.crc_ok, r.action));
        }
        out
    }

    /// Count of attempts whose flip set already appeared earlier in the session.
    pub fn repeated_flip_sets(&self) -> usize {
        let mut seen = HashSet::new();
        self.attempts.iter().filter(|r| !seen.insert(r.flips.clone())).count()
    }
}

/// Outcome of [`DlFlipDecoder::decode`].
#[derive(Clone, Debug)]
pub struct DlOutcome {
    pub result: DecodeResult,
    pub log: SessionLog,
}

/// The scorer-guided SC-flip controller.
#[derive(Clone, Debug)]
pub struct DlFlipDecoder<S> {
    pub scorer: S,
    /// Total SC attempts, the initial one included.
    pub budget: usize,
    pub kernel: Kernel,
}

impl<S: ActionScorer> DlFlipDecoder<S> {
    pub fn new(scorer: S, budget: usize) -> Self {
        DlFlipDecoder { scorer, budget, kernel: Kernel::Exact }
    }

    pub fn decode(&self, llr: &[f64], code: &CodeConfig) -> Result<DlOutcome> {
        if self.budget == 0 {
            return Err(Error::Param("attempt budget must be at least 1".into()));
        }
        if llr.len() != code.block_len() {
            return Err(Error::Param(format!("llr length {} != N", llr.len())));
        }
        let k = code.nonfrozen_count();
        let info = code.info_positions();
        let mut log = SessionLog::default();

        let first = sc_decode_unchecked(llr, code, &FlipSet::empty(), self.kernel);
        let done = first.crc_ok || self.budget == 1;
        log.attempts.push(AttemptRecord {
            flips: FlipSet::empty(),
            result: first,
            parent: None,
            last_flip: None,
            action: if done { LoggedAction::Stop } else { LoggedAction::Order },
        });
        if done {
            return Ok(finish(log));
        }

        let scores = self.score_attempt(&mut log, 0, k)?;
        let root: Vec<usize> = initial_action_order(&scores, self.budget - 1).into_iter().map(|s| info[s]).collect();
        let mut stack = vec![SearchNode { flip_set: FlipSet::empty(), candidates: root, cursor: 0, origin: 0 }];
        let mut tried: HashSet<FlipSet> = HashSet::from([FlipSet::empty()]);

        while log.attempts.len() < self.budget {
            let Some(node) = stack.last_mut() else { break };
            if node.cursor >= node.candidates.len() {
                stack.pop();
                log.implicit_undos += 1;
                continue;
            }
            let candidate = node.candidates[node.cursor];
            node.cursor += 1;
            let flips = node.flip_set.with(candidate);
            if !tried.insert(flips.clone()) {
                continue;
            }
            let origin = node.origin;
            let result = sc_decode_unchecked(llr, code, &flips, self.kernel);
            let success = result.crc_ok;
            log.attempts.push(AttemptRecord {
                flips: flips.clone(),
                result,
                parent: Some(origin),
                last_flip: Some(candidate),
                action: LoggedAction::Stop,
            });
            if success || log.attempts.len() >= self.budget {
                break;
            }
            let last = log.attempts.len() - 1;
            let scores = self.score_attempt(&mut log, last, k)?;
            let flipped_slots: Vec<usize> = flips.indices().iter().filter_map(|&i| code.info_slot(i)).collect();
            match decide_next(&scores, &flipped_slots) {
                Action::Undo => log.attempts[last].action = LoggedAction::Undo,
                Action::ExtendWith(slot) => {
                    log.attempts[last].action = LoggedAction::Extend(info[slot]);
                    let remaining = self.budget - log.attempts.len();
                    let candidates = ranked_slots(&scores, |s| !flipped_slots.contains(&s), remaining)
                        .into_iter()
                        .map(|s| info[s])
                        .collect();
                    stack.push(SearchNode { flip_set: flips, candidates, cursor: 0, origin: last });
                }
            }
        }
        Ok(finish(log))
    }

    fn score_attempt(&self, log: &mut SessionLog, attempt: usize, k: usize) -> Result<ActionScores> {
        let scores = self.scorer.score(&log.attempts[attempt].result.trace);
        log.scorer_calls += 1;
        if scores.probs.len() != k + 1 {
            return Err(Error::Shape(format!("scorer returned {} slots, expected {}", scores.probs.len(), k + 1)));
        }
        Ok(scores)
    }
}

fn finish(log: SessionLog) -> DlOutcome {
    let result = log
        .attempts
        .iter()
        .find(|r| r.result.crc_ok)
        .or(log.attempts.last())
        .map(|r| r.result.clone())
        .expect("at least one attempt");
    DlOutcome { result, log }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(flips: &[f64], undo: f64) -> ActionScores {
        let mut p = flips.to_vec();
        p.push(undo);
        ActionScores::new(p)
    }

    #[test]
    fn order_sorts_descending() {
        assert_eq!(initial_action_order(&scores(&[0.1, 0.6, 0.3], 0.0), 3), vec![1, 2, 0]);
        assert_eq!(initial_action_order(&scores(&[0.25; 4], 0.0), 3), vec![0, 1, 2]);
        // Undo mass is irrelevant at the root.
        assert_eq!(initial_action_order(&scores(&[0.1, 0.05, 0.2, 0.15], 0.5), 3), vec![2, 3, 0]);
    }

    #[test]
    fn undo_needs_strict_maximum() {
        assert_eq!(decide_next(&scores(&[0.1, 0.2, 0.1, 0.1], 0.5), &[1]), Action::Undo);
        assert_eq!(decide_next(&scores(&[0.1, 0.4, 0.05, 0.05], 0.4), &[1]), Action::ExtendWith(0));
        assert_eq!(decide_next(&scores(&[0.1, 0.3, 0.2, 0.1], 0.3), &[2]), Action::ExtendWith(1));
    }

    #[test]
    fn extension_skips_flipped_slots() {
        // Bit 2 flipped, bit 3 is the best remaining.
        assert_eq!(decide_next(&scores(&[0.05, 0.1, 0.4, 0.3], 0.15), &[2]), Action::ExtendWith(3));
    }
}
