//! Dataset generation and the two training stages.
//!
//! Stage 1 learns to point at the first wrong non-frozen bit of a failed SC
//! pass. Stage 2 runs the flip controller with the current network, labels
//! every visited state (undo when the flip that led there was wrong) and
//! retrains, repeatedly.

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::channel::{snr_to_sigma, RngStream};
use crate::dataset::{Dataset, Split, TrainingSample};
use crate::dlflip::{ActionScorer, DlFlipDecoder};
use crate::lstm::{ActionScores, Adam, AdamConfig, LstmNet, NetworkConfig};
use crate::polar::CodeConfig;
use crate::sc::{first_error_index, sc_decode, FlipSet, Kernel};
use crate::trial::{collect_ordered, Trial};
use crate::{Error, Result};

/// Magnitudes above this are clamped before scaling to `[0, 1]`.
pub const FEATURE_CLAMP: f64 = 25.0;

/// Rows per forward pass when only evaluating.
const EVAL_BATCH: usize = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FeatureMode {
    /// `min(|α|, 25) / 25`.
    #[default]
    Normalized,
    /// Plain `|α|`.
    Raw,
}

pub fn feature_encode(trace: &[f64]) -> Vec<f32> {
    feature_encode_with(trace, FeatureMode::Normalized)
}

pub fn feature_encode_with(trace: &[f64], mode: FeatureMode) -> Vec<f32> {
    trace
        .iter()
        .map(|a| match mode {
            FeatureMode::Normalized => (a.abs().min(FEATURE_CLAMP) / FEATURE_CLAMP) as f32,
            FeatureMode::Raw => a.abs() as f32,
        })
        .collect()
}

/// Sizes and schedule of one training stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageConfig {
    pub training_size: usize,
    pub validation_size: usize,
    pub minibatch: usize,
    pub epochs: usize,
    /// Stage-2 regenerate-and-retrain rounds; ignored by stage 1.
    pub iterations: usize,
    pub dropout: f64,
    pub input_chunk: usize,
    pub learning_rate: f64,
    /// Halve the learning rate every this many epochs (0 disables).
    pub lr_halving_epochs: usize,
    /// Attempt budget used by the controller while generating stage-2 data.
    pub budget: usize,
}

impl StageConfig {
    /// Full-scale stage-1 schedule.
    pub fn stage1_full() -> Self {
        StageConfig {
            training_size: 1_600_000,
            validation_size: 50_000,
            minibatch: 1000,
            epochs: 30,
            iterations: 0,
            dropout: 0.05,
            input_chunk: 4,
            learning_rate: 1e-3,
            lr_halving_epochs: 10,
            budget: 5,
        }
    }

    /// Full-scale stage-2 schedule.
    pub fn stage2_full() -> Self {
        StageConfig { epochs: 20, iterations: 60, ..Self::stage1_full() }
    }

    /// Reduced stage-1 budget that fits a single desktop core.
    pub fn stage1_desk() -> Self {
        StageConfig {
            training_size: 200_000,
            validation_size: 20_000,
            minibatch: 250,
            epochs: 12,
            lr_halving_epochs: 4,
            ..Self::stage1_full()
        }
    }

    pub fn stage2_desk() -> Self {
        StageConfig {
            training_size: 20_000,
            validation_size: 4_000,
            minibatch: 250,
            epochs: 2,
            iterations: 10,
            lr_halving_epochs: 0,
            learning_rate: 3e-4,
            ..Self::stage1_full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.training_size == 0 || self.minibatch == 0 || self.input_chunk == 0 || self.budget == 0 {
            return Err(Error::Param(format!("stage sizes must be positive: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(self.learning_rate > 0.0) {
            return Err(Error::Param(format!("bad dropout or learning rate: {self:?}")));
        }
        Ok(())
    }
}

/// Network layout for `code` with the stage's chunking and dropout.
pub fn network_for(code: &CodeConfig, num_layers: usize, hidden_size: usize, stage: &StageConfig) -> NetworkConfig {
    NetworkConfig {
        dropout: stage.dropout,
        ..NetworkConfig::new(num_layers, hidden_size, stage.input_chunk, code.nonfrozen_count() + 1)
    }
}

fn check_trace_len(code: &CodeConfig, stage_chunk: usize) -> Result<()> {
    if code.block_len() % stage_chunk != 0 {
        return Err(Error::Param(format!("N = {} is not a multiple of chunk {stage_chunk}", code.block_len())));
    }
    Ok(())
}

/// Failed SC passes labelled with their first wrong non-frozen bit.
pub fn gen_stage1_dataset(code: &CodeConfig, ebn0_db: f64, count: usize, stream: &RngStream, split: Split) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Param("target sample count must be at least 1".into()));
    }
    let sigma = snr_to_sigma(ebn0_db, code.rate())?;
    let samples = collect_ordered(count, |_| 1, |id| {
        let trial = Trial::generate(code, sigma, stream, id);
        let r = sc_decode(&trial.llr, code, &FlipSet::empty(), Kernel::Exact).expect("valid trial");
        if r.crc_ok {
            return Vec::new();
        }
        let first = first_error_index(&r.u_hat, &trial.u, code).expect("CRC failure implies an error");
        vec![TrainingSample {
            trial_id: id as u32,
            features: feature_encode(&r.trace),
            label: code.info_slot(first).expect("errors are on non-frozen bits") as u16,
        }]
    })?;
    let mut ds = Dataset::new(code, ebn0_db, split, true);
    ds.samples = samples;
    Ok(ds)
}

/// Network wrapped as an [`ActionScorer`] over raw decision-LLR traces.
#[derive(Clone, Debug)]
pub struct NetScorer {
    pub net: LstmNet<f32>,
    pub mode: FeatureMode,
}

impl NetScorer {
    pub fn new(net: LstmNet<f32>, code: &CodeConfig) -> Result<Self> {
        if net.config.output_dim != code.nonfrozen_count() + 1 {
            return Err(Error::Shape(format!(
                "network has {} outputs, code needs K + 1 = {}",
                net.config.output_dim,
                code.nonfrozen_count() + 1
            )));
        }
        net.steps_for(code.block_len())?;
        Ok(NetScorer { net, mode: FeatureMode::Normalized })
    }

    /// Scores many traces with batched forward passes.
    pub fn score_batch(&self, traces: &[&[f64]]) -> Vec<ActionScores> {
        let mut out = Vec::with_capacity(traces.len());
        for chunk in traces.chunks(EVAL_BATCH) {
            let len = chunk[0].len();
            let mut x = Array2::<f32>::zeros((chunk.len(), len));
            for (mut row, t) in x.rows_mut().into_iter().zip(chunk) {
                row.assign(&ndarray::ArrayView1::from(&feature_encode_with(t, self.mode)[..]));
            }
            let cache = self.net.forward(x.view(), None).expect("trace length checked at construction");
            out.extend(cache.probs.rows().into_iter().map(|r| ActionScores::new(r.to_vec())));
        }
        out
    }
}

impl ActionScorer for NetScorer {
    fn score(&self, trace: &[f64]) -> ActionScores {
        self.net.score(&feature_encode_with(trace, self.mode)).expect("trace length checked at construction")
    }
}

/// Labels every failed attempt of one controller session.
///
/// The first attempt and any attempt reached from a healthy parent by
/// flipping that parent's true first error are healthy and labelled with
/// their own first error; every other attempt is labelled undo.
pub fn label_session(code: &CodeConfig, trial: &Trial, scorer: &impl ActionScorer, budget: usize) -> Vec<TrainingSample> {
    let decoder = DlFlipDecoder::new(scorer, budget);
    let outcome = decoder.decode(&trial.llr, code).expect("valid trial");
    let attempts = &outcome.log.attempts;
    let first_errors: Vec<Option<usize>> =
        attempts.iter().map(|a| first_error_index(&a.result.u_hat, &trial.u, code)).collect();
    let undo = code.nonfrozen_count() as u16;
    // A sick parent has its wrong flip as its true first error, and that
    // bit can never be flipped again, so sickness is inherited.
    let mut healthy = Vec::with_capacity(attempts.len());
    for a in attempts {
        let h = match (a.parent, a.last_flip) {
            (Some(p), Some(flip)) => healthy[p] && first_errors[p] == Some(flip),
            _ => true,
        };
        healthy.push(h);
    }
    attempts
        .iter()
        .zip(&first_errors)
        .zip(&healthy)
        .filter(|((a, _), _)| !a.result.crc_ok)
        .filter_map(|((a, own_first), &healthy)| {
            let label = if healthy { code.info_slot((*own_first)?)? as u16 } else { undo };
            Some(TrainingSample { trial_id: trial.id as u32, features: feature_encode(&a.result.trace), label })
        })
        .collect()
}

/// On-policy states of the controller driven by `scorer`, with undo labels
/// for states reached through a wrong flip. Samples of one trial are
/// contiguous and never split, so the count may overshoot by less than
/// `budget` samples.
pub fn gen_stage2_dataset(
    scorer: &(impl ActionScorer + Sync),
    code: &CodeConfig,
    ebn0_db: f64,
    count: usize,
    budget: usize,
    stream: &RngStream,
    split: Split,
) -> Result<Dataset> {
    if count == 0 || budget == 0 {
        return Err(Error::Param("sample count and budget must be at least 1".into()));
    }
    let sigma = snr_to_sigma(ebn0_db, code.rate())?;
    let groups = collect_ordered(count, Vec::len, |id| {
        let trial = Trial::generate(code, sigma, stream, id);
        let samples = label_session(code, &trial, scorer, budget);
        if samples.is_empty() {
            Vec::new()
        } else {
            vec![samples]
        }
    })?;
    let mut ds = Dataset::new(code, ebn0_db, split, true);
    ds.samples = groups.into_iter().flatten().collect();
    Ok(ds)
}

/// Loss of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean per-trial loss over the epoch's minibatches (dropout active).
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub net: LstmNet<f32>,
    pub initial_validation_loss: f64,
    pub curve: Vec<EpochStats>,
    pub best_epoch: usize,
}

fn check_compatible(net: &LstmNet<f32>, ds: &Dataset) -> Result<()> {
    if net.config.output_dim != ds.fingerprint.nonfrozen_count + 1 {
        return Err(Error::Shape(format!(
            "network has {} outputs, dataset has K + 1 = {}",
            net.config.output_dim,
            ds.fingerprint.nonfrozen_count + 1
        )));
    }
    net.steps_for(ds.fingerprint.block_len)?;
    Ok(())
}

fn batch_matrix(ds: &Dataset, rows: impl Iterator<Item = usize>, len: usize) -> (Array2<f32>, Vec<usize>) {
    let rows: Vec<usize> = rows.collect();
    let mut x = Array2::<f32>::zeros((rows.len(), len));
    let mut labels = Vec::with_capacity(rows.len());
    for (mut row, &i) in x.rows_mut().into_iter().zip(&rows) {
        row.assign(&ndarray::ArrayView1::from(&ds.samples[i].features[..]));
        labels.push(ds.samples[i].label as usize);
    }
    (x, labels)
}

/// Mean per-trial loss (each trial's samples summed), dropout off.
pub fn dataset_loss(net: &LstmNet<f32>, ds: &Dataset) -> Result<f64> {
    check_compatible(net, ds)?;
    let groups = ds.groups();
    if groups.is_empty() {
        return Ok(0.0);
    }
    let len = ds.fingerprint.block_len;
    let mut total = 0.0;
    for start in (0..ds.len()).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(ds.len());
        let (x, labels) = batch_matrix(ds, start..end, len);
        total += net.loss(x.view(), &labels, &vec![1.0; end - start])?;
    }
    Ok(total / groups.len() as f64)
}

/// Minibatch Adam on the summed binary cross-entropy, one weight per trial
/// group so that a trial's samples add up to a sequence loss. Returns the
/// parameters with the lowest validation loss (the last epoch's when the
/// validation set is empty).
pub fn train_supervised(
    net: LstmNet<f32>,
    train: &Dataset,
    validation: &Dataset,
    stage: &StageConfig,
    stream: &RngStream,
) -> Result<TrainOutcome> {
    stage.validate()?;
    if train.is_empty() {
        return Err(Error::Param("empty training set".into()));
    }
    check_compatible(&net, train)?;
    check_compatible(&net, validation)?;
    let len = train.fingerprint.block_len;
    let mut net = net;
    net.config.dropout = stage.dropout;
    let mut adam = Adam::new(&net.config, AdamConfig { lr: stage.learning_rate, ..AdamConfig::default() });
    let mut groups = train.groups();
    let initial_validation_loss = if validation.is_empty() { f64::NAN } else { dataset_loss(&net, validation)? };
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut curve = Vec::with_capacity(stage.epochs);

    for epoch in 1..=stage.epochs {
        let lr = match stage.lr_halving_epochs {
            0 => stage.learning_rate,
            h => stage.learning_rate * 0.5f64.powi(((epoch - 1) / h) as i32),
        };
        let epoch_stream = stream.substream(epoch as u64);
        groups.shuffle(&mut epoch_stream.substream(0).rng());
        let mut dropout_rng = epoch_stream.substream(1).rng();
        let mut epoch_loss = 0.0;
        let mut g = 0;
        while g < groups.len() {
            let mut rows = Vec::with_capacity(stage.minibatch);
            let mut weights = Vec::with_capacity(stage.minibatch);
            let first = g;
            while g < groups.len() && rows.len() < stage.minibatch {
                rows.extend(groups[g].clone());
                g += 1;
            }
            let batch_groups = g - first;
            for r in &groups[first..g] {
                weights.extend(std::iter::repeat(1.0 / batch_groups as f64).take(r.len()));
            }
            let (x, labels) = batch_matrix(train, rows.into_iter(), len);
            let cache = net.forward(x.view(), Some(&mut dropout_rng))?;
            let (loss, grads) = net.backward(x.view(), &cache, &labels, &weights)?;
            epoch_loss += loss * batch_groups as f64;
            adam.step(&mut net.params, &grads, lr);
        }
        if !net.params.is_finite() {
            return Err(Error::Param(format!("parameters diverged in epoch {epoch}")));
        }
        let train_loss = epoch_loss / groups.len() as f64;
        let validation_loss = if validation.is_empty() { train_loss } else { dataset_loss(&net, validation)? };
        log::info!("epoch {epoch}: lr {lr:.2e} train {train_loss:.4} validation {validation_loss:.4}");
        curve.push(EpochStats { epoch, learning_rate: lr, train_loss, validation_loss });
        if validation.is_empty() || validation_loss < best.0 {
            best = (validation_loss, net.clone(), epoch);
        }
    }
    let (_, best_net, best_epoch) = best;
    Ok(TrainOutcome { net: best_net, initial_validation_loss, curve, best_epoch })
}

/// How often argmax-with-ties-to-flip picks the labelled action.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActionAccuracy {
    pub undo_samples: usize,
    pub undo_correct: usize,
    pub flip_samples: usize,
    pub flip_correct: usize,
}

impl ActionAccuracy {
    pub fn undo_accuracy(&self) -> f64 {
        ratio(self.undo_correct, self.undo_samples)
    }

    pub fn flip_accuracy(&self) -> f64 {
        ratio(self.flip_correct, self.flip_samples)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Predicted action under the controller's rule: undo only when strictly
/// larger than every flip score, otherwise the best flip slot.
pub fn predicted_action(scores: &ActionScores) -> usize {
    let k = scores.flip_slots();
    let best = (0..k)
        .max_by(|&a, &b| scores.flip(a).total_cmp(&scores.flip(b)).then(b.cmp(&a)))
        .unwrap_or(0);
    if scores.undo() > scores.flip(best) {
        k
    } else {
        best
    }
}

pub fn action_accuracy(net: &LstmNet<f32>, ds: &Dataset) -> Result<ActionAccuracy> {
    check_compatible(net, ds)?;
    let undo = ds.undo_label() as usize;
    let len = ds.fingerprint.block_len;
    let mut acc = ActionAccuracy::default();
    for start in (0..ds.len()).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(ds.len());
        let (x, labels) = batch_matrix(ds, start..end, len);
        let cache = net.forward(x.view(), None)?;
        for (row, &label) in cache.probs.rows().into_iter().zip(&labels) {
            let hit = predicted_action(&ActionScores::new(row.to_vec())) == label;
            if label == undo {
                acc.undo_samples += 1;
                acc.undo_correct += usize::from(hit);
            } else {
                acc.flip_samples += 1;
                acc.flip_correct += usize::from(hit);
            }
        }
    }
    Ok(acc)
}

/// Per-iteration summary of stage 2.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub training_samples: usize,
    pub undo_fraction: f64,
    pub validation_loss: f64,
    pub accuracy: ActionAccuracy,
}

#[derive(Clone, Debug)]
pub struct Stage2Outcome {
    pub net: LstmNet<f32>,
    pub iterations: Vec<IterationStats>,
}

/// Regenerates on-policy data with the current network and retrains on it,
/// `stage.iterations` times.
pub fn train_stage2(
    net: LstmNet<f32>,
    code: &CodeConfig,
    ebn0_db: f64,
    stage: &StageConfig,
    stream: &RngStream,
) -> Result<Stage2Outcome> {
    stage.validate()?;
    check_trace_len(code, net.config.input_chunk)?;
    let mut net = net;
    let mut iterations = Vec::with_capacity(stage.iterations);
    for it in 1..=stage.iterations {
        let it_stream = stream.substream(it as u64);
        let scorer = NetScorer::new(net.clone(), code)?;
        let train = gen_stage2_dataset(
            &scorer,
            code,
            ebn0_db,
            stage.training_size,
            stage.budget,
            &it_stream.substream(0),
            Split::Training,
        )?;
        let validation = if stage.validation_size == 0 {
            Dataset::new(code, ebn0_db, Split::Validation, true)
        } else {
            gen_stage2_dataset(
                &scorer,
                code,
                ebn0_db,
                stage.validation_size,
                stage.budget,
                &it_stream.substream(1),
                Split::Validation,
            )?
        };
        let out = train_supervised(net, &train, &validation, stage, &it_stream.substream(2))?;
        net = out.net;
        let validation_loss = out.curve.get(out.best_epoch.saturating_sub(1)).map_or(f64::NAN, |e| e.validation_loss);
        let accuracy = action_accuracy(&net, &validation)?;
        log::info!(
            "stage 2 iteration {it}: {} samples, undo fraction {:.3}, undo acc {:.3}, flip acc {:.3}",
            train.len(),
            train.undo_fraction(),
            accuracy.undo_accuracy(),
            accuracy.flip_accuracy()
        );
        iterations.push(IterationStats {
            iteration: it,
            training_samples: train.len(),
            undo_fraction: train.undo_fraction(),
            validation_loss,
            accuracy,
        });
    }
    Ok(Stage2Outcome { net, iterations })
}
