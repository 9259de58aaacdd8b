//! Multi-layer LSTM with a fully-connected softmax head.
//!
//! Forward and backward passes run on a mini-batch at once (`B` rows);
//! a single sequence is a batch of one. Gate blocks inside the stacked
//! weight matrices are ordered input, forget, cell candidate, output.

mod adam;
mod checkpoint;

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channel::RngStream;
use crate::{Error, Result};

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// Probabilities are clamped to `[EPS, 1 − EPS]` before taking logs.
pub const LOSS_EPS: f64 = 1e-12;

/// Floating-point element type of a network.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + LinalgScalar + ScalarOperand + AddAssign + MulAssign + Debug + Send + Sync + 'static
{
}
impl Real for f32 {}
impl Real for f64 {}

#[inline]
fn cast<F: Real>(v: f64) -> F {
    F::from_f64(v).expect("representable")
}

/// Which top-layer state feeds the head at the last step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HeadSource {
    /// The long (cell) state.
    #[default]
    Cell,
    /// The short (hidden) state.
    Hidden,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    /// LLRs per time step.
    pub input_chunk: usize,
    /// K + 1 action slots.
    pub output_dim: usize,
    pub dropout: f64,
    pub head_source: HeadSource,
}

impl NetworkConfig {
    pub fn new(num_layers: usize, hidden_size: usize, input_chunk: usize, output_dim: usize) -> Self {
        NetworkConfig {
            num_layers,
            hidden_size,
            input_chunk,
            output_dim,
            dropout: 0.0,
            head_source: HeadSource::Cell,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_size == 0 || self.input_chunk == 0 || self.output_dim < 2 {
            return Err(Error::Param(format!("degenerate network config {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Param(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Weights of one LSTM layer: `z = x·w_x + h·w_h + b`, `z` has 4·H columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<F> {
    pub w_x: Array2<F>,
    pub w_h: Array2<F>,
    pub b: Array1<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<F> {
    pub layers: Vec<LayerParams<F>>,
    /// H × output_dim
    pub head_w: Array2<F>,
    pub head_b: Array1<F>,
}

impl<F: Real> LstmParams<F> {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let h = cfg.hidden_size;
        let layers = (0..cfg.num_layers)
            .map(|l| {
                let input = if l == 0 { cfg.input_chunk } else { h };
                LayerParams {
                    w_x: Array2::zeros((input, 4 * h)),
                    w_h: Array2::zeros((h, 4 * h)),
                    b: Array1::zeros(4 * h),
                }
            })
            .collect();
        LstmParams {
            layers,
            head_w: Array2::zeros((h, cfg.output_dim)),
            head_b: Array1::zeros(cfg.output_dim),
        }
    }

    /// Uniform in ±1/√H, forget-gate bias 1.
    pub fn init(cfg: &NetworkConfig, stream: &RngStream) -> Self {
        let mut p = Self::zeros(cfg);
        let bound = 1.0 / (cfg.hidden_size as f64).sqrt();
        let mut rng = stream.rng();
        for t in p.tensors_mut() {
            let mut t = t;
            t.mapv_inplace(|_| cast(rng.gen_range(-bound..bound)));
        }
        let h = cfg.hidden_size;
        for layer in &mut p.layers {
            layer.b.slice_mut(s![h..2 * h]).fill(F::one());
        }
        p
    }

    /// Parameter tensors in declaration order: per layer `w_x, w_h, b`, then `head_w, head_b`.
    pub fn tensors(&self) -> Vec<ArrayViewD<'_, F>> {
        let mut v = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            v.push(l.w_x.view().into_dyn());
            v.push(l.w_h.view().into_dyn());
            v.push(l.b.view().into_dyn());
        }
        v.push(self.head_w.view().into_dyn());
        v.push(self.head_b.view().into_dyn());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        let mut v = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            v.push(l.w_x.view_mut().into_dyn());
            v.push(l.w_h.view_mut().into_dyn());
            v.push(l.b.view_mut().into_dyn());
        }
        v.push(self.head_w.view_mut().into_dyn());
        v.push(self.head_b.view_mut().into_dyn());
        v
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for l in 0..self.layers.len() {
            v.push(format!("layer{l}.w_x"));
            v.push(format!("layer{l}.w_h"));
            v.push(format!("layer{l}.b"));
        }
        v.push("head.w".into());
        v.push("head.b".into());
        v
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn cast<G: Real>(&self) -> LstmParams<G> {
        let c1 = |a: &Array1<F>| a.mapv(|x| cast::<G>(x.to_f64().expect("finite")));
        let c2 = |a: &Array2<F>| a.mapv(|x| cast::<G>(x.to_f64().expect("finite")));
        LstmParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams { w_x: c2(&l.w_x), w_h: c2(&l.w_h), b: c1(&l.b) })
                .collect(),
            head_w: c2(&self.head_w),
            head_b: c1(&self.head_b),
        }
    }

    fn check_shapes(&self, cfg: &NetworkConfig) -> Result<()> {
        let want = Self::zeros(cfg);
        let ok = self.layers.len() == want.layers.len()
            && self.tensors().iter().zip(want.tensors()).all(|(a, b)| a.shape() == b.shape());
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("parameters do not match network config".into()))
        }
    }
}

/// Softmax output over the K flip slots and the undo slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionScores {
    pub probs: Vec<f64>,
}

impl ActionScores {
    pub fn new(probs: Vec<f64>) -> Self {
        ActionScores { probs }
    }

    /// Number of flip slots (K).
    pub fn flip_slots(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn undo(&self) -> f64 {
        self.probs[self.probs.len() - 1]
    }

    pub fn flip(&self, slot: usize) -> f64 {
        self.probs[slot]
    }
}

/// Activations of one layer at one time step.
#[derive(Clone, Debug)]
pub struct StepCache<F> {
    /// Activated gates, B × 4H (sigmoid, sigmoid, tanh, sigmoid).
    pub gates: Array2<F>,
    pub cell: Array2<F>,
    pub tanh_cell: Array2<F>,
    pub hidden: Array2<F>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<F> {
    pub batch: usize,
    pub steps: usize,
    /// `[layer][step]`
    pub layers: Vec<Vec<StepCache<F>>>,
    /// Input fed to layer `l ≥ 1` at each step (hidden below, after dropout); `[l-1][step]`.
    pub layer_inputs: Vec<Vec<Array2<F>>>,
    /// Inverted-dropout masks on the hidden output of layer `l < L−1`; `[l][step]`.
    pub masks: Vec<Vec<Array2<F>>>,
    /// B × output_dim softmax probabilities.
    pub probs: Array2<f64>,
}

/// Configuration and parameters together.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmNet<F> {
    pub config: NetworkConfig,
    pub params: LstmParams<F>,
}

fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

impl<F: Real> LstmNet<F> {
    pub fn new(config: NetworkConfig, stream: &RngStream) -> Result<Self> {
        config.validate()?;
        let params = LstmParams::init(&config, stream);
        Ok(LstmNet { config, params })
    }

    pub fn from_params(config: NetworkConfig, params: LstmParams<F>) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(LstmNet { config, params })
    }

    /// Sequence steps for a feature row of length `len`.
    pub fn steps_for(&self, len: usize) -> Result<usize> {
        if len == 0 || len % self.config.input_chunk != 0 {
            return Err(Error::Shape(format!(
                "feature length {len} is not a positive multiple of chunk {}",
                self.config.input_chunk
            )));
        }
        Ok(len / self.config.input_chunk)
    }

    /// Batched forward pass over `features` (B × T·chunk). Dropout is active
    /// iff `dropout_rng` is given and the configured rate is positive.
    pub fn forward(&self, features: ArrayView2<F>, mut dropout_rng: Option<&mut ChaCha8Rng>) -> Result<ForwardCache<F>> {
        let cfg = &self.config;
        let (batch, len) = features.dim();
        let steps = self.steps_for(len)?;
        let h = cfg.hidden_size;
        let chunk = cfg.input_chunk;
        let keep = 1.0 - cfg.dropout;
        let use_dropout = cfg.dropout > 0.0 && dropout_rng.is_some();
        let scale: F = cast(1.0 / keep);

        let mut layers: Vec<Vec<StepCache<F>>> = (0..cfg.num_layers).map(|_| Vec::with_capacity(steps)).collect();
        let mut layer_inputs: Vec<Vec<Array2<F>>> = (1..cfg.num_layers).map(|_| Vec::with_capacity(steps)).collect();
        let mut masks: Vec<Vec<Array2<F>>> = Vec::new();
        if use_dropout {
            masks = (1..cfg.num_layers).map(|_| Vec::with_capacity(steps)).collect();
        }
        let zero_state = Array2::<F>::zeros((batch, h));

        for t in 0..steps {
            for l in 0..cfg.num_layers {
                let p = &self.params.layers[l];
                let mut z = Array2::<F>::zeros((batch, 4 * h));
                z.assign(&p.b.view().insert_axis(Axis(0)));
                if l == 0 {
                    let x = features.slice(s![.., t * chunk..(t + 1) * chunk]);
                    general_mat_mul(F::one(), &x, &p.w_x, F::one(), &mut z);
                } else {
                    let x = &layer_inputs[l - 1][t];
                    general_mat_mul(F::one(), x, &p.w_x, F::one(), &mut z);
                }
                let (h_prev, c_prev) = if t == 0 {
                    (&zero_state, &zero_state)
                } else {
                    (&layers[l][t - 1].hidden, &layers[l][t - 1].cell)
                };
                if t > 0 {
                    general_mat_mul(F::one(), h_prev, &p.w_h, F::one(), &mut z);
                }
                let mut cell = Array2::<F>::zeros((batch, h));
                let mut tanh_cell = Array2::<F>::zeros((batch, h));
                let mut hidden = Array2::<F>::zeros((batch, h));
                for r in 0..batch {
                    let mut zr = z.row_mut(r);
                    let zs = zr.as_slice_mut().expect("row-major");
                    let cp = c_prev.row(r);
                    let mut cr = cell.row_mut(r);
                    let mut tr = tanh_cell.row_mut(r);
                    let mut hr = hidden.row_mut(r);
                    for j in 0..h {
                        let i_g = sigmoid(zs[j]);
                        let f_g = sigmoid(zs[h + j]);
                        let g_g = zs[2 * h + j].tanh();
                        let o_g = sigmoid(zs[3 * h + j]);
                        zs[j] = i_g;
                        zs[h + j] = f_g;
                        zs[2 * h + j] = g_g;
                        zs[3 * h + j] = o_g;
                        let c = f_g * cp[j] + i_g * g_g;
                        let tc = c.tanh();
                        cr[j] = c;
                        tr[j] = tc;
                        hr[j] = o_g * tc;
                    }
                }
                if l + 1 < cfg.num_layers {
                    let next_in = if use_dropout {
                        let rng = dropout_rng.as_deref_mut().expect("checked");
                        let mask = Array2::from_shape_simple_fn((batch, h), || {
                            if rng.gen::<f64>() < keep {
                                scale
                            } else {
                                F::zero()
                            }
                        });
                        let dropped = &hidden * &mask;
                        masks[l].push(mask);
                        dropped
                    } else {
                        hidden.clone()
                    };
                    layer_inputs[l].push(next_in);
                }
                layers[l].push(StepCache { gates: z, cell, tanh_cell, hidden });
            }
        }

        let top = &layers[cfg.num_layers - 1][steps - 1];
        let head_in = match cfg.head_source {
            HeadSource::Cell => &top.cell,
            HeadSource::Hidden => &top.hidden,
        };
        let mut logits = Array2::<F>::zeros((batch, cfg.output_dim));
        logits.assign(&self.params.head_b.view().insert_axis(Axis(0)));
        general_mat_mul(F::one(), head_in, &self.params.head_w, F::one(), &mut logits);
        let probs = softmax_rows(&logits);
        Ok(ForwardCache { batch, steps, layers, layer_inputs, masks, probs })
    }

    /// Scores one feature sequence (inference mode).
    pub fn score(&self, features: &[F]) -> Result<ActionScores> {
        let view = ArrayView2::from_shape((1, features.len()), features).map_err(|e| Error::Shape(e.to_string()))?;
        let cache = self.forward(view, None)?;
        Ok(ActionScores::new(cache.probs.row(0).to_vec()))
    }

    /// Gradient of `Σ_b weight_b · E_b` where `E_b` is the summed binary
    /// cross-entropy of row `b` against the one-hot target `labels[b]`.
    /// Returns the weighted loss and the gradients.
    pub fn backward(
        &self,
        features: ArrayView2<F>,
        cache: &ForwardCache<F>,
        labels: &[usize],
        weights: &[f64],
    ) -> Result<(f64, LstmParams<F>)> {
        let cfg = &self.config;
        let batch = cache.batch;
        if features.nrows() != batch || labels.len() != batch || weights.len() != batch {
            return Err(Error::Shape("backward inputs disagree with the cached batch".into()));
        }
        if cache.layers.len() != cfg.num_layers || self.steps_for(features.ncols())? != cache.steps {
            return Err(Error::Shape("stale forward cache".into()));
        }
        let h = cfg.hidden_size;
        let chunk = cfg.input_chunk;
        let steps = cache.steps;
        let mut grads = LstmParams::<F>::zeros(cfg);

        // Head.
        let mut loss = 0.0;
        let mut d_logits = Array2::<F>::zeros((batch, cfg.output_dim));
        for b in 0..batch {
            let probs = cache.probs.row(b);
            let probs = probs.as_slice().expect("row-major");
            let (e, dz) = bce_softmax_grad(probs, labels[b]);
            loss += weights[b] * e;
            for (k, v) in dz.into_iter().enumerate() {
                d_logits[[b, k]] = cast(weights[b] * v);
            }
        }
        let top = &cache.layers[cfg.num_layers - 1][steps - 1];
        let head_in = match cfg.head_source {
            HeadSource::Cell => &top.cell,
            HeadSource::Hidden => &top.hidden,
        };
        general_mat_mul(F::one(), &head_in.t(), &d_logits, F::zero(), &mut grads.head_w);
        grads.head_b = d_logits.sum_axis(Axis(0));
        let mut d_head_in = Array2::<F>::zeros((batch, h));
        general_mat_mul(F::one(), &d_logits, &self.params.head_w.t(), F::zero(), &mut d_head_in);

        // Recurrent carries per layer.
        let mut dh_next: Vec<Array2<F>> = (0..cfg.num_layers).map(|_| Array2::zeros((batch, h))).collect();
        let mut dc_next: Vec<Array2<F>> = (0..cfg.num_layers).map(|_| Array2::zeros((batch, h))).collect();
        match cfg.head_source {
            HeadSource::Cell => dc_next[cfg.num_layers - 1] += &d_head_in,
            HeadSource::Hidden => dh_next[cfg.num_layers - 1] += &d_head_in,
        }
        let zero_state = Array2::<F>::zeros((batch, h));
        let mut dz = Array2::<F>::zeros((batch, 4 * h));

        for t in (0..steps).rev() {
            // Gradient arriving from the layer above at this step.
            let mut d_from_above: Option<Array2<F>> = None;
            for l in (0..cfg.num_layers).rev() {
                let sc = &cache.layers[l][t];
                let c_prev = if t == 0 { &zero_state } else { &cache.layers[l][t - 1].cell };
                let mut dh = std::mem::replace(&mut dh_next[l], Array2::zeros((0, 0)));
                if let Some(above) = d_from_above.take() {
                    dh += &above;
                }
                let dc_carry = &dc_next[l];
                let mut dc_prev = Array2::<F>::zeros((batch, h));
                for r in 0..batch {
                    let gates = sc.gates.row(r);
                    let g = gates.as_slice().expect("row-major");
                    let tc = sc.tanh_cell.row(r);
                    let cp = c_prev.row(r);
                    let dhr = dh.row(r);
                    let dcr = dc_carry.row(r);
                    let mut dzr = dz.row_mut(r);
                    let dzs = dzr.as_slice_mut().expect("row-major");
                    let mut dcp = dc_prev.row_mut(r);
                    for j in 0..h {
                        let (i_g, f_g, g_g, o_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                        let tcj = tc[j];
                        let dc = dcr[j] + dhr[j] * o_g * (F::one() - tcj * tcj);
                        dzs[j] = dc * g_g * i_g * (F::one() - i_g);
                        dzs[h + j] = dc * cp[j] * f_g * (F::one() - f_g);
                        dzs[2 * h + j] = dc * i_g * (F::one() - g_g * g_g);
                        dzs[3 * h + j] = dhr[j] * tcj * o_g * (F::one() - o_g);
                        dcp[j] = dc * f_g;
                    }
                }
                let gl = &mut grads.layers[l];
                let p = &self.params.layers[l];
                if l == 0 {
                    let x = features.slice(s![.., t * chunk..(t + 1) * chunk]);
                    general_mat_mul(F::one(), &x.t(), &dz, F::one(), &mut gl.w_x);
                } else {
                    let x = &cache.layer_inputs[l - 1][t];
                    general_mat_mul(F::one(), &x.t(), &dz, F::one(), &mut gl.w_x);
                    let mut dx = Array2::<F>::zeros((batch, h));
                    general_mat_mul(F::one(), &dz, &p.w_x.t(), F::zero(), &mut dx);
                    if let Some(mask) = cache.masks.get(l - 1) {
                        dx *= &mask[t];
                    }
                    d_from_above = Some(dx);
                }
                gl.b += &dz.sum_axis(Axis(0));
                let mut dh_prev = Array2::<F>::zeros((batch, h));
                if t > 0 {
                    let h_prev = &cache.layers[l][t - 1].hidden;
                    general_mat_mul(F::one(), &h_prev.t(), &dz, F::one(), &mut gl.w_h);
                    general_mat_mul(F::one(), &dz, &p.w_h.t(), F::zero(), &mut dh_prev);
                }
                dh_next[l] = dh_prev;
                dc_next[l] = dc_prev;
            }
        }
        Ok((loss, grads))
    }

    /// Weighted loss only (no gradients).
    pub fn loss(&self, features: ArrayView2<F>, labels: &[usize], weights: &[f64]) -> Result<f64> {
        let cache = self.forward(features, None)?;
        Ok((0..cache.batch)
            .map(|b| weights[b] * cross_entropy_loss_index(cache.probs.row(b).as_slice().expect("row-major"), labels[b]))
            .sum())
    }
}

/// Row-wise softmax, computed in f64.
fn softmax_rows<F: Real>(logits: &Array2<F>) -> Array2<f64> {
    let mut out = logits.mapv(|x| x.to_f64().expect("finite"));
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - m).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    out
}

/// Softmax over a plain slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `E = −Σ_k { t_k ln y_k + (1 − t_k) ln(1 − y_k) }` with `y` clamped to `[ε, 1−ε]`.
pub fn cross_entropy_loss(target: &[f64], output: &[f64]) -> f64 {
    let lo = LOSS_EPS;
    let hi = 1.0 - LOSS_EPS;
    -target
        .iter()
        .zip(output)
        .map(|(&t, &y)| {
            let y = y.clamp(lo, hi);
            t * y.ln() + (1.0 - t) * (1.0 - y).ln()
        })
        .sum::<f64>()
}

/// Probability mass outside slot `k`, summed directly for accuracy near 1.
fn complement(probs: &[f64], k: usize) -> f64 {
    probs.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &p)| p).sum()
}

fn cross_entropy_loss_index(probs: &[f64], label: usize) -> f64 {
    let mut e = 0.0;
    for (k, &y) in probs.iter().enumerate() {
        if k == label {
            e -= y.max(LOSS_EPS).ln();
        } else {
            e -= complement(probs, k).max(LOSS_EPS).ln();
        }
    }
    e
}

/// Loss and gradient w.r.t. the logits for a one-hot target at `label`.
fn bce_softmax_grad(probs: &[f64], label: usize) -> (f64, Vec<f64>) {
    let n = probs.len();
    let mut dy = vec![0.0; n];
    let mut e = 0.0;
    for k in 0..n {
        let y = probs[k];
        if k == label {
            e -= y.max(LOSS_EPS).ln();
            if y >= LOSS_EPS {
                dy[k] = -1.0 / y;
            }
        } else {
            let one_minus = complement(probs, k);
            e -= one_minus.max(LOSS_EPS).ln();
            if one_minus >= LOSS_EPS {
                dy[k] = 1.0 / one_minus;
            }
        }
    }
    let dot: f64 = probs.iter().zip(&dy).map(|(y, d)| y * d).sum();
    let dz = probs.iter().zip(&dy).map(|(&y, &d)| y * (d - dot)).collect();
    (e, dz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_reference_values() {
        assert!((cross_entropy_loss(&[1.0, 0.0], &[0.5, 0.5]) - 1.386_294_361_119_890_6).abs() < 1e-12);
        let third = 1.0 / 3.0;
        let want = -(third.ln() + 2.0 * (2.0f64 / 3.0).ln());
        assert!((cross_entropy_loss(&[1.0, 0.0, 0.0], &[third; 3]) - want).abs() < 1e-12);
        assert!((want - 1.909_542_504_884_438_6).abs() < 1e-9);
        assert!(cross_entropy_loss(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]) < 1e-10);
    }

    #[test]
    fn indexed_loss_matches_dense() {
        let p = softmax(&[0.3, -1.0, 2.0, 0.1]);
        for label in 0..4 {
            let mut t = vec![0.0; 4];
            t[label] = 1.0;
            let a = cross_entropy_loss(&t, &p);
            let b = cross_entropy_loss_index(&p, label);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(&[0.5, 1.5, -2.0]);
        let b = softmax(&[100.5, 101.5, 98.0]);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_params_give_uniform_output() {
        let cfg = NetworkConfig::new(2, 3, 4, 5);
        let net = LstmNet::<f64>::from_params(cfg.clone(), LstmParams::zeros(&cfg)).unwrap();
        let feats: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
        let view = ArrayView2::from_shape((1, 16), &feats).unwrap();
        let cache = net.forward(view, None).unwrap();
        for layer in &cache.layers {
            for st in layer {
                assert!(st.gates.iter().enumerate().all(|(j, &g)| if (6..9).contains(&j) { g == 0.0 } else { g == 0.5 }));
                assert!(st.cell.iter().all(|&c| c == 0.0));
            }
        }
        assert!(cache.probs.iter().all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn scalar_hand_computed_step() {
        // One layer, H = 1, chunk = 1, one step; gates i, f, g, o.
        let cfg = NetworkConfig::new(1, 1, 1, 2);
        let mut p = LstmParams::<f64>::zeros(&cfg);
        p.layers[0].w_x = Array2::from_shape_vec((1, 4), vec![0.5, -0.3, 0.8, 1.2]).unwrap();
        p.layers[0].b = Array1::from(vec![0.1, 0.2, -0.1, 0.0]);
        let net = LstmNet::from_params(cfg, p).unwrap();
        let x = 0.7;
        let cache = net.forward(ArrayView2::from_shape((1, 1), &[x]).unwrap(), None).unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * x + 0.1);
        let g = (0.8 * x - 0.1f64).tanh();
        let o = sig(1.2 * x);
        let c = i * g;
        let hidden = o * c.tanh();
        let st = &cache.layers[0][0];
        assert!((st.cell[[0, 0]] - c).abs() < 1e-15);
        assert!((st.hidden[[0, 0]] - hidden).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let cfg = NetworkConfig::new(1, 2, 4, 3);
        let net = LstmNet::<f64>::new(cfg, &RngStream::new(0, 0)).unwrap();
        assert!(net.score(&[0.0; 6]).is_err());
        assert!(net.score(&[]).is_err());
        let mut bad = NetworkConfig::new(1, 2, 4, 3);
        bad.dropout = 1.0;
        assert!(bad.validate().is_err());
    }
}
