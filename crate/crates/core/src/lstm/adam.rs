use super::{cast, LstmParams, NetworkConfig, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction; moments have the same layout as the parameters.
#[derive(Clone, Debug)]
pub struct Adam<F> {
    pub config: AdamConfig,
    pub m: LstmParams<F>,
    pub v: LstmParams<F>,
    pub step: u64,
}

impl<F: Real> Adam<F> {
    pub fn new(net: &NetworkConfig, config: AdamConfig) -> Self {
        Adam { config, m: LstmParams::zeros(net), v: LstmParams::zeros(net), step: 0 }
    }

    /// One update with learning rate `lr` (overrides `config.lr`, for schedules).
    pub fn step(&mut self, params: &mut LstmParams<F>, grads: &LstmParams<F>, lr: f64) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2): (F, F) = (cast(c.beta1), cast(c.beta2));
        let (one_b1, one_b2): (F, F) = (cast(1.0 - c.beta1), cast(1.0 - c.beta2));
        let step_size: F = cast(lr / bc1);
        let inv_sqrt_bc2: F = cast(1.0 / bc2.sqrt());
        let eps: F = cast(c.eps);
        let ps = params.tensors_mut();
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((mut p, g), mut m), mut v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            let p = p.as_slice_mut().expect("contiguous");
            let g = g.as_slice().expect("contiguous");
            let m = m.as_slice_mut().expect("contiguous");
            let v = v.as_slice_mut().expect("contiguous");
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                p[i] = p[i] - step_size * m[i] / (v[i].sqrt() * inv_sqrt_bc2 + eps);
            }
        }
    }
}
