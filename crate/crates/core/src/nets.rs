//! Actor and critic MLPs (Linear -> LayerNorm -> ReLU -> Linear) with exact
//! backward passes and Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HIDDEN: usize = 128;
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("input width {got} does not match network width {expected}")]
    Width { expected: usize, got: usize },
    #[error("upstream gradient has {got} entries, network has {expected} outputs")]
    Upstream { expected: usize, got: usize },
    #[error("parameter shapes differ")]
    Shape,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Parameters of one two-layer MLP. `w1` is `d_in × hidden` and `w2` is
/// `hidden × d_out`, both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Mlp {
    /// He-uniform weights, zero biases, unit LayerNorm gain.
    pub fn init(d_in: usize, hidden: usize, d_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b1 = (6.0 / d_in as f64).sqrt();
        let b2 = (6.0 / hidden as f64).sqrt();
        let w1 = (0..d_in * hidden).map(|_| rng.random_range(-b1..=b1)).collect();
        let w2 = (0..hidden * d_out).map(|_| rng.random_range(-b2..=b2)).collect();
        Self {
            d_in,
            hidden,
            d_out,
            w1,
            b1: vec![0.0; hidden],
            ln_gain: vec![1.0; hidden],
            ln_bias: vec![0.0; hidden],
            w2,
            b2: vec![0.0; d_out],
        }
    }

    /// All-zero parameters of the same shape (also used as a gradient buffer).
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d_in, self.hidden, self.d_out)
    }

    pub fn zeros(d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            d_in,
            hidden,
            d_out,
            w1: vec![0.0; d_in * hidden],
            b1: vec![0.0; hidden],
            ln_gain: vec![0.0; hidden],
            ln_bias: vec![0.0; hidden],
            w2: vec![0.0; hidden * d_out],
            b2: vec![0.0; d_out],
        }
    }

    pub fn tensors(&self) -> [&Vec<f64>; 6] {
        [&self.w1, &self.b1, &self.ln_gain, &self.ln_bias, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.ln_gain,
            &mut self.ln_bias,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.d_in == other.d_in && self.hidden == other.hidden && self.d_out == other.d_out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn fill(&mut self, v: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = v);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= k);
        }
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, other: &Mlp, k: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += k * y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward, NetError> {
        if x.len() != self.d_in {
            return Err(NetError::Width {
                expected: self.d_in,
                got: x.len(),
            });
        }
        let h = self.hidden;
        let mut z1 = self.b1.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.w1[i * h..(i + 1) * h];
            for (z, w) in z1.iter_mut().zip(row) {
                *z += xi * w;
            }
        }
        let mean = z1.iter().sum::<f64>() / h as f64;
        let var = z1.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / h as f64;
        let inv_std = 1.0 / (var + LN_EPS).sqrt();
        let xhat: Vec<f64> = z1.iter().map(|z| (z - mean) * inv_std).collect();
        let act: Vec<f64> = xhat
            .iter()
            .zip(self.ln_gain.iter().zip(&self.ln_bias))
            .map(|(x, (g, b))| (g * x + b).max(0.0))
            .collect();
        let mut out = self.b2.clone();
        for (j, &aj) in act.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            let row = &self.w2[j * self.d_out..(j + 1) * self.d_out];
            for (o, w) in out.iter_mut().zip(row) {
                *o += aj * w;
            }
        }
        Ok(Forward {
            input: x.to_vec(),
            xhat,
            inv_std,
            act,
            out,
        })
    }

    /// Accumulates `dL/dθ` into `grads` given `dL/d(out)`.
    pub fn backward(&self, fwd: &Forward, upstream: &[f64], grads: &mut Mlp) -> Result<(), NetError> {
        if upstream.len() != self.d_out {
            return Err(NetError::Upstream {
                expected: self.d_out,
                got: upstream.len(),
            });
        }
        if !grads.same_shape(self) || fwd.input.len() != self.d_in {
            return Err(NetError::Shape);
        }
        let (h, d_out) = (self.hidden, self.d_out);
        for (g, u) in grads.b2.iter_mut().zip(upstream) {
            *g += u;
        }
        let mut da = vec![0.0; h];
        for j in 0..h {
            let row = j * d_out..(j + 1) * d_out;
            let aj = fwd.act[j];
            let mut acc = 0.0;
            for ((gw, w), u) in grads.w2[row.clone()].iter_mut().zip(&self.w2[row]).zip(upstream) {
                *gw += aj * u;
                acc += w * u;
            }
            // ReLU gate: act > 0 iff the pre-activation was positive
            da[j] = if aj > 0.0 { acc } else { 0.0 };
        }
        let mut dxhat = vec![0.0; h];
        for j in 0..h {
            grads.ln_gain[j] += da[j] * fwd.xhat[j];
            grads.ln_bias[j] += da[j];
            dxhat[j] = da[j] * self.ln_gain[j];
        }
        let dz1 = layer_norm_backward(&dxhat, &fwd.xhat, fwd.inv_std);
        for (g, d) in grads.b1.iter_mut().zip(&dz1) {
            *g += d;
        }
        for (i, &xi) in fwd.input.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (g, d) in grads.w1[i * h..(i + 1) * h].iter_mut().zip(&dz1) {
                *g += xi * d;
            }
        }
        Ok(())
    }
}

/// Gradient w.r.t. the LayerNorm input given the gradient w.r.t. the
/// normalized values. The result always sums to zero.
pub fn layer_norm_backward(dxhat: &[f64], xhat: &[f64], inv_std: f64) -> Vec<f64> {
    let n = dxhat.len() as f64;
    let mean_d = dxhat.iter().sum::<f64>() / n;
    let mean_dx = dxhat.iter().zip(xhat).map(|(d, x)| d * x).sum::<f64>() / n;
    dxhat
        .iter()
        .zip(xhat)
        .map(|(d, x)| inv_std * (d - mean_d - x * mean_dx))
        .collect()
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    input: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: f64,
    act: Vec<f64>,
    pub out: Vec<f64>,
}

pub fn init_params(d_in: usize, d_out: usize, seed: u64) -> Mlp {
    Mlp::init(d_in, HIDDEN, d_out, seed)
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn actor_forward(p: &Mlp, s: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NetError> {
    let f = p.forward(s)?;
    let probs = softmax(&f.out);
    Ok((f.out, probs))
}

pub fn critic_forward(p: &Mlp, s: &[f64]) -> Result<f64, NetError> {
    Ok(p.forward(s)?.out[0])
}

pub fn backward(p: &Mlp, s: &[f64], upstream: &[f64]) -> Result<Mlp, NetError> {
    let f = p.forward(s)?;
    let mut g = p.zeros_like();
    p.backward(&f, upstream, &mut g)?;
    Ok(g)
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Mlp,
    pub v: Mlp,
    pub t: u64,
}

impl AdamState {
    pub fn new(p: &Mlp) -> Self {
        Self {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
        }
    }
}

/// Gradient-descent step (minimizes). Non-finite gradients are rejected
/// before anything is modified.
pub fn adam_step(p: &mut Mlp, grads: &Mlp, st: &mut AdamState, lr: f64) -> Result<(), NetError> {
    if !p.same_shape(grads) || !p.same_shape(&st.m) {
        return Err(NetError::Shape);
    }
    if !grads.is_finite() {
        return Err(NetError::NonFinite("gradient"));
    }
    st.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(st.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(st.t as i32);
    let AdamState { m, v, .. } = st;
    for (((pt, gt), mt), vt) in p
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(m.tensors_mut())
        .zip(v.tensors_mut())
    {
        for i in 0..pt.len() {
            let g = gt[i];
            mt[i] = ADAM_BETA1 * mt[i] + (1.0 - ADAM_BETA1) * g;
            vt[i] = ADAM_BETA2 * vt[i] + (1.0 - ADAM_BETA2) * g * g;
            let mhat = mt[i] / bc1;
            let vhat = vt[i] / bc2;
            pt[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}
