//! A small convolutional I/Q classifier with exact reverse-mode gradients.
//!
//! Layer stack (input is a `2 x N` tensor, row 0 = I, row 1 = Q):
//!
//! | layer  | shape                                           |
//! |--------|-------------------------------------------------|
//! | conv1  | `C1` filters `1 x K`, shared across both rows, valid, ReLU |
//! | pool1  | max `1 x 2`, stride 1 along time                |
//! | conv2  | `C2` filters `2 x K` over all `C1` maps (collapses the I/Q rows), ReLU |
//! | pool2  | max `1 x 2`, stride 1                           |
//! | dense  | `U` units, ReLU                                 |
//! | output | `D` logits, softmax                             |
//!
//! ReLU's subgradient at 0 is 0 and max-pool ties resolve to the lower index,
//! so gradients are deterministic everywhere.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::seed;
use crate::signal::{IqSequence, C64};

const WEIGHT_MAGIC: &[u8; 4] = b"PFNW";
const WEIGHT_VERSION: u32 = 1;
// Examples per gradient chunk; chunk results are reduced in index order so the
// sum does not depend on how many threads ran.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_len: usize,
    pub classes: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel: usize,
    pub dense_units: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_len: 288,
            classes: 5,
            conv1_filters: 50,
            conv2_filters: 50,
            kernel: 7,
            dense_units: 256,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Dims {
    n: usize,
    d: usize,
    c1: usize,
    c2: usize,
    k: usize,
    u: usize,
    l1: usize,
    p1: usize,
    l2: usize,
    p2: usize,
    flat: usize,
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    w4: usize,
    b4: usize,
    total: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 1 || self.conv1_filters < 1 || self.conv2_filters < 1 || self.dense_units < 1 || self.kernel < 1 {
            return Err(invalid("all layer sizes must be positive"));
        }
        if self.input_len < 2 * self.kernel + 1 {
            return Err(invalid(format!(
                "input length {} too short for kernel {} (need >= {})",
                self.input_len,
                self.kernel,
                2 * self.kernel + 1
            )));
        }
        Ok(())
    }

    fn dims(&self) -> Dims {
        let l1 = self.input_len - self.kernel + 1;
        let p1 = l1 - 1;
        let l2 = p1 - self.kernel + 1;
        let p2 = l2 - 1;
        Dims {
            n: self.input_len,
            d: self.classes,
            c1: self.conv1_filters,
            c2: self.conv2_filters,
            k: self.kernel,
            u: self.dense_units,
            l1,
            p1,
            l2,
            p2,
            flat: self.conv2_filters * p2,
        }
    }

    fn offsets(&self) -> Offsets {
        let m = self.dims();
        let w1 = 0;
        let b1 = w1 + m.c1 * m.k;
        let w2 = b1 + m.c1;
        let b2 = w2 + m.c2 * m.c1 * 2 * m.k;
        let w3 = b2 + m.c2;
        let b3 = w3 + m.u * m.flat;
        let w4 = b3 + m.u;
        let b4 = w4 + m.d * m.u;
        Offsets {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            w4,
            b4,
            total: b4 + m.d,
        }
    }

    pub fn param_count(&self) -> usize {
        self.offsets().total
    }
}

/// Scalar function of the class probabilities whose input gradient is wanted.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `f_A(x)`.
    Activation(usize),
    /// `ln f_d(x)`.
    LogActivation(usize),
    /// `sum_d w_d f_d(x)`.
    Weighted(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: IqSequence,
    pub label: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            l2_lambda: 1e-4,
            epochs: 10,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.l2_lambda >= 0.0) || self.batch_size == 0 {
            return Err(invalid("learning_rate must be > 0, l2_lambda >= 0, batch_size >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss before any update.
    pub initial_loss: f64,
    /// Mean training loss observed during each epoch.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub weights_sha256: String,
}

/// Adam moments for a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Descent step: `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroNet {
    arch: Architecture,
    params: Vec<f64>,
    frozen: bool,
}

struct Cache {
    x: Vec<f64>,      // [2][n]
    a1: Vec<f64>,     // [c1][2][l1], post-ReLU
    p1: Vec<f64>,     // [c1][2][p1]
    p1_right: Vec<bool>,
    a2: Vec<f64>,     // [c2][l2], post-ReLU
    p2: Vec<f64>,     // [c2][p2]
    p2_right: Vec<bool>,
    h3: Vec<f64>,     // [u], post-ReLU
    probs: Vec<f64>,  // [d]
    logits: Vec<f64>, // [d]
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..n {
        s += a[j] * b[j];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn pool_forward(input: &[f64], out: &mut [f64], right: &mut [bool]) {
    for t in 0..out.len() {
        let (a, b) = (input[t], input[t + 1]);
        // Ties go to the lower index.
        if b > a {
            out[t] = b;
            right[t] = true;
        } else {
            out[t] = a;
            right[t] = false;
        }
    }
}

fn pool_backward(dout: &[f64], right: &[bool], din: &mut [f64]) {
    for t in 0..dout.len() {
        din[t + usize::from(right[t])] += dout[t];
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax(logits: &[f64], class: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits[class] - lse
}

impl MicroNet {
    /// He-uniform weights, zero biases, seeded.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let m = arch.dims();
        let o = arch.offsets();
        let mut params = vec![0.0; o.total];
        let mut rng = seed::rng(seed);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize| {
            let lim = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.random_range(-lim..lim);
            }
        };
        fill(o.w1..o.b1, m.k);
        fill(o.w2..o.b2, m.c1 * 2 * m.k);
        fill(o.w3..o.b3, m.flat);
        fill(o.w4..o.b4, m.u);
        Ok(Self {
            arch,
            params,
            frozen: false,
        })
    }

    /// Zeroes the output layer, which makes every prediction uniform.
    pub fn with_zero_head(mut self) -> Self {
        let o = self.arch.offsets();
        self.params[o.w4..o.total].iter_mut().for_each(|p| *p = 0.0);
        self
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>, frozen: bool) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid("non-finite weight"));
        }
        Ok(Self { arch, params, frozen })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    fn check_input(&self, x: &IqSequence) -> Result<()> {
        if x.len() != self.arch.input_len {
            return Err(invalid(format!(
                "input has {} samples, network expects {}",
                x.len(),
                self.arch.input_len
            )));
        }
        Ok(())
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.arch.classes {
            return Err(invalid(format!("class {class} out of range 0..{}", self.arch.classes)));
        }
        Ok(())
    }

    fn forward_cache(&self, x: &IqSequence) -> Cache {
        let m = self.arch.dims();
        let o = self.arch.offsets();
        let p = &self.params;

        let mut xr = vec![0.0; 2 * m.n];
        for (i, s) in x.samples().iter().enumerate() {
            xr[i] = s.re;
            xr[m.n + i] = s.im;
        }

        let mut a1 = vec![0.0; m.c1 * 2 * m.l1];
        for c in 0..m.c1 {
            let w = &p[o.w1 + c * m.k..o.w1 + (c + 1) * m.k];
            let b = p[o.b1 + c];
            for r in 0..2 {
                let out = &mut a1[(c * 2 + r) * m.l1..(c * 2 + r + 1) * m.l1];
                out.iter_mut().for_each(|v| *v = b);
                let row = &xr[r * m.n..(r + 1) * m.n];
                for (k, &wk) in w.iter().enumerate() {
                    axpy(wk, &row[k..k + m.l1], out);
                }
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }

        let mut p1 = vec![0.0; m.c1 * 2 * m.p1];
        let mut p1_right = vec![false; m.c1 * 2 * m.p1];
        for ch in 0..m.c1 * 2 {
            pool_forward(
                &a1[ch * m.l1..(ch + 1) * m.l1],
                &mut p1[ch * m.p1..(ch + 1) * m.p1],
                &mut p1_right[ch * m.p1..(ch + 1) * m.p1],
            );
        }

        let mut a2 = vec![0.0; m.c2 * m.l2];
        for c2 in 0..m.c2 {
            let out = &mut a2[c2 * m.l2..(c2 + 1) * m.l2];
            out.iter_mut().for_each(|v| *v = p[o.b2 + c2]);
            for c1 in 0..m.c1 {
                for r in 0..2 {
                    let row = &p1[(c1 * 2 + r) * m.p1..(c1 * 2 + r + 1) * m.p1];
                    let wbase = o.w2 + ((c2 * m.c1 + c1) * 2 + r) * m.k;
                    for k in 0..m.k {
                        axpy(p[wbase + k], &row[k..k + m.l2], out);
                    }
                }
            }
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }

        let mut p2 = vec![0.0; m.flat];
        let mut p2_right = vec![false; m.flat];
        for c2 in 0..m.c2 {
            pool_forward(
                &a2[c2 * m.l2..(c2 + 1) * m.l2],
                &mut p2[c2 * m.p2..(c2 + 1) * m.p2],
                &mut p2_right[c2 * m.p2..(c2 + 1) * m.p2],
            );
        }

        let h3: Vec<f64> = (0..m.u)
            .map(|u| (p[o.b3 + u] + dot(&p[o.w3 + u * m.flat..o.w3 + (u + 1) * m.flat], &p2)).max(0.0))
            .collect();

        let logits: Vec<f64> = (0..m.d)
            .map(|d| p[o.b4 + d] + dot(&p[o.w4 + d * m.u..o.w4 + (d + 1) * m.u], &h3))
            .collect();
        let probs = softmax(&logits);

        Cache {
            x: xr,
            a1,
            p1,
            p1_right,
            a2,
            p2,
            p2_right,
            h3,
            probs,
            logits,
        }
    }

    /// Back-propagates `dlogits`. Accumulates parameter gradients into
    /// `param_grad` when given; returns the input gradient when `want_input`.
    fn backward(&self, cache: &Cache, dlogits: &[f64], mut param_grad: Option<&mut [f64]>, want_input: bool) -> Option<Vec<C64>> {
        let m = self.arch.dims();
        let o = self.arch.offsets();
        let p = &self.params;

        let mut dh = vec![0.0; m.u];
        for d in 0..m.d {
            axpy(dlogits[d], &p[o.w4 + d * m.u..o.w4 + (d + 1) * m.u], &mut dh);
        }
        if let Some(g) = param_grad.as_deref_mut() {
            for d in 0..m.d {
                axpy(dlogits[d], &cache.h3, &mut g[o.w4 + d * m.u..o.w4 + (d + 1) * m.u]);
                g[o.b4 + d] += dlogits[d];
            }
        }
        for (g, h) in dh.iter_mut().zip(&cache.h3) {
            if *h <= 0.0 {
                *g = 0.0;
            }
        }

        let mut dflat = vec![0.0; m.flat];
        for u in 0..m.u {
            if dh[u] == 0.0 {
                continue;
            }
            axpy(dh[u], &p[o.w3 + u * m.flat..o.w3 + (u + 1) * m.flat], &mut dflat);
        }
        if let Some(g) = param_grad.as_deref_mut() {
            for u in 0..m.u {
                if dh[u] == 0.0 {
                    continue;
                }
                axpy(dh[u], &cache.p2, &mut g[o.w3 + u * m.flat..o.w3 + (u + 1) * m.flat]);
                g[o.b3 + u] += dh[u];
            }
        }

        let mut da2 = vec![0.0; m.c2 * m.l2];
        for c2 in 0..m.c2 {
            pool_backward(
                &dflat[c2 * m.p2..(c2 + 1) * m.p2],
                &cache.p2_right[c2 * m.p2..(c2 + 1) * m.p2],
                &mut da2[c2 * m.l2..(c2 + 1) * m.l2],
            );
        }
        for (g, a) in da2.iter_mut().zip(&cache.a2) {
            if *a <= 0.0 {
                *g = 0.0;
            }
        }

        let need_below = want_input || param_grad.is_some();
        let mut dp1 = vec![0.0; m.c1 * 2 * m.p1];
        for c2 in 0..m.c2 {
            let dout = &da2[c2 * m.l2..(c2 + 1) * m.l2];
            if dout.iter().all(|v| *v == 0.0) {
                continue;
            }
            if let Some(g) = param_grad.as_deref_mut() {
                g[o.b2 + c2] += dout.iter().sum::<f64>();
            }
            for c1 in 0..m.c1 {
                for r in 0..2 {
                    let rowi = (c1 * 2 + r) * m.p1;
                    let wbase = o.w2 + ((c2 * m.c1 + c1) * 2 + r) * m.k;
                    for k in 0..m.k {
                        if let Some(g) = param_grad.as_deref_mut() {
                            g[wbase + k] += dot(dout, &cache.p1[rowi + k..rowi + k + m.l2]);
                        }
                        if need_below {
                            axpy(p[wbase + k], dout, &mut dp1[rowi + k..rowi + k + m.l2]);
                        }
                    }
                }
            }
        }

        let mut da1 = vec![0.0; m.c1 * 2 * m.l1];
        for ch in 0..m.c1 * 2 {
            pool_backward(
                &dp1[ch * m.p1..(ch + 1) * m.p1],
                &cache.p1_right[ch * m.p1..(ch + 1) * m.p1],
                &mut da1[ch * m.l1..(ch + 1) * m.l1],
            );
        }
        for (g, a) in da1.iter_mut().zip(&cache.a1) {
            if *a <= 0.0 {
                *g = 0.0;
            }
        }

        let mut dx = if want_input { Some(vec![0.0; 2 * m.n]) } else { None };
        for c in 0..m.c1 {
            for r in 0..2 {
                let dout = &da1[(c * 2 + r) * m.l1..(c * 2 + r + 1) * m.l1];
                if let Some(g) = param_grad.as_deref_mut() {
                    g[o.b1 + c] += dout.iter().sum::<f64>();
                    let row = &cache.x[r * m.n..(r + 1) * m.n];
                    for k in 0..m.k {
                        g[o.w1 + c * m.k + k] += dot(dout, &row[k..k + m.l1]);
                    }
                }
                if let Some(dx) = dx.as_mut() {
                    let drow = &mut dx[r * m.n..(r + 1) * m.n];
                    for k in 0..m.k {
                        axpy(p[o.w1 + c * m.k + k], dout, &mut drow[k..k + m.l1]);
                    }
                }
            }
        }

        dx.map(|dx| (0..m.n).map(|i| C64::new(dx[i], dx[m.n + i])).collect())
    }

    /// Class probabilities `(f_1, ..., f_D)`.
    pub fn forward(&self, x: &IqSequence) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_cache(x).probs)
    }

    pub fn predict(&self, x: &IqSequence) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// `df_A/dx^R[n] + j df_A/dx^I[n]` for every sample.
    pub fn input_gradient(&self, x: &IqSequence, class: usize) -> Result<Vec<C64>> {
        Ok(self.objective_gradient(x, &Objective::Activation(class))?.2)
    }

    /// Returns `(objective value, probabilities, input gradient)`.
    pub fn objective_gradient(&self, x: &IqSequence, objective: &Objective) -> Result<(f64, Vec<f64>, Vec<C64>)> {
        self.check_input(x)?;
        let cache = self.forward_cache(x);
        let f = &cache.probs;
        let (value, dlogits) = match objective {
            Objective::Activation(a) => {
                self.check_class(*a)?;
                let fa = f[*a];
                let dl = (0..f.len())
                    .map(|j| fa * (if j == *a { 1.0 } else { 0.0 } - f[j]))
                    .collect::<Vec<_>>();
                (fa, dl)
            }
            Objective::LogActivation(d) => {
                self.check_class(*d)?;
                let dl = (0..f.len())
                    .map(|j| if j == *d { 1.0 } else { 0.0 } - f[j])
                    .collect::<Vec<_>>();
                (log_softmax(&cache.logits, *d), dl)
            }
            Objective::Weighted(w) => {
                if w.len() != f.len() {
                    return Err(invalid(format!("{} weights for {} classes", w.len(), f.len())));
                }
                let total: f64 = w.iter().zip(f).map(|(a, b)| a * b).sum();
                let dl = (0..f.len()).map(|j| f[j] * (w[j] - total)).collect::<Vec<_>>();
                (total, dl)
            }
        };
        let grad = self.backward(&cache, &dlogits, None, true).expect("input gradient requested");
        Ok((value, cache.probs, grad))
    }

    /// Mean cross-entropy and accuracy over `data` (no regularization term).
    pub fn evaluate(&self, data: &[Example]) -> Result<(f64, f64)> {
        if data.is_empty() {
            return Err(invalid("empty dataset"));
        }
        for ex in data {
            self.check_input(&ex.x)?;
            self.check_class(ex.label)?;
        }
        let stats: Vec<(f64, bool)> = data
            .par_iter()
            .map(|ex| {
                let c = self.forward_cache(&ex.x);
                (-log_softmax(&c.logits, ex.label), argmax(&c.probs) == ex.label)
            })
            .collect();
        let loss = stats.iter().map(|s| s.0).sum::<f64>() / data.len() as f64;
        let acc = stats.iter().filter(|s| s.1).count() as f64 / data.len() as f64;
        Ok((loss, acc))
    }

    /// Summed cross-entropy gradient over `batch` (deterministic reduction order).
    fn batch_gradient(&self, batch: &[&Example]) -> (Vec<f64>, f64) {
        let len = self.params.len();
        let parts: Vec<(Vec<f64>, f64)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; len];
                let mut loss = 0.0;
                for ex in chunk {
                    let cache = self.forward_cache(&ex.x);
                    loss -= log_softmax(&cache.logits, ex.label);
                    let mut dl = cache.probs.clone();
                    dl[ex.label] -= 1.0;
                    self.backward(&cache, &dl, Some(&mut g), false);
                }
                (g, loss)
            })
            .collect();
        let mut total = vec![0.0; len];
        let mut loss = 0.0;
        for (g, l) in parts {
            axpy(1.0, &g, &mut total);
            loss += l;
        }
        (total, loss)
    }

    /// Trains with Adam on cross-entropy plus `l2_lambda * ||W||^2` over the
    /// weight matrices (biases are not regularized).
    pub fn train(&mut self, train: &[Example], test: Option<&[Example]>, cfg: &TrainConfig) -> Result<TrainReport> {
        if self.frozen {
            return Err(Error::InvalidState("cannot train a frozen network".into()));
        }
        if train.is_empty() {
            return Err(invalid("training set is empty"));
        }
        cfg.validate()?;
        let (initial_loss, _) = self.evaluate(train)?;
        let o = self.arch.offsets();
        let weight_ranges = [o.w1..o.b1, o.w2..o.b2, o.w3..o.b3, o.w4..o.b4];
        let mut adam = Adam::new(self.params.len());
        let mut rng = seed::rng(cfg.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut epoch_losses = Vec::with_capacity(cfg.epochs);

        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for idx in order.chunks(cfg.batch_size) {
                let batch: Vec<&Example> = idx.iter().map(|&i| &train[i]).collect();
                let (mut g, loss) = self.batch_gradient(&batch);
                epoch_loss += loss;
                let scale = 1.0 / batch.len() as f64;
                g.iter_mut().for_each(|v| *v *= scale);
                if cfg.l2_lambda > 0.0 {
                    for r in &weight_ranges {
                        for i in r.clone() {
                            g[i] += 2.0 * cfg.l2_lambda * self.params[i];
                        }
                    }
                }
                adam.step(&mut self.params, &g, cfg.learning_rate);
            }
            let mean = epoch_loss / train.len() as f64;
            log::debug!("epoch {epoch}: loss {mean:.5}");
            epoch_losses.push(mean);
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidState("training diverged to non-finite weights".into()));
        }

        let (_, train_accuracy) = self.evaluate(train)?;
        let test_accuracy = match test {
            Some(t) if !t.is_empty() => Some(self.evaluate(t)?.1),
            _ => None,
        };
        Ok(TrainReport {
            initial_loss,
            epoch_losses,
            train_accuracy,
            test_accuracy,
            weights_sha256: self.weights_sha256(),
        })
    }

    fn weight_blob(&self) -> Vec<u8> {
        self.params.iter().flat_map(|p| p.to_le_bytes()).collect()
    }

    /// SHA-256 of the little-endian weight blob, hex encoded.
    pub fn weights_sha256(&self) -> String {
        hex::encode(Sha256::digest(self.weight_blob()))
    }

    /// Versioned weight file: magic, version, JSON header length, JSON header,
    /// then the `f64` weight blob.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = WeightHeader {
            architecture: self.arch.clone(),
            frozen: self.frozen,
            param_count: self.params.len(),
            sha256: self.weights_sha256(),
        };
        let header = serde_json::to_vec(&header)?;
        w.write_all(WEIGHT_MAGIC)?;
        w.write_all(&WEIGHT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&self.weight_blob())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != WEIGHT_MAGIC {
            return Err(Error::Format("not a weight file".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != WEIGHT_VERSION {
            return Err(Error::Format(format!("unsupported weight file version {version}")));
        }
        r.read_exact(&mut word)?;
        let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut header)?;
        let header: WeightHeader = serde_json::from_slice(&header)?;
        let mut blob = Vec::new();
        r.read_to_end(&mut blob)?;
        if blob.len() != header.param_count * 8 {
            return Err(Error::Format(format!(
                "weight blob holds {} bytes, header promises {} parameters",
                blob.len(),
                header.param_count
            )));
        }
        let params = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let net = Self::from_params(header.architecture, params, header.frozen)?;
        if net.weights_sha256() != header.sha256 {
            return Err(Error::Format("weight checksum mismatch".into()));
        }
        Ok(net)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightHeader {
    architecture: Architecture,
    frozen: bool,
    param_count: usize,
    sha256: String,
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
