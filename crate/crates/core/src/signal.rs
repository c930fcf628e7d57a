//! Complex baseband sequences, FIR filtering, the unitary DFT pair and the
//! tap-distance metric.
//!
//! Filtering follows `y[n] = sum_k phi_k x[n-k]`. Two boundary conventions are
//! supported: [`BoundaryMode::CausalZeroPad`] treats samples before the start of
//! the frame as zero, [`BoundaryMode::Circular`] wraps the index modulo `N` so
//! that filtering is exactly a pointwise product in the DFT domain.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type C64 = Complex64;

/// Boundary convention for FIR filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    #[default]
    CausalZeroPad,
    Circular,
}

fn all_finite(values: &[C64]) -> bool {
    values.iter().all(|c| c.re.is_finite() && c.im.is_finite())
}

/// A finite, non-empty complex baseband waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<C64>", into = "Vec<C64>")]
pub struct IqSequence {
    samples: Vec<C64>,
}

impl IqSequence {
    pub fn new(samples: Vec<C64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("I/Q sequence must contain at least one sample"));
        }
        if !all_finite(&samples) {
            return Err(invalid("I/Q sequence contains a non-finite sample"));
        }
        Ok(Self { samples })
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![C64::new(0.0, 0.0); len])
    }

    /// Builds a sequence from interleaved `I0, Q0, I1, Q1, ...` values.
    pub fn from_interleaved(values: &[f64]) -> Result<Self> {
        if values.len() % 2 != 0 {
            return Err(invalid("interleaved I/Q data must have even length"));
        }
        Self::new(values.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.samples
    }

    pub fn power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * factor).collect(),
        }
    }
}

impl TryFrom<Vec<C64>> for IqSequence {
    type Error = crate::Error;

    fn try_from(samples: Vec<C64>) -> Result<Self> {
        Self::new(samples)
    }
}

impl TryFrom<Vec<C64>> for FirTaps {
    type Error = crate::Error;

    fn try_from(taps: Vec<C64>) -> Result<Self> {
        Self::new(taps)
    }
}

impl From<FirTaps> for Vec<C64> {
    fn from(taps: FirTaps) -> Self {
        taps.taps
    }
}

impl From<IqSequence> for Vec<C64> {
    fn from(seq: IqSequence) -> Self {
        seq.samples
    }
}

/// Complex FIR taps `phi_0 .. phi_{M-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<C64>", into = "Vec<C64>")]
pub struct FirTaps {
    taps: Vec<C64>,
}

impl FirTaps {
    pub fn new(taps: Vec<C64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(invalid("a FIR filter needs at least one tap"));
        }
        if !all_finite(&taps) {
            return Err(invalid("FIR taps contain a non-finite value"));
        }
        Ok(Self { taps })
    }

    /// The pass-through filter `(1, 0, ..., 0)`.
    pub fn identity(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("a FIR filter needs at least one tap"));
        }
        let mut taps = vec![C64::new(0.0, 0.0); m];
        taps[0] = C64::new(1.0, 0.0);
        Ok(Self { taps })
    }

    /// Builds taps from `2M` real parameters laid out `[re_0, im_0, re_1, im_1, ...]`.
    pub fn from_params(params: &[f64]) -> Result<Self> {
        if params.len() % 2 != 0 {
            return Err(invalid("tap parameter vector must have even length"));
        }
        Self::new(params.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect())
    }

    pub fn to_params(&self) -> Vec<f64> {
        self.taps.iter().flat_map(|t| [t.re, t.im]).collect()
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn taps(&self) -> &[C64] {
        &self.taps
    }

    pub fn is_identity(&self) -> bool {
        self.taps[0] == C64::new(1.0, 0.0) && self.taps[1..].iter().all(|t| *t == C64::new(0.0, 0.0))
    }

    /// Complex-modulus distance of every tap from the identity filter.
    pub fn tap_distances(&self) -> Vec<f64> {
        self.taps
            .iter()
            .enumerate()
            .map(|(k, t)| if k == 0 { (t - 1.0).norm() } else { t.norm() })
            .collect()
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_of(self)
    }

    /// Clips every `phi_k - e_k` to modulus `radius`.
    pub fn project(&self, radius: f64) -> Self {
        let taps = self
            .taps
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let e = if k == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                let d = t - e;
                let r = d.norm();
                if r > radius {
                    e + d * (radius / r)
                } else {
                    t
                }
            })
            .collect();
        Self { taps }
    }

    /// Transfer function `Phi(w_b) = sum_k phi_k e^{-j 2 pi k b / n}` on an `n`-point grid.
    pub fn frequency_response(&self, n: usize) -> Result<Spectrum> {
        if self.len() > n {
            return Err(invalid(format!("{} taps do not fit a {n}-point grid", self.len())));
        }
        let mut padded = vec![C64::new(0.0, 0.0); n];
        padded[..self.len()].copy_from_slice(&self.taps);
        fft_in_place(&mut padded, false);
        Ok(Spectrum { bins: padded })
    }
}

/// `max_k |phi_k - e_k|` with `e = (1, 0, ..., 0)`.
pub fn epsilon_of(phi: &FirTaps) -> f64 {
    phi.tap_distances().into_iter().fold(0.0, f64::max)
}

/// DFT coefficients of a sequence (or a transfer function sampled on a grid).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Vec<C64>,
}

impl Spectrum {
    pub fn new(bins: Vec<C64>) -> Result<Self> {
        if bins.is_empty() {
            return Err(invalid("spectrum must contain at least one bin"));
        }
        Ok(Self { bins })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![C64::new(0.0, 0.0); n])
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bins(&self) -> &[C64] {
        &self.bins
    }
}

fn fft_in_place(buf: &mut [C64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(buf.len())
    } else {
        planner.plan_fft_forward(buf.len())
    };
    fft.process(buf);
}

/// Unitary DFT: `X[b] = N^{-1/2} sum_n x[n] e^{-j 2 pi b n / N}`.
pub fn dft(x: &IqSequence) -> Spectrum {
    let mut buf = x.samples().to_vec();
    fft_in_place(&mut buf, false);
    let scale = 1.0 / (buf.len() as f64).sqrt();
    buf.iter_mut().for_each(|b| *b *= scale);
    Spectrum { bins: buf }
}

/// Inverse of [`dft`].
pub fn idft(s: &Spectrum) -> Result<IqSequence> {
    let mut buf = s.bins().to_vec();
    fft_in_place(&mut buf, true);
    let scale = 1.0 / (buf.len() as f64).sqrt();
    buf.iter_mut().for_each(|b| *b *= scale);
    IqSequence::new(buf)
}

/// Filters `x` with causal zero padding.
pub fn fir_apply(x: &IqSequence, phi: &FirTaps) -> Result<IqSequence> {
    fir_apply_with(x, phi, BoundaryMode::CausalZeroPad)
}

pub fn fir_apply_with(x: &IqSequence, phi: &FirTaps, mode: BoundaryMode) -> Result<IqSequence> {
    let n = x.len();
    let m = phi.len();
    if m > n {
        return Err(invalid(format!("filter length {m} exceeds sequence length {n}")));
    }
    let xs = x.samples();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (k, &tap) in phi.taps().iter().enumerate() {
        // Zero taps contribute nothing; skipping them keeps the identity filter exact.
        if tap == C64::new(0.0, 0.0) {
            continue;
        }
        let unit = tap == C64::new(1.0, 0.0);
        let add = |dst: &mut C64, src: C64| {
            if unit {
                *dst += src;
            } else {
                *dst += tap * src;
            }
        };
        for (i, o) in out.iter_mut().enumerate().skip(k) {
            add(o, xs[i - k]);
        }
        if mode == BoundaryMode::Circular {
            for (i, o) in out.iter_mut().enumerate().take(k) {
                add(o, xs[n + i - k]);
            }
        }
    }
    IqSequence::new(out)
}

/// Vector-Jacobian product of filtering with respect to the taps.
///
/// Given `g[n] = df/dy^R[n] + j df/dy^I[n]` for `y = fir(x, phi)`, returns
/// `df/dphi_k^R + j df/dphi_k^I = sum_n g[n] conj(x[n-k])` for `k < m`, with the
/// index convention of `mode`.
pub fn fir_tap_vjp(x: &IqSequence, upstream: &[C64], m: usize, mode: BoundaryMode) -> Result<Vec<C64>> {
    let n = x.len();
    if upstream.len() != n {
        return Err(invalid(format!(
            "upstream gradient has length {}, expected {n}",
            upstream.len()
        )));
    }
    if m == 0 || m > n {
        return Err(invalid(format!("filter length {m} invalid for sequence length {n}")));
    }
    let xs = x.samples();
    let grads = (0..m)
        .map(|k| {
            let mut acc: C64 = (k..n).map(|i| upstream[i] * xs[i - k].conj()).sum();
            if mode == BoundaryMode::Circular {
                acc += (0..k).map(|i| upstream[i] * xs[n + i - k].conj()).sum::<C64>();
            }
            acc
        })
        .collect();
    Ok(grads)
}
