//! Synthetic radio link: Gray-coded constellations, per-device hardware
//! impairments, multipath + AWGN channel, hard-decision demodulation and
//! error-rate measurement.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed;
use crate::signal::{fir_apply_with, BoundaryMode, FirTaps, IqSequence, C64};

/// Symbols per packet when measuring packet error rate.
pub const PACKET_SYMBOLS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModScheme {
    Bpsk,
    Qpsk,
    Qam16,
    Qam64,
}

impl ModScheme {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            ModScheme::Bpsk => 1,
            ModScheme::Qpsk => 2,
            ModScheme::Qam16 => 4,
            ModScheme::Qam64 => 6,
        }
    }

    /// Bits carried on each of the I and Q axes (BPSK uses I only).
    fn axis_bits(self) -> usize {
        match self {
            ModScheme::Bpsk => 1,
            s => s.bits_per_symbol() / 2,
        }
    }

    fn scale(self) -> f64 {
        match self {
            ModScheme::Bpsk => 1.0,
            ModScheme::Qpsk => FRAC_1_SQRT_2,
            ModScheme::Qam16 => 1.0 / 10f64.sqrt(),
            ModScheme::Qam64 => 1.0 / 42f64.sqrt(),
        }
    }

    /// The full constellation, indexed by the symbol's bit pattern (MSB first).
    pub fn constellation(self) -> Vec<C64> {
        let k = self.bits_per_symbol();
        (0..1usize << k)
            .map(|v| {
                let bits: Vec<u8> = (0..k).rev().map(|i| ((v >> i) & 1) as u8).collect();
                self.map_symbol(&bits)
            })
            .collect()
    }

    fn map_symbol(self, bits: &[u8]) -> C64 {
        let ab = self.axis_bits();
        let s = self.scale();
        match self {
            ModScheme::Bpsk => C64::new(gray_level(&bits[..1]), 0.0),
            _ => C64::new(gray_level(&bits[..ab]) * s, gray_level(&bits[ab..]) * s),
        }
    }
}

/// Maps Gray-coded axis bits to a PAM level in `{-(L-1), ..., L-1}`; all-zero
/// bits map to the most positive level.
fn gray_level(bits: &[u8]) -> f64 {
    let levels = 1usize << bits.len();
    let mut idx = 0usize;
    let mut prev = 0u8;
    for &b in bits {
        prev ^= b;
        idx = (idx << 1) | prev as usize;
    }
    (levels as f64 - 1.0) - 2.0 * idx as f64
}

fn level_to_gray(level: f64, nbits: usize) -> Vec<u8> {
    let levels = 1usize << nbits;
    let idx = (((levels as f64 - 1.0) - level) / 2.0).round().clamp(0.0, levels as f64 - 1.0) as usize;
    let gray = idx ^ (idx >> 1);
    (0..nbits).rev().map(|i| ((gray >> i) & 1) as u8).collect()
}

pub fn modulate(bits: &[u8], scheme: ModScheme) -> Result<IqSequence> {
    let k = scheme.bits_per_symbol();
    if bits.is_empty() || bits.len() % k != 0 {
        return Err(invalid(format!(
            "{} bits is not a positive multiple of {k} bits/symbol",
            bits.len()
        )));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(invalid("bit values must be 0 or 1"));
    }
    IqSequence::new(bits.chunks_exact(k).map(|c| scheme.map_symbol(c)).collect())
}

/// Minimum-distance hard decisions (per-axis slicing on the square grid).
pub fn demodulate(z: &IqSequence, scheme: ModScheme) -> Vec<u8> {
    let ab = scheme.axis_bits();
    let s = scheme.scale();
    let mut out = Vec::with_capacity(z.len() * scheme.bits_per_symbol());
    for sym in z.samples() {
        match scheme {
            ModScheme::Bpsk => out.push(u8::from(sym.re < 0.0)),
            _ => {
                out.extend(level_to_gray(snap(sym.re / s, ab), ab));
                out.extend(level_to_gray(snap(sym.im / s, ab), ab));
            }
        }
    }
    out
}

// Nearest odd integer level in range.
fn snap(v: f64, nbits: usize) -> f64 {
    let max = (1usize << nbits) as f64 - 1.0;
    let lvl = 2.0 * (v / 2.0).floor() + 1.0;
    lvl.clamp(-max, max)
}

pub fn random_bits<R: rand::Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<u8> {
    (0..count).map(|_| rng.random_range(0..2u8)).collect()
}

pub fn bit_errors(tx: &[u8], rx: &[u8]) -> Result<usize> {
    if tx.len() != rx.len() {
        return Err(invalid(format!("bit length mismatch: {} vs {}", tx.len(), rx.len())));
    }
    Ok(tx.iter().zip(rx).filter(|(a, b)| a != b).count())
}

pub fn ber(tx: &[u8], rx: &[u8]) -> Result<f64> {
    if tx.is_empty() {
        return Err(invalid("cannot compute BER of an empty bit string"));
    }
    Ok(bit_errors(tx, rx)? as f64 / tx.len() as f64)
}

/// Number of errored packets out of the total; a packet errs if any of its bits err.
pub fn packet_errors(tx: &[u8], rx: &[u8], bits_per_packet: usize) -> Result<(usize, usize)> {
    if tx.len() != rx.len() {
        return Err(invalid(format!("bit length mismatch: {} vs {}", tx.len(), rx.len())));
    }
    if bits_per_packet == 0 || tx.len() % bits_per_packet != 0 {
        return Err(invalid("bit count is not a whole number of packets"));
    }
    let errs = tx
        .chunks_exact(bits_per_packet)
        .zip(rx.chunks_exact(bits_per_packet))
        .filter(|(a, b)| a != b)
        .count();
    Ok((errs, tx.len() / bits_per_packet))
}

/// Per-device analog front-end signature.
///
/// `y[n] = dc + e^{j(2 pi cfo n + theta_n)} (g I[n] + j Q[n] e^{j psi})`, with
/// `theta_n` a Gaussian random walk of per-sample step `phase_noise_std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceImpairment {
    pub iq_gain_imbalance: f64,
    pub iq_phase_imbalance: f64,
    pub dc_offset: C64,
    pub cfo: f64,
    pub phase_noise_std: f64,
}

impl Default for DeviceImpairment {
    fn default() -> Self {
        Self::identity()
    }
}

impl DeviceImpairment {
    pub fn identity() -> Self {
        Self {
            iq_gain_imbalance: 1.0,
            iq_phase_imbalance: 0.0,
            dc_offset: C64::new(0.0, 0.0),
            cfo: 0.0,
            phase_noise_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.iq_gain_imbalance,
            self.iq_phase_imbalance,
            self.dc_offset.re,
            self.dc_offset.im,
            self.cfo,
            self.phase_noise_std,
        ];
        if vals.iter().any(|v| !v.is_finite()) || self.phase_noise_std < 0.0 {
            return Err(invalid("impairment parameters must be finite with phase_noise_std >= 0"));
        }
        Ok(())
    }
}

pub fn apply_impairment(x: &IqSequence, imp: &DeviceImpairment, seed: u64) -> Result<IqSequence> {
    imp.validate()?;
    let rotate = imp.cfo != 0.0 || imp.phase_noise_std > 0.0;
    let skew = C64::from_polar(1.0, imp.iq_phase_imbalance);
    let mut rng = seed::rng(seed);
    let mut theta = 0.0;
    let out = x
        .samples()
        .iter()
        .enumerate()
        .map(|(n, s)| {
            let mut y = *s;
            if imp.iq_gain_imbalance != 1.0 || imp.iq_phase_imbalance != 0.0 {
                y = C64::new(imp.iq_gain_imbalance * s.re, 0.0) + C64::new(0.0, s.im) * skew;
            }
            if rotate {
                if imp.phase_noise_std > 0.0 {
                    theta += seed::gaussian(&mut rng, imp.phase_noise_std);
                }
                y *= C64::from_polar(1.0, 2.0 * PI * imp.cfo * n as f64 + theta);
            }
            if imp.dc_offset != C64::new(0.0, 0.0) {
                y += imp.dc_offset;
            }
            y
        })
        .collect();
    IqSequence::new(out)
}

/// Multipath taps plus AWGN: `z = h (*) x + w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelInstance {
    pub taps: Vec<C64>,
    pub noise_std: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: BoundaryMode,
}

impl ChannelInstance {
    /// Builds a channel with `sum |h_l|^2` normalized to 1.
    pub fn normalized(taps: Vec<C64>, noise_std: f64, seed: u64) -> Result<Self> {
        let energy: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
        if taps.is_empty() || energy <= 0.0 || !energy.is_finite() {
            return Err(invalid("channel needs at least one non-zero finite tap"));
        }
        let g = energy.sqrt();
        Self::raw(taps.into_iter().map(|t| t / g).collect(), noise_std, seed)
    }

    /// Builds a channel with taps taken as given.
    pub fn raw(taps: Vec<C64>, noise_std: f64, seed: u64) -> Result<Self> {
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(invalid("noise_std must be finite and >= 0"));
        }
        FirTaps::new(taps.clone())?;
        Ok(Self {
            taps,
            noise_std,
            seed,
            mode: BoundaryMode::CausalZeroPad,
        })
    }

    pub fn with_mode(mut self, mode: BoundaryMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn ideal() -> Self {
        Self {
            taps: vec![C64::new(1.0, 0.0)],
            noise_std: 0.0,
            seed: 0,
            mode: BoundaryMode::CausalZeroPad,
        }
    }

    pub fn fir(&self) -> Result<FirTaps> {
        FirTaps::new(self.taps.clone())
    }

    /// The noise realization this channel adds to an `n`-sample frame.
    pub fn noise(&self, n: usize) -> Vec<C64> {
        if self.noise_std == 0.0 {
            return vec![C64::new(0.0, 0.0); n];
        }
        let mut rng = seed::rng(self.seed);
        (0..n).map(|_| seed::complex_gaussian(&mut rng, self.noise_std)).collect()
    }
}

pub fn apply_channel(x: &IqSequence, ch: &ChannelInstance) -> Result<IqSequence> {
    let mut y = fir_apply_with(x, &ch.fir()?, ch.mode)?.into_samples();
    if ch.noise_std > 0.0 {
        for (s, w) in y.iter_mut().zip(ch.noise(x.len())) {
            *s += w;
        }
    }
    IqSequence::new(y)
}
