//! Receiver-side removal of the transmitter's FIR filter.
//!
//! With circular filtering over a frame, the received spectrum is
//! `Z = X * H * Phi + W`, so `X = (Z - W) / (H * Phi)` bin by bin, where `H` and
//! `Phi` are transfer functions (unnormalized DFTs of the zero-padded taps) and
//! `Z`, `X`, `W` are unitary DFTs of the sample frames.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{demodulate, modulate, packet_errors, random_bits, ModScheme, PACKET_SYMBOLS};
use crate::error::{invalid, Error, Result};
use crate::seed::{self, derive_seed};
use crate::signal::{dft, fir_apply_with, idft, BoundaryMode, FirTaps, IqSequence, Spectrum, C64};

pub const DEFAULT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateQuality {
    Oracle,
    Noisy { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub h: Spectrum,
    pub w: Spectrum,
    pub quality: EstimateQuality,
}

impl ChannelEstimate {
    /// Exact transfer function of `channel` over `n` bins, zero noise estimate.
    pub fn oracle(channel: &FirTaps, n: usize) -> Result<Self> {
        Ok(Self {
            h: channel.frequency_response(n)?,
            w: Spectrum::zeros(n)?,
            quality: EstimateQuality::Oracle,
        })
    }

    /// Transfer function perturbed per bin by complex Gaussian error of total std `sigma`.
    pub fn noisy(channel: &FirTaps, n: usize, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid("estimate sigma must be finite and >= 0"));
        }
        let mut rng = seed::rng(seed);
        let bins = channel
            .frequency_response(n)?
            .bins()
            .iter()
            .map(|h| h + seed::complex_gaussian(&mut rng, sigma))
            .collect();
        Ok(Self {
            h: Spectrum::new(bins)?,
            w: Spectrum::zeros(n)?,
            quality: EstimateQuality::Noisy { sigma },
        })
    }

    /// Replaces the noise estimate with the spectrum of a known noise frame.
    pub fn with_noise(mut self, noise: &IqSequence) -> Result<Self> {
        if noise.len() != self.h.len() {
            return Err(invalid("noise frame length differs from the estimate"));
        }
        self.w = dft(noise);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

/// Smallest `|H * Phi|` over the estimate's bins.
pub fn min_bin_magnitude(phi: &FirTaps, est: &ChannelEstimate) -> Result<f64> {
    let p = phi.frequency_response(est.len())?;
    Ok(est
        .h
        .bins()
        .iter()
        .zip(p.bins())
        .map(|(h, f)| (h * f).norm())
        .fold(f64::INFINITY, f64::min))
}

/// `idft((Z - W) / (H * Phi))` with the default floor.
pub fn compensate(z: &IqSequence, phi: &FirTaps, est: &ChannelEstimate) -> Result<IqSequence> {
    compensate_with_floor(z, phi, est, DEFAULT_FLOOR)
}

pub fn compensate_with_floor(z: &IqSequence, phi: &FirTaps, est: &ChannelEstimate, floor: f64) -> Result<IqSequence> {
    let n = z.len();
    if est.len() != n || est.w.len() != n {
        return Err(invalid(format!("estimate has {} bins for a {n}-sample frame", est.len())));
    }
    let p = phi.frequency_response(n)?;
    let denom: Vec<C64> = est.h.bins().iter().zip(p.bins()).map(|(h, f)| h * f).collect();
    let bad: Vec<usize> = denom.iter().enumerate().filter(|(_, d)| d.norm() < floor).map(|(i, _)| i).collect();
    if !bad.is_empty() {
        let min_magnitude = denom.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
        return Err(Error::IllConditioned {
            bins: bad,
            floor,
            min_magnitude,
        });
    }
    let zs = dft(z);
    let bins = zs
        .bins()
        .iter()
        .zip(est.w.bins())
        .zip(&denom)
        .map(|((z, w), d)| (z - w) / d)
        .collect();
    idft(&Spectrum::new(bins)?)
}

/// RMS error over RMS reference magnitude.
pub fn evm(reference: &IqSequence, received: &IqSequence) -> Result<f64> {
    if reference.len() != received.len() {
        return Err(invalid("evm needs equal-length sequences"));
    }
    let ref_power = reference.power();
    if ref_power == 0.0 {
        return Err(invalid("evm reference has zero power"));
    }
    let err: f64 = reference
        .samples()
        .iter()
        .zip(received.samples())
        .map(|(a, b)| (b - a).norm_sqr())
        .sum::<f64>()
        / reference.len() as f64;
    Ok((err / ref_power).sqrt())
}

/// How the transmitter perturbs a frame in the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariant {
    /// One complex tap with I in `[1-eps, 1+eps]` and Q in `[-eps, eps]`.
    ScalarTap,
    /// `M` taps, each within distance `eps` of the identity filter.
    Fir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub scheme: ModScheme,
    pub snr_db: f64,
    pub epsilons: Vec<f64>,
    pub trials: usize,
    pub packets_per_frame: usize,
    pub variant: SweepVariant,
    /// Taps of the FIR variant.
    pub taps: usize,
    /// Multipath taps of the random channel.
    pub channel_taps: usize,
    /// Power ratio between consecutive multipath taps.
    pub channel_decay: f64,
    /// Nominal symbol rate used for throughput, in symbols per second.
    pub symbol_rate: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            scheme: ModScheme::Qpsk,
            snr_db: 20.0,
            epsilons: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            trials: 200,
            packets_per_frame: 10,
            variant: SweepVariant::ScalarTap,
            taps: 10,
            channel_taps: 3,
            channel_decay: 0.3,
            symbol_rate: 4000.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub per: f64,
    /// Goodput in kbit/s at the nominal symbol rate.
    pub throughput_norm: f64,
    pub evm: f64,
    pub seed: u64,
}

struct Trial {
    packet_errors: Vec<usize>,
    evm: Vec<f64>,
}

fn trial_shape(cfg: &SweepConfig, rng: &mut impl rand::Rng) -> Vec<C64> {
    match cfg.variant {
        SweepVariant::ScalarTap => vec![C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))],
        SweepVariant::Fir => (0..cfg.taps)
            .map(|_| {
                // uniform in the unit disk
                let r = rng.random_range(0.0..=1.0f64).sqrt();
                C64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect(),
    }
}

fn run_trial(cfg: &SweepConfig, index: usize) -> Result<Trial> {
    let base = derive_seed(cfg.seed, 0x5EE9, index as u64);
    let n = cfg.packets_per_frame * PACKET_SYMBOLS;
    let bits_per_packet = PACKET_SYMBOLS * cfg.scheme.bits_per_symbol();
    let mut rng = seed::rng(base);
    let bits = random_bits(&mut rng, n * cfg.scheme.bits_per_symbol());
    let x = modulate(&bits, cfg.scheme)?;

    let mut h: Vec<C64> = (0..cfg.channel_taps.max(1))
        .map(|l| seed::complex_gaussian(&mut rng, cfg.channel_decay.powi(l as i32).sqrt()))
        .collect();
    let energy: f64 = h.iter().map(|c| c.norm_sqr()).sum();
    h.iter_mut().for_each(|c| *c /= energy.sqrt());
    let channel = FirTaps::new(h)?;

    let noise_std = 10f64.powf(-cfg.snr_db / 20.0);
    let noise: Vec<C64> = (0..n).map(|_| seed::complex_gaussian(&mut rng, noise_std)).collect();
    let shape = trial_shape(cfg, &mut rng);
    let est = ChannelEstimate::oracle(&channel, n)?;

    let mut packet_errs = Vec::with_capacity(cfg.epsilons.len());
    let mut evms = Vec::with_capacity(cfg.epsilons.len());
    for &eps in &cfg.epsilons {
        let taps: Vec<C64> = shape
            .iter()
            .enumerate()
            .map(|(k, u)| if k == 0 { C64::new(1.0, 0.0) + u * eps } else { u * eps })
            .collect();
        let phi = FirTaps::new(taps)?;
        let tx = fir_apply_with(&x, &phi, BoundaryMode::Circular)?;
        let mut z = fir_apply_with(&tx, &channel, BoundaryMode::Circular)?.into_samples();
        z.iter_mut().zip(&noise).for_each(|(a, w)| *a += w);
        let z = IqSequence::new(z)?;
        match compensate(&z, &phi, &est) {
            Ok(xh) => {
                let (errs, _) = packet_errors(&bits, &demodulate(&xh, cfg.scheme), bits_per_packet)?;
                packet_errs.push(errs);
                evms.push(evm(&x, &xh)?);
            }
            Err(Error::IllConditioned { .. }) => {
                log::warn!("trial {index}, epsilon {eps}: ill-conditioned frame counted as lost");
                packet_errs.push(cfg.packets_per_frame);
                evms.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Trial {
        packet_errors: packet_errs,
        evm: evms,
    })
}

/// PER, goodput and EVM per epsilon, over `trials` random frames shared by all
/// epsilon values (same data, channel, noise and tap shape scaled by epsilon).
pub fn epsilon_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.epsilons.is_empty() || cfg.trials == 0 || cfg.packets_per_frame == 0 {
        return Err(invalid("sweep needs epsilons, trials and packets"));
    }
    if cfg.epsilons.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(invalid("epsilons must be finite and >= 0"));
    }
    if cfg.variant == SweepVariant::Fir && cfg.taps == 0 {
        return Err(invalid("FIR sweep needs taps >= 1"));
    }
    let trials: Vec<Trial> = (0..cfg.trials).into_par_iter().map(|i| run_trial(cfg, i)).collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..cfg.epsilons.len()).collect();
    order.sort_by(|&a, &b| cfg.epsilons[a].total_cmp(&cfg.epsilons[b]));
    let packets = (cfg.trials * cfg.packets_per_frame) as f64;
    let peak = cfg.scheme.bits_per_symbol() as f64 * cfg.symbol_rate / 1000.0;
    Ok(order
        .into_iter()
        .map(|j| {
            let errs: usize = trials.iter().map(|t| t.packet_errors[j]).sum();
            let finite: Vec<f64> = trials.iter().map(|t| t.evm[j]).filter(|v| v.is_finite()).collect();
            let per = errs as f64 / packets;
            SweepRow {
                epsilon: cfg.epsilons[j],
                per,
                throughput_norm: (1.0 - per) * peak,
                evm: if finite.is_empty() {
                    f64::NAN
                } else {
                    finite.iter().sum::<f64>() / finite.len() as f64
                },
                seed: cfg.seed,
            }
        })
        .collect())
}

/// CSV with header `epsilon,per,throughput_norm,evm,seed`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
