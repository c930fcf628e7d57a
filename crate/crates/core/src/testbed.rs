//! Synthetic multi-device radio link used to train and probe the classifier.
//!
//! Each device modulates random QPSK data and passes it through its own analog
//! front-end impairments, then through a channel made of a phase rotation and
//! a weak one-sample echo, then AWGN. Two channel regimes ("days") differ in
//! how far the rotation strays from zero: a classifier trained on the mild
//! regime misreads the harsher one, which is the gap tap optimization closes.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, apply_impairment, modulate, random_bits, ChannelInstance, DeviceImpairment, ModScheme};
use crate::error::{invalid, Result};
use crate::net::Example;
use crate::seed::{self, derive_seed};
use crate::signal::{fir_apply, FirTaps, IqSequence, C64};
use crate::wop::{Batch, Slice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Day {
    Train,
    Test,
}

impl Day {
    fn tag(self) -> u64 {
        match self {
            Day::Train => 0,
            Day::Test => 1,
        }
    }
}

/// Channel statistics for one regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayProfile {
    /// Range of the rotation magnitude in degrees; the sign is drawn at random.
    pub rotation_deg: [f64; 2],
    /// Largest echo magnitude (each echo's magnitude and phase are uniform).
    pub echo: f64,
    /// Number of echoes, at delays `1..=echo_taps` samples.
    #[serde(default = "one")]
    pub echo_taps: usize,
    /// Per-slice phase random-walk step within a batch, in degrees.
    pub drift_deg: f64,
    /// Range of the path gain in dB.
    #[serde(default)]
    pub gain_db: [f64; 2],
}

fn one() -> usize {
    1
}

impl DayProfile {
    pub fn train_day() -> Self {
        Self {
            rotation_deg: [0.0, 4.0],
            echo: 0.02,
            echo_taps: 1,
            drift_deg: 0.0,
            gain_db: [-3.0, 3.0],
        }
    }

    pub fn test_day() -> Self {
        Self {
            rotation_deg: [15.0, 30.0],
            echo: 0.08,
            echo_taps: 1,
            drift_deg: 4.0,
            gain_db: [-3.0, 3.0],
        }
    }

    fn validate(&self) -> Result<()> {
        let [lo, hi] = self.rotation_deg;
        let [glo, ghi] = self.gain_db;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) || !(self.echo >= 0.0) || !(self.drift_deg >= 0.0) || !(ghi >= glo && ghi.is_finite() && glo.is_finite()) {
            return Err(invalid("day profile needs ordered finite ranges and non-negative echo and drift"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestbedConfig {
    pub devices: usize,
    pub input_len: usize,
    pub scheme: ModScheme,
    pub snr_db: f64,
    /// Per-device impairments; empty selects [`default_presets`].
    pub presets: Vec<DeviceImpairment>,
    pub train_day: DayProfile,
    pub test_day: DayProfile,
    /// Inputs per slice `S`.
    pub slice_len: usize,
    /// Slices per batch `B`.
    pub batch_len: usize,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        Self {
            devices: 5,
            input_len: 64,
            scheme: ModScheme::Qpsk,
            snr_db: 20.0,
            presets: Vec::new(),
            train_day: DayProfile::train_day(),
            test_day: DayProfile::test_day(),
            slice_len: 25,
            batch_len: 12,
        }
    }
}

/// Spread-out impairment signatures for up to `devices` transmitters.
pub fn default_presets(devices: usize) -> Vec<DeviceImpairment> {
    const TABLE: [(f64, f64, (f64, f64)); 8] = [
        (1.00, 0.00, (0.00, 0.00)),
        (1.12, 0.06, (0.06, 0.00)),
        (0.90, -0.08, (0.00, -0.06)),
        (1.05, -0.14, (-0.06, 0.04)),
        (0.95, 0.14, (0.05, 0.06)),
        (1.15, -0.05, (-0.05, -0.05)),
        (0.88, 0.10, (0.08, -0.03)),
        (1.08, 0.12, (-0.03, 0.08)),
    ];
    (0..devices)
        .map(|d| {
            let (g, psi, (dr, di)) = TABLE[d % TABLE.len()];
            // Beyond the table, vary the gain so every device stays distinct.
            let wrap = (d / TABLE.len()) as f64;
            DeviceImpairment {
                iq_gain_imbalance: g + 0.03 * wrap,
                iq_phase_imbalance: psi,
                dc_offset: C64::new(dr, di),
                cfo: 1e-4 * (d as f64 - 2.0),
                phase_noise_std: 2e-3,
            }
        })
        .collect()
}

/// One channel realization before noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub gain: f64,
    pub rotation: f64,
    pub echoes: Vec<C64>,
}

const STREAM_EXAMPLES: u64 = 0x10;
const STREAM_SLICE: u64 = 0x20;
const STREAM_BATCH: u64 = 0x30;
const STREAM_FIXED: u64 = 0x40;

#[derive(Debug, Clone)]
pub struct Testbed {
    cfg: TestbedConfig,
    presets: Vec<DeviceImpairment>,
    master: u64,
}

impl Testbed {
    pub fn new(cfg: TestbedConfig, master: u64) -> Result<Self> {
        if cfg.devices == 0 || cfg.input_len == 0 || cfg.slice_len == 0 || cfg.batch_len == 0 {
            return Err(invalid("devices, input_len, slice_len and batch_len must be >= 1"));
        }
        if !cfg.snr_db.is_finite() {
            return Err(invalid("snr_db must be finite"));
        }
        cfg.train_day.validate()?;
        cfg.test_day.validate()?;
        let presets = if cfg.presets.is_empty() {
            default_presets(cfg.devices)
        } else if cfg.presets.len() == cfg.devices {
            cfg.presets.clone()
        } else {
            return Err(invalid(format!("{} presets for {} devices", cfg.presets.len(), cfg.devices)));
        };
        for p in &presets {
            p.validate()?;
        }
        Ok(Self { cfg, presets, master })
    }

    pub fn config(&self) -> &TestbedConfig {
        &self.cfg
    }

    pub fn devices(&self) -> usize {
        self.cfg.devices
    }

    pub fn preset(&self, device: usize) -> &DeviceImpairment {
        &self.presets[device]
    }

    pub fn profile(&self, day: Day) -> &DayProfile {
        match day {
            Day::Train => &self.cfg.train_day,
            Day::Test => &self.cfg.test_day,
        }
    }

    /// Noise standard deviation for a unit-power constellation at the configured SNR.
    pub fn noise_std(&self) -> f64 {
        10f64.powf(-self.cfg.snr_db / 20.0)
    }

    pub fn draw_link(&self, day: Day, seed: u64) -> LinkState {
        let p = self.profile(day);
        let mut rng = seed::rng(seed);
        let [lo, hi] = p.rotation_deg;
        let mag = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let echoes = (0..p.echo_taps)
            .map(|_| {
                let mag = rng.random_range(0.0..=p.echo);
                C64::from_polar(mag, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        let [glo, ghi] = p.gain_db;
        let gain_db = if ghi > glo { rng.random_range(glo..=ghi) } else { glo };
        LinkState {
            gain: 10f64.powf(gain_db / 20.0),
            rotation: sign * mag.to_radians(),
            echoes,
        }
    }

    /// Channel for `link` with an extra phase offset and its own noise stream.
    pub fn channel(&self, link: &LinkState, extra_phase: f64, noise_seed: u64) -> Result<ChannelInstance> {
        let rot = C64::from_polar(link.gain, link.rotation + extra_phase);
        let mut taps = vec![rot];
        taps.extend(link.echoes.iter().map(|e| rot * e));
        ChannelInstance::raw(taps, self.noise_std(), noise_seed)
    }

    /// Fresh random symbols from `device` received through `channel`.
    pub fn input(&self, device: usize, channel: &ChannelInstance, seed: u64) -> Result<IqSequence> {
        self.input_filtered(device, channel, seed, None)
    }

    /// As [`Testbed::input`], with `tx_taps` applied to the baseband symbols
    /// before the device's front end.
    pub fn input_filtered(&self, device: usize, channel: &ChannelInstance, seed: u64, tx_taps: Option<&FirTaps>) -> Result<IqSequence> {
        if device >= self.cfg.devices {
            return Err(invalid(format!("device {device} out of range 0..{}", self.cfg.devices)));
        }
        let mut rng = seed::rng(derive_seed(seed, 0, 0));
        let bits = random_bits(&mut rng, self.cfg.input_len * self.cfg.scheme.bits_per_symbol());
        let mut tx = modulate(&bits, self.cfg.scheme)?;
        if let Some(taps) = tx_taps {
            tx = fir_apply(&tx, taps)?;
        }
        let impaired = apply_impairment(&tx, &self.presets[device], derive_seed(seed, 1, 0))?;
        apply_channel(&impaired, channel)
    }

    /// `per_class` labeled examples per device, each through its own link draw.
    pub fn examples(&self, day: Day, per_class: usize, stream: u64) -> Result<Vec<Example>> {
        let mut out = Vec::with_capacity(per_class * self.cfg.devices);
        for i in 0..per_class {
            for d in 0..self.cfg.devices {
                let s = derive_seed(self.master, STREAM_EXAMPLES + day.tag(), stream << 40 | (i * self.cfg.devices + d) as u64);
                let link = self.draw_link(day, derive_seed(s, 2, 0));
                let ch = self.channel(&link, 0.0, derive_seed(s, 3, 0))?;
                out.push(Example {
                    x: self.input(d, &ch, s)?,
                    label: d,
                });
            }
        }
        Ok(out)
    }

    /// `count` examples of `device` sharing one link draw; `link_index` picks the draw.
    pub fn fixed_link_examples(&self, device: usize, day: Day, link_index: u64, count: usize, stream: u64) -> Result<Vec<Example>> {
        let base = derive_seed(self.master, STREAM_FIXED + day.tag(), (device as u64) << 32 | link_index);
        let link = self.draw_link(day, base);
        (0..count)
            .map(|i| {
                let s = derive_seed(base, 1 + stream, i as u64);
                let ch = self.channel(&link, 0.0, derive_seed(s, 3, 0))?;
                Ok(Example {
                    x: self.input(device, &ch, s)?,
                    label: device,
                })
            })
            .collect()
    }

    fn slice_on(&self, device: usize, link: &LinkState, extra_phase: f64, base: u64, tx_taps: Option<&FirTaps>) -> Result<Slice> {
        let inputs = (0..self.cfg.slice_len)
            .map(|i| {
                let s = derive_seed(base, 7, i as u64);
                let ch = self.channel(link, extra_phase, derive_seed(s, 3, 0))?;
                self.input_filtered(device, &ch, s, tx_taps)
            })
            .collect::<Result<_>>()?;
        Slice::new(inputs)
    }

    /// `S` inputs of `device` through one link draw.
    pub fn slice(&self, device: usize, day: Day, index: u64) -> Result<Slice> {
        let base = derive_seed(self.master, STREAM_SLICE + day.tag(), (device as u64) << 32 | index);
        let link = self.draw_link(day, base);
        self.slice_on(device, &link, 0.0, base, None)
    }

    /// `B` consecutive slices of `device`: one link draw whose phase drifts
    /// from slice to slice.
    pub fn batch(&self, device: usize, day: Day, index: u64) -> Result<Batch> {
        self.batch_filtered(device, day, index, None)
    }

    /// The batch [`Testbed::batch`] would return, transmitted through `tx_taps`
    /// (same data, channel and noise).
    pub fn batch_filtered(&self, device: usize, day: Day, index: u64, tx_taps: Option<&FirTaps>) -> Result<Batch> {
        let base = derive_seed(self.master, STREAM_BATCH + day.tag(), (device as u64) << 32 | index);
        let link = self.draw_link(day, base);
        let step = self.profile(day).drift_deg.to_radians();
        let mut rng = seed::rng(derive_seed(base, 9, 0));
        let mut phase = 0.0;
        let mut slices = Vec::with_capacity(self.cfg.batch_len);
        for b in 0..self.cfg.batch_len {
            if b > 0 {
                phase += seed::gaussian(&mut rng, step);
            }
            slices.push(self.slice_on(device, &link, phase, derive_seed(base, 8, b as u64), tx_taps)?);
        }
        Batch::new(slices)
    }
}
