#![allow(dead_code)]

use prefir_core::net::Architecture;
use prefir_core::seed;
use prefir_core::{fir_apply_with, BoundaryMode, FirTaps, IqSequence, MicroNet, C64};
use rand::Rng;

pub fn small_arch(n: usize, classes: usize) -> Architecture {
    Architecture {
        input_len: n,
        classes,
        conv1_filters: 4,
        conv2_filters: 4,
        kernel: 5,
        dense_units: 12,
    }
}

pub fn frozen_net(arch: Architecture, seed: u64) -> MicroNet {
    let mut net = MicroNet::new(arch, seed).unwrap();
    net.freeze();
    net
}

pub fn random_seq(n: usize, seed: u64) -> IqSequence {
    let mut rng = seed::rng(seed);
    IqSequence::new((0..n).map(|_| seed::complex_gaussian(&mut rng, 1.0)).collect()).unwrap()
}

/// Taps within `radius` of the identity filter.
pub fn random_taps(m: usize, radius: f64, seed: u64) -> FirTaps {
    let mut rng = seed::rng(seed);
    let taps = (0..m)
        .map(|k| {
            let r = radius * rng.random_range(0.0..=1.0f64).sqrt();
            let d = C64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU));
            if k == 0 {
                C64::new(1.0, 0.0) + d
            } else {
                d
            }
        })
        .collect();
    FirTaps::new(taps).unwrap()
}

/// Central differences of `f` over every real and imaginary component of `v`.
pub fn fd_complex(v: &[C64], h: f64, mut f: impl FnMut(&[C64]) -> f64) -> Vec<C64> {
    let mut w = v.to_vec();
    (0..v.len())
        .map(|i| {
            let orig = w[i];
            w[i] = orig + C64::new(h, 0.0);
            let rp = f(&w);
            w[i] = orig - C64::new(h, 0.0);
            let rm = f(&w);
            w[i] = orig + C64::new(0.0, h);
            let ip = f(&w);
            w[i] = orig - C64::new(0.0, h);
            let im = f(&w);
            w[i] = orig;
            C64::new((rp - rm) / (2.0 * h), (ip - im) / (2.0 * h))
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn activation(net: &MicroNet, x: &IqSequence, phi: &FirTaps, class: usize, mode: BoundaryMode) -> f64 {
    net.forward(&fir_apply_with(x, phi, mode).unwrap()).unwrap()[class]
}
