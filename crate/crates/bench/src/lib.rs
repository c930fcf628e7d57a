//! Benchmark fixtures shared by the bench targets.

use prefir_core::net::Architecture;
use prefir_core::wop::Slice;
use prefir_core::{seed, FirTaps, IqSequence, MicroNet, C64};

pub fn random_seq(n: usize, s: u64) -> IqSequence {
    let mut rng = seed::rng(s);
    IqSequence::new((0..n).map(|_| seed::complex_gaussian(&mut rng, 1.0)).collect()).expect("non-empty")
}

pub fn near_identity_taps(m: usize, s: u64) -> FirTaps {
    let mut taps = random_seq(m, s).scale(C64::new(0.05, 0.0)).samples().to_vec();
    taps[0] += C64::new(1.0, 0.0);
    FirTaps::new(taps).expect("non-empty")
}

/// Frozen network at the given architecture with seeded random weights.
pub fn frozen_net(arch: Architecture, s: u64) -> MicroNet {
    let mut net = MicroNet::new(arch, s).expect("valid architecture");
    net.freeze();
    net
}

/// The desk-scale classifier used by the testbed experiments.
pub fn desk_arch() -> Architecture {
    Architecture {
        input_len: 64,
        classes: 5,
        conv1_filters: 8,
        conv2_filters: 8,
        kernel: 7,
        dense_units: 32,
    }
}

pub fn random_slice(s_len: usize, n: usize, s: u64) -> Slice {
    Slice::new((0..s_len).map(|i| random_seq(n, s * 1000 + i as u64)).collect()).expect("uniform slice")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_requested_shapes() {
        assert_eq!(random_seq(17, 1).len(), 17);
        assert!(near_identity_taps(6, 2).epsilon() < 0.5);
        assert_eq!(random_slice(3, 64, 4).len(), 3);
        assert_eq!(frozen_net(desk_arch(), 5).input_len(), 64);
    }
}
