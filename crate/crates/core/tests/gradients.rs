mod common;

use common::*;
use prefir_core::wop::tap_gradient;
use prefir_core::{BoundaryMode, FirTaps, IqSequence, C64};

#[test]
fn input_gradient_matches_finite_differences() {
    for case in 0..50u64 {
        let net = frozen_net(small_arch(24, 3), 100 + case);
        let x = random_seq(24, 200 + case);
        let class = (case % 3) as usize;
        let g = net.input_gradient(&x, class).unwrap();
        let fd = fd_complex(x.samples(), 1e-5, |v| net.forward(&IqSequence::new(v.to_vec()).unwrap()).unwrap()[class]);
        let err = rel_err(&g, &fd);
        assert!(err < 1e-4, "case {case}: relative error {err}");
    }
}

#[test]
fn tap_gradient_matches_finite_differences() {
    for case in 0..30u64 {
        let net = frozen_net(small_arch(24, 3), 300 + case);
        let x = random_seq(24, 400 + case);
        let m = 1 + (case as usize % 6);
        let phi = random_taps(m, 0.4, 500 + case);
        let class = (case % 3) as usize;
        let mode = if case % 2 == 0 { BoundaryMode::CausalZeroPad } else { BoundaryMode::Circular };
        let g = tap_gradient(&x, &phi, &net, class, mode).unwrap();
        let fd = fd_complex(phi.taps(), 1e-5, |t| activation(&net, &x, &FirTaps::new(t.to_vec()).unwrap(), class, mode));
        let err = rel_err(&g, &fd);
        assert!(err < 1e-4, "case {case}: relative error {err}");
    }
}

#[test]
fn single_identity_tap_gradient_is_input_inner_product() {
    let net = frozen_net(small_arch(24, 3), 7);
    let x = random_seq(24, 8);
    let g_in = net.input_gradient(&x, 1).unwrap();
    let g = tap_gradient(&x, &FirTaps::identity(1).unwrap(), &net, 1, BoundaryMode::CausalZeroPad).unwrap();
    let re: f64 = x.samples().iter().zip(&g_in).map(|(s, d)| d.re * s.re + d.im * s.im).sum();
    let im: f64 = x.samples().iter().zip(&g_in).map(|(s, d)| d.im * s.re - d.re * s.im).sum();
    assert!((g[0].re - re).abs() < 1e-12 * re.abs().max(1.0));
    assert!((g[0].im - im).abs() < 1e-12 * im.abs().max(1.0));
}

#[test]
fn zero_input_has_zero_tap_gradient() {
    let net = frozen_net(small_arch(24, 3), 9);
    let x = IqSequence::zeros(24).unwrap();
    let phi = random_taps(4, 0.3, 1);
    let g = tap_gradient(&x, &phi, &net, 0, BoundaryMode::CausalZeroPad).unwrap();
    assert!(g.iter().all(|c| *c == C64::new(0.0, 0.0)));
}
