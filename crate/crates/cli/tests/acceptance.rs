//! End-to-end acceptance suite. Every test prints one line
//! `criterion N <name>: PASS|FAIL (details)` and then asserts.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use prefir_core::compensation::{compensate, epsilon_sweep, evm, ChannelEstimate, SweepConfig};
use prefir_core::channel::{demodulate, modulate, random_bits, ModScheme};
use prefir_core::fir_layer::{fir_layer_gradients, mean_activation, train_fir_layer, FirLayerConfig, FirLayerSession};
use prefir_core::metrics::{adversary_eval, pba, psa};
use prefir_core::net::Architecture;
use prefir_core::testbed::{Day, Testbed, TestbedConfig};
use prefir_core::wop::{ncg_optimize, slice_objective, tap_gradient, NcgConfig};
use prefir_core::{dft, fir_apply, fir_apply_with, idft, seed, BoundaryMode, FirTaps, IqSequence, MicroNet, TrainConfig, C64};

const MODE: BoundaryMode = BoundaryMode::CausalZeroPad;

// Written straight to the process stdout so the line shows without --nocapture.
fn verdict(n: u32, name: &str, pass: bool, details: String) {
    let mut out = std::io::stdout().lock();
    let tag = if pass { "PASS" } else { "FAIL" };
    writeln!(out, "criterion {n} {name}: {tag} ({details})").unwrap();
    out.flush().unwrap();
}

fn desk_arch() -> Architecture {
    Architecture {
        input_len: 64,
        classes: 5,
        conv1_filters: 8,
        conv2_filters: 8,
        kernel: 7,
        dense_units: 32,
    }
}

struct Shared {
    testbed: Testbed,
    net: MicroNet,
    train_day_accuracy: f64,
}

fn shared() -> &'static Shared {
    static CELL: OnceLock<Shared> = OnceLock::new();
    CELL.get_or_init(|| {
        let testbed = Testbed::new(TestbedConfig::default(), 42).unwrap();
        let train = testbed.examples(Day::Train, 1000, 0).unwrap();
        let held_out = testbed.examples(Day::Train, 100, 1).unwrap();
        let mut net = MicroNet::new(desk_arch(), 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 15,
            batch_size: 32,
            ..TrainConfig::default()
        };
        net.train(&train, None, &cfg).unwrap();
        net.freeze();
        let train_day_accuracy = net.evaluate(&held_out).unwrap().1;
        Shared {
            testbed,
            net,
            train_day_accuracy,
        }
    })
}

fn random_seq(n: usize, s: u64) -> IqSequence {
    let mut rng = seed::rng(s);
    IqSequence::new((0..n).map(|_| seed::complex_gaussian(&mut rng, 1.0)).collect()).unwrap()
}

/// Taps with every per-tap distance from identity at most `radius`.
fn random_taps(m: usize, radius: f64, s: u64) -> FirTaps {
    let mut rng = seed::rng(s);
    let taps = (0..m)
        .map(|k| {
            let u = seed::gaussian(&mut rng, 1.0).abs().min(3.0) / 3.0;
            let d = C64::from_polar(radius * u, seed::gaussian(&mut rng, 3.0));
            if k == 0 {
                C64::new(1.0, 0.0) + d
            } else {
                d
            }
        })
        .collect();
    FirTaps::new(taps).unwrap()
}

/// Central differences over every real and imaginary component, plus the
/// largest gap between forward and backward one-sided slopes. That gap is
/// O(h) where `f` is smooth and O(1) when the stencil straddles a ReLU or
/// max-pool switch, where central differences stop being a valid reference.
fn fd_complex(v: &[C64], h: f64, mut f: impl FnMut(&[C64]) -> f64) -> (Vec<C64>, f64) {
    let f0 = f(v);
    let mut w = v.to_vec();
    let mut asym: f64 = 0.0;
    let grad = (0..v.len())
        .map(|i| {
            let orig = w[i];
            let mut slope = |d: C64| {
                w[i] = orig + d;
                let p = f(&w);
                w[i] = orig - d;
                let m = f(&w);
                w[i] = orig;
                asym = asym.max(((p - f0) - (f0 - m)).abs() / h);
                (p - m) / (2.0 * h)
            };
            let re = slope(C64::new(h, 0.0));
            let im = slope(C64::new(0.0, h));
            C64::new(re, im)
        })
        .collect();
    (grad, asym)
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()));
    let scale = norm(&mut a.iter().map(|x| x.norm_sqr())).max(norm(&mut b.iter().map(|x| x.norm_sqr())));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn frozen_desk_net(seed: u64) -> MicroNet {
    let mut n = MicroNet::new(desk_arch(), seed).unwrap();
    n.freeze();
    n
}

// Draws cases in order until `count` have a smooth stencil; returns the
// worst relative error and how many draws were set aside.
fn fd_cases(count: usize, mut case: impl FnMut(u64) -> (Vec<C64>, Vec<C64>, f64)) -> (f64, usize) {
    let (mut worst, mut kept, mut skipped): (f64, usize, usize) = (0.0, 0, 0);
    let mut draw = 0u64;
    while kept < count {
        let (g, fd, asym) = case(draw);
        draw += 1;
        if asym > 1e-4 * norm(&g) {
            skipped += 1;
            assert!(skipped <= count / 5, "too many non-smooth stencils");
            continue;
        }
        worst = worst.max(rel_err(&g, &fd));
        kept += 1;
    }
    (worst, skipped)
}

#[test]
fn criterion_01_gradients_match_finite_differences() {
    let t0 = Instant::now();
    let (worst_input, skip_input) = fd_cases(50, |k| {
        let net = frozen_desk_net(10 + k);
        let x = random_seq(64, 100 + k);
        let class = (k % 5) as usize;
        let g = net.input_gradient(&x, class).unwrap();
        let (fd, asym) = fd_complex(x.samples(), 1e-5, |v| net.forward(&IqSequence::new(v.to_vec()).unwrap()).unwrap()[class]);
        (g, fd, asym)
    });
    let (worst_tap, skip_tap) = fd_cases(30, |k| {
        let net = frozen_desk_net(200 + k);
        let x = random_seq(64, 300 + k);
        let phi = random_taps(1 + k as usize % 10, 0.5, 400 + k);
        let class = (k % 5) as usize;
        let mode = if k % 2 == 0 { BoundaryMode::CausalZeroPad } else { BoundaryMode::Circular };
        let g = tap_gradient(&x, &phi, &net, class, mode).unwrap();
        let (fd, asym) = fd_complex(phi.taps(), 1e-5, |t| {
            let y = fir_apply_with(&x, &FirTaps::new(t.to_vec()).unwrap(), mode).unwrap();
            net.forward(&y).unwrap()[class]
        });
        (g, fd, asym)
    });
    let elapsed = t0.elapsed();
    let pass = worst_input < 1e-4 && worst_tap < 1e-4 && elapsed < Duration::from_secs(30);
    verdict(
        1,
        "gradient correctness",
        pass,
        format!(
            "max rel err input {worst_input:.2e} (50 cases, {skip_input} non-smooth draws redrawn), taps {worst_tap:.2e} (30 cases, {skip_tap} redrawn), {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

fn naive_causal(x: &[C64], h: &[C64]) -> Vec<C64> {
    (0..x.len())
        .map(|n| (0..h.len()).filter(|&k| k <= n).map(|k| h[k] * x[n - k]).sum())
        .collect()
}

#[test]
fn criterion_02_fir_engine_oracle() {
    let mut conv_err: f64 = 0.0;
    let mut roundtrip_err: f64 = 0.0;
    let mut theorem_err: f64 = 0.0;
    for case in 0..100u64 {
        let n = 8 + (case as usize * 7) % 57;
        let m = 1 + case as usize % 8;
        let x = random_seq(n, 500 + case);
        let phi = FirTaps::new(random_seq(m, 600 + case).samples().to_vec()).unwrap();
        let y = fir_apply(&x, &phi).unwrap();
        for (a, b) in y.samples().iter().zip(naive_causal(x.samples(), phi.taps())) {
            conv_err = conv_err.max((a - b).norm());
        }

        let back = idft(&dft(&x)).unwrap();
        for (a, b) in x.samples().iter().zip(back.samples()) {
            roundtrip_err = roundtrip_err.max((a - b).norm());
        }

        let yc = fir_apply_with(&x, &phi, BoundaryMode::Circular).unwrap();
        let lhs = dft(&yc);
        let xs = dft(&x);
        let h = phi.frequency_response(n).unwrap();
        for ((l, xk), hk) in lhs.bins().iter().zip(xs.bins()).zip(h.bins()) {
            theorem_err = theorem_err.max((l - xk * hk).norm());
        }
    }
    let pass = conv_err < 1e-12 && roundtrip_err < 1e-10 && theorem_err < 1e-9;
    verdict(
        2,
        "FIR engine oracle",
        pass,
        format!("convolution {conv_err:.1e}, dft roundtrip {roundtrip_err:.1e}, convolution theorem {theorem_err:.1e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_ncg_structure() {
    let s = shared();
    let cfg = NcgConfig::default();
    let (mut first_ok, mut monotone_ok, mut feasible_ok) = (true, true, true);
    let runs = 10u64;
    for i in 0..runs {
        let d = (i % 5) as usize;
        let slice = s.testbed.slice(d, Day::Test, 9000 + i).unwrap();
        let out = ncg_optimize(&slice, &s.net, d, &cfg).unwrap();
        let (_, g0) = slice_objective(&slice, &FirTaps::identity(cfg.taps).unwrap(), &s.net, d, cfg.boundary).unwrap();
        let expected: Vec<f64> = g0.iter().flat_map(|c| [c.re, c.im]).collect();
        if out.trace.len() > 1 {
            first_ok &= out.trace[1].direction == expected && out.trace[1].beta == 0.0;
        }
        monotone_ok &= out.trace.windows(2).all(|w| w[1].objective >= w[0].objective);
        feasible_ok &= out.trace.iter().all(|r| r.epsilon <= cfg.epsilon_max + 1e-12)
            && out.taps.epsilon() <= cfg.epsilon_max + 1e-12;
    }
    let pass = first_ok && monotone_ok && feasible_ok;
    verdict(
        3,
        "NCG structure",
        pass,
        format!("{runs} runs: first direction exact {first_ok}, non-decreasing {monotone_ok}, within budget {feasible_ok}"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_compensation_exactness() {
    let circ = |x: &IqSequence, phi: &FirTaps| fir_apply_with(x, phi, BoundaryMode::Circular).unwrap();
    let add = |a: &IqSequence, b: &IqSequence| {
        IqSequence::new(a.samples().iter().zip(b.samples()).map(|(x, y)| x + y).collect()).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut identical = 0;
    for trial in 0..20u64 {
        let n = 256;
        let mut rng = seed::rng(700 + trial);
        let bits = random_bits(&mut rng, 2 * n);
        let x = modulate(&bits, ModScheme::Qpsk).unwrap();
        let phi = random_taps(10, 0.5, 800 + trial);
        assert!(phi.epsilon() <= 0.5);
        let mut h = random_seq(3, 900 + trial).scale(C64::new(0.3, 0.0)).samples().to_vec();
        h[0] += C64::new(1.0, 0.0);
        let h = FirTaps::new(h).unwrap();
        let w = random_seq(n, 1000 + trial).scale(C64::new(0.5, 0.0));
        let est = ChannelEstimate::oracle(&h, n).unwrap().with_noise(&w).unwrap();

        let filtered = compensate(&add(&circ(&circ(&x, &phi), &h), &w), &phi, &est).unwrap();
        for (a, b) in x.samples().iter().zip(filtered.samples()) {
            worst = worst.max((a.re - b.re).abs()).max((a.im - b.im).abs());
        }
        let plain = compensate(&add(&circ(&x, &h), &w), &FirTaps::identity(1).unwrap(), &est).unwrap();
        let (bf, bp) = (demodulate(&filtered, ModScheme::Qpsk), demodulate(&plain, ModScheme::Qpsk));
        identical += usize::from(bf == bp);
        assert!(evm(&x, &filtered).unwrap() < 1e-8);
    }
    let pass = worst < 1e-9 && identical == 20;
    verdict(
        4,
        "compensation exactness",
        pass,
        format!("max component error {worst:.1e}, identical decisions {identical}/20"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_epsilon_sweep_trend() {
    let t0 = Instant::now();
    let cfg = SweepConfig {
        trials: 200,
        ..SweepConfig::default()
    };
    let rows = epsilon_sweep(&cfg).unwrap();
    let elapsed = t0.elapsed();
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let per: Vec<f64> = rows.iter().map(|r| r.per).collect();
    let rho = spearman(&eps, &per);
    let base = per[0];
    let worst_low = rows
        .iter()
        .filter(|r| r.epsilon <= 0.2 + 1e-12)
        .map(|r| (r.per - base).abs())
        .fold(0.0, f64::max);
    let pass = eps.len() == 6 && rho > 0.8 && worst_low <= 0.01 && elapsed < Duration::from_secs(120);
    let table: Vec<String> = rows.iter().map(|r| format!("{:.1}:{:.4}", r.epsilon, r.per)).collect();
    verdict(
        5,
        "epsilon sweep trend",
        pass,
        format!(
            "spearman {rho:.3}, max |dPER| for eps<=0.2 {:.2} pp, PER {}, {:.1}s",
            100.0 * worst_low,
            table.join(" "),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_end_to_end_improvement() {
    let s = shared();
    let t0 = Instant::now();
    let cfg = NcgConfig::default();
    assert_eq!((cfg.taps, s.testbed.config().slice_len), (10, 25));
    let mut before = Vec::new();
    let mut after = Vec::new();
    for i in 0..100u64 {
        let d = (i % 5) as usize;
        let slice = s.testbed.slice(d, Day::Test, i).unwrap();
        let out = ncg_optimize(&slice, &s.net, d, &cfg).unwrap();
        before.push(psa(&s.net, &slice, d, None, MODE).unwrap());
        after.push(psa(&s.net, &slice, d, Some(&out.taps), MODE).unwrap());
    }
    let elapsed = t0.elapsed();
    let improved = before.iter().zip(&after).filter(|(b, a)| a > b).count();
    let (mb, ma) = (mean(&before), mean(&after));
    let drop = s.train_day_accuracy - mb;
    let pass = drop >= 0.15 && improved >= 90 && ma - mb >= 0.10 && elapsed < Duration::from_secs(600);
    verdict(
        6,
        "end-to-end improvement",
        pass,
        format!(
            "train-day accuracy {:.3}, test-day PSA {mb:.3} (drop {:.1} pt), improved {improved}/100, mean PSA {mb:.3} -> {ma:.3} (+{:.1} pp), {:.0}s",
            s.train_day_accuracy,
            100.0 * drop,
            100.0 * (ma - mb),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_pba_protocol() {
    let s = shared();
    assert_eq!(s.testbed.config().batch_len, 12);
    let cfg = NcgConfig::default();
    let (mut dpsa, mut dpba) = (Vec::new(), Vec::new());
    for seed in 0..10u64 {
        let d = (seed % 5) as usize;
        let batch = s.testbed.batch(d, Day::Test, 1000 + seed).unwrap();
        let first = &batch.slices()[0];
        let taps = ncg_optimize(first, &s.net, d, &cfg).unwrap().taps;
        dpsa.push(psa(&s.net, first, d, Some(&taps), MODE).unwrap() - psa(&s.net, first, d, None, MODE).unwrap());
        dpba.push(pba(&s.net, &batch, d, Some(&taps), MODE).unwrap() - pba(&s.net, &batch, d, None, MODE).unwrap());
    }
    let (mp, mb) = (mean(&dpsa), mean(&dpba));
    let pass = mb > 0.0 && mb <= mp;
    verdict(
        7,
        "PBA protocol",
        pass,
        format!("10 seeds, B=12: mean dPSA {:+.3}, mean dPBA {:+.3}", mp, mb),
    );
    assert!(pass);
}

#[test]
fn criterion_08_anti_spoofing() {
    let s = shared();
    let cfg = NcgConfig::default();
    let (mut base, mut stolen, mut own_before, mut own_after) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for trial in 0..20u64 {
        let victim = (trial % 5) as usize;
        let adversary = (victim + 1 + (trial / 5) as usize % 4) % 5;
        let victim_slice = s.testbed.slice(victim, Day::Test, 5000 + trial).unwrap();
        let victim_taps = ncg_optimize(&victim_slice, &s.net, victim, &cfg).unwrap().taps;
        let stream = s.testbed.batch(adversary, Day::Test, 6000 + trial).unwrap();
        let own = ncg_optimize(&stream.slices()[0], &s.net, adversary, &cfg).unwrap().taps;
        let r = adversary_eval(&s.net, adversary, &stream, &victim_taps, victim, Some(&own), MODE, trial).unwrap();
        base.push(r.baseline.pba);
        stolen.push(r.stolen.pba);
        own_before.push(psa(&s.net, &stream.slices()[0], adversary, None, MODE).unwrap());
        own_after.push(r.own.as_ref().unwrap().psa);
    }
    let (mb, ms) = (mean(&base), mean(&stolen));
    let pass = ms <= mb;
    verdict(
        8,
        "anti-spoofing",
        pass,
        format!(
            "20 trials: adversary classified as victim {mb:.3} without taps, {ms:.3} with stolen taps; own taps toward own class {:.3} -> {:.3}",
            mean(&own_before),
            mean(&own_after)
        ),
    );
    assert!(pass, "stolen taps raised the victim-class rate: {mb:.3} -> {ms:.3}");
}

#[test]
fn criterion_09_data_driven_trainer() {
    let s = shared();
    let t0 = Instant::now();
    let hash = s.net.weights_sha256();
    let cfg = FirLayerConfig::default();
    let identity = FirTaps::identity(cfg.taps).unwrap();
    let mut beat = 0;
    let mut hash_ok = true;
    let mut dists = Vec::new();
    let mut rows = Vec::new();
    for d in 0..5 {
        let train = s.testbed.fixed_link_examples(d, Day::Test, 0, 200, 0).unwrap();
        let valid = s.testbed.fixed_link_examples(d, Day::Test, 0, 100, 1).unwrap();
        let held = s.testbed.fixed_link_examples(d, Day::Test, 0, 100, 2).unwrap();
        let mut session = FirLayerSession::new(&s.net, d, cfg.clone(), d as u64).unwrap();
        hash_ok &= session.net_sha256() == hash;
        let out = train_fir_layer(&mut session, &train, &valid).unwrap();
        hash_ok &= s.net.weights_sha256() == hash;
        let a0 = mean_activation(&s.net, &held, &identity, d, MODE).unwrap();
        let a1 = mean_activation(&s.net, &held, &out.taps, d, MODE).unwrap();
        beat += usize::from(a1 > a0);
        rows.push(format!("{d}:{a0:.3}->{a1:.3}"));
        dists.extend(out.taps.tap_distances());
    }
    dists.sort_by(f64::total_cmp);
    let median = dists[dists.len() / 2];
    let max = *dists.last().unwrap();
    let pass = hash_ok && beat >= 4 && max <= cfg.epsilon_max + 1e-12 && median <= 0.2;
    verdict(
        9,
        "data-driven trainer",
        pass,
        format!(
            "weights unchanged {hash_ok}, beat identity {beat}/5 [{}], tap distance median {median:.3} max {max:.3}, {:.1}s",
            rows.join(" "),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_log_chain_rule() {
    let s = shared();
    let mut worst: f64 = 0.0;
    for case in 0..30u64 {
        let d = (case % 5) as usize;
        let x = s.testbed.slice(d, Day::Test, 20_000 + case).unwrap().inputs()[0].clone();
        let phi = random_taps(1 + case as usize % 10, 0.5, 1200 + case);
        let class = ((case / 5) % 5) as usize;
        let mode = if case % 2 == 0 { BoundaryMode::CausalZeroPad } else { BoundaryMode::Circular };
        let (f, g_log) = fir_layer_gradients(&x, &phi, &s.net, class, mode).unwrap();
        let g = tap_gradient(&x, &phi, &s.net, class, mode).unwrap();
        for (a, b) in g_log.iter().zip(&g) {
            let expect = b / f;
            worst = worst.max((a - expect).norm() / expect.norm().max(1.0));
        }
    }
    let pass = worst < 1e-8;
    verdict(10, "cross-implementation check", pass, format!("30 cases, max deviation {worst:.1e}"));
    assert!(pass);
}

const PIPELINE: [&str; 8] = [
    "gen-dataset",
    "train-net",
    "optimize-ncg",
    "train-fir-layers",
    "evaluate",
    "adversary",
    "compensate-sweep",
    "report",
];

fn run_smoke(out: &Path) {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.json");
    for cmd in PIPELINE {
        let o = Command::new(env!("CARGO_BIN_EXE_prefir"))
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(out)
            .arg(cmd)
            .env_remove("PREFIR_OUT")
            .output()
            .expect("spawn prefir");
        assert!(o.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&o.stderr));
    }
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_11_reproducibility() {
    let t0 = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_smoke(a.path());
    run_smoke(b.path());
    let (fa, fb) = (files(a.path()), files(b.path()));
    let differing: Vec<String> = fa
        .iter()
        .filter(|p| std::fs::read(a.path().join(p)).ok() != std::fs::read(b.path().join(p)).ok())
        .map(|p| p.display().to_string())
        .collect();
    let expected = [
        "manifest.json",
        "models/net.bin",
        "reports/evaluation.json",
        "reports/adversary.json",
        "reports/sweep.csv",
        "reports/summary.json",
        "reports/fir_layer_summary.csv",
        "taps/ncg/dev0_rec0.json",
        "taps/fir_layer/class4.json",
        "datasets/index.json",
    ];
    let missing: Vec<&str> = expected.iter().copied().filter(|p| !a.path().join(p).exists()).collect();
    let pass = fa == fb && differing.is_empty() && missing.is_empty();
    verdict(
        11,
        "reproducibility",
        pass,
        format!(
            "{} files compared, {} differ, missing {:?}, two runs in {:.1}s",
            fa.len(),
            differing.len(),
            missing,
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass, "differing: {differing:?}");
}
