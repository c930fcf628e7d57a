//! Slice-level waveform optimization: choose FIR taps that maximize the summed
//! target-class activation `sum_s f_A(fir(x_s, phi))` of a frozen classifier.
//!
//! The solver is nonlinear conjugate gradient ascent with the Fletcher-Reeves
//! conjugacy parameter, restarted every `2M` iterations or whenever the
//! conjugate direction stops being an ascent direction. Step sizes come from a
//! secant line search on the directional derivative. Every iterate is projected
//! onto the ball `|phi_k - e_k| <= epsilon_max` around the identity filter.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::net::{MicroNet, Objective};
use crate::signal::{fir_apply_with, fir_tap_vjp, BoundaryMode, FirTaps, IqSequence, C64};

/// `S` consecutive classifier inputs of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    inputs: Vec<IqSequence>,
}

impl Slice {
    pub fn new(inputs: Vec<IqSequence>) -> Result<Self> {
        let first = inputs.first().ok_or_else(|| invalid("a slice needs at least one input"))?;
        let n = first.len();
        if inputs.iter().any(|x| x.len() != n) {
            return Err(invalid("all inputs of a slice must share one length"));
        }
        Ok(Self { inputs })
    }

    pub fn inputs(&self) -> &[IqSequence] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.inputs[0].len()
    }
}

/// `B` consecutive slices with a common `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    slices: Vec<Slice>,
}

impl Batch {
    pub fn new(slices: Vec<Slice>) -> Result<Self> {
        let first = slices.first().ok_or_else(|| invalid("a batch needs at least one slice"))?;
        let (s, n) = (first.len(), first.input_len());
        if slices.iter().any(|sl| sl.len() != s || sl.input_len() != n) {
            return Err(invalid("all slices of a batch must share S and N"));
        }
        Ok(Self { slices })
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineSearchKind {
    Secant,
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaRule {
    FletcherReeves,
    /// `beta = 0` at every iteration (plain projected gradient ascent).
    SteepestAscent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NcgConfig {
    /// Number of taps `M`.
    pub taps: usize,
    /// Iteration cap `T`.
    pub max_iterations: usize,
    pub epsilon_max: f64,
    pub line_search: LineSearchKind,
    /// Initial trial step, as the largest per-tap displacement it produces.
    pub alpha0: f64,
    /// Objective change below which an iteration counts as no progress.
    pub tolerance: f64,
    /// Consecutive no-progress iterations before stopping.
    pub patience: usize,
    /// Conjugacy restart period; `None` means `2M`.
    pub restart_every: Option<usize>,
    pub beta_rule: BetaRule,
    pub boundary: BoundaryMode,
    pub secant_iterations: usize,
    pub max_backtracks: usize,
    pub seed: u64,
}

impl Default for NcgConfig {
    fn default() -> Self {
        Self {
            taps: 10,
            max_iterations: 50,
            epsilon_max: 0.5,
            line_search: LineSearchKind::Secant,
            alpha0: 0.05,
            tolerance: 1e-6,
            patience: 3,
            restart_every: None,
            beta_rule: BetaRule::FletcherReeves,
            boundary: BoundaryMode::CausalZeroPad,
            secant_iterations: 8,
            max_backtracks: 20,
            seed: 0,
        }
    }
}

impl NcgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 || self.max_iterations == 0 {
            return Err(invalid("taps and max_iterations must be >= 1"));
        }
        if !(self.epsilon_max > 0.0) || !(self.tolerance > 0.0) || !(self.alpha0 > 0.0) {
            return Err(invalid("epsilon_max, tolerance and alpha0 must be > 0"));
        }
        Ok(())
    }

    fn line_params(&self) -> LineSearchParams {
        LineSearchParams {
            kind: self.line_search,
            secant_iterations: self.secant_iterations,
            max_backtracks: self.max_backtracks,
        }
    }
}

/// Gradient of `objective(fir(x, phi))` with respect to the taps, as
/// `d/dphi_k^R + j d/dphi_k^I`, together with the objective value.
pub fn tap_objective_gradient(
    x: &IqSequence,
    phi: &FirTaps,
    net: &MicroNet,
    objective: &Objective,
    mode: BoundaryMode,
) -> Result<(f64, Vec<C64>)> {
    let filtered = fir_apply_with(x, phi, mode)?;
    let (value, _, upstream) = net.objective_gradient(&filtered, objective)?;
    Ok((value, fir_tap_vjp(x, &upstream, phi.len(), mode)?))
}

/// `df_A/dphi_k^R + j df_A/dphi_k^I` for `k = 0..M-1`.
pub fn tap_gradient(x: &IqSequence, phi: &FirTaps, net: &MicroNet, class: usize, mode: BoundaryMode) -> Result<Vec<C64>> {
    Ok(tap_objective_gradient(x, phi, net, &Objective::Activation(class), mode)?.1)
}

/// `sum_s f_A(x_s, phi)` and its tap gradient, reduced in input order.
pub fn slice_objective(slice: &Slice, phi: &FirTaps, net: &MicroNet, class: usize, mode: BoundaryMode) -> Result<(f64, Vec<C64>)> {
    let parts: Vec<(f64, Vec<C64>)> = slice
        .inputs()
        .par_iter()
        .map(|x| tap_objective_gradient(x, phi, net, &Objective::Activation(class), mode))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut grad = vec![C64::new(0.0, 0.0); phi.len()];
    for (v, g) in parts {
        total += v;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((total, grad))
}

/// `sum_s f_A(x_s, phi)` without gradients.
pub fn slice_value(slice: &Slice, phi: &FirTaps, net: &MicroNet, class: usize, mode: BoundaryMode) -> Result<f64> {
    let parts: Vec<f64> = slice
        .inputs()
        .par_iter()
        .map(|x| Ok(net.forward(&fir_apply_with(x, phi, mode)?)?[class]))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().sum())
}

/// Real inner product of two tap vectors viewed as `2M` real coordinates.
pub fn real_dot(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn identity_tap(k: usize) -> C64 {
    if k == 0 {
        C64::new(1.0, 0.0)
    } else {
        C64::new(0.0, 0.0)
    }
}

/// The path `alpha -> P(phi + alpha p)` where `P` clips every tap to the
/// `radius`-ball around the identity filter.
#[derive(Debug, Clone)]
pub struct ProjectedRay {
    base: Vec<C64>,
    dir: Vec<C64>,
    radius: f64,
}

impl ProjectedRay {
    pub fn new(base: &FirTaps, dir: &[C64], radius: f64) -> Result<Self> {
        if dir.len() != base.len() {
            return Err(invalid("direction and taps differ in length"));
        }
        Ok(Self {
            base: base.taps().to_vec(),
            dir: dir.to_vec(),
            radius,
        })
    }

    /// Smallest positive step at which some tap reaches the ball's boundary
    /// (infinite if the direction is zero).
    pub fn first_boundary_hit(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (k, (b, p)) in self.base.iter().zip(&self.dir).enumerate() {
            let a = p.norm_sqr();
            if a == 0.0 {
                continue;
            }
            let d = b - identity_tap(k);
            // |d + t p|^2 = r^2  =>  a t^2 + 2 Re(conj(d) p) t + |d|^2 - r^2 = 0
            let half_b = d.re * p.re + d.im * p.im;
            let c = d.norm_sqr() - self.radius * self.radius;
            let disc = (half_b * half_b - a * c).max(0.0);
            let t = (-half_b + disc.sqrt()) / a;
            best = best.min(t.max(0.0));
        }
        best
    }

    /// Upper end of the step interval searched along this ray.
    pub fn alpha_max(&self) -> f64 {
        let pmax = self.dir.iter().map(|p| p.norm()).fold(0.0, f64::max);
        if pmax == 0.0 {
            return 0.0;
        }
        self.first_boundary_hit().max(self.radius / pmax)
    }

    /// Projected taps at `alpha` and the derivative of the path there.
    pub fn point(&self, alpha: f64) -> (FirTaps, Vec<C64>) {
        let mut taps = Vec::with_capacity(self.base.len());
        let mut tangent = Vec::with_capacity(self.base.len());
        for (k, (b, p)) in self.base.iter().zip(&self.dir).enumerate() {
            let e = identity_tap(k);
            let d = b - e + p * alpha;
            let r = d.norm();
            if r <= self.radius {
                taps.push(e + d);
                tangent.push(*p);
            } else {
                let radial = (d.re * p.re + d.im * p.im) / (r * r);
                taps.push(e + d * (self.radius / r));
                tangent.push((p - d * radial) * (self.radius / r));
            }
        }
        (FirTaps::new(taps).expect("finite projected taps"), tangent)
    }
}

/// Objective restricted to a line, as seen by [`line_search`].
pub trait LineObjective {
    fn value(&mut self, alpha: f64) -> Result<f64>;
    /// Value and derivative with respect to `alpha`.
    fn value_and_slope(&mut self, alpha: f64) -> Result<(f64, f64)>;
}

#[derive(Debug, Clone, Copy)]
pub struct LineSearchParams {
    pub kind: LineSearchKind,
    pub secant_iterations: usize,
    pub max_backtracks: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            kind: LineSearchKind::Secant,
            secant_iterations: 8,
            max_backtracks: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub value: f64,
    /// No improving step was found; `alpha` is 0.
    pub stalled: bool,
}

/// Approximate `argmax_{alpha in (0, alpha_max]} F(alpha)`.
///
/// Secant mode runs the secant method on `F'` (curvature approximated from two
/// slope evaluations), keeping the best point seen; if none beats `F(0)` it
/// falls back to halving the trial step. The result always satisfies
/// `F(alpha) >= F(0)`; `alpha = 0` signals a stall.
pub fn line_search<L: LineObjective + ?Sized>(
    objective: &mut L,
    f0: f64,
    slope0: f64,
    alpha_init: f64,
    alpha_max: f64,
    params: &LineSearchParams,
) -> Result<LineSearchOutcome> {
    let stall = LineSearchOutcome {
        alpha: 0.0,
        value: f0,
        stalled: true,
    };
    if !(slope0 > 0.0) || !(alpha_max > 0.0) || !slope0.is_finite() {
        return Ok(stall);
    }
    let first = alpha_init.min(alpha_max);
    if !(first > 0.0) {
        return Ok(stall);
    }
    let mut best = (0.0, f0);

    if params.kind == LineSearchKind::Secant {
        let (mut a_prev, mut s_prev) = (0.0, slope0);
        let mut a = first;
        for _ in 0..params.secant_iterations.max(1) {
            let (f, s) = objective.value_and_slope(a)?;
            if f > best.1 {
                best = (a, f);
            }
            if s > 0.0 && a >= alpha_max {
                break;
            }
            let curvature = (s - s_prev) / (a - a_prev);
            let next = if curvature < 0.0 && curvature.is_finite() {
                a - s / curvature
            } else if s > 0.0 {
                2.0 * a
            } else {
                0.5 * (a_prev + a)
            };
            let next = next.clamp(alpha_max * 1e-12, alpha_max);
            if (next - a).abs() <= 1e-10 * a.max(f64::MIN_POSITIVE) {
                break;
            }
            a_prev = a;
            s_prev = s;
            a = next;
        }
        if best.0 > 0.0 {
            return Ok(LineSearchOutcome {
                alpha: best.0,
                value: best.1,
                stalled: false,
            });
        }
    }

    let mut a = first;
    for _ in 0..=params.max_backtracks {
        let f = objective.value(a)?;
        if f > f0 {
            return Ok(LineSearchOutcome {
                alpha: a,
                value: f,
                stalled: false,
            });
        }
        a *= 0.5;
    }
    Ok(stall)
}

struct SliceLine<'a> {
    slice: &'a Slice,
    net: &'a MicroNet,
    class: usize,
    mode: BoundaryMode,
    ray: &'a ProjectedRay,
    // Last gradient evaluation, reused when the accepted step is that point.
    last: Option<(f64, f64, Vec<C64>)>,
}

impl LineObjective for SliceLine<'_> {
    fn value(&mut self, alpha: f64) -> Result<f64> {
        let (taps, _) = self.ray.point(alpha);
        slice_value(self.slice, &taps, self.net, self.class, self.mode)
    }

    fn value_and_slope(&mut self, alpha: f64) -> Result<(f64, f64)> {
        let (taps, tangent) = self.ray.point(alpha);
        let (f, g) = slice_objective(self.slice, &taps, self.net, self.class, self.mode)?;
        let slope = real_dot(&g, &tangent);
        self.last = Some((alpha, f, g));
        Ok((f, slope))
    }
}

/// Line search along `P(phi + alpha p)` for a slice objective. Returns the
/// outcome and, when available, the gradient at the accepted point.
pub fn slice_line_search(
    slice: &Slice,
    net: &MicroNet,
    class: usize,
    phi: &FirTaps,
    direction: &[C64],
    f0: f64,
    grad0: &[C64],
    cfg: &NcgConfig,
) -> Result<(LineSearchOutcome, Option<Vec<C64>>)> {
    let ray = ProjectedRay::new(phi, direction, cfg.epsilon_max)?;
    let alpha_max = ray.alpha_max();
    let pmax = direction.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let alpha_init = if pmax > 0.0 { cfg.alpha0 / pmax } else { 0.0 };
    let (_, tangent0) = ray.point(0.0);
    let slope0 = real_dot(grad0, &tangent0);
    let mut line = SliceLine {
        slice,
        net,
        class,
        mode: cfg.boundary,
        ray: &ray,
        last: None,
    };
    let outcome = line_search(&mut line, f0, slope0, alpha_init, alpha_max, &cfg.line_params())?;
    let grad = match line.last {
        Some((a, _, g)) if a == outcome.alpha && !outcome.stalled => Some(g),
        _ => None,
    };
    Ok((outcome, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcgRecord {
    pub t: usize,
    /// `sum_s f_A` at the iterate held after this iteration.
    pub objective: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub stalled: bool,
    /// Search direction `p^(t)` as `2M` real components (empty for `t = 0`).
    #[serde(skip)]
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NcgOutcome {
    pub taps: FirTaps,
    pub trace: Vec<NcgRecord>,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// The search ended because no ascent step could be found along the gradient.
    pub stalled: bool,
}

fn to_real(v: &[C64]) -> Vec<f64> {
    v.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// Maximizes `sum_s f_A(x_s, phi)` over taps starting from the identity filter.
pub fn ncg_optimize(slice: &Slice, net: &MicroNet, class: usize, cfg: &NcgConfig) -> Result<NcgOutcome> {
    if !net.is_frozen() {
        return Err(Error::InvalidState("tap optimization requires a frozen network".into()));
    }
    cfg.validate()?;
    if class >= net.classes() {
        return Err(invalid(format!("class {class} out of range 0..{}", net.classes())));
    }
    if cfg.taps > slice.input_len() {
        return Err(invalid(format!("{} taps exceed input length {}", cfg.taps, slice.input_len())));
    }

    let mut phi = FirTaps::identity(cfg.taps)?;
    let (mut f, mut g) = slice_objective(slice, &phi, net, class, cfg.boundary)?;
    let initial = f;
    let mut trace = vec![NcgRecord {
        t: 0,
        objective: f,
        alpha: 0.0,
        beta: 0.0,
        epsilon: 0.0,
        stalled: false,
        direction: Vec::new(),
    }];
    let restart_period = cfg.restart_every.unwrap_or(2 * cfg.taps).max(1);
    let mut p_prev = vec![C64::new(0.0, 0.0); cfg.taps];
    let mut g_prev_norm2 = 0.0;
    let mut since_restart = 0usize;
    let mut force_restart = true;
    let mut quiet = 0usize;
    let mut stalled = false;

    for t in 1..=cfg.max_iterations {
        let g_norm2 = real_dot(&g, &g);
        if g_norm2 == 0.0 {
            // stationary point: nothing left to climb
            break;
        }
        let restart = force_restart || since_restart >= restart_period || cfg.beta_rule == BetaRule::SteepestAscent;
        let mut beta = if restart || g_prev_norm2 == 0.0 { 0.0 } else { g_norm2 / g_prev_norm2 };
        let mut p: Vec<C64> = if beta == 0.0 {
            g.clone()
        } else {
            g.iter().zip(&p_prev).map(|(a, b)| a + b * beta).collect()
        };
        if beta != 0.0 && real_dot(&p, &g) <= 0.0 {
            p = g.clone();
            beta = 0.0;
        }
        if beta == 0.0 {
            since_restart = 0;
        }
        force_restart = false;

        let (ls, grad_at) = slice_line_search(slice, net, class, &phi, &p, f, &g, cfg)?;

        if ls.stalled {
            trace.push(NcgRecord {
                t,
                objective: f,
                alpha: 0.0,
                beta,
                epsilon: phi.epsilon(),
                stalled: true,
                direction: to_real(&p),
            });
            if beta != 0.0 {
                force_restart = true;
                since_restart += 1;
                continue;
            }
            stalled = true;
            break;
        }

        let ray = ProjectedRay::new(&phi, &p, cfg.epsilon_max)?;
        let (next, _) = ray.point(ls.alpha);
        let (f_next, g_next) = match grad_at {
            Some(gn) => (ls.value, gn),
            None => slice_objective(slice, &next, net, class, cfg.boundary)?,
        };
        let gain = f_next - f;
        g_prev_norm2 = g_norm2;
        p_prev = p;
        phi = next;
        f = f_next;
        g = g_next;
        trace.push(NcgRecord {
            t,
            objective: f,
            alpha: ls.alpha,
            beta,
            epsilon: phi.epsilon(),
            stalled: false,
            direction: to_real(&p_prev),
        });
        since_restart += 1;
        quiet = if gain < cfg.tolerance { quiet + 1 } else { 0 };
        if quiet >= cfg.patience {
            break;
        }
    }

    Ok(NcgOutcome {
        taps: phi,
        trace,
        initial_objective: initial,
        final_objective: f,
        stalled,
    })
}

/// Writes one JSON object per line: `{t, objective, alpha, beta, epsilon, stalled}`.
pub fn write_trace_jsonl<W: Write>(trace: &[NcgRecord], mut w: W) -> Result<()> {
    for rec in trace {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Triggers {
    /// Re-optimize after this many slices since the last optimization.
    pub timer_every: Option<usize>,
    /// Re-optimize when the probed accuracy of a slice falls below this.
    pub psa_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerReason {
    Timer,
    AccuracyDrop,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reoptimization {
    pub slice: usize,
    pub reason: TriggerReason,
    pub objective_before: f64,
    pub objective_after: f64,
}

#[derive(Debug, Clone)]
pub struct EpochOutcome {
    /// Taps in effect while each slice was transmitted.
    pub taps_per_slice: Vec<FirTaps>,
    pub reoptimizations: Vec<Reoptimization>,
    pub final_taps: FirTaps,
}

/// Runs over a stream of slices, starting a new optimization epoch whenever a
/// trigger fires. `probe(i, slice, taps)` reports the accuracy of slice `i`
/// under the taps currently in use; it is only called when a threshold is set.
pub fn optimize_epoch<P>(
    stream: &[Slice],
    net: &MicroNet,
    class: usize,
    cfg: &NcgConfig,
    triggers: &Triggers,
    mut probe: P,
) -> Result<EpochOutcome>
where
    P: FnMut(usize, &Slice, &FirTaps) -> Result<f64>,
{
    let mut current = FirTaps::identity(cfg.taps)?;
    let mut taps_per_slice = Vec::with_capacity(stream.len());
    let mut reoptimizations = Vec::new();
    let mut elapsed = 0usize;
    for (i, slice) in stream.iter().enumerate() {
        taps_per_slice.push(current.clone());
        elapsed += 1;
        let mut reason = None;
        if let Some(threshold) = triggers.psa_threshold {
            if probe(i, slice, &current)? < threshold {
                reason = Some(TriggerReason::AccuracyDrop);
            }
        }
        if reason.is_none() && triggers.timer_every.is_some_and(|every| elapsed >= every) {
            reason = Some(TriggerReason::Timer);
        }
        if let Some(reason) = reason {
            let out = ncg_optimize(slice, net, class, cfg)?;
            log::info!("slice {i}: re-optimized ({reason:?}), objective {:.4} -> {:.4}", out.initial_objective, out.final_objective);
            reoptimizations.push(Reoptimization {
                slice: i,
                reason,
                objective_before: out.initial_objective,
                objective_after: out.final_objective,
            });
            current = out.taps;
            elapsed = 0;
        }
    }
    Ok(EpochOutcome {
        taps_per_slice,
        reoptimizations,
        final_taps: current,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic;

    impl LineObjective for Quadratic {
        fn value(&mut self, a: f64) -> Result<f64> {
            Ok(3.0 - (a - 2.0) * (a - 2.0))
        }
        fn value_and_slope(&mut self, a: f64) -> Result<(f64, f64)> {
            Ok((self.value(a)?, -2.0 * (a - 2.0)))
        }
    }

    #[test]
    fn secant_finds_quadratic_maximizer() {
        let out = line_search(&mut Quadratic, -1.0, 4.0, 0.5, 100.0, &LineSearchParams::default()).unwrap();
        assert!(!out.stalled);
        assert!((out.alpha - 2.0).abs() < 1e-6, "{}", out.alpha);
    }

    #[test]
    fn backtracking_improves_quadratic() {
        let params = LineSearchParams {
            kind: LineSearchKind::Backtracking,
            ..LineSearchParams::default()
        };
        let out = line_search(&mut Quadratic, -1.0, 4.0, 10.0, 100.0, &params).unwrap();
        assert!(!out.stalled && out.value > -1.0);
        assert_eq!(out.alpha, 2.5);
    }

    struct Flat;

    impl LineObjective for Flat {
        fn value(&mut self, _: f64) -> Result<f64> {
            Ok(1.0)
        }
        fn value_and_slope(&mut self, _: f64) -> Result<(f64, f64)> {
            Ok((1.0, 0.0))
        }
    }

    #[test]
    fn flat_direction_stalls() {
        let out = line_search(&mut Flat, 1.0, 0.0, 1.0, 10.0, &LineSearchParams::default()).unwrap();
        assert!(out.stalled);
        assert_eq!(out.alpha, 0.0);
    }

    #[test]
    fn monotone_objective_stops_at_boundary() {
        // Single tap at the identity pushed radially outward; the objective
        // grows linearly in the tap's real part, so the best step is the one
        // that lands exactly on the epsilon boundary.
        let phi = FirTaps::identity(1).unwrap();
        let dir = [C64::new(0.3, 0.0)];
        let ray = ProjectedRay::new(&phi, &dir, 0.2).unwrap();
        let boundary = ray.first_boundary_hit();
        assert!((boundary - 0.2 / 0.3).abs() < 1e-12);
        assert_eq!(ray.alpha_max(), boundary);

        struct Linear(ProjectedRay);
        impl LineObjective for Linear {
            fn value(&mut self, a: f64) -> Result<f64> {
                Ok(self.0.point(a).0.taps()[0].re)
            }
            fn value_and_slope(&mut self, a: f64) -> Result<(f64, f64)> {
                let (taps, tangent) = self.0.point(a);
                Ok((taps.taps()[0].re, tangent[0].re))
            }
        }
        let mut obj = Linear(ray.clone());
        let out = line_search(&mut obj, 1.0, 0.3, 0.01, ray.alpha_max(), &LineSearchParams::default()).unwrap();
        assert!((out.alpha - boundary).abs() < 1e-12, "{} vs {boundary}", out.alpha);
        assert!((ray.point(out.alpha).0.epsilon() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn projected_tangent_matches_finite_difference() {
        let phi = FirTaps::new(vec![C64::new(1.1, 0.05), C64::new(-0.02, 0.1), C64::new(0.0, 0.0)]).unwrap();
        let dir = [C64::new(0.4, -0.2), C64::new(-0.5, 0.3), C64::new(0.1, 0.2)];
        let ray = ProjectedRay::new(&phi, &dir, 0.15).unwrap();
        for &a in &[0.01, 0.2, 0.7] {
            let (_, tan) = ray.point(a);
            let hi = ray.point(a + 1e-7).0;
            let lo = ray.point(a - 1e-7).0;
            for k in 0..3 {
                let fd = (hi.taps()[k] - lo.taps()[k]) / 2e-7;
                assert!((fd - tan[k]).norm() < 1e-6, "a={a} k={k}: {fd} vs {}", tan[k]);
            }
        }
    }

    #[test]
    fn slice_and_batch_validation() {
        assert!(Slice::new(vec![]).is_err());
        let a = IqSequence::zeros(4).unwrap();
        let b = IqSequence::zeros(5).unwrap();
        assert!(Slice::new(vec![a.clone(), b]).is_err());
        let s1 = Slice::new(vec![a.clone()]).unwrap();
        let s2 = Slice::new(vec![a.clone(), a]).unwrap();
        assert!(Batch::new(vec![s1, s2]).is_err());
        assert!(Batch::new(vec![]).is_err());
    }

    #[test]
    fn trace_jsonl_fields() {
        let rec = NcgRecord {
            t: 1,
            objective: 2.5,
            alpha: 0.1,
            beta: 0.0,
            epsilon: 0.05,
            stalled: false,
            direction: vec![1.0, 2.0],
        };
        let mut buf = Vec::new();
        write_trace_jsonl(&[rec.clone(), rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        let mut keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        keys.sort();
        assert_eq!(keys, ["alpha", "beta", "epsilon", "objective", "stalled", "t"]);
    }
}
