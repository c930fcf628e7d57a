//! Slice and batch accuracy, confusion matrices and the tap-reuse experiment.
//!
//! An input counts as correct when the argmax of the classifier output equals
//! the class being scored. Taps are applied to the received samples before
//! classification; `None` means no filtering.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::net::{argmax, MicroNet};
use crate::signal::{fir_apply_with, BoundaryMode, FirTaps};
use crate::wop::{Batch, Slice};

/// Classifier outputs for every input of `slice` after optional filtering.
pub fn slice_outputs(net: &MicroNet, slice: &Slice, phi: Option<&FirTaps>, mode: BoundaryMode) -> Result<Vec<Vec<f64>>> {
    slice
        .inputs()
        .par_iter()
        .map(|x| match phi {
            Some(p) => net.forward(&fir_apply_with(x, p, mode)?),
            None => net.forward(x),
        })
        .collect()
}

/// Fraction of the slice's inputs predicted as `class`.
pub fn psa(net: &MicroNet, slice: &Slice, class: usize, phi: Option<&FirTaps>, mode: BoundaryMode) -> Result<f64> {
    check_class(net, class)?;
    let outs = slice_outputs(net, slice, phi, mode)?;
    Ok(outs.iter().filter(|o| argmax(o) == class).count() as f64 / outs.len() as f64)
}

/// Mean PSA over the batch with one tap set for every slice.
pub fn pba(net: &MicroNet, batch: &Batch, class: usize, phi: Option<&FirTaps>, mode: BoundaryMode) -> Result<f64> {
    let mut total = 0.0;
    for s in batch.slices() {
        total += psa(net, s, class, phi, mode)?;
    }
    Ok(total / batch.len() as f64)
}

fn check_class(net: &MicroNet, class: usize) -> Result<()> {
    if class >= net.classes() {
        return Err(invalid(format!("class {class} out of range 0..{}", net.classes())));
    }
    Ok(())
}

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum()
    }

    /// Share of `truth`'s examples predicted as `predicted`.
    pub fn rate(&self, truth: usize, predicted: usize) -> f64 {
        let n = self.row_total(truth);
        if n == 0 {
            0.0
        } else {
            self.counts[truth][predicted] as f64 / n as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        let total: u64 = self.counts.iter().flatten().sum();
        let diag: u64 = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        if total == 0 {
            0.0
        } else {
            diag as f64 / total as f64
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.counts.len();
        let mut header = vec!["true".to_string()];
        header.extend((0..d).map(|j| format!("pred_{j}")));
        out.write_record(&header)?;
        for (i, row) in self.counts.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|c| c.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Scores of one batch of `device` toward `target` under one tap set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// PSA of the first slice.
    pub psa: f64,
    /// Mean PSA over all slices.
    pub pba: f64,
    pub confusion: Confusion,
    pub slice_psa: Vec<f64>,
    /// Mean `f_target` per slice.
    pub slice_activation: Vec<f64>,
    pub taps_id: String,
    pub device: usize,
    pub target: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub taps_id: String,
    pub device: usize,
    pub target: usize,
    pub seed: u64,
}

pub fn evaluate_batch(net: &MicroNet, batch: &Batch, phi: Option<&FirTaps>, mode: BoundaryMode, meta: EvalMeta) -> Result<EvalReport> {
    check_class(net, meta.target)?;
    check_class(net, meta.device)?;
    let mut confusion = Confusion::new(net.classes());
    let mut slice_psa = Vec::with_capacity(batch.len());
    let mut slice_activation = Vec::with_capacity(batch.len());
    for s in batch.slices() {
        let outs = slice_outputs(net, s, phi, mode)?;
        let mut hits = 0usize;
        let mut act = 0.0;
        for o in &outs {
            let p = argmax(o);
            confusion.add(meta.device, p);
            hits += usize::from(p == meta.target);
            act += o[meta.target];
        }
        slice_psa.push(hits as f64 / outs.len() as f64);
        slice_activation.push(act / outs.len() as f64);
    }
    Ok(EvalReport {
        psa: slice_psa[0],
        pba: slice_psa.iter().sum::<f64>() / slice_psa.len() as f64,
        confusion,
        slice_psa,
        slice_activation,
        taps_id: meta.taps_id,
        device: meta.device,
        target: meta.target,
        seed: meta.seed,
    })
}

/// An adversary replaying another device's taps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryReport {
    pub victim: usize,
    pub adversary: usize,
    /// Adversary unfiltered, scored toward the victim.
    pub baseline: EvalReport,
    /// Adversary with the victim's taps, scored toward the victim.
    pub stolen: EvalReport,
    /// Adversary with taps optimized for itself, scored toward itself.
    pub own: Option<EvalReport>,
}

/// Scores the adversary's traffic toward `victim` with and without the
/// victim's taps, and optionally toward itself under its own taps.
pub fn adversary_eval(
    net: &MicroNet,
    adversary: usize,
    stream: &Batch,
    victim_taps: &FirTaps,
    victim: usize,
    own_taps: Option<&FirTaps>,
    mode: BoundaryMode,
    seed: u64,
) -> Result<AdversaryReport> {
    if adversary == victim {
        return Err(invalid("adversary and victim must be different devices"));
    }
    let meta = |taps_id: &str, target| EvalMeta {
        taps_id: taps_id.to_string(),
        device: adversary,
        target,
        seed,
    };
    let baseline = evaluate_batch(net, stream, None, mode, meta("none", victim))?;
    let stolen = evaluate_batch(net, stream, Some(victim_taps), mode, meta("victim", victim))?;
    let own = own_taps
        .map(|t| evaluate_batch(net, stream, Some(t), mode, meta("own", adversary)))
        .transpose()?;
    Ok(AdversaryReport {
        victim,
        adversary,
        baseline,
        stolen,
        own,
    })
}
