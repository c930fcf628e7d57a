//! Per-class FIR taps trained as a filtering layer in front of a frozen
//! classifier, by minimizing `-ln f_d` over examples of class `d`.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::net::{Adam, Example, MicroNet, Objective};
use crate::seed::{self, derive_seed};
use crate::signal::{fir_apply_with, fir_tap_vjp, BoundaryMode, FirTaps, IqSequence, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FirLayerConfig {
    pub taps: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub init_noise_std: f64,
    pub epsilon_max: f64,
    pub batch_size: usize,
    /// Epochs without a better validation activation before stopping.
    pub patience: usize,
    pub boundary: BoundaryMode,
}

impl Default for FirLayerConfig {
    fn default() -> Self {
        Self {
            taps: 10,
            epochs: 100,
            learning_rate: 1e-3,
            init_noise_std: 1e-3,
            epsilon_max: 0.5,
            batch_size: 16,
            patience: 10,
            boundary: BoundaryMode::CausalZeroPad,
        }
    }
}

impl FirLayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 || self.batch_size == 0 {
            return Err(invalid("taps and batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon_max > 0.0) || !(self.init_noise_std >= 0.0) {
            return Err(invalid("learning_rate and epsilon_max must be > 0, init_noise_std >= 0"));
        }
        Ok(())
    }
}

/// `f_d(fir(x, phi))` and the gradient of `ln f_d` with respect to the taps.
pub fn fir_layer_gradients(x: &IqSequence, taps: &FirTaps, net: &MicroNet, class: usize, mode: BoundaryMode) -> Result<(f64, Vec<C64>)> {
    let filtered = fir_apply_with(x, taps, mode)?;
    let (_, probs, upstream) = net.objective_gradient(&filtered, &Objective::LogActivation(class))?;
    Ok((probs[class], fir_tap_vjp(x, &upstream, taps.len(), mode)?))
}

/// Mean `f_class` over `data` after filtering with `taps`.
pub fn mean_activation(net: &MicroNet, data: &[Example], taps: &FirTaps, class: usize, mode: BoundaryMode) -> Result<f64> {
    if data.is_empty() {
        return Err(invalid("empty dataset"));
    }
    let acts: Vec<f64> = data
        .par_iter()
        .map(|ex| Ok(net.forward(&fir_apply_with(&ex.x, taps, mode)?)?[class]))
        .collect::<Result<_>>()?;
    Ok(acts.iter().sum::<f64>() / data.len() as f64)
}

/// One class's trainable filter bound to a frozen network.
#[derive(Debug, Clone)]
pub struct FirLayerSession<'a> {
    class: usize,
    taps: FirTaps,
    net: &'a MicroNet,
    adam: Adam,
    cfg: FirLayerConfig,
    net_sha256: String,
    seed: u64,
}

impl<'a> FirLayerSession<'a> {
    pub fn new(net: &'a MicroNet, class: usize, cfg: FirLayerConfig, seed: u64) -> Result<Self> {
        if !net.is_frozen() {
            return Err(Error::InvalidState("filter training requires a frozen network".into()));
        }
        cfg.validate()?;
        if class >= net.classes() {
            return Err(invalid(format!("class {class} out of range 0..{}", net.classes())));
        }
        let mut rng = seed::rng(seed);
        let mut params: Vec<f64> = (0..2 * cfg.taps).map(|_| seed::gaussian(&mut rng, cfg.init_noise_std)).collect();
        params[0] = 1.0;
        let taps = FirTaps::from_params(&params)?.project(cfg.epsilon_max);
        Ok(Self {
            class,
            taps,
            net,
            adam: Adam::new(2 * cfg.taps),
            net_sha256: net.weights_sha256(),
            cfg,
            seed,
        })
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn taps(&self) -> &FirTaps {
        &self.taps
    }

    pub fn config(&self) -> &FirLayerConfig {
        &self.cfg
    }

    /// Checksum of the frozen weights when the session was opened.
    pub fn net_sha256(&self) -> &str {
        &self.net_sha256
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirLayerOutcome {
    pub class: usize,
    pub taps: FirTaps,
    pub epochs_run: usize,
    /// Validation mean `f_d` under identity taps.
    pub identity_activation: f64,
    /// Validation mean `f_d` under the returned taps.
    pub final_activation: f64,
    /// Validation mean `f_d` after each epoch.
    pub history: Vec<f64>,
}

/// Trains the session's taps with Adam on `-ln f_d`, projecting onto the
/// epsilon ball after every step and keeping the best validation epoch. An
/// empty `validation` set falls back to `train` for model selection.
pub fn train_fir_layer(session: &mut FirLayerSession<'_>, train: &[Example], validation: &[Example]) -> Result<FirLayerOutcome> {
    let class = session.class;
    if train.is_empty() {
        return Err(invalid("filter training set is empty"));
    }
    if let Some(ex) = train.iter().chain(validation).find(|e| e.label != class) {
        return Err(invalid(format!("example of class {} in a class-{class} session", ex.label)));
    }
    let net = session.net;
    let cfg = session.cfg.clone();
    let mode = cfg.boundary;
    let valid = if validation.is_empty() { train } else { validation };
    let identity = FirTaps::identity(cfg.taps)?;
    let identity_activation = mean_activation(net, valid, &identity, class, mode)?;
    let mut best = (mean_activation(net, valid, &session.taps, class, mode)?, session.taps.clone());
    let mut history = Vec::new();

    if cfg.epochs > 0 {
        let mut rng = seed::rng(derive_seed(session.seed, 1, 0));
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut params = session.taps.to_params();
        let mut stale = 0;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for idx in order.chunks(cfg.batch_size) {
                let taps = FirTaps::from_params(&params)?;
                let grads: Vec<Vec<C64>> = idx
                    .par_iter()
                    .map(|&i| Ok(fir_layer_gradients(&train[i].x, &taps, net, class, mode)?.1))
                    .collect::<Result<_>>()?;
                let mut g = vec![0.0; params.len()];
                for gi in &grads {
                    for (k, c) in gi.iter().enumerate() {
                        g[2 * k] -= c.re;
                        g[2 * k + 1] -= c.im;
                    }
                }
                let scale = 1.0 / idx.len() as f64;
                g.iter_mut().for_each(|v| *v *= scale);
                session.adam.step(&mut params, &g, cfg.learning_rate);
                params = FirTaps::from_params(&params)?.project(cfg.epsilon_max).to_params();
            }
            session.taps = FirTaps::from_params(&params)?;
            let act = mean_activation(net, valid, &session.taps, class, mode)?;
            history.push(act);
            if act > best.0 {
                best = (act, session.taps.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        if identity_activation > best.0 {
            best = (identity_activation, identity);
        }
    }

    if net.weights_sha256() != session.net_sha256 {
        return Err(Error::InvalidState("frozen network weights changed during filter training".into()));
    }
    session.taps = best.1.clone();
    Ok(FirLayerOutcome {
        class,
        taps: best.1,
        epochs_run: history.len(),
        identity_activation,
        final_activation: best.0,
        history,
    })
}

/// One independent session per class found in `train`, seeded by class.
pub fn train_all_classes(
    train: &[Example],
    validation: &[Example],
    net: &MicroNet,
    cfg: &FirLayerConfig,
    master_seed: u64,
) -> Result<BTreeMap<usize, FirLayerOutcome>> {
    let mut classes: Vec<usize> = train.iter().map(|e| e.label).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut out = BTreeMap::new();
    for class in classes {
        let tr: Vec<Example> = train.iter().filter(|e| e.label == class).cloned().collect();
        let va: Vec<Example> = validation.iter().filter(|e| e.label == class).cloned().collect();
        let mut session = FirLayerSession::new(net, class, cfg.clone(), derive_seed(master_seed, 0xF1, class as u64))?;
        let outcome = train_fir_layer(&mut session, &tr, &va)?;
        log::info!(
            "class {class}: activation {:.4} (identity {:.4}) after {} epochs, epsilon {:.3}",
            outcome.final_activation,
            outcome.identity_activation,
            outcome.epochs_run,
            outcome.taps.epsilon()
        );
        out.insert(class, outcome);
    }
    Ok(out)
}

/// CSV with header `class,final_activation,epsilon,epochs`.
pub fn write_summary_csv<'a, W: Write>(outcomes: impl IntoIterator<Item = &'a FirLayerOutcome>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["class", "final_activation", "epsilon", "epochs"])?;
    for o in outcomes {
        out.write_record([
            o.class.to_string(),
            o.final_activation.to_string(),
            o.taps.epsilon().to_string(),
            o.epochs_run.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
