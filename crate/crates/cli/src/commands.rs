use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use prefir_core::compensation::{epsilon_sweep, write_sweep_csv, SweepRow};
use prefir_core::fir_layer::{train_all_classes, write_summary_csv};
use prefir_core::iqfile::{read_iq_file, taps_from_json, taps_to_json, write_iq_file, IqDescriptor, IQ_FORMAT_VERSION};
use prefir_core::metrics::{adversary_eval, evaluate_batch, AdversaryReport, Confusion, EvalMeta, EvalReport};
use prefir_core::seed::derive_seed;
use prefir_core::testbed::{Day, Testbed};
use prefir_core::wop::{ncg_optimize, write_trace_jsonl, Batch, Slice};
use prefir_core::{Example, FirTaps, IqSequence, MicroNet, TrainReport};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::manifest::RunDir;

pub const DATASETS: &str = "datasets";
pub const NET: &str = "models/net.bin";
pub const TRAIN_REPORT: &str = "reports/train_net.json";
pub const NCG_TAPS: &str = "taps/ncg";
pub const FIR_TAPS: &str = "taps/fir_layer";
pub const FIR_SUMMARY: &str = "reports/fir_layer_summary.csv";
pub const EVALUATION: &str = "reports/evaluation.json";
pub const CONFUSION: &str = "reports/confusion";
pub const ADVERSARY: &str = "reports/adversary.json";
pub const SWEEP: &str = "reports/sweep.csv";
pub const SUMMARY: &str = "reports/summary.json";
pub const FIGURES: &str = "reports/figures";

const STREAM_NET: u64 = 0x4E45;
const STREAM_SWEEP: u64 = 0x5357;
const STREAM_ADVERSARY: u64 = 0xAD;
const STREAM_FIR: u64 = 0xF1;

pub struct Session<'a> {
    pub cfg: &'a ExperimentConfig,
    pub run: RunDir,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Layout of the dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub config_hash: String,
    pub input_len: usize,
    pub classes: usize,
    pub slice_len: usize,
    pub batch_len: usize,
    /// Examples per class in each split.
    pub splits: BTreeMap<String, usize>,
    pub recordings_per_device: usize,
}

fn split_file(root: &Path, split: &str, class: usize) -> std::path::PathBuf {
    root.join(split).join(format!("class_{class}.iq"))
}

fn recording_file(root: &Path, device: usize, rec: usize) -> std::path::PathBuf {
    root.join("recordings").join(format!("dev{device}_rec{rec}.iq"))
}

fn concat(xs: impl IntoIterator<Item = IqSequence>) -> Result<IqSequence> {
    let samples = xs.into_iter().flat_map(|x| x.samples().to_vec()).collect();
    Ok(IqSequence::new(samples)?)
}

fn chunks(x: &IqSequence, n: usize) -> Result<Vec<IqSequence>> {
    if x.len() % n != 0 {
        bail!("{} samples do not split into inputs of {n}", x.len());
    }
    x.samples().chunks(n).map(|c| Ok(IqSequence::new(c.to_vec())?)).collect()
}

pub fn gen_dataset(ctx: &mut Session<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let tb = Testbed::new(cfg.testbed.clone(), cfg.seed)?;
    let d = &cfg.dataset;
    let root = ctx.run.clear(DATASETS)?;
    let n = cfg.testbed.input_len;
    let classes = tb.devices();

    let mut splits = BTreeMap::new();
    let generated: Vec<(&str, Vec<Example>)> = vec![
        ("train", tb.examples(Day::Train, d.train_per_class, 0)?),
        ("validation", tb.examples(Day::Train, d.validation_per_class, 1)?),
        ("test", tb.examples(Day::Test, d.test_per_class, 2)?),
        (
            "fir_train",
            (0..classes)
                .map(|c| tb.fixed_link_examples(c, Day::Test, 0, d.fir_train_per_class, 0))
                .collect::<prefir_core::Result<Vec<_>>>()?
                .concat(),
        ),
        (
            "fir_validation",
            (0..classes)
                .map(|c| tb.fixed_link_examples(c, Day::Test, 0, d.fir_validation_per_class, 1))
                .collect::<prefir_core::Result<Vec<_>>>()?
                .concat(),
        ),
    ];
    for (stream, (split, examples)) in generated.into_iter().enumerate() {
        fs::create_dir_all(root.join(split))?;
        let per_class = examples.len() / classes;
        for c in 0..classes {
            let x = concat(examples.iter().filter(|e| e.label == c).map(|e| e.x.clone()))?;
            let desc = IqDescriptor {
                version: IQ_FORMAT_VERSION,
                sample_count: x.len(),
                class_label: c,
                channel_seed: derive_seed(cfg.seed, stream as u64, c as u64),
                impairment_id: c,
            };
            write_iq_file(&split_file(&root, split, c), &x, &desc)?;
        }
        splits.insert(split.to_string(), per_class);
    }

    fs::create_dir_all(root.join("recordings"))?;
    for dev in 0..classes {
        for r in 0..d.recordings_per_device {
            let batch = tb.batch(dev, Day::Test, r as u64)?;
            let x = concat(batch.slices().iter().flat_map(|s| s.inputs().to_vec()))?;
            let desc = IqDescriptor {
                version: IQ_FORMAT_VERSION,
                sample_count: x.len(),
                class_label: dev,
                channel_seed: derive_seed(cfg.seed, 0xBA, (dev as u64) << 32 | r as u64),
                impairment_id: dev,
            };
            write_iq_file(&recording_file(&root, dev, r), &x, &desc)?;
        }
    }

    let index = DatasetIndex {
        config_hash: ctx.run.config_hash().to_string(),
        input_len: n,
        classes,
        slice_len: cfg.testbed.slice_len,
        batch_len: cfg.testbed.batch_len,
        splits,
        recordings_per_device: d.recordings_per_device,
    };
    write_json(&root.join("index.json"), &index)?;
    ctx.run.record(DATASETS, "gen-dataset", &[])?;
    log::info!("wrote datasets to {}", root.display());
    Ok(())
}

struct Datasets {
    root: std::path::PathBuf,
    index: DatasetIndex,
}

impl Datasets {
    fn open(run: &RunDir) -> Result<Self> {
        let root = run.require(DATASETS, "gen-dataset")?;
        let index: DatasetIndex = read_json(&root.join("index.json"))?;
        Ok(Self { root, index })
    }

    /// Examples of a split, interleaved by class.
    fn split(&self, split: &str) -> Result<Vec<Example>> {
        let per_class = self.index.splits.get(split).copied().unwrap_or(0);
        let mut by_class = Vec::with_capacity(self.index.classes);
        for c in 0..self.index.classes {
            let (x, desc) = read_iq_file(&split_file(&self.root, split, c))?;
            let xs = chunks(&x, self.index.input_len)?;
            if xs.len() != per_class || desc.class_label != c {
                bail!("dataset split `{split}` class {c} does not match its index");
            }
            by_class.push(xs);
        }
        let mut out = Vec::with_capacity(per_class * self.index.classes);
        for i in 0..per_class {
            for (c, xs) in by_class.iter().enumerate() {
                out.push(Example {
                    x: xs[i].clone(),
                    label: c,
                });
            }
        }
        Ok(out)
    }

    fn recording(&self, device: usize, rec: usize) -> Result<Batch> {
        let (x, _) = read_iq_file(&recording_file(&self.root, device, rec))?;
        let inputs = chunks(&x, self.index.input_len)?;
        let s = self.index.slice_len;
        if inputs.len() != s * self.index.batch_len {
            bail!("recording dev{device}_rec{rec} does not hold B*S inputs");
        }
        let slices = inputs
            .chunks(s)
            .map(|c| Ok(Slice::new(c.to_vec())?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Batch::new(slices)?)
    }
}

fn check_device(cfg: &ExperimentConfig, sel: Option<usize>) -> Result<Vec<usize>> {
    let n = cfg.testbed.devices;
    match sel {
        Some(d) if d >= n => bail!("device {d} out of range 0..{n}"),
        Some(d) => Ok(vec![d]),
        None => Ok((0..n).collect()),
    }
}

pub fn train_net(ctx: &mut Session<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let data = Datasets::open(&ctx.run)?;
    let train = data.split("train")?;
    let validation = data.split("validation")?;
    let mut net = MicroNet::new(cfg.net.architecture.clone(), derive_seed(cfg.seed, STREAM_NET, 0))?;
    let mut tc = cfg.net.train.clone();
    tc.seed = derive_seed(cfg.seed, STREAM_NET, 1 + tc.seed);
    let report = net.train(&train, (!validation.is_empty()).then_some(&validation[..]), &tc)?;
    net.freeze();
    log::info!(
        "trained network: train accuracy {:.3}, validation accuracy {:?}",
        report.train_accuracy,
        report.test_accuracy
    );
    let path = ctx.run.clear(NET)?;
    let mut buf = Vec::new();
    net.write_to(&mut buf)?;
    fs::write(&path, buf)?;
    ctx.run.record(NET, "train-net", &[DATASETS])?;

    #[derive(Serialize)]
    struct Out<'a> {
        config_hash: &'a str,
        report: &'a TrainReport,
    }
    let path = ctx.run.clear(TRAIN_REPORT)?;
    write_json(
        &path,
        &Out {
            config_hash: ctx.run.config_hash(),
            report: &report,
        },
    )?;
    ctx.run.record(TRAIN_REPORT, "train-net", &[DATASETS])?;
    Ok(())
}

fn load_net(run: &RunDir) -> Result<MicroNet> {
    let path = run.require(NET, "train-net")?;
    let net = MicroNet::read_from(fs::File::open(&path)?)?;
    if !net.is_frozen() {
        bail!("{} holds an unfrozen network", path.display());
    }
    Ok(net)
}

/// Clears a per-item directory unless a selector run can extend it in place.
fn prepare_dir(run: &mut RunDir, artifact: &str, partial: bool) -> Result<std::path::PathBuf> {
    let reuse = partial
        && run
            .manifest()
            .artifacts
            .get(artifact)
            .is_some_and(|e| e.config_hash == run.config_hash())
        && run.path(artifact).is_dir();
    let path = if reuse { run.path(artifact) } else { run.clear(artifact)? };
    fs::create_dir_all(&path)?;
    Ok(path)
}

fn ncg_file(dir: &Path, device: usize, rec: usize) -> std::path::PathBuf {
    dir.join(format!("dev{device}_rec{rec}.json"))
}

#[derive(Debug, Serialize, Deserialize)]
struct NcgSummary {
    device: usize,
    recording: usize,
    initial_objective: f64,
    final_objective: f64,
    iterations: usize,
    stalled: bool,
    epsilon: f64,
}

pub fn optimize_ncg(ctx: &mut Session<'_>, device: Option<usize>) -> Result<()> {
    let cfg = ctx.cfg;
    let devices = check_device(cfg, device)?;
    let net = load_net(&ctx.run)?;
    let data = Datasets::open(&ctx.run)?;
    let dir = prepare_dir(&mut ctx.run, NCG_TAPS, device.is_some())?;
    for &d in &devices {
        for r in 0..data.index.recordings_per_device {
            let batch = data.recording(d, r)?;
            let out = ncg_optimize(&batch.slices()[0], &net, d, &cfg.ncg)?;
            log::info!(
                "device {d} recording {r}: objective {:.4} -> {:.4} in {} iterations",
                out.initial_objective,
                out.final_objective,
                out.trace.len().saturating_sub(1)
            );
            fs::write(ncg_file(&dir, d, r), taps_to_json(&out.taps)? + "\n")?;
            let mut trace = Vec::new();
            write_trace_jsonl(&out.trace, &mut trace)?;
            fs::write(dir.join(format!("dev{d}_rec{r}.trace.jsonl")), trace)?;
            write_json(
                &dir.join(format!("dev{d}_rec{r}.summary.json")),
                &NcgSummary {
                    device: d,
                    recording: r,
                    initial_objective: out.initial_objective,
                    final_objective: out.final_objective,
                    iterations: out.trace.len().saturating_sub(1),
                    stalled: out.stalled,
                    epsilon: out.taps.epsilon(),
                },
            )?;
        }
    }
    ctx.run.record(NCG_TAPS, "optimize-ncg", &[DATASETS, NET])?;
    Ok(())
}

fn fir_file(dir: &Path, class: usize) -> std::path::PathBuf {
    dir.join(format!("class{class}.json"))
}

pub fn train_fir_layers(ctx: &mut Session<'_>, class: Option<usize>) -> Result<()> {
    let cfg = ctx.cfg;
    let classes = check_device(cfg, class)?;
    let net = load_net(&ctx.run)?;
    let data = Datasets::open(&ctx.run)?;
    let keep = |ex: Vec<Example>| -> Vec<Example> { ex.into_iter().filter(|e| classes.contains(&e.label)).collect() };
    let train = keep(data.split("fir_train")?);
    let validation = keep(data.split("fir_validation")?);
    let outcomes = train_all_classes(&train, &validation, &net, &cfg.fir_layer, derive_seed(cfg.seed, STREAM_FIR, 0))?;
    let dir = prepare_dir(&mut ctx.run, FIR_TAPS, class.is_some())?;
    for (c, o) in &outcomes {
        fs::write(fir_file(&dir, *c), taps_to_json(&o.taps)? + "\n")?;
        write_json(&dir.join(format!("class{c}.outcome.json")), o)?;
    }
    ctx.run.record(FIR_TAPS, "train-fir-layers", &[DATASETS, NET])?;

    // The summary covers every class present in the directory.
    let mut all = Vec::new();
    for c in 0..cfg.testbed.devices {
        let p = dir.join(format!("class{c}.outcome.json"));
        if p.exists() {
            all.push(read_json::<prefir_core::fir_layer::FirLayerOutcome>(&p)?);
        }
    }
    let path = ctx.run.clear(FIR_SUMMARY)?;
    write_summary_csv(&all, fs::File::create(&path)?)?;
    ctx.run.record(FIR_SUMMARY, "train-fir-layers", &[FIR_TAPS])?;
    Ok(())
}

fn read_taps(path: &Path) -> Result<FirTaps> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(taps_from_json(&text)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalEntry {
    pub device: usize,
    pub recording: usize,
    pub none: EvalReport,
    pub ncg: EvalReport,
    pub fir_layer: Option<EvalReport>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct EvalSummary {
    pub test_accuracy: f64,
    pub mean_psa_none: f64,
    pub mean_psa_ncg: f64,
    pub mean_pba_none: f64,
    pub mean_pba_ncg: f64,
    pub mean_pba_fir_layer: Option<f64>,
    /// Fraction of recordings whose first-slice accuracy rose under NCG taps.
    pub psa_improved_fraction: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Evaluation {
    pub config_hash: String,
    pub summary: EvalSummary,
    pub entries: Vec<EvalEntry>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn evaluate(ctx: &mut Session<'_>, device: Option<usize>) -> Result<()> {
    let cfg = ctx.cfg;
    let devices = check_device(cfg, device)?;
    let net = load_net(&ctx.run)?;
    let data = Datasets::open(&ctx.run)?;
    let ncg_dir = ctx.run.require(NCG_TAPS, "optimize-ncg")?;
    let fir_dir = if ctx.run.has(FIR_TAPS) {
        Some(ctx.run.require(FIR_TAPS, "train-fir-layers")?)
    } else {
        None
    };
    let mode = cfg.ncg.boundary;
    let (_, test_accuracy) = net.evaluate(&data.split("test")?)?;

    let mut entries = Vec::new();
    for &d in &devices {
        let fir = match &fir_dir {
            Some(dir) if fir_file(dir, d).exists() => Some(read_taps(&fir_file(dir, d))?),
            _ => None,
        };
        for r in 0..data.index.recordings_per_device {
            let batch = data.recording(d, r)?;
            let taps_path = ncg_file(&ncg_dir, d, r);
            if !taps_path.exists() {
                bail!("no NCG taps for device {d} recording {r}: run `prefir optimize-ncg`");
            }
            let taps = read_taps(&taps_path)?;
            let meta = |id: &str| EvalMeta {
                taps_id: id.to_string(),
                device: d,
                target: d,
                seed: cfg.seed,
            };
            entries.push(EvalEntry {
                device: d,
                recording: r,
                none: evaluate_batch(&net, &batch, None, mode, meta("none"))?,
                ncg: evaluate_batch(&net, &batch, Some(&taps), mode, meta(&format!("ncg/dev{d}_rec{r}")))?,
                fir_layer: fir
                    .as_ref()
                    .map(|t| evaluate_batch(&net, &batch, Some(t), mode, meta(&format!("fir_layer/class{d}"))))
                    .transpose()?,
            });
        }
    }

    let has_fir = !entries.is_empty() && entries.iter().all(|e| e.fir_layer.is_some());
    let summary = EvalSummary {
        test_accuracy,
        mean_psa_none: mean(entries.iter().map(|e| e.none.psa)),
        mean_psa_ncg: mean(entries.iter().map(|e| e.ncg.psa)),
        mean_pba_none: mean(entries.iter().map(|e| e.none.pba)),
        mean_pba_ncg: mean(entries.iter().map(|e| e.ncg.pba)),
        mean_pba_fir_layer: has_fir.then(|| mean(entries.iter().filter_map(|e| e.fir_layer.as_ref()).map(|r| r.pba))),
        psa_improved_fraction: mean(entries.iter().map(|e| f64::from(u8::from(e.ncg.psa > e.none.psa)))),
    };
    log::info!(
        "PSA {:.3} -> {:.3}, PBA {:.3} -> {:.3}",
        summary.mean_psa_none,
        summary.mean_psa_ncg,
        summary.mean_pba_none,
        summary.mean_pba_ncg
    );

    let dir = ctx.run.clear(CONFUSION)?;
    fs::create_dir_all(&dir)?;
    let classes = net.classes();
    let schemes: [(&str, fn(&EvalEntry) -> Option<&EvalReport>); 3] = [
        ("none", |e| Some(&e.none)),
        ("ncg", |e| Some(&e.ncg)),
        ("fir_layer", |e| e.fir_layer.as_ref()),
    ];
    for (name, get) in schemes.into_iter().take(if has_fir { 3 } else { 2 }) {
        let mut c = Confusion::new(classes);
        for r in entries.iter().filter_map(get) {
            c.merge(&r.confusion);
        }
        c.write_csv(fs::File::create(dir.join(format!("{name}.csv")))?)?;
    }
    ctx.run.record(CONFUSION, "evaluate", &[DATASETS, NET, NCG_TAPS])?;

    let path = ctx.run.clear(EVALUATION)?;
    write_json(
        &path,
        &Evaluation {
            config_hash: ctx.run.config_hash().to_string(),
            summary,
            entries,
        },
    )?;
    let mut inputs = vec![DATASETS, NET, NCG_TAPS];
    if fir_dir.is_some() {
        inputs.push(FIR_TAPS);
    }
    ctx.run.record(EVALUATION, "evaluate", &inputs)?;
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct AdversarySummary {
    /// Mean rate at which adversary traffic is classified as the victim, unfiltered.
    pub mean_baseline: f64,
    /// The same rate with the victim's taps applied.
    pub mean_stolen: f64,
    /// Adversary accuracy toward itself under its own taps.
    pub mean_own: f64,
    pub trials: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdversaryFile {
    pub config_hash: String,
    pub summary: AdversarySummary,
    pub trials: Vec<AdversaryReport>,
}

pub fn adversary(ctx: &mut Session<'_>, victim: Option<usize>) -> Result<()> {
    let cfg = ctx.cfg;
    let victims = check_device(cfg, victim)?;
    if cfg.testbed.devices < 2 {
        bail!("the adversary test needs at least two devices");
    }
    let net = load_net(&ctx.run)?;
    let data = Datasets::open(&ctx.run)?;
    let ncg_dir = ctx.run.require(NCG_TAPS, "optimize-ncg")?;
    let mode = cfg.ncg.boundary;
    let mut trials = Vec::new();
    for &v in &victims {
        let victim_taps = read_taps(&ncg_file(&ncg_dir, v, 0))?;
        for a in (0..cfg.testbed.devices).filter(|&a| a != v) {
            for r in 0..data.index.recordings_per_device {
                let stream = data.recording(a, r)?;
                let own = read_taps(&ncg_file(&ncg_dir, a, r))?;
                let seed = derive_seed(cfg.seed, STREAM_ADVERSARY, (v as u64) << 32 | (a as u64) << 16 | r as u64);
                trials.push(adversary_eval(&net, a, &stream, &victim_taps, v, Some(&own), mode, seed)?);
            }
        }
    }
    let summary = AdversarySummary {
        mean_baseline: mean(trials.iter().map(|t| t.baseline.pba)),
        mean_stolen: mean(trials.iter().map(|t| t.stolen.pba)),
        mean_own: mean(trials.iter().filter_map(|t| t.own.as_ref()).map(|o| o.pba)),
        trials: trials.len(),
    };
    log::info!(
        "adversary classified as victim: {:.3} unfiltered, {:.3} with stolen taps",
        summary.mean_baseline,
        summary.mean_stolen
    );
    let path = ctx.run.clear(ADVERSARY)?;
    write_json(
        &path,
        &AdversaryFile {
            config_hash: ctx.run.config_hash().to_string(),
            summary,
            trials,
        },
    )?;
    ctx.run.record(ADVERSARY, "adversary", &[DATASETS, NET, NCG_TAPS])?;
    Ok(())
}

pub fn compensate_sweep(ctx: &mut Session<'_>) -> Result<()> {
    let mut sweep = ctx.cfg.sweep.clone();
    sweep.seed = derive_seed(ctx.cfg.seed, STREAM_SWEEP, sweep.seed);
    let rows = epsilon_sweep(&sweep)?;
    for r in &rows {
        log::info!("epsilon {:.2}: PER {:.4}", r.epsilon, r.per);
    }
    let path = ctx.run.clear(SWEEP)?;
    write_sweep_csv(&rows, fs::File::create(&path)?)?;
    ctx.run.record(SWEEP, "compensate-sweep", &[])?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub train_accuracy: Option<f64>,
    pub validation_accuracy: Option<f64>,
    pub evaluation: Option<EvalSummary>,
    pub fir_layer_epsilon_max: Option<f64>,
    pub adversary: Option<AdversarySummary>,
    pub sweep: Option<Vec<SweepRow>>,
}

/// Collects every report of the run into one summary, refusing to mix
/// artifacts built under different configs.
pub fn report(ctx: &mut Session<'_>) -> Result<()> {
    let current = ctx.run.config_hash().to_string();
    let mixed: Vec<String> = ctx
        .run
        .manifest()
        .artifacts
        .iter()
        .filter(|(name, e)| e.config_hash != current && !is_report_output(name))
        .map(|(name, e)| format!("{name} ({})", &e.config_hash[..12.min(e.config_hash.len())]))
        .collect();
    if !mixed.is_empty() {
        bail!(
            "refusing to report over artifacts from a different config ({}): rerun their producers",
            mixed.join(", ")
        );
    }
    let names: Vec<(String, String)> = ctx
        .run
        .manifest()
        .artifacts
        .iter()
        .filter(|(name, _)| !is_report_output(name))
        .map(|(n, e)| (n.clone(), e.producer.clone()))
        .collect();
    if names.is_empty() {
        bail!("nothing to report: run `prefir gen-dataset` first");
    }
    for (name, producer) in &names {
        ctx.run.require(name, producer)?;
    }

    let train = if ctx.run.has(TRAIN_REPORT) {
        #[derive(Deserialize)]
        struct In {
            report: TrainReport,
        }
        Some(read_json::<In>(&ctx.run.path(TRAIN_REPORT))?.report)
    } else {
        None
    };
    let evaluation = if ctx.run.has(EVALUATION) {
        Some(read_json::<Evaluation>(&ctx.run.path(EVALUATION))?.summary)
    } else {
        None
    };
    let adversary = if ctx.run.has(ADVERSARY) {
        Some(read_json::<AdversaryFile>(&ctx.run.path(ADVERSARY))?.summary)
    } else {
        None
    };
    let sweep = if ctx.run.has(SWEEP) {
        let mut rd = csv::Reader::from_path(ctx.run.path(SWEEP))?;
        Some(rd.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?)
    } else {
        None
    };
    let fir_layer_epsilon_max = if ctx.run.has(FIR_TAPS) {
        let dir = ctx.run.path(FIR_TAPS);
        let mut m: Option<f64> = None;
        for c in 0..ctx.cfg.testbed.devices {
            let p = fir_file(&dir, c);
            if p.exists() {
                let e = read_taps(&p)?.epsilon();
                m = Some(m.map_or(e, |x| x.max(e)));
            }
        }
        m
    } else {
        None
    };

    let summary = Summary {
        config_hash: current,
        train_accuracy: train.as_ref().map(|t| t.train_accuracy),
        validation_accuracy: train.as_ref().and_then(|t| t.test_accuracy),
        evaluation,
        fir_layer_epsilon_max,
        adversary,
        sweep,
    };
    print_summary(&summary);
    let inputs: Vec<&str> = names.iter().map(|(n, _)| n.as_str()).collect();
    let figures = ctx.run.clear(FIGURES)?;
    fs::create_dir_all(&figures)?;
    write_figure_data(&ctx.run, &figures)?;
    ctx.run.record(FIGURES, "report", &inputs)?;
    let path = ctx.run.clear(SUMMARY)?;
    write_json(&path, &summary)?;
    ctx.run.record(SUMMARY, "report", &inputs)?;
    Ok(())
}

fn is_report_output(name: &str) -> bool {
    name == SUMMARY || name == FIGURES
}

/// Plot-ready tables: per-recording accuracies and per-tap distances from identity.
fn write_figure_data(run: &RunDir, dir: &Path) -> Result<()> {
    if run.has(EVALUATION) {
        let eval: Evaluation = read_json(&run.path(EVALUATION))?;
        let mut w = csv::Writer::from_path(dir.join("accuracy_by_recording.csv"))?;
        w.write_record(["device", "recording", "psa_none", "psa_ncg", "pba_none", "pba_ncg", "pba_fir_layer"])?;
        for e in &eval.entries {
            w.write_record([
                e.device.to_string(),
                e.recording.to_string(),
                e.none.psa.to_string(),
                e.ncg.psa.to_string(),
                e.none.pba.to_string(),
                e.ncg.pba.to_string(),
                e.fir_layer.as_ref().map(|r| r.pba.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    let mut w = csv::Writer::from_path(dir.join("tap_distances.csv"))?;
    w.write_record(["source", "id", "tap", "distance"])?;
    for (source, artifact) in [("ncg", NCG_TAPS), ("fir_layer", FIR_TAPS)] {
        if !run.has(artifact) {
            continue;
        }
        let root = run.path(artifact);
        let mut files: Vec<_> = fs::read_dir(&root)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".json") && n.matches('.').count() == 1)
        });
        files.sort();
        for p in files {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            for (k, d) in read_taps(&p)?.tap_distances().iter().enumerate() {
                w.write_record([source.to_string(), id.clone(), k.to_string(), d.to_string()])?;
            }
        }
    }
    w.flush()?;
    if run.has(SWEEP) {
        fs::copy(run.path(SWEEP), dir.join("epsilon_sweep.csv"))?;
    }
    Ok(())
}

fn print_summary(s: &Summary) {
    println!("config {}", s.config_hash);
    if let Some(a) = s.train_accuracy {
        println!("train accuracy        {a:.3}");
    }
    if let Some(a) = s.validation_accuracy {
        println!("validation accuracy   {a:.3}");
    }
    if let Some(e) = &s.evaluation {
        println!("test-day accuracy     {:.3}", e.test_accuracy);
        println!("PSA  none {:.3}  ncg {:.3}  (improved on {:.0}%)", e.mean_psa_none, e.mean_psa_ncg, 100.0 * e.psa_improved_fraction);
        print!("PBA  none {:.3}  ncg {:.3}", e.mean_pba_none, e.mean_pba_ncg);
        match e.mean_pba_fir_layer {
            Some(f) => println!("  fir-layer {f:.3}"),
            None => println!(),
        }
    }
    if let Some(eps) = s.fir_layer_epsilon_max {
        println!("fir-layer max epsilon {eps:.4}");
    }
    if let Some(a) = &s.adversary {
        println!(
            "adversary as victim  none {:.3}  stolen taps {:.3}  ({} trials)",
            a.mean_baseline, a.mean_stolen, a.trials
        );
    }
    if let Some(rows) = &s.sweep {
        println!("epsilon  PER      throughput");
        for r in rows {
            println!("{:<8.2} {:<8.4} {:.3}", r.epsilon, r.per, r.throughput_norm);
        }
    }
}

