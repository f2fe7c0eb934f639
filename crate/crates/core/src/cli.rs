//! Command-line front end.
//!
//! Hyperparameters come only from the config file (TOML, or JSON when the
//! extension is `.json`); flags select files, seeds and parallelism. Every
//! output of a run lands under `--out`, next to a `config.json` snapshot that
//! reproduces it.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{
    load_dataset, read_label_map, synth_generate, write_atomic, write_label_map, Dataset, Split,
    SynthConfig,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, trimap_eval, write_iou_report, write_trimap_report, DEFAULT_TRIMAP_WIDTHS,
};
use crate::geometry::LabelMap;
use crate::pixelnet::{gradcheck_trials, load_checkpoint, save_checkpoint, Checkpoint, NetConfig};
use crate::proposals::{
    export_proposals, generate_proposals, import_proposals, proposals_file_name, ProposalPool,
    ProposerConfig,
};
use crate::trainer::{
    predict_all, Baseline, EpochRecord, SupervisionMode, TrainConfig, Trainer, TrainingSet,
};

/// Worst relative gradient error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub trimap_widths: Vec<usize>,
    pub scales: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trimap_widths: DEFAULT_TRIMAP_WIDTHS.to_vec(),
            scales: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest; relative paths resolve against the config file.
    pub manifest: Option<PathBuf>,
    /// Directory of `<id>.proposals.json` files. Missing pools are generated
    /// with `proposer`.
    pub proposals_dir: Option<PathBuf>,
    /// Write each epoch's segment selections under `labelings/`.
    pub save_labelings: bool,
    pub synth: SynthConfig,
    pub proposer: ProposerConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.manifest, &mut config.proposals_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.proposer.validate()?;
        self.train.validate()?;
        if self.eval.scales.is_empty() || self.eval.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config(
                "eval.scales must be non-empty and positive".into(),
            ));
        }
        if self.eval.trimap_widths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("eval.trimap_widths must increase".into()));
        }
        Ok(())
    }

    fn manifest(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| Error::Config("config has no manifest".into()))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "boxsup",
    version,
    about = "Box-supervised semantic segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the stage being run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset and its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate candidate segment pools for every image in the manifest.
    Propose {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the train split.
    Train {
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Predict label maps for the test split.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean IoU of a prediction directory against the test split.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Boundary and interior mean IoU over trimap bands.
    Trimap {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the network gradient.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
}

/// Parses `argv` (program name first) and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.synth.seed = seed;
        config.train.seed = seed;
        config.train.net.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Synth { out } => {
            let manifest = synth_generate(&config.synth, &out)?;
            eprintln!(
                "wrote {} samples to {}",
                manifest.samples.len(),
                out.display()
            );
            Ok(())
        }
        Command::Propose { out } => propose(&config, &out),
        Command::Train { out, resume } => train(&config, &out, cli.workers, resume.as_deref()),
        Command::Infer { model, out } => infer(&config, &model, &out),
        Command::Eval { pred, out } => eval(&config, &pred, &out),
        Command::Trimap { pred, out } => trimap(&config, &pred, &out),
        Command::Gradcheck { trials } => gradcheck(&config, cli.config.is_some(), trials),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn propose(config: &RunConfig, out: &Path) -> Result<()> {
    let dataset = load_dataset(config.manifest()?)?;
    create_dir(out)?;
    dataset.samples.par_iter().try_for_each(|s| {
        let pool = generate_proposals(&s.image_id, &s.image, &config.proposer)?;
        export_proposals(&pool, &out.join(proposals_file_name(&s.image_id)))
    })?;
    eprintln!(
        "wrote {} proposal pools to {}",
        dataset.samples.len(),
        out.display()
    );
    Ok(())
}

fn needs_pools(train: &TrainConfig) -> bool {
    train.supervision_mode != SupervisionMode::Mask && train.baseline == Baseline::None
}

/// Train split with its candidate pools: from the manifest, then
/// `proposals_dir`, otherwise generated.
pub fn training_set(config: &RunConfig, dataset: &Dataset) -> Result<TrainingSet> {
    let samples = dataset.split(Split::Train);
    let files = dataset.split_proposals(Split::Train);
    let pools = if needs_pools(&config.train) {
        samples
            .par_iter()
            .zip(&files)
            .map(|(s, file)| {
                let file = file.clone().or_else(|| {
                    let p = config
                        .proposals_dir
                        .as_ref()?
                        .join(proposals_file_name(&s.image_id));
                    p.exists().then_some(p)
                });
                match file {
                    Some(p) => import_proposals(&p, Some(s.image.dims())),
                    None => generate_proposals(&s.image_id, &s.image, &config.proposer),
                }
                .map(Some)
            })
            .collect::<Result<Vec<Option<ProposalPool>>>>()?
    } else {
        vec![None; samples.len()]
    };
    Ok(TrainingSet {
        samples,
        pools,
        num_classes: dataset.num_classes,
    })
}

fn history_extra(history: &[EpochRecord]) -> serde_json::Value {
    serde_json::json!({ "history": history })
}

fn history_from_extra(ckpt: &Checkpoint) -> Result<Vec<EpochRecord>> {
    let history = ckpt
        .extra
        .as_ref()
        .and_then(|e| e.get("history"))
        .ok_or_else(|| Error::Config("checkpoint carries no training history".into()))?;
    serde_json::from_value(history.clone())
        .map_err(|e| Error::Config(format!("checkpoint history: {e}")))
}

fn history_line(record: &EpochRecord) -> String {
    serde_json::to_string(record).expect("plain record") + "\n"
}

fn train(config: &RunConfig, out: &Path, workers: usize, resume: Option<&Path>) -> Result<()> {
    let dataset = load_dataset(config.manifest()?)?;
    let data = training_set(config, &dataset)?;
    create_dir(&out.join("checkpoints"))?;
    let snapshot = serde_json::to_string_pretty(config).expect("serializable config");
    write_atomic(&out.join("config.json"), snapshot.as_bytes())?;

    let mut trainer = Trainer::new(&data, config.train.clone(), workers)?;
    if let Some(path) = resume {
        let ckpt = load_checkpoint(path)?;
        if ckpt.config != config.train.net {
            return Err(Error::Config(
                "checkpoint network differs from config".into(),
            ));
        }
        let history = history_from_extra(&ckpt)?;
        let velocity = ckpt
            .velocity
            .ok_or_else(|| Error::Config("checkpoint has no momentum buffer".into()))?;
        trainer = trainer.resume(ckpt.params, velocity, history)?;
    }

    let history_path = out.join("history.jsonl");
    let mut history = fs::File::create(&history_path).map_err(|e| Error::io(&history_path, e))?;
    for record in &trainer.state().history {
        history
            .write_all(history_line(record).as_bytes())
            .map_err(|e| Error::io(&history_path, e))?;
    }
    while !trainer.is_done() {
        let record = match trainer.step_epoch() {
            Ok(r) => r.clone(),
            Err(e) => {
                // parameters are untouched by a rejected step
                let state = trainer.state();
                save_checkpoint(
                    &out.join("checkpoints").join("diverged.json"),
                    &Checkpoint {
                        config: config.train.net.clone(),
                        epoch: state.epoch,
                        params: state.params.clone(),
                        velocity: Some(state.velocity.clone()),
                        extra: Some(history_extra(&state.history)),
                    },
                )?;
                return Err(e);
            }
        };
        eprintln!(
            "epoch {:>3}  lr {:.2e}  loss {:.4}{}",
            record.epoch,
            record.lr,
            record.mean_loss,
            record
                .supervision_miou
                .map(|q| format!("  supervision mIoU {q:.4}"))
                .unwrap_or_default()
        );
        history
            .write_all(history_line(&record).as_bytes())
            .map_err(|e| Error::io(&history_path, e))?;
        let state = trainer.state();
        let ckpt = Checkpoint {
            config: config.train.net.clone(),
            epoch: state.epoch,
            params: state.params.clone(),
            velocity: Some(state.velocity.clone()),
            extra: Some(history_extra(&state.history)),
        };
        save_checkpoint(
            &out.join("checkpoints")
                .join(format!("epoch_{:03}.json", state.epoch)),
            &ckpt,
        )?;
        if config.save_labelings {
            let dir = out
                .join("labelings")
                .join(format!("epoch_{:03}", record.epoch));
            create_dir(&dir)?;
            for (s, l) in data.samples.iter().zip(&state.labelings) {
                if let Some(l) = l {
                    l.write(&dir.join(format!("{}.json", s.image_id)))?;
                }
            }
        }
    }
    let state = trainer.state();
    save_checkpoint(
        &out.join("model.json"),
        &Checkpoint {
            config: config.train.net.clone(),
            epoch: state.epoch,
            params: state.params.clone(),
            velocity: None,
            extra: Some(history_extra(&state.history)),
        },
    )
}

fn infer(config: &RunConfig, model: &Path, out: &Path) -> Result<()> {
    let dataset = load_dataset(config.manifest()?)?;
    let ckpt = load_checkpoint(model)?;
    let samples = dataset.split(Split::Test);
    let preds = predict_all(&ckpt.config, &ckpt.params, &samples, &config.eval.scales)?;
    create_dir(out)?;
    for (s, p) in samples.iter().zip(&preds) {
        write_label_map(&out.join(format!("{}.png", s.image_id)), p)?;
    }
    eprintln!("wrote {} predictions to {}", preds.len(), out.display());
    Ok(())
}

/// Test-split ground truth paired with `<pred>/<id>.png`.
fn load_pairs(config: &RunConfig, pred: &Path) -> Result<(Vec<LabelMap>, Vec<LabelMap>, usize)> {
    let dataset = load_dataset(config.manifest()?)?;
    let samples = dataset.split(Split::Test);
    let mut preds = Vec::with_capacity(samples.len());
    let mut gts = Vec::with_capacity(samples.len());
    for s in samples {
        let gt = s
            .gt_mask
            .ok_or_else(|| Error::Dataset(format!("test sample {} has no mask", s.image_id)))?;
        let p = read_label_map(
            &pred.join(format!("{}.png", s.image_id)),
            dataset.num_classes,
        )?;
        if p.dims() != gt.dims() {
            return Err(Error::DimensionMismatch {
                expected: gt.dims(),
                actual: p.dims(),
            });
        }
        preds.push(p);
        gts.push(gt);
    }
    Ok((preds, gts, dataset.num_classes))
}

fn eval(config: &RunConfig, pred: &Path, out: &Path) -> Result<()> {
    let (preds, gts, c) = load_pairs(config, pred)?;
    let report = evaluate(&preds, &gts, c)?;
    create_dir(out)?;
    write_iou_report(out, &report)?;
    println!("mean IoU {:.4}", report.mean);
    Ok(())
}

fn trimap(config: &RunConfig, pred: &Path, out: &Path) -> Result<()> {
    let (preds, gts, c) = load_pairs(config, pred)?;
    let report = trimap_eval(&preds, &gts, &config.eval.trimap_widths, c)?;
    create_dir(out)?;
    write_trimap_report(out, &report)?;
    for e in &report.entries {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        println!(
            "width {:>3}  boundary {}  interior {}",
            e.band_width,
            fmt(e.boundary_miou),
            fmt(e.interior_miou)
        );
    }
    Ok(())
}

fn gradcheck(config: &RunConfig, from_file: bool, trials: usize) -> Result<()> {
    // without a config, a narrow network keeps the check fast
    let net = if from_file {
        config.train.net.clone()
    } else {
        NetConfig::standard(3, 4, 6)
    };
    let result = gradcheck_trials(&net, trials.max(1), config.train.seed)?;
    println!(
        "checked {} partials, max relative error {:.3e}",
        result.checked, result.max_rel_error
    );
    if result.max_rel_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Error::Dataset(format!(
            "gradient mismatch: {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
            result.max_rel_error
        )))
    }
}
