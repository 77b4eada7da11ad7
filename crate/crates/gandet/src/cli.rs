//! Command-line orchestration: one versioned TOML config drives corpus
//! generation, the two training phases, evaluation, and sweeps. Every
//! command writes its artifacts under --out along with a run-manifest
//! recording the config hash, seed, and produced files.

use crate::augment::Perturbation;
use crate::datagen::{build_corpus, load_manifest, CorpusConfig, Split};
use crate::error::{Error, Result};
use crate::evaluation::{
    build_report, robustness_sweep, score_dataset, write_report_json, write_scores_csv, SweepPoint,
};
use crate::netarch::{
    build_detector, load_checkpoint, save_checkpoint, DetectorConfig, DetectorNetwork, HeadKind,
};
use crate::tensorcore::RngStream;
use crate::training::{finetune, pretrain, FinetuneConfig, PretrainConfig};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

/// Everything one run needs, in one file. `seed` has no default: a config
/// without it does not parse.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default)]
    pub finetune: FinetuneConfig,
    #[serde(default)]
    pub eval: EvalGrid,
}

/// Metric grid for evaluation and robustness sweeps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalGrid {
    pub fars: Vec<f64>,
    pub jpeg_qualities: Vec<u8>,
    pub rescales: Vec<f64>,
}

impl Default for EvalGrid {
    fn default() -> Self {
        EvalGrid {
            fars: vec![0.01, 0.1],
            jpeg_qualities: vec![95, 75, 50],
            rescales: vec![0.9, 0.7],
        }
    }
}

impl EvalGrid {
    pub fn perturbations(&self) -> Vec<Perturbation> {
        let mut out = vec![Perturbation::None];
        out.extend(self.jpeg_qualities.iter().map(|&q| Perturbation::Jpeg { quality: q }));
        out.extend(self.rescales.iter().map(|&s| Perturbation::Rescale { scale: s }));
        out
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.corpus.validate()?;
        self.pretrain.augment.validate()?;
        self.finetune.augment.validate()?;
        for (phase, crop) in [
            ("pretrain", self.pretrain.augment.crop_size),
            ("finetune", self.finetune.augment.crop_size),
        ] {
            if crop != self.detector.crop_size {
                return Err(Error::Config(format!(
                    "{phase}.augment.crop_size ({crop}) must match detector.crop_size ({})",
                    self.detector.crop_size
                )));
            }
        }
        for &far in &self.eval.fars {
            if !(0.0..=1.0).contains(&far) {
                return Err(Error::Config(format!("eval.fars entry {far} outside [0,1]")));
            }
        }
        for &s in &self.eval.rescales {
            if !(s > 0.0) {
                return Err(Error::Config(format!("eval.rescales entry {s} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Parser)]
#[command(name = "gandet", version, about = "GAN-image detector pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic corpus (images + manifest)
    GenData(Common),
    /// Phase 1: contrastive pretraining of the backbone
    Pretrain(Common),
    /// Phase 2: supervised fine-tuning with the classifier head
    Finetune(Common),
    /// Score the test split and write the metric report
    Evaluate(Common),
    /// Robustness sweep over test-time perturbations
    Sweep(Common),
    /// Full report: evaluation metrics plus the robustness sweep
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; all artifacts land here
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint to start from / evaluate (defaults to one under --out)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl Cmd {
    fn common(&self) -> &Common {
        match self {
            Cmd::GenData(c)
            | Cmd::Pretrain(c)
            | Cmd::Finetune(c)
            | Cmd::Evaluate(c)
            | Cmd::Sweep(c)
            | Cmd::Report(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Cmd::GenData(_) => "gen-data",
            Cmd::Pretrain(_) => "pretrain",
            Cmd::Finetune(_) => "finetune",
            Cmd::Evaluate(_) => "evaluate",
            Cmd::Sweep(_) => "sweep",
            Cmd::Report(_) => "report",
        }
    }
}

/// Entry point. Exit codes: 0 success, 1 runtime failure, 2 usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Records what a command produced; `complete` stays false if the command
/// died partway, flagging partial outputs.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    config_sha256: String,
    seed: u64,
    complete: bool,
    artifacts: Vec<String>,
}

impl RunManifest {
    fn write(&self, out: &Path) -> Result<()> {
        let path = out.join("run_manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Exclusive output-directory lock; removed on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(out: &Path) -> Result<Self> {
        let path = out.join(".lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "output directory {} is locked by another run (stale? remove {})",
                out.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn execute(cmd: &Cmd) -> Result<()> {
    let common = cmd.common();
    let raw = std::fs::read(&common.config).map_err(|e| Error::io(&common.config, e))?;
    let config_sha256: String = Sha256::digest(&raw)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let text = String::from_utf8(raw)
        .map_err(|_| Error::Config("config file is not valid UTF-8".into()))?;
    let mut cfg: RunConfig = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    let out = &common.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let _lock = DirLock::acquire(out)?;
    let mut manifest = RunManifest {
        command: cmd.name().into(),
        config_sha256,
        seed: cfg.seed,
        complete: false,
        artifacts: Vec::new(),
    };
    manifest.write(out)?;

    manifest.artifacts = match cmd {
        Cmd::GenData(_) => cmd_gen_data(&cfg, out)?,
        Cmd::Pretrain(_) => cmd_pretrain(&cfg, out)?,
        Cmd::Finetune(c) => cmd_finetune(&cfg, out, c.checkpoint.as_deref())?,
        Cmd::Evaluate(c) => cmd_report(&cfg, out, c.checkpoint.as_deref(), false)?,
        Cmd::Sweep(c) => cmd_sweep(&cfg, out, c.checkpoint.as_deref())?,
        Cmd::Report(c) => cmd_report(&cfg, out, c.checkpoint.as_deref(), true)?,
    };
    manifest.complete = true;
    manifest.write(out)
}

fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let corpus_dir = out.join("corpus");
    build_corpus(&cfg.corpus, &corpus_dir, &RngStream::new(cfg.seed, 0))?;
    Ok(vec!["corpus/manifest.jsonl".into(), "corpus/images".into()])
}

fn corpus_source(out: &Path) -> Result<crate::datagen::CorpusManifest> {
    load_manifest(&out.join("corpus/manifest.jsonl"))
}

fn cmd_pretrain(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let source = corpus_source(out)?;
    let init = RngStream::new(cfg.seed, 0).child("init");
    let mut net = build_detector(&cfg.detector, &init)?;
    let report = pretrain(&mut net, &source, &cfg.pretrain, cfg.seed)?;
    save_checkpoint(&net, &out.join("pretrained.ckpt"))?;
    report.save_history(&out.join("pretrain_history.csv"))?;
    Ok(vec!["pretrained.ckpt".into(), "pretrain_history.csv".into()])
}

/// First field (if any) on which the checkpoint's architecture disagrees
/// with the run config.
fn detector_mismatch(expected: &DetectorConfig, actual: &DetectorConfig) -> Option<&'static str> {
    if expected.stem_channels != actual.stem_channels {
        return Some("stem_channels");
    }
    if expected.block_widths != actual.block_widths {
        return Some("block_widths");
    }
    if expected.blocks_per_stage != actual.blocks_per_stage {
        return Some("blocks_per_stage");
    }
    if expected.stem_stride != actual.stem_stride {
        return Some("stem_stride");
    }
    if expected.downsample_after_stage != actual.downsample_after_stage {
        return Some("downsample_after_stage");
    }
    if expected.projection_hidden != actual.projection_hidden {
        return Some("projection_hidden");
    }
    if expected.projection_latent != actual.projection_latent {
        return Some("projection_latent");
    }
    if expected.crop_size != actual.crop_size {
        return Some("crop_size");
    }
    None
}

fn load_matching_checkpoint(cfg: &RunConfig, path: &Path) -> Result<DetectorNetwork> {
    let net = load_checkpoint(path)?;
    if let Some(field) = detector_mismatch(&cfg.detector, net.config()) {
        return Err(Error::Checkpoint(format!(
            "{}: detector config field `{field}` does not match the run config",
            path.display()
        )));
    }
    Ok(net)
}

fn cmd_finetune(cfg: &RunConfig, out: &Path, ckpt: Option<&Path>) -> Result<Vec<String>> {
    let source = corpus_source(out)?;
    let default = out.join("pretrained.ckpt");
    let net = load_matching_checkpoint(cfg, ckpt.unwrap_or(&default))?;
    let head_rng = RngStream::new(cfg.seed, 0).child("head");
    let mut net = if net.head_kind() == HeadKind::Classifier {
        net
    } else {
        net.swap_head(HeadKind::Classifier, &head_rng)?
    };
    let report = finetune(&mut net, &source, &cfg.finetune, cfg.seed)?;
    save_checkpoint(&net, &out.join("detector.ckpt"))?;
    report.save_history(&out.join("finetune_history.csv"))?;
    Ok(vec!["detector.ckpt".into(), "finetune_history.csv".into()])
}

fn load_classifier(cfg: &RunConfig, out: &Path, ckpt: Option<&Path>) -> Result<DetectorNetwork> {
    let default = out.join("detector.ckpt");
    let net = load_matching_checkpoint(cfg, ckpt.unwrap_or(&default))?;
    if net.head_kind() != HeadKind::Classifier {
        return Err(Error::Checkpoint(
            "checkpoint holds a projection head; fine-tune it first".into(),
        ));
    }
    Ok(net)
}

fn run_sweep(cfg: &RunConfig, net: &DetectorNetwork, out: &Path) -> Result<Vec<SweepPoint>> {
    let source = corpus_source(out)?;
    robustness_sweep(
        net,
        &source,
        Split::Test,
        cfg.detector.crop_size,
        &cfg.eval.perturbations(),
    )
}

fn write_sweep_csv(rows: &[SweepPoint], path: &Path) -> Result<()> {
    let mut out = String::from("perturbation,auc,accuracy_at_half,scored,skipped\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.perturbation, r.auc, r.accuracy_at_half, r.scored, r.skipped
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn cmd_sweep(cfg: &RunConfig, out: &Path, ckpt: Option<&Path>) -> Result<Vec<String>> {
    let net = load_classifier(cfg, out, ckpt)?;
    let rows = run_sweep(cfg, &net, out)?;
    write_sweep_csv(&rows, &out.join("sweep.csv"))?;
    Ok(vec!["sweep.csv".into()])
}

fn cmd_report(
    cfg: &RunConfig,
    out: &Path,
    ckpt: Option<&Path>,
    with_sweep: bool,
) -> Result<Vec<String>> {
    let net = load_classifier(cfg, out, ckpt)?;
    let source = corpus_source(out)?;
    let set = score_dataset(
        &net,
        &source,
        Split::Test,
        cfg.detector.crop_size,
        Perturbation::None,
    )?;
    let sweep = if with_sweep {
        run_sweep(cfg, &net, out)?
    } else {
        Vec::new()
    };
    let report = build_report(&set, &cfg.eval.fars, sweep)?;
    write_report_json(&report, &out.join("report.json"))?;
    write_scores_csv(&set, &out.join("scores.csv"))?;
    Ok(vec!["report.json".into(), "scores.csv".into()])
}
