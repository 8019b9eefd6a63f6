use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nightawb_core::env::EnvImage;
use nightawb_core::metrics::{recovery_angular_error, reproduction_angular_error, summarize};
use nightawb_core::sac::{deploy, load_checkpoint, save_checkpoint, EpisodeRecord, Trainer};
use nightawb_core::sgplrd::estimate;
use nightawb_core::synth::{render, write_dataset, SceneSpec};
use nightawb_core::{AwbError, IlluminantEstimate};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{deg2, num, opt, summary_row, text_table, CsvOut, SUMMARY_COLUMNS};

pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const TUNED_FILE: &str = "tuned.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "policy.bin";
pub const MANIFEST_FILE: &str = "run.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

/// Recovery and reproduction errors collected over a run.
#[derive(Default)]
struct Errors {
    recovery: Vec<f64>,
    reproduction: Vec<f64>,
}

impl Errors {
    fn add(&mut self, est: [f64; 3], gt: Option<&IlluminantEstimate>) -> Result<(Option<f64>, Option<f64>), CliError> {
        let Some(gt) = gt else {
            return Ok((None, None));
        };
        let rec = recovery_angular_error(est, gt.rgb())?;
        let rep = reproduction_angular_error(est, gt.rgb())?;
        self.recovery.push(rec);
        self.reproduction.push(rep);
        Ok((Some(rec), Some(rep)))
    }

    fn write_summary(&self, cfg: &RunConfig, path: &Path) -> Result<(), CliError> {
        if self.recovery.is_empty() {
            return Ok(());
        }
        let mut out = CsvOut::new(&cfg.header(), &SUMMARY_COLUMNS)?;
        out.row(summary_row("recovery", &summarize(&self.recovery)?))?;
        out.row(summary_row("reproduction", &summarize(&self.reproduction)?))?;
        out.write(path)
    }
}

fn fallback_field(reason: Option<impl ToString>) -> String {
    reason.map(|r| r.to_string()).unwrap_or_default()
}

/// Fixed-parameter estimation over a dataset.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = cfg.require_dataset()?;
    let out_dir = cfg.require_out()?;
    let mut out = CsvOut::new(
        &cfg.header(),
        &["image_id", "r", "g", "b", "recovery_err", "reproduction_err", "fallback"],
    )?;
    let mut errors = Errors::default();
    for entry in &ds.entries {
        let img = cfg.load_image(entry)?;
        let est = estimate(&img, &cfg.sgp)?;
        let e = est.illuminant.rgb();
        let gt = entry.ground_truth.as_ref().map(|g| &g.illuminant);
        let (rec, rep) = errors.add(e, gt)?;
        out.row([
            entry.image_id.clone(),
            num(e[0]),
            num(e[1]),
            num(e[2]),
            opt(rec),
            opt(rep),
            fallback_field(est.fallback),
        ])?;
    }
    out.write(&out_dir.join(ESTIMATES_FILE))?;
    errors.write_summary(cfg, &out_dir.join(SUMMARY_FILE))
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    config_hash: String,
    pool: Vec<&'a str>,
    global_steps: u64,
    episodes: usize,
    config: &'a RunConfig,
}

const METRIC_COLUMNS: [&str; 12] = [
    "step",
    "episode_return",
    "critic_loss",
    "actor_loss",
    "alpha",
    "entropy",
    "stage",
    "image",
    "length",
    "initial_error",
    "final_error",
    "terminal_rho",
];

fn metric_row(r: &EpisodeRecord) -> Vec<String> {
    vec![
        r.step.to_string(),
        num(r.episode_return),
        opt(r.critic_loss),
        opt(r.actor_loss),
        opt(r.alpha),
        opt(r.entropy),
        r.stage.to_string(),
        r.image.clone(),
        r.length.to_string(),
        num(r.initial_error),
        num(r.final_error),
        num(r.terminal_rho),
    ]
}

/// Two-stage curriculum training on the selected pool.
pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = cfg.require_dataset()?;
    let out_dir = cfg.require_out()?;
    let entries = cfg.select_pool(&ds)?;
    let mut pool = Vec::with_capacity(entries.len());
    for entry in &entries {
        let gt = entry.ground_truth.as_ref().ok_or_else(|| {
            CliError::data(format!("pool image {} has no ground truth", entry.image_id))
        })?;
        let img = cfg.load_image(entry)?;
        pool.push(Arc::new(EnvImage::new(
            entry.image_id.clone(),
            img,
            Some(gt.illuminant),
            &cfg.env,
        )?));
    }

    let mut trainer = Trainer::new(cfg.trainer, cfg.env, cfg.seed)?;
    let result = trainer.train(&pool);

    // the metrics log is written even when training diverges
    let mut metrics = CsvOut::new(&cfg.header(), &METRIC_COLUMNS)?;
    for r in &trainer.episodes {
        metrics.row(metric_row(r))?;
    }
    metrics.write(&out_dir.join(METRICS_FILE))?;
    result?;

    save_checkpoint(trainer.actor(), out_dir.join(CHECKPOINT_FILE), &cfg.hash(), cfg.seed)?;
    let manifest = Manifest {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        pool: entries.iter().map(|e| e.image_id.as_str()).collect(),
        global_steps: trainer.global_step,
        episodes: trainer.episodes.len(),
        config: cfg,
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(out_dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

#[derive(Serialize)]
struct Trajectory<'a> {
    image_id: &'a str,
    seed: u64,
    config_hash: &'a str,
    trace: &'a [nightawb_core::env::TraceStep],
}

/// Deployment-mode tuning with a trained policy. Ground truth, when present,
/// is used only to report errors after each episode.
pub fn cmd_tune(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = cfg.require_dataset()?;
    let out_dir = cfg.require_out()?;
    let ckpt = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::config("--checkpoint is required"))?;
    let (actor, _) = load_checkpoint(ckpt)?;
    if actor.cfg.hist_dim != cfg.env.histogram.dim() {
        return Err(CliError::config(format!(
            "checkpoint expects {} histogram entries but the configuration produces {}",
            actor.cfg.hist_dim,
            cfg.env.histogram.dim()
        )));
    }
    let hash = cfg.hash();
    let mut out = CsvOut::new(
        &cfg.header(),
        &[
            "image_id",
            "n_percent",
            "minkowski_p",
            "steps",
            "r",
            "g",
            "b",
            "recovery_err",
            "reproduction_err",
            "fallback",
        ],
    )?;
    let mut traj = Vec::new();
    let mut errors = Errors::default();
    for entry in &ds.entries {
        let img = cfg.load_image(entry)?;
        let env_img = Arc::new(EnvImage::new(entry.image_id.clone(), img, None, &cfg.env)?);
        let d = deploy(&actor, &cfg.env, env_img)?;
        let e = d.estimate.illuminant.rgb();
        let gt = entry.ground_truth.as_ref().map(|g| &g.illuminant);
        let (rec, rep) = errors.add(e, gt)?;
        out.row([
            entry.image_id.clone(),
            num(d.n_percent),
            num(d.minkowski_p),
            d.steps.to_string(),
            num(e[0]),
            num(e[1]),
            num(e[2]),
            opt(rec),
            opt(rep),
            fallback_field(d.estimate.fallback),
        ])?;
        serde_json::to_writer(
            &mut traj,
            &Trajectory {
                image_id: &entry.image_id,
                seed: cfg.seed,
                config_hash: &hash,
                trace: &d.trace,
            },
        )?;
        traj.push(b'\n');
    }
    out.write(&out_dir.join(TUNED_FILE))?;
    fs::write(out_dir.join(TRAJECTORIES_FILE), traj)?;
    errors.write_summary(cfg, &out_dir.join(SUMMARY_FILE))
}

/// Reads the `recovery_err` column of an estimate or tuning CSV.
pub fn read_recovery_errors(path: &Path) -> Result<Vec<f64>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let headers = reader.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "recovery_err")
        .ok_or_else(|| CliError::data(format!("{}: no recovery_err column", path.display())))?;
    let mut errors = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = rec
            .get(col)
            .ok_or_else(|| CliError::data(format!("{}: short row", path.display())))?;
        if field.is_empty() {
            continue;
        }
        let v: f64 = field
            .parse()
            .map_err(|_| CliError::data(format!("{}: bad error value {field:?}", path.display())))?;
        errors.push(v);
    }
    if errors.is_empty() {
        return Err(CliError::data(format!("{}: no recovery errors", path.display())));
    }
    Ok(errors)
}

pub const REPORT_COLUMNS: [&str; 6] = ["method", "median", "mean", "tri_mean", "best25", "worst25"];

/// One row per input CSV, in degrees with two decimals.
pub fn report_rows(inputs: &[PathBuf]) -> Result<Vec<Vec<String>>, CliError> {
    inputs
        .iter()
        .map(|p| {
            let s = summarize(&read_recovery_errors(p)?)?;
            Ok(vec![
                p.display().to_string(),
                deg2(s.median),
                deg2(s.mean),
                deg2(s.tri_mean),
                deg2(s.best25),
                deg2(s.worst25),
            ])
        })
        .collect()
}

pub fn cmd_report(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<(), CliError> {
    if inputs.is_empty() {
        return Err(CliError::config("report needs at least one input CSV"));
    }
    let out_dir = cfg.require_out()?;
    let rows = report_rows(inputs)?;
    let mut out = CsvOut::new(&cfg.header(), &REPORT_COLUMNS)?;
    for r in &rows {
        out.row(r)?;
    }
    out.write(&out_dir.join(REPORT_CSV))?;
    let text = format!("{}\n{}", cfg.header(), text_table(&REPORT_COLUMNS, &rows));
    fs::write(out_dir.join(REPORT_TXT), &text)?;
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

/// Scene seed for image `i` of a synthetic dataset.
pub fn scene_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

/// Renders a synthetic dataset with ids `1..=count`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let out_dir = cfg.require_out()?;
    let s = &cfg.synth;
    if s.count == 0 || s.size == 0 {
        return Err(CliError::config("synth.count and synth.size must be positive"));
    }
    let mut scenes = Vec::with_capacity(s.count);
    for i in 0..s.count {
        let mut spec = SceneSpec::random(s.size, s.size, scene_seed(cfg.seed, i));
        spec.noise_sigma = s.noise_sigma;
        spec.gray_fraction = s.gray_fraction;
        spec.patch_grid = s.patch_grid;
        spec.exposure_peak = s.exposure_peak;
        let scene = render(&spec).map_err(|e| match e {
            AwbError::InvalidParameter(m) => CliError::config(m),
            other => other.into(),
        })?;
        scenes.push(((i + 1).to_string(), scene));
    }
    write_dataset(out_dir, &scenes)?;
    let manifest = serde_json::json!({
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "synth": s,
    });
    fs::write(out_dir.join("synth.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}
