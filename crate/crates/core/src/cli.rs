//! Command-line front end: `synth`, `train`, `infer`, `gradcheck`, `bench`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 verification failure. Errors go to stderr prefixed with `error:`.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{self, DatasetSpec, MaskConfig};
use crate::error::Error;
use crate::metrics::{self, bench};
use crate::model::generator_forward;
use crate::rng::SeededRng;
use crate::train::{self, Checkpoint, StepReport, TrainConfig, Trainer};
use crate::verify::{self, GradcheckConfig};

#[derive(Debug, Parser)]
#[command(name = "dstt", version, about = "Decoupled spatial-temporal transformer for video inpainting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset as PPM frames and PGM masks.
    Synth(SynthArgs),
    /// Train a generator (and discriminator when λ_adv > 0).
    Train(TrainArgs),
    /// Inpaint a clip with a trained checkpoint.
    Infer(InferArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Count and time attention in decoupled and coupled modes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON configuration file; omitted fields take their defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides the run seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a config value by dotted path, e.g. `model.stacking=ttttssss`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory; receives one `clip_NNNNN` directory per clip.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory for `checkpoint.dstt`, `loss.csv` and `config.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset directory (as written by `synth`); synthesized from the config when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Continue from a checkpoint; the run configuration is taken from it.
    #[arg(long, value_name = "CKPT", conflicts_with_all = ["config", "overrides", "seed"])]
    pub resume: Option<PathBuf>,
    /// New total step count when resuming.
    #[arg(long, requires = "resume")]
    pub steps: Option<u64>,
    /// Also checkpoint every N steps (0: only at the end).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    /// Print a progress line every N steps (0: never).
    #[arg(long, default_value_t = 100)]
    pub log_every: u64,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: PathBuf,
    /// Directory of `frame_NNNNN.ppm` (holes may hold anything).
    #[arg(long)]
    pub frames: PathBuf,
    /// Directory of `mask_NNNNN.pgm`, one per frame.
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Uncorrupted frames; enables PSNR/SSIM reporting.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Write the raw network output instead of the composite.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// CSV report path.
    #[arg(long, default_value = "bench.csv")]
    pub out: PathBuf,
    /// JSON report path; defaults to the CSV path with a `.json` extension.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Failure classes, one per nonzero exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Verification(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Verification(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> CliResult {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Infer(a) => cmd_infer(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

/// Sets `path` (dot-separated) in `root`, creating objects along the way.
/// The value is parsed as JSON when possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> CliResult {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {assignment:?} is not KEY=VALUE")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Usage(format!("override key {key:?} is malformed")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("override {key:?} descends into a non-object")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| CliError::Usage(format!("override {key:?} descends into a non-object")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Defaults, then the config file, then `--seed` at `seed_key`, then `--set`s.
pub fn resolve_config<T>(args: &ConfigArgs, seed_key: &str) -> CliResult<T>
where
    T: Default + Serialize + DeserializeOwned,
{
    let mut value = serde_json::to_value(T::default()).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        merge(&mut value, file);
    }
    if let Some(seed) = args.seed {
        apply_override(&mut value, &format!("{seed_key}={seed}"))?;
    }
    for o in &args.overrides {
        apply_override(&mut value, o)?;
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
}

fn echo_config<T: Serialize>(config: &T) {
    println!("effective config: {}", serde_json::to_string(config).expect("config serializes"));
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::from(Error::Io { path: path.to_path_buf(), source: e })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub data: DatasetSpec,
    pub masks: MaskConfig,
}

pub fn clip_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("clip_{i:05}"))
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult {
    let cfg: SynthConfig = resolve_config(&args.config, "data.seed")?;
    echo_config(&cfg);
    let mut rng = SeededRng::new(cfg.data.seed);
    let clips = data::synth_dataset(&mut rng, &cfg.data)?;
    for (i, clip) in clips.iter().enumerate() {
        let dir = clip_dir(&args.out, i);
        data::save_clip(clip, &dir)?;
        let (h, w) = clip.frame_size();
        let masks = cfg.masks.sample(&mut rng, clip.frame_count(), h, w)?;
        data::save_masks(&masks, &dir)?;
    }
    let spec_path = args.out.join("synth.json");
    fs::write(&spec_path, serde_json::to_string_pretty(&cfg).expect("config serializes"))
        .map_err(|e| io_err(&spec_path, e))?;
    println!("wrote {} clips to {}", clips.len(), args.out.display());
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> CliResult {
    let dataset = args.data.as_deref().map(data::load_dataset).transpose()?;
    let mut trainer = match &args.resume {
        Some(path) => {
            let mut t = Trainer::resume(&Checkpoint::load(path)?, dataset)?;
            if let Some(steps) = args.steps {
                t.set_total_steps(steps);
            }
            t
        }
        None => {
            let cfg: TrainConfig = resolve_config(&args.config, "seed")?;
            match dataset {
                Some(d) => Trainer::with_dataset(cfg, d)?,
                None => Trainer::new(cfg)?,
            }
        }
    };
    echo_config(trainer.config());
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let cfg_path = args.out.join("config.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(trainer.config()).expect("config serializes"))
        .map_err(|e| io_err(&cfg_path, e))?;

    let csv_path = args.out.join("loss.csv");
    let fresh = args.resume.is_none() || !csv_path.exists();
    let mut csv = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&csv_path)
        .map_err(|e| io_err(&csv_path, e))?;
    if fresh {
        writeln!(csv, "{}", StepReport::CSV_HEADER).map_err(|e| io_err(&csv_path, e))?;
    }
    let ckpt_path = args.out.join("checkpoint.dstt");
    let total = trainer.config().steps;
    trainer
        .run(|t, r| {
            writeln!(csv, "{}", r.csv_row()).map_err(|e| Error::io(&csv_path, e))?;
            if args.log_every > 0 && r.step % args.log_every == 0 {
                eprintln!(
                    "step {}/{} lr {:.1e} l_hole {:.4} l_valid {:.4} l_adv {:.4} l_d {:.4}",
                    r.step, total, r.lr, r.l_hole, r.l_valid, r.l_adv, r.l_d
                );
            }
            if args.checkpoint_every > 0 && r.step % args.checkpoint_every == 0 {
                t.save(&ckpt_path)?;
            }
            Ok(())
        })
        .map_err(|e| match e {
            Error::NonFinite(m) => CliError::Verification(format!("non-finite value: {m}")),
            other => other.into(),
        })?;
    trainer.save(&ckpt_path)?;
    println!("trained {} steps; checkpoint {}", trainer.step_count(), ckpt_path.display());
    Ok(())
}

pub fn cmd_infer(args: &InferArgs) -> CliResult {
    let (mut cfg, params) = train::load_generator(&args.checkpoint)?;
    let clip = data::load_clip(&args.frames)?;
    let (h, w) = clip.frame_size();
    let masks = data::load_masks(&args.masks, clip.frame_count(), (h, w))?;
    let unit = 12 * cfg.model.zone_split;
    if h % unit != 0 || w % unit != 0 {
        return Err(CliError::Data(format!("frames are {h}×{w}; both sides must be multiples of {unit}")));
    }
    // the network is fully convolutional up to the zone grid
    cfg.model.frame_h = h;
    cfg.model.frame_w = w;
    let corrupted = data::corrupt(&clip, &masks)?;
    let raw = generator_forward(corrupted.frames(), masks.masks(), &cfg.model, &params.frozen())?;
    let raw = data::VideoClip::new(raw)?;
    let composite = data::composite(&raw, &corrupted, &masks)?;
    data::save_clip(if args.raw { &raw } else { &composite }, &args.out)?;
    println!("wrote {} frames to {}", composite.frame_count(), args.out.display());
    if let Some(gt) = &args.ground_truth {
        let truth = data::load_clip(gt)?;
        if truth.frames().shape() != composite.frames().shape() {
            return Err(CliError::Data(format!(
                "ground truth {:?} does not match frames {:?}",
                truth.frames().shape(),
                composite.frames().shape()
            )));
        }
        let psnr = metrics::psnr(composite.frames(), truth.frames())?;
        let psnr_u8 = metrics::psnr_u8(composite.frames(), truth.frames())?;
        let raw_psnr = metrics::psnr(raw.frames(), truth.frames())?;
        println!("psnr {psnr:.4} dB (8-bit {psnr_u8:.4} dB)");
        println!("raw_psnr {raw_psnr:.4} dB");
        if masks.hole_pixels() > 0 {
            let hole = metrics::masked_psnr(composite.frames(), truth.frames(), masks.masks())?;
            println!("hole_psnr {hole:.4} dB");
        }
        match metrics::ssim(composite.frames(), truth.frames()) {
            Ok(s) => println!("ssim {s:.6}"),
            Err(e) => println!("ssim unavailable: {e}"),
        }
    }
    Ok(())
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> CliResult {
    let cfg: GradcheckConfig = resolve_config(&args.config, "seed")?;
    echo_config(&cfg);
    let outcomes = verify::run_gradcheck_suite(&cfg, |o| {
        println!(
            "{} {:<26} checked {:>4} kinks {:>3} max_rel_err {:.3e}",
            if o.passed { "ok  " } else { "FAIL" },
            o.name,
            o.report.checked,
            o.report.skipped_kinks,
            o.report.max_rel_err
        );
    })?;
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    if failed.is_empty() {
        println!("all {} gradient checks passed (tolerance {:e})", outcomes.len(), cfg.tolerance);
        Ok(())
    } else {
        Err(CliError::Verification(format!("gradient check failed: {}", failed.join(", "))))
    }
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult {
    let cfg: bench::BenchConfig = resolve_config(&args.config, "seed")?;
    echo_config(&cfg);
    let report = bench::run_bench(&cfg)?;
    for r in &report.rows {
        let c = &r.config;
        println!(
            "t={} s={} n={} d={}: temporal {} spatial {} coupled {} MACs, ratio {} ({:.4}); {:.2} ms decoupled vs {:.2} ms coupled{}",
            c.t,
            c.s,
            c.n,
            c.d,
            r.temporal.measured_macs,
            r.spatial.measured_macs,
            r.coupled.measured_macs,
            r.ratio,
            r.ratio.value(),
            r.decoupled_millis(),
            r.coupled.millis,
            if r.counts_match() { "" } else { "  MISMATCH" }
        );
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(&args.out, report.to_csv()).map_err(|e| io_err(&args.out, e))?;
    let json_path = args.json.clone().unwrap_or_else(|| args.out.with_extension("json"));
    fs::write(&json_path, serde_json::to_string_pretty(&report).expect("report serializes"))
        .map_err(|e| io_err(&json_path, e))?;
    println!("wrote {} and {}", args.out.display(), json_path.display());
    if report.all_match() {
        Ok(())
    } else {
        Err(CliError::Verification("measured attention MACs differ from the analytic counts".into()))
    }
}
