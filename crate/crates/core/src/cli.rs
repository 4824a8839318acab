//! Command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | internal error |
//! | 2 | bad arguments, configuration, pose file or dataset |
//! | 3 | I/O failure |
//! | 4 | training aborted on a non-finite loss or gradient budget |
//! | 5 | unreadable or incompatible checkpoint |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::{SceneConfig, TrainConfig};
use crate::data::{
    generate_synthetic_dataset, load_dataset, rotation_from_row_major, Split, SynthOptions, SyntheticScene,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, FieldRenderer};
use crate::geom::{EquirectCamera, PinholeCamera, PinholeIntrinsics, Vec3};
use crate::render::{render_equirect, render_perspective};
use crate::train::{train, TrainOutputs, TrainingData};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;
pub const EXIT_CHECKPOINT: i32 = 5;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Input(_) | Error::Config(_) | Error::Data { .. } => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        Error::NonFiniteLoss { .. } | Error::GradientBudget { .. } => EXIT_TRAINING,
        Error::Checkpoint(_) => EXIT_CHECKPOINT,
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "panorf",
    version,
    about = "Omnidirectional radiance fields from posed panoramas"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic scene into a posed panorama dataset.
    Synth(SynthArgs),
    /// Fit a field to a dataset's training split.
    Train(TrainArgs),
    /// Render views from a checkpoint.
    Render(RenderArgs),
    /// Score a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Print a checkpoint's header and config as JSON.
    Inspect(InspectArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML run config with optional `[scene]` and `[train]` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Bit-reproducible reductions.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "box-spheres")]
    pub scene: String,
    #[arg(long, default_value_t = 24)]
    pub cameras: usize,
    /// Image size as HEIGHTxWIDTH.
    #[arg(long, default_value = "128x256")]
    pub dims: String,
    #[arg(long, default_value_t = 512)]
    pub oracle_samples: usize,
    /// Camera positions lie within this fraction of the scene radius.
    #[arg(long, default_value_t = 0.5)]
    pub spread: f64,
    /// Also write lossless `.f32` images.
    #[arg(long)]
    pub f32: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset manifest, or the directory holding `manifest.json`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Metrics log (newline-delimited JSON).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Pose list (JSON).
    #[arg(long, conflicts_with = "data")]
    pub poses: Option<PathBuf>,
    /// Render the poses of a dataset split instead of a pose list.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Samples per ray; defaults to the checkpoint's setting.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Output directory for `frame_NNNN.png`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Metric report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for ground-truth/render comparison images.
    #[arg(long)]
    pub side_by_side: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", origin.display(), e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!("config file {} does not exist", path.display())));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// File values (or defaults) with flag overrides applied, validated.
    pub fn resolve(common: &CommonArgs) -> Result<Self> {
        let mut rc = match &common.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = common.seed {
            rc.train.seed = s;
        }
        if let Some(t) = common.threads {
            rc.train.threads = t;
        }
        if common.strict {
            rc.train.strict = true;
        }
        rc.scene.validate()?;
        rc.train.validate()?;
        Ok(rc)
    }
}

/// Parses `HEIGHTxWIDTH`.
pub fn parse_dims(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("--dims must look like 128x256, got {s:?}"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((
        h.trim().parse().map_err(|_| bad())?,
        w.trim().parse().map_err(|_| bad())?,
    ))
}

/// One entry of a pose list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Pose {
    Equirect {
        width: usize,
        height: usize,
        position: [f64; 3],
        /// Camera-to-world rotation, row-major.
        rotation: [f64; 9],
    },
    Pinhole {
        width: usize,
        height: usize,
        /// Horizontal field of view in degrees.
        fov_x_deg: f64,
        position: [f64; 3],
        rotation: [f64; 9],
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseList {
    pub poses: Vec<Pose>,
}

impl PoseList {
    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!("pose file {} does not exist", path.display())));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(path, format!("invalid pose file: {e}")))
    }
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("manifest.json")
    } else {
        p.to_path_buf()
    }
}

fn open_dataset(p: &Path) -> Result<crate::data::Dataset> {
    let m = manifest_path(p);
    if !m.exists() {
        return Err(Error::Config(format!("dataset {} does not exist", m.display())));
    }
    load_dataset(&m)
}

fn open_checkpoint(p: &Path) -> Result<crate::field::RadianceField<f32>> {
    if !p.exists() {
        return Err(Error::Checkpoint(format!("{} does not exist", p.display())));
    }
    checkpoint::load(p)
}

fn init_threads(threads: usize) {
    // A second call fails harmlessly when a pool already exists.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

pub fn cmd_synth(a: &SynthArgs) -> Result<PathBuf> {
    let rc = RunConfig::resolve(&a.common)?;
    init_threads(rc.train.threads);
    let scene = match a.scene.as_str() {
        "box-spheres" => SyntheticScene::box_spheres(),
        other => {
            return Err(Error::Config(format!(
                "unknown scene {other:?}; available: box-spheres"
            )))
        }
    };
    let (height, width) = parse_dims(&a.dims)?;
    let opts = SynthOptions {
        n_cameras: a.cameras,
        seed: a.common.seed.unwrap_or(0),
        height,
        width,
        oracle_samples: a.oracle_samples,
        spread: a.spread,
        write_f32: a.f32,
        ..SynthOptions::default()
    };
    generate_synthetic_dataset(&scene, &opts, &a.out)?;
    Ok(a.out.join("manifest.json"))
}

pub fn cmd_train(a: &TrainArgs, out: &mut impl Write) -> Result<()> {
    let mut rc = RunConfig::resolve(&a.common)?;
    if let Some(s) = a.steps {
        rc.train.steps = s;
    }
    let ds = open_dataset(&a.data)?;
    rc.scene.set_bounds(&ds.bounds);
    let data = TrainingData::from_dataset(&ds, Split::Train)?;
    let field = crate::field::RadianceField::<f32>::init(rc.scene.clone(), rc.train.seed)?;
    let outputs = TrainOutputs {
        checkpoint: Some(a.checkpoint.clone()),
        metrics: a.metrics.clone(),
    };
    let outcome = train(field, data, &rc.train, &outputs, |r| {
        eprintln!(
            "step {:>6}  loss {:.6}  lr {:.2e}  {:.0} rays/s",
            r.step, r.loss, r.lr, r.rays_per_sec
        );
    })?;
    let loss = outcome.final_loss.map_or("n/a".to_string(), |l| format!("{l:.6}"));
    let _ = writeln!(
        out,
        "final train loss {loss}, wallclock {:.1} s",
        outcome.wallclock_secs
    );
    let _ = writeln!(out, "checkpoint {}", a.checkpoint.display());
    Ok(())
}

/// Renders every pose and returns the written frame paths.
pub fn cmd_render(a: &RenderArgs) -> Result<Vec<PathBuf>> {
    let rc = RunConfig::resolve(&a.common)?;
    init_threads(rc.train.threads);
    let poses = match (&a.poses, &a.data) {
        (Some(p), None) => PoseList::read(p)?.poses,
        (None, Some(d)) => open_dataset(d)?
            .split(a.split)
            .map(|e| Pose::Equirect {
                width: e.camera.width,
                height: e.camera.height,
                position: e.camera.position.into(),
                rotation: crate::data::rotation_to_row_major(&e.camera.orientation),
            })
            .collect(),
        _ => return Err(Error::Config("render needs exactly one of --poses or --data".into())),
    };
    let field = open_checkpoint(&a.checkpoint)?;
    if poses.is_empty() {
        return Ok(Vec::new());
    }
    let n = a.samples.unwrap_or(field.config().n_samples);
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut written = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let origin = a.poses.as_deref().unwrap_or(Path::new("pose list"));
        let in_pose = |e: Error| Error::data(origin, format!("pose {i}: {e}"));
        let img = match pose {
            Pose::Equirect {
                width,
                height,
                position,
                rotation,
            } => {
                let cam = EquirectCamera::new(
                    Vec3::from(*position),
                    rotation_from_row_major(rotation),
                    *width,
                    *height,
                )
                .map_err(in_pose)?;
                render_equirect(&field, &cam, n)?
            }
            Pose::Pinhole {
                width,
                height,
                fov_x_deg,
                position,
                rotation,
            } => {
                let k = PinholeIntrinsics::from_fov(*width, *height, fov_x_deg.to_radians()).map_err(in_pose)?;
                let cam =
                    PinholeCamera::new(Vec3::from(*position), rotation_from_row_major(rotation), k).map_err(in_pose)?;
                render_perspective(&field, &cam, n)?
            }
        };
        let path = a.out.join(format!("frame_{i:04}.png"));
        img.save_png(&path)?;
        written.push(path);
    }
    Ok(written)
}

pub fn cmd_eval(a: &EvalArgs, out: &mut impl Write) -> Result<crate::eval::MetricReport> {
    let rc = RunConfig::resolve(&a.common)?;
    init_threads(rc.train.threads);
    let ds = open_dataset(&a.data)?;
    let field = open_checkpoint(&a.checkpoint)?;
    let renderer = FieldRenderer {
        field: &field,
        n_samples: a.samples.unwrap_or(field.config().n_samples),
    };
    let opts = EvalOptions {
        side_by_side_dir: a.side_by_side.clone(),
    };
    let report = evaluate(&renderer, &ds, a.split, &opts)?;
    if let Some(p) = &a.report {
        report.write(p)?;
    }
    let _ = writeln!(
        out,
        "{} split: mean PSNR {:.3} dB, mean SSIM {:.4} over {} images",
        a.split,
        report.mean_psnr,
        report.mean_ssim,
        report.per_image.len()
    );
    Ok(report)
}

pub fn cmd_inspect(a: &InspectArgs) -> Result<String> {
    if !a.checkpoint.exists() {
        return Err(Error::Checkpoint(format!("{} does not exist", a.checkpoint.display())));
    }
    let h = checkpoint::inspect(&a.checkpoint)?;
    Ok(serde_json::to_string_pretty(&h).expect("header serializes"))
}

/// Runs one parsed command, returning its exit code.
pub fn run(cli: Cli) -> i32 {
    let mut stdout = std::io::stdout();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|p| println!("{}", p.display())),
        Command::Train(a) => cmd_train(a, &mut stdout),
        Command::Render(a) => cmd_render(a).map(|v| println!("wrote {} frames", v.len())),
        Command::Eval(a) => cmd_eval(a, &mut stdout).map(|_| ()),
        Command::Inspect(a) => cmd_inspect(a).map(|s| println!("{s}")),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}
