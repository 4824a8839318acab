//! Fits a small field to a freshly rendered synthetic dataset and reports
//! held-out quality.
//!
//! ```text
//! cargo run --release --example train_tiny -- [STEPS] [OUT_DIR]
//! ```

use std::path::PathBuf;

use panorf::data::{generate_synthetic_dataset, Split, SynthOptions, SyntheticScene};
use panorf::eval::{evaluate, EvalOptions, FieldRenderer};
use panorf::train::{train, TrainOutputs, TrainingData};
use panorf::{RadianceField, SceneConfig, TrainConfig};

fn main() -> panorf::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args
        .next()
        .map_or(500, |s| s.parse().expect("steps must be an integer"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/train_tiny".into()));
    let opts = SynthOptions {
        seed: 7,
        height: 64,
        width: 128,
        oracle_samples: 256,
        ..SynthOptions::default()
    };
    let ds = generate_synthetic_dataset(&SyntheticScene::box_spheres(), &opts, &out.join("data"))?;

    let mut scene = SceneConfig {
        resolution: [32, 32, 64],
        n_samples: 64,
        ..SceneConfig::tiny()
    };
    scene.set_bounds(&ds.bounds);
    let cfg = TrainConfig {
        steps,
        batch_rays: 512,
        log_every: 50,
        ..TrainConfig::tiny()
    };
    let field = RadianceField::<f32>::init(scene, cfg.seed)?;
    let data = TrainingData::from_dataset(&ds, Split::Train)?;
    let outputs = TrainOutputs {
        checkpoint: Some(out.join("model.ckpt")),
        metrics: Some(out.join("metrics.ndjson")),
    };
    let outcome = train(field, data, &cfg, &outputs, |r| {
        println!("step {:>5}  loss {:.5}  {:.0} rays/s", r.step, r.loss, r.rays_per_sec);
    })?;

    let renderer = FieldRenderer {
        field: &outcome.field,
        n_samples: outcome.field.config().n_samples,
    };
    let opts = EvalOptions {
        side_by_side_dir: Some(out.join("compare")),
    };
    let report = evaluate(&renderer, &ds, Split::Test, &opts)?;
    println!(
        "trained {steps} steps in {:.1} s; test PSNR {:.2} dB, SSIM {:.4}",
        outcome.wallclock_secs, report.mean_psnr, report.mean_ssim
    );
    println!("checkpoint {}", out.join("model.ckpt").display());
    Ok(())
}
