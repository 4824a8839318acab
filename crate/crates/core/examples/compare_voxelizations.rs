//! Trains the log-warped spherical grid and a cubic grid of similar size
//! with identical budgets, then reports PSNR on near and far content.
//!
//! ```text
//! cargo run --release --example compare_voxelizations -- [STEPS] [REPORT]
//! ```

use std::path::PathBuf;

use panorf::bench::{compare_voxelizations, BenchScene};
use panorf::data::{SynthOptions, SyntheticScene};
use panorf::{SceneConfig, TrainConfig};

fn main() -> panorf::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args
        .next()
        .map_or(1000, |s| s.parse().expect("steps must be an integer"));
    let path = PathBuf::from(args.next().unwrap_or_else(|| "target/voxelization.json".into()));
    let opts = SynthOptions {
        seed: 7,
        height: 64,
        width: 128,
        oracle_samples: 256,
        ..SynthOptions::default()
    };
    let scene = BenchScene::render(SyntheticScene::box_spheres(), &opts, None)?;
    let cfg = SceneConfig {
        resolution: [32, 32, 64],
        n_samples: 64,
        ..SceneConfig::tiny()
    };
    let train = TrainConfig {
        steps,
        batch_rays: 512,
        strict: true,
        ..TrainConfig::tiny()
    };
    let rep = compare_voxelizations(&scene, &cfg, &train, 0)?;
    std::fs::write(&path, rep.to_json()).map_err(|e| panorf::Error::io(&path, e))?;
    println!("near/far split at {:.2} m", rep.near_far_split);
    for r in [&rep.spherical, &rep.cubic] {
        println!(
            "{:<9} {:>10}  near {:6.2} dB  far {:6.2} dB  {:>8} bytes",
            r.config_id, r.resolution, r.near_psnr, r.far_psnr, r.param_bytes
        );
    }
    println!("report {}", path.display());
    Ok(())
}
