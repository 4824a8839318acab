//! Throughput matrix over grid ranks, plus factored versus dense
//! interpolation at 128³.
//!
//! ```text
//! cargo run --release --example bench -- [STEPS] [CSV]
//! ```

use std::path::PathBuf;

use panorf::bench::{interp_microbench, run_bench, BenchConfig, BenchScene};
use panorf::data::{SynthOptions, SyntheticScene};
use panorf::{SceneConfig, TrainConfig};

fn main() -> panorf::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(50, |s| s.parse().expect("steps must be an integer"));
    let csv = PathBuf::from(args.next().unwrap_or_else(|| "target/bench.csv".into()));

    let ib = interp_microbench([128, 128, 128], 8, 2000, 96, 0)?;
    println!(
        "interpolation along rays at 128³, rank 8: factored {:.0} rays/s ({} bytes), dense {:.0} rays/s ({} bytes)",
        ib.factored_rays_per_sec, ib.factored_bytes, ib.dense_rays_per_sec, ib.dense_bytes
    );

    let opts = SynthOptions {
        seed: 7,
        height: 64,
        width: 128,
        oracle_samples: 256,
        ..SynthOptions::default()
    };
    let scene = BenchScene::render(SyntheticScene::box_spheres(), &opts, None)?;
    let configs: Vec<BenchConfig> = [(4, 8), (8, 16), (16, 32)]
        .into_iter()
        .map(|(rs, rc)| BenchConfig {
            id: format!("rank{rs:02}-{rc:02}"),
            scene: SceneConfig {
                resolution: [32, 32, 64],
                rank_density: rs,
                rank_appearance: rc,
                n_samples: 64,
                ..SceneConfig::tiny()
            },
            train: TrainConfig {
                steps,
                batch_rays: 512,
                ..TrainConfig::tiny()
            },
            eval_every: 0,
        })
        .collect();
    for outcome in run_bench(&configs, &scene, Some(&csv))? {
        match outcome {
            Ok(r) => println!(
                "{:<12} {:>8.0} rays/s {:>6.2} steps/s {:>9} bytes  near {:.2} far {:.2} dB",
                r.config_id, r.rays_per_sec, r.steps_per_sec, r.param_bytes, r.near_psnr, r.far_psnr
            ),
            Err((id, e)) => println!("{id:<12} failed: {e}"),
        }
    }
    println!("csv {}", csv.display());
    Ok(())
}
