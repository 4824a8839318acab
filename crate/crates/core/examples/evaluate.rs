//! Scores a checkpoint on one split of a dataset and writes the JSON report.
//!
//! ```text
//! cargo run --release --example evaluate -- CHECKPOINT MANIFEST [SPLIT]
//! ```

use std::path::PathBuf;

use panorf::checkpoint;
use panorf::data::{load_dataset, Split};
use panorf::eval::{evaluate, EvalOptions, FieldRenderer};

fn main() -> panorf::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = PathBuf::from(args.next().unwrap_or_else(|| "target/train_tiny/model.ckpt".into()));
    let manifest = PathBuf::from(
        args.next()
            .unwrap_or_else(|| "target/train_tiny/data/manifest.json".into()),
    );
    let split: Split = args.next().map_or(Ok(Split::Test), |s| s.parse())?;

    let field = checkpoint::load(&ckpt)?;
    let ds = load_dataset(&manifest)?;
    let renderer = FieldRenderer {
        field: &field,
        n_samples: field.config().n_samples,
    };
    let report = evaluate(&renderer, &ds, split, &EvalOptions::default())?;
    for m in &report.per_image {
        println!("{:<14} PSNR {:6.2} dB  SSIM {:.4}", m.file, m.psnr, m.ssim);
    }
    println!(
        "mean PSNR {:.2} dB, mean SSIM {:.4}",
        report.mean_psnr, report.mean_ssim
    );
    let path = ckpt.with_file_name(format!("report_{split}.json"));
    report.write(&path)?;
    println!("report {}", path.display());
    Ok(())
}
