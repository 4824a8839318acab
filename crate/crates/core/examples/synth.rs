//! Renders the box-and-spheres scene into a posed panorama dataset.
//!
//! ```text
//! cargo run --release --example synth -- [OUT_DIR] [SEED]
//! ```

use std::path::PathBuf;

use panorf::data::{generate_synthetic_dataset, SynthOptions, SyntheticScene};

fn main() -> panorf::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/synth".into()));
    let seed = args.next().map_or(7, |s| s.parse().expect("seed must be an integer"));
    let opts = SynthOptions {
        seed,
        ..SynthOptions::default()
    };
    let ds = generate_synthetic_dataset(&SyntheticScene::box_spheres(), &opts, &out)?;
    let (train, val, test) = ds.split_sizes();
    println!("{}", out.join("manifest.json").display());
    println!(
        "{train} train / {val} val / {test} test views, r_max {}",
        ds.bounds.r_max
    );
    Ok(())
}
