//! Renders an equirectangular panorama and a perspective frame from a
//! checkpoint, e.g. the one written by the `train_tiny` example.
//!
//! ```text
//! cargo run --release --example render -- CHECKPOINT [OUT_DIR]
//! ```

use std::path::PathBuf;

use panorf::checkpoint;
use panorf::geom::{look_rotation, yaw_rotation, PinholeCamera, PinholeIntrinsics};
use panorf::render::{render_equirect, render_perspective};
use panorf::{EquirectCamera, Vec3};

fn main() -> panorf::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = PathBuf::from(args.next().unwrap_or_else(|| "target/train_tiny/model.ckpt".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/render".into()));
    std::fs::create_dir_all(&out).map_err(|e| panorf::Error::io(&out, e))?;

    let field = checkpoint::load(&ckpt)?;
    let center = field.layout().bounds.center;
    let n = field.config().n_samples;

    let pano = EquirectCamera::new(center + Vec3::new(0.5, -0.3, 0.2), yaw_rotation(0.4), 256, 128)?;
    render_equirect(&field, &pano, n)?.save_png(&out.join("panorama.png"))?;

    let k = PinholeIntrinsics::from_fov(160, 120, 90f64.to_radians())?;
    let cam = PinholeCamera::new(center, look_rotation(&Vec3::new(1.0, 1.0, -0.3))?, k)?;
    render_perspective(&field, &cam, n)?.save_png(&out.join("perspective.png"))?;

    println!(
        "wrote {} and {}",
        out.join("panorama.png").display(),
        out.join("perspective.png").display()
    );
    Ok(())
}
