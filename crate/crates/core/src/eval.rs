//! Image metrics and the evaluation harness.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::field::RadianceField;
use crate::geom::EquirectCamera;
use crate::image::Image;
use crate::real::Real;
use crate::render::render_equirect;

/// Reported for identical images instead of infinity.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::Input(format!(
            "image dimensions differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Mean squared error over all channels.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    if a.data.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// `10·log10(1/mse)` for images in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable valid-mode filtering of a `w × h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|j| k[j] * horiz[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity: 11×11 Gaussian window (σ = 1.5), `K1 = 0.01`,
/// `K2 = 0.03`, dynamic range 1, valid windows only, averaged over channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Input(format!(
            "ssim needs both sides >= {SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let k = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for ch in 0..3 {
        let pa: Vec<f64> = a.data.iter().skip(ch).step_by(3).map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.data.iter().skip(ch).step_by(3).map(|&v| v as f64).collect();
        let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
        let mu_a = filter_valid(&pa, w, h, &k);
        let mu_b = filter_valid(&pb, w, h, &k);
        let aa = filter_valid(&prod(&pa, &pa), w, h, &k);
        let bb = filter_valid(&prod(&pb, &pb), w, h, &k);
        let ab = filter_valid(&prod(&pa, &pb), w, h, &k);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / 3.0)
}

/// Anything that can produce an equirectangular view for a camera.
pub trait ViewRenderer {
    fn render_view(&self, cam: &EquirectCamera) -> Result<Image>;
}

/// Deterministic field rendering with a fixed sample count.
pub struct FieldRenderer<'a, T> {
    pub field: &'a RadianceField<T>,
    pub n_samples: usize,
}

impl<T: Real> ViewRenderer for FieldRenderer<'_, T> {
    fn render_view(&self, cam: &EquirectCamera) -> Result<Image> {
        render_equirect(self.field, cam, self.n_samples)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub file: String,
    pub psnr: f64,
    pub ssim: f64,
    /// Reserved for externally computed perceptual scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lpips: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub split: Split,
    pub per_image: Vec<ImageMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub render_ms_total: f64,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Ground truth on the left, rendering on the right.
pub fn side_by_side(truth: &Image, render: &Image) -> Image {
    let (w, h) = (truth.width, truth.height);
    let mut out = Image::new(2 * w, h);
    for y in 0..h {
        for x in 0..w {
            out.set_pixel(x, y, truth.pixel(x, y));
            out.set_pixel(w + x, y, render.pixel(x, y));
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalOptions {
    /// Write `<stem>_cmp.png` comparisons here.
    pub side_by_side_dir: Option<PathBuf>,
}

/// Renders every image of `split` and scores it against its file.
pub fn evaluate(
    renderer: &impl ViewRenderer,
    dataset: &Dataset,
    split: Split,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    let entries: Vec<_> = dataset.split(split).collect();
    if entries.is_empty() {
        return Err(Error::Config(format!("split {split} has no images")));
    }
    if let Some(dir) = &opts.side_by_side_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut per_image = Vec::with_capacity(entries.len());
    let mut render_ms_total = 0.0;
    for e in entries {
        let truth = e.load_image()?;
        let t0 = Instant::now();
        let img = renderer.render_view(&e.camera)?;
        render_ms_total += t0.elapsed().as_secs_f64() * 1e3;
        per_image.push(ImageMetrics {
            file: e.file.clone(),
            psnr: psnr(&img, &truth)?,
            ssim: ssim(&img, &truth)?,
            lpips: None,
        });
        if let Some(dir) = &opts.side_by_side_dir {
            let stem = Path::new(&e.file).file_stem().unwrap_or_default().to_string_lossy();
            side_by_side(&truth, &img).save_png(&dir.join(format!("{stem}_cmp.png")))?;
        }
    }
    let n = per_image.len() as f64;
    Ok(MetricReport {
        split,
        mean_psnr: per_image.iter().map(|m| m.psnr).sum::<f64>() / n,
        mean_ssim: per_image.iter().map(|m| m.ssim).sum::<f64>() / n,
        per_image,
        render_ms_total,
    })
}
