//! Throughput, time-to-quality and voxelization comparisons on the standard
//! synthetic scene.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{SceneConfig, TrainConfig, Voxelization};
use crate::data::{oracle_render_with_depth, synthetic_cameras, SynthOptions, SyntheticScene};
use crate::error::{Error, Result};
use crate::eval::psnr_from_mse;
use crate::field::{FactoredTensor3, GridQuery, RadianceField};
use crate::geom::{sample_ray, GridLayout, Ray, RaySampleBatch, Vec3, Warp};
use crate::render::render_equirect;
use crate::train::{Trainer, TrainingData, TrainingView};

/// Ground truth for one held-out view.
#[derive(Clone, Debug)]
pub struct BenchView {
    pub view: TrainingView,
    /// First-hit distance per pixel.
    pub depth: Vec<f64>,
}

/// Training views plus held-out views with depth, all rendered in memory.
#[derive(Clone, Debug)]
pub struct BenchScene {
    pub scene: SyntheticScene,
    pub train: TrainingData,
    pub test: Vec<BenchView>,
    /// Pixels with depth below this count as near content.
    pub near_far_split: f64,
}

impl BenchScene {
    /// Renders `opts.n_cameras` views of `scene`; every third view, starting
    /// from the third, is held out, mirroring the dataset split rule. The
    /// near/far split defaults to the median held-out depth.
    pub fn render(scene: SyntheticScene, opts: &SynthOptions, near_far_split: Option<f64>) -> Result<Self> {
        let cams = synthetic_cameras(&scene, opts)?;
        let rendered: Vec<_> = cams
            .par_iter()
            .map(|c| oracle_render_with_depth(&scene, c, opts.oracle_samples))
            .collect();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, (cam, (image, depth))) in cams.into_iter().zip(rendered).enumerate() {
            let view = TrainingView {
                camera: cam,
                image: image.quantized(),
            };
            match i % 3 {
                0 => train.push(view),
                2 => test.push(BenchView { view, depth }),
                _ => {}
            }
        }
        if test.is_empty() {
            return Err(Error::Config("bench scene needs at least 3 cameras".into()));
        }
        let split = near_far_split.unwrap_or_else(|| {
            let mut d: Vec<f64> = test
                .iter()
                .flat_map(|v| v.depth.iter().copied())
                .filter(|d| d.is_finite())
                .collect();
            d.sort_by(f64::total_cmp);
            d.get(d.len() / 2).copied().unwrap_or(f64::INFINITY)
        });
        Ok(Self {
            scene,
            train: TrainingData::new(train)?,
            test,
            near_far_split: split,
        })
    }
}

/// Test-view quality of a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub psnr: f64,
    pub near_psnr: f64,
    pub far_psnr: f64,
}

/// PSNR over all held-out pixels and over the near and far depth bands.
pub fn measure_quality(field: &RadianceField<f32>, scene: &BenchScene) -> Result<Quality> {
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for v in &scene.test {
        let img = render_equirect(field, &v.view.camera, field.config().n_samples)?;
        for (i, d) in v.depth.iter().enumerate() {
            let mut se = 0.0;
            for k in 0..3 {
                let e = img.data[3 * i + k] as f64 - v.view.image.data[3 * i + k] as f64;
                se += e * e;
            }
            let band = if *d < scene.near_far_split { 1 } else { 2 };
            for b in [0, band] {
                sums[b] += se;
                counts[b] += 3;
            }
        }
    }
    let p = |b: usize| {
        if counts[b] == 0 {
            f64::NAN
        } else {
            psnr_from_mse(sums[b] / counts[b] as f64)
        }
    };
    Ok(Quality {
        psnr: p(0),
        near_psnr: p(1),
        far_psnr: p(2),
    })
}

/// One row of the benchmark matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub id: String,
    pub scene: SceneConfig,
    pub train: TrainConfig,
    /// Held-out PSNR is measured every this many steps (untimed).
    pub eval_every: usize,
}

/// One CSV row. Timing columns are `rays_per_sec`, `steps_per_sec` and
/// `secs_to_psnr30`; the rest is reproducible in strict mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub config_id: String,
    pub warp: String,
    pub rank_sigma: usize,
    pub rank_c: usize,
    pub resolution: String,
    pub rays_per_sec: f64,
    pub steps_per_sec: f64,
    /// Training seconds until held-out PSNR first reached 30 dB; empty if never.
    pub secs_to_psnr30: Option<f64>,
    pub param_bytes: usize,
    pub near_psnr: f64,
    pub far_psnr: f64,
}

/// Scalar parameter count implied by a scene config.
pub fn param_count(cfg: &SceneConfig) -> usize {
    let [a, b, c] = cfg.resolution;
    let per_rank = (a + b + c) + (b * c + a * c + a * b);
    let enc = crate::encode::FeatureEncoder::<f32>::new(&cfg.encoding, cfg.features);
    let mut widths = vec![enc.output_len()];
    widths.extend(&cfg.hidden);
    widths.push(3);
    let decoder: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    per_rank * (cfg.rank_density + cfg.rank_appearance) + 3 * cfg.rank_appearance * cfg.features + decoder
}

/// Parameter memory in bytes for 32-bit storage.
pub fn param_bytes(cfg: &SceneConfig) -> usize {
    4 * param_count(cfg)
}

fn warp_label(cfg: &SceneConfig) -> String {
    match cfg.voxelization {
        Voxelization::Cubic => "cubic".into(),
        Voxelization::Spherical => match cfg.warp {
            Warp::Log => "log".into(),
            Warp::Literal => "literal".into(),
        },
    }
}

/// Trains one configuration and measures it. Also returns the trained field.
pub fn bench_one(cfg: &BenchConfig, scene: &BenchScene) -> Result<(BenchResult, RadianceField<f32>)> {
    let mut sc = cfg.scene.clone();
    sc.set_bounds(&scene.scene.bounds);
    let field = RadianceField::<f32>::init(sc.clone(), cfg.train.seed)?;
    let mut trainer = Trainer::new(field.clone(), scene.train.clone(), cfg.train.clone())?;
    // Warmup on a throwaway trainer so the measured run stays seed-exact.
    {
        let mut warm = Trainer::new(field, scene.train.clone(), cfg.train.clone())?;
        warm.step()?;
    }
    let mut secs = 0.0;
    let mut rays = 0usize;
    let mut secs_to_psnr30 = None;
    for s in 0..cfg.train.steps {
        let t0 = Instant::now();
        let st = trainer.step()?;
        secs += t0.elapsed().as_secs_f64();
        rays += st.rays;
        let done = s + 1;
        if secs_to_psnr30.is_none() && cfg.eval_every > 0 && done % cfg.eval_every == 0 {
            if measure_quality(trainer.field(), scene)?.psnr >= 30.0 {
                secs_to_psnr30 = Some(secs);
            }
        }
    }
    let field = trainer.into_field();
    let q = measure_quality(&field, scene)?;
    let [a, b, c] = sc.resolution;
    let result = BenchResult {
        config_id: cfg.id.clone(),
        warp: warp_label(&sc),
        rank_sigma: sc.rank_density,
        rank_c: sc.rank_appearance,
        resolution: format!("{a}x{b}x{c}"),
        rays_per_sec: if secs > 0.0 { rays as f64 / secs } else { 0.0 },
        steps_per_sec: if secs > 0.0 { cfg.train.steps as f64 / secs } else { 0.0 },
        secs_to_psnr30,
        param_bytes: 4 * field.params.len(),
        near_psnr: q.near_psnr,
        far_psnr: q.far_psnr,
    };
    Ok((result, field))
}

/// Outcome of one benchmark row: a result or the error that stopped it.
pub type BenchOutcome = std::result::Result<BenchResult, (String, String)>;

/// Runs every configuration in id order, continuing past failures, and
/// writes the successful rows to `csv_path` when given.
pub fn run_bench(configs: &[BenchConfig], scene: &BenchScene, csv_path: Option<&Path>) -> Result<Vec<BenchOutcome>> {
    let mut sorted: Vec<&BenchConfig> = configs.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let outcomes: Vec<BenchOutcome> = sorted
        .into_iter()
        .map(|c| {
            bench_one(c, scene)
                .map(|(r, _)| r)
                .map_err(|e| (c.id.clone(), e.to_string()))
        })
        .collect();
    if let Some(path) = csv_path {
        write_csv(outcomes.iter().filter_map(|o| o.as_ref().ok()), path)?;
    }
    Ok(outcomes)
}

pub fn write_csv<'a>(rows: impl IntoIterator<Item = &'a BenchResult>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Spherical-versus-cubic comparison at equal training budgets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelizationReport {
    pub spherical: BenchResult,
    pub cubic: BenchResult,
    pub near_far_split: f64,
    /// `spherical − cubic` near-band PSNR.
    pub near_delta: f64,
    /// `spherical − cubic` far-band PSNR.
    pub far_delta: f64,
    /// Published full-scale indoor PSNR for each grid type, for manual comparison.
    pub reference_psnr_spherical: f64,
    pub reference_psnr_cubic: f64,
}

impl VoxelizationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Cubic counterpart of a spherical config: an `n³` grid whose matrix
/// storage matches the spherical grid's as closely as possible.
pub fn cubic_counterpart(cfg: &SceneConfig) -> SceneConfig {
    let [a, b, c] = cfg.resolution;
    let cells = (b * c + a * c + a * b) as f64 / 3.0;
    let n = cells.sqrt().round().max(2.0) as usize;
    SceneConfig {
        voxelization: Voxelization::Cubic,
        resolution: [n; 3],
        ..cfg.clone()
    }
}

/// Trains the spherical log-warped grid and its cubic counterpart with
/// identical budgets and seeds, and reports near/far PSNR for both.
pub fn compare_voxelizations(
    scene: &BenchScene,
    spherical: &SceneConfig,
    train: &TrainConfig,
    eval_every: usize,
) -> Result<VoxelizationReport> {
    let sph = BenchConfig {
        id: "spherical".into(),
        scene: spherical.clone(),
        train: train.clone(),
        eval_every,
    };
    let cub = BenchConfig {
        id: "cubic".into(),
        scene: cubic_counterpart(spherical),
        train: train.clone(),
        eval_every,
    };
    let (s, _) = bench_one(&sph, scene)?;
    let (c, _) = bench_one(&cub, scene)?;
    Ok(VoxelizationReport {
        near_delta: s.near_psnr - c.near_psnr,
        far_delta: s.far_psnr - c.far_psnr,
        spherical: s,
        cubic: c,
        near_far_split: scene.near_far_split,
        reference_psnr_spherical: 23.38,
        reference_psnr_cubic: 22.33,
    })
}

/// Dense trilinear baseline with the same boundary rules as the factored grid.
pub struct DenseGrid {
    pub resolution: [usize; 3],
    pub wrap_last: bool,
    pub data: Vec<f32>,
}

impl DenseGrid {
    pub fn from_factored(t: &FactoredTensor3<f32>) -> Self {
        Self {
            resolution: t.resolution(),
            wrap_last: t.wraps_last_axis(),
            data: t.densify(),
        }
    }

    #[inline]
    pub fn interp(&self, q: &GridQuery) -> f32 {
        let c = q.coords();
        let mut idx = [[0usize; 2]; 3];
        let mut w = [[0f32; 2]; 3];
        for a in 0..3 {
            let n = self.resolution[a];
            let (i0, i1, f) = if a == 2 && self.wrap_last {
                let x = c[a].rem_euclid(1.0) * n as f64;
                let i0 = (x.floor() as usize).min(n - 1);
                (i0, (i0 + 1) % n, x - x.floor())
            } else {
                let x = c[a].clamp(0.0, 1.0) * (n - 1) as f64;
                let i0 = (x.floor() as usize).min(n - 2);
                (i0, i0 + 1, x - i0 as f64)
            };
            idx[a] = [i0, i1];
            w[a] = [1.0 - f as f32, f as f32];
        }
        let [_, r1, r2] = self.resolution;
        let mut out = 0.0;
        for (i, wi) in idx[0].iter().zip(w[0]) {
            for (j, wj) in idx[1].iter().zip(w[1]) {
                for (k, wk) in idx[2].iter().zip(w[2]) {
                    out += wi * wj * wk * self.data[(i * r1 + j) * r2 + k];
                }
            }
        }
        out
    }
}

/// Density-marching throughput of factored versus dense interpolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpBench {
    pub resolution: [usize; 3],
    pub rank: usize,
    pub factored_rays_per_sec: f64,
    pub dense_rays_per_sec: f64,
    pub factored_bytes: usize,
    pub dense_bytes: usize,
}

/// Marches `n_rays` random rays from near the center with `n_samples`
/// density lookups each, once through the factored grid and once through
/// its densified copy. Sample placement is shared and untimed.
pub fn interp_microbench(
    resolution: [usize; 3],
    rank: usize,
    n_rays: usize,
    n_samples: usize,
    seed: u64,
) -> Result<InterpBench> {
    let cfg = SceneConfig {
        resolution,
        rank_density: rank,
        ..SceneConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factored = FactoredTensor3::<f32>::zeros(resolution, rank, true);
    for s in factored.slices_mut() {
        for v in s {
            *v = rng.random_range(-0.1..0.1);
        }
    }
    let dense = DenseGrid::from_factored(&factored);
    let layout = GridLayout {
        bounds: cfg.bounds(),
        voxelization: cfg.voxelization,
        warp: cfg.warp,
    };
    let mut batch = RaySampleBatch::default();
    let mut queries = Vec::with_capacity(n_rays * n_samples);
    for _ in 0..n_rays {
        let o = Vec3::new(
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
        );
        let d = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let Ok(ray) = Ray::new(o, d) else { continue };
        sample_ray::<ChaCha8Rng>(&ray, &layout, n_samples, None, &mut batch)?;
        queries.extend(batch.samples.iter().map(|s| s.query));
    }
    let rays = (queries.len() / n_samples.max(1)).max(1) as f64;
    let mut vv = vec![0f32; 3 * rank];
    let mut mv = vec![0f32; 3 * rank];
    let t0 = Instant::now();
    let mut acc_f = 0.0f32;
    for q in &queries {
        let st = factored.stencil(q);
        factored.factor_values(&st, &mut vv, &mut mv);
        acc_f += vv.iter().zip(&mv).map(|(a, b)| a * b).sum::<f32>();
    }
    let tf = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let mut acc_d = 0.0f32;
    for q in &queries {
        acc_d += dense.interp(q);
    }
    let td = t0.elapsed().as_secs_f64();
    if (acc_f - acc_d).abs() > 1e-2 * (1.0 + acc_f.abs()) {
        return Err(Error::Input(format!(
            "factored and dense sums disagree: {acc_f} vs {acc_d}"
        )));
    }
    Ok(InterpBench {
        resolution,
        rank,
        factored_rays_per_sec: rays / tf.max(1e-12),
        dense_rays_per_sec: rays / td.max(1e-12),
        factored_bytes: 4 * factored.param_count(),
        dense_bytes: 4 * dense.data.len(),
    })
}
