//! Loss, optimizer, learning-rate schedule and the training loop.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::TrainConfig;
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::field::{FieldParams, RadianceField};
use crate::geom::EquirectCamera;
use crate::image::Image;
use crate::real::Real;
use crate::render::RayWorkspace;

/// Loss value split into its terms.
#[derive(Clone, Debug, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    /// Mean over rays of the squared error summed over channels.
    pub photometric: f64,
    /// Mean absolute density factor entry.
    pub l1: f64,
    /// `∂ photometric / ∂ pred` per ray.
    pub grad_pred: Vec<[f64; 3]>,
}

/// Mean absolute value over all density factor entries.
pub fn density_l1<T: Real>(params: &FieldParams<T>) -> f64 {
    let n = params.density.param_count();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = params
        .density
        .slices()
        .flat_map(|s| s.iter())
        .map(|v| v.as_f64().abs())
        .sum();
    sum / n as f64
}

/// Adds the gradient of `weight · density_l1` to `grads`.
pub fn add_l1_grad<T: Real>(params: &FieldParams<T>, weight: f64, grads: &mut FieldParams<T>) {
    let n = params.density.param_count();
    if n == 0 || weight == 0.0 {
        return;
    }
    let g = T::cast(weight / n as f64);
    for (p, gs) in params.density.slices().zip(grads.density.slices_mut()) {
        for (&v, gv) in p.iter().zip(gs) {
            if v > T::zero() {
                *gv += g;
            } else if v < T::zero() {
                *gv -= g;
            }
        }
    }
}

/// `L = mean_r ‖pred − truth‖² + ω · mean |density factors|`.
pub fn loss<T: Real>(
    pred: &[[f64; 3]],
    truth: &[[f64; 3]],
    params: &FieldParams<T>,
    l1_weight: f64,
) -> Result<LossTerms> {
    if pred.len() != truth.len() {
        return Err(Error::Input(format!(
            "loss batch mismatch: {} predictions, {} targets",
            pred.len(),
            truth.len()
        )));
    }
    let b = pred.len().max(1) as f64;
    let mut photometric = 0.0;
    let mut grad_pred = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(truth) {
        let mut g = [0.0; 3];
        for k in 0..3 {
            let d = p[k] - t[k];
            photometric += d * d;
            g[k] = 2.0 * d / b;
        }
        grad_pred.push(g);
    }
    photometric /= b;
    let l1 = density_l1(params);
    Ok(LossTerms {
        total: photometric + l1_weight * l1,
        photometric,
        l1,
        grad_pred,
    })
}

/// `lr_start · (lr_end/lr_start)^(step/steps)`, exact at both ends.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    if step == 0 || cfg.steps == 0 {
        return cfg.lr_start;
    }
    if step >= cfg.steps {
        return cfg.lr_end;
    }
    let f = step as f64 / cfg.steps as f64;
    cfg.lr_start * (cfg.lr_end / cfg.lr_start).powf(f)
}

/// First and second moments for every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub m: FieldParams<T>,
    pub v: FieldParams<T>,
    /// Completed updates.
    pub step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &FieldParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One decoupled-decay Adam update of a parameter array; `step` is the
/// 1-based update index used for bias correction.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update<T: Real>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    lr: f64,
    cfg: &TrainConfig,
) {
    let [b1, b2] = cfg.betas;
    let bc1 = 1.0 - b1.powi(step as i32);
    let bc2 = 1.0 - b2.powi(step as i32);
    let (tb1, tb2) = (T::cast(b1), T::cast(b2));
    let (ob1, ob2) = (T::cast(1.0 - b1), T::cast(1.0 - b2));
    let (ibc1, ibc2) = (T::cast(1.0 / bc1), T::cast(1.0 / bc2));
    let (tlr, eps, wd) = (T::cast(lr), T::cast(cfg.eps), T::cast(cfg.weight_decay));
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = tb1 * m[i] + ob1 * g;
        v[i] = tb2 * v[i] + ob2 * g * g;
        let mh = m[i] * ibc1;
        let vh = v[i] * ibc2;
        params[i] -= tlr * (mh / (vh.sqrt() + eps) + wd * params[i]);
    }
}

/// Applies [`adamw_update`] to every parameter array. Returns `false` and
/// leaves everything untouched when a gradient is non-finite.
pub fn adamw_step<T: Real>(
    params: &mut FieldParams<T>,
    grads: &FieldParams<T>,
    state: &mut OptimizerState<T>,
    lr: f64,
    cfg: &TrainConfig,
) -> bool {
    if !grads.is_finite() {
        return false;
    }
    state.step += 1;
    let step = state.step;
    let mut p = params.slices_mut();
    let g = grads.slices();
    let mut m = state.m.slices_mut();
    let mut v = state.v.slices_mut();
    p.par_iter_mut()
        .zip(g.par_iter())
        .zip(m.par_iter_mut())
        .zip(v.par_iter_mut())
        .for_each(|(((p, g), m), v)| {
            const CHUNK: usize = 1 << 14;
            p.par_chunks_mut(CHUNK)
                .zip(g.par_chunks(CHUNK))
                .zip(m.par_chunks_mut(CHUNK))
                .zip(v.par_chunks_mut(CHUNK))
                .for_each(|(((p, g), m), v)| adamw_update(p, g, m, v, step, lr, cfg));
        });
    true
}

/// One training panorama.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingView {
    pub camera: EquirectCamera,
    pub image: Image,
}

/// A pixel chosen for a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelPick {
    pub view: usize,
    pub u: usize,
    pub v: usize,
}

/// Training views with pixel-uniform sampling across all of them.
#[derive(Clone, Debug)]
pub struct TrainingData {
    views: Vec<TrainingView>,
    offsets: Vec<usize>,
}

impl TrainingData {
    pub fn new(views: Vec<TrainingView>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Config("training data has no images".into()));
        }
        let mut offsets = Vec::with_capacity(views.len() + 1);
        offsets.push(0);
        for (i, v) in views.iter().enumerate() {
            if v.image.width != v.camera.width || v.image.height != v.camera.height {
                return Err(Error::Config(format!(
                    "training view {i}: image is {}x{} but the camera is {}x{}",
                    v.image.width, v.image.height, v.camera.width, v.camera.height
                )));
            }
            offsets.push(offsets[i] + v.image.width * v.image.height);
        }
        Ok(Self { views, offsets })
    }

    /// Loads one split of a dataset.
    pub fn from_dataset(ds: &Dataset, split: Split) -> Result<Self> {
        let views = ds
            .load_split(split)?
            .into_iter()
            .map(|(e, image)| TrainingView {
                camera: e.camera,
                image,
            })
            .collect();
        Self::new(views)
    }

    pub fn views(&self) -> &[TrainingView] {
        &self.views
    }

    pub fn pixel_count(&self) -> usize {
        self.offsets[self.views.len()]
    }

    fn locate(&self, global: usize) -> PixelPick {
        let view = self.offsets.partition_point(|&o| o <= global) - 1;
        let local = global - self.offsets[view];
        let w = self.views[view].image.width;
        PixelPick {
            view,
            u: local % w,
            v: local / w,
        }
    }

    /// `n` pixels drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<PixelPick> {
        let total = self.pixel_count();
        (0..n).map(|_| self.locate(rng.random_range(0..total))).collect()
    }

    fn truth(&self, p: &PixelPick) -> [f64; 3] {
        let c = self.views[p.view].image.pixel(p.u, p.v);
        [c[0] as f64, c[1] as f64, c[2] as f64]
    }
}

/// Deterministic per-purpose seed derivation.
fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    x ^= x >> 31;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^ (x >> 29)
}

/// Summary of one optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    /// 1-based index of the completed step.
    pub step: usize,
    pub loss: f64,
    pub photometric: f64,
    pub l1: f64,
    pub lr: f64,
    pub rays: usize,
    pub secs: f64,
    /// The update was skipped because of non-finite gradients.
    pub skipped: bool,
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub loss: f64,
    pub photometric: f64,
    pub l1: f64,
    pub lr: f64,
    pub rays_per_sec: f64,
    pub wallclock_ms: f64,
}

struct Worker {
    ws: RayWorkspace<f32>,
    grads: FieldParams<f32>,
    photometric: f64,
}

/// Owns the field, optimizer state and per-thread gradient buffers.
pub struct Trainer {
    field: RadianceField<f32>,
    state: OptimizerState<f32>,
    cfg: TrainConfig,
    data: TrainingData,
    pool: rayon::ThreadPool,
    workers: Vec<Worker>,
    step: usize,
    skipped: usize,
    /// Stratified-random sample placement; off gives deterministic midpoints.
    pub jitter: bool,
}

impl Trainer {
    pub fn new(field: RadianceField<f32>, data: TrainingData, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
        let workers = (0..pool.current_num_threads())
            .map(|_| Worker {
                ws: RayWorkspace::new(&field),
                grads: field.params.zeros_like(),
                photometric: 0.0,
            })
            .collect();
        Ok(Self {
            state: OptimizerState::new(&field.params),
            field,
            cfg,
            data,
            pool,
            workers,
            step: 0,
            skipped: 0,
            jitter: true,
        })
    }

    pub fn field(&self) -> &RadianceField<f32> {
        &self.field
    }

    pub fn into_field(self) -> RadianceField<f32> {
        self.field
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn data(&self) -> &TrainingData {
        &self.data
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn optimizer(&self) -> &OptimizerState<f32> {
        &self.state
    }

    /// Pixels of the batch for `step`, a pure function of seed and step.
    pub fn batch_for(&self, step: usize) -> Vec<PixelPick> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.cfg.seed, step as u64, u64::MAX));
        self.data.sample(self.cfg.batch_rays, &mut rng)
    }

    /// Rendering loss of a batch with deterministic sample placement.
    pub fn batch_loss(&self, picks: &[PixelPick]) -> Result<f64> {
        let n = self.field.config().n_samples;
        let mut ws = RayWorkspace::new(&self.field);
        let mut pred = Vec::with_capacity(picks.len());
        let mut truth = Vec::with_capacity(picks.len());
        for p in picks {
            let ray = self.data.views[p.view].camera.ray(p.u, p.v);
            pred.push(ws.forward::<ChaCha8Rng>(&self.field, &ray, n, None)?.rgb);
            truth.push(self.data.truth(p));
        }
        Ok(loss(&pred, &truth, &self.field.params, self.cfg.l1_weight)?.total)
    }

    /// Renders `picks`, leaving the summed gradient of the photometric term
    /// in the first worker's buffer. Returns the photometric loss.
    fn gradients(&mut self, picks: &[PixelPick]) -> Result<f64> {
        let n_samples = self.field.config().n_samples;
        let b = picks.len().max(1) as f64;
        let chunk = picks.len().div_ceil(self.workers.len()).max(1);
        let (field, data, seed, step, jitter) = (&self.field, &self.data, self.cfg.seed, self.step, self.jitter);
        let workers = &mut self.workers;
        self.pool.install(|| {
            workers
                .par_iter_mut()
                .enumerate()
                .try_for_each(|(wi, w)| -> Result<()> {
                    w.grads.fill_zero();
                    w.photometric = 0.0;
                    let start = (wi * chunk).min(picks.len());
                    let end = ((wi + 1) * chunk).min(picks.len());
                    for (j, p) in picks[start..end].iter().enumerate() {
                        let ray = data.views[p.view].camera.ray(p.u, p.v);
                        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, step as u64, (start + j) as u64));
                        let px = w.ws.forward(field, &ray, n_samples, jitter.then_some(&mut rng))?;
                        let t = data.truth(p);
                        let mut g = [0.0; 3];
                        for k in 0..3 {
                            let d = px.rgb[k] - t[k];
                            w.photometric += d * d;
                            g[k] = 2.0 * d / b;
                        }
                        w.ws.backward(field, g, &mut w.grads);
                    }
                    Ok(())
                })
        })?;
        let photometric = self.workers.iter().map(|w| w.photometric).sum::<f64>() / b;
        let (first, rest) = self.workers.split_at_mut(1);
        let total = &mut first[0].grads;
        if self.cfg.strict {
            for w in rest.iter() {
                total.add_assign(&w.grads);
            }
        } else if !rest.is_empty() {
            let others: Vec<Vec<&[f32]>> = rest.iter().map(|w| w.grads.slices()).collect();
            self.pool.install(|| {
                total.slices_mut().into_par_iter().enumerate().for_each(|(si, dst)| {
                    dst.par_chunks_mut(1 << 14).enumerate().for_each(|(ci, d)| {
                        let base = ci << 14;
                        let len = d.len();
                        for o in &others {
                            for (x, &y) in d.iter_mut().zip(&o[si][base..base + len]) {
                                *x += y;
                            }
                        }
                    });
                });
            });
        }
        Ok(photometric)
    }

    /// Gradient of the full loss on `picks` at the current parameters.
    pub fn loss_gradient(&mut self, picks: &[PixelPick]) -> Result<(f64, FieldParams<f32>)> {
        let photometric = self.gradients(picks)?;
        let mut g = self.workers[0].grads.clone();
        add_l1_grad(&self.field.params, self.cfg.l1_weight, &mut g);
        Ok((photometric + self.cfg.l1_weight * density_l1(&self.field.params), g))
    }

    /// One optimizer step on the seeded batch for the current step.
    pub fn step(&mut self) -> Result<StepStats> {
        let picks = self.batch_for(self.step);
        self.step_on(&picks)
    }

    /// One optimizer step on a given batch.
    pub fn step_on(&mut self, picks: &[PixelPick]) -> Result<StepStats> {
        let t0 = Instant::now();
        let photometric = self.gradients(picks)?;
        let l1 = density_l1(&self.field.params);
        let total = photometric + self.cfg.l1_weight * l1;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step + 1 });
        }
        let lr = lr_at(self.step, &self.cfg);
        let grads = &mut self.workers[0].grads;
        add_l1_grad(&self.field.params, self.cfg.l1_weight, grads);
        let applied = self
            .pool
            .install(|| adamw_step(&mut self.field.params, grads, &mut self.state, lr, &self.cfg));
        if !applied {
            self.skipped += 1;
            eprintln!(
                "warning: step {}: non-finite gradient, update skipped ({} of {} allowed)",
                self.step + 1,
                self.skipped,
                self.cfg.max_skipped_steps
            );
            if self.skipped > self.cfg.max_skipped_steps {
                return Err(Error::GradientBudget {
                    skipped: self.skipped,
                    budget: self.cfg.max_skipped_steps,
                });
            }
        }
        self.step += 1;
        Ok(StepStats {
            step: self.step,
            loss: total,
            photometric,
            l1,
            lr,
            rays: picks.len(),
            secs: t0.elapsed().as_secs_f64(),
            skipped: !applied,
        })
    }
}

/// Output locations for [`train`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainOutputs {
    /// Final checkpoint; also rewritten every `checkpoint_every` steps and
    /// holds the last good parameters after an abort.
    pub checkpoint: Option<PathBuf>,
    /// Newline-delimited JSON metrics.
    pub metrics: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub field: RadianceField<f32>,
    pub records: Vec<MetricsRecord>,
    pub final_loss: Option<f64>,
    pub wallclock_secs: f64,
}

struct MetricsLog {
    out: Option<BufWriter<File>>,
    path: PathBuf,
}

impl MetricsLog {
    fn create(path: Option<&Path>) -> Result<Self> {
        let out = match path {
            Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
            None => None,
        };
        Ok(Self {
            out,
            path: path.map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        if let Some(out) = &mut self.out {
            let line = serde_json::to_string(rec).expect("record serializes");
            writeln!(out, "{line}")
                .and_then(|_| out.flush())
                .map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }
}

/// Runs `cfg.steps` optimizer steps from `field`, emitting a metrics record
/// every `log_every` steps. A non-finite loss aborts with the last good
/// parameters saved to the checkpoint path.
pub fn train(
    field: RadianceField<f32>,
    data: TrainingData,
    cfg: &TrainConfig,
    outputs: &TrainOutputs,
    mut on_record: impl FnMut(&MetricsRecord),
) -> Result<TrainOutcome> {
    let start = Instant::now();
    let mut log = MetricsLog::create(outputs.metrics.as_deref())?;
    let mut trainer = Trainer::new(field, data, cfg.clone())?;
    let mut records = Vec::new();
    let mut final_loss = None;
    let (mut rays, mut secs) = (0usize, 0.0f64);
    for _ in 0..cfg.steps {
        let stats = match trainer.step() {
            Ok(s) => s,
            Err(e) => {
                if let Some(p) = &outputs.checkpoint {
                    if trainer.field().params.is_finite() {
                        checkpoint::save(trainer.field(), p)?;
                    }
                }
                return Err(e);
            }
        };
        rays += stats.rays;
        secs += stats.secs;
        final_loss = Some(stats.loss);
        if stats.step % cfg.log_every == 0 {
            let rec = MetricsRecord {
                step: stats.step,
                loss: stats.loss,
                photometric: stats.photometric,
                l1: stats.l1,
                lr: stats.lr,
                rays_per_sec: if secs > 0.0 { rays as f64 / secs } else { 0.0 },
                wallclock_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            log.write(&rec)?;
            on_record(&rec);
            records.push(rec);
            rays = 0;
            secs = 0.0;
        }
        if let Some(p) = &outputs.checkpoint {
            if cfg.checkpoint_every > 0 && stats.step % cfg.checkpoint_every == 0 {
                checkpoint::save(trainer.field(), p)?;
            }
        }
    }
    let field = trainer.into_field();
    if let Some(p) = &outputs.checkpoint {
        checkpoint::save(&field, p)?;
    }
    Ok(TrainOutcome {
        field,
        records,
        final_loss,
        wallclock_secs: start.elapsed().as_secs_f64(),
    })
}
