//! Volume rendering: compositing, its exact backward pass, and per-ray,
//! equirectangular and perspective rendering of a [`RadianceField`].

use rand::Rng;
use rayon::prelude::*;

use crate::decoder::{density_activation, density_activation_grad};
use crate::error::{Error, Result};
use crate::field::{FieldParams, InterpScratch, RadianceField, Stencil};
use crate::geom::{direction_to_unit_square, sample_ray, EquirectCamera, PinholeCamera, Ray, RaySampleBatch};
use crate::image::Image;
use crate::real::Real;

/// Optical depth `σδ` is clamped here before exponentiation.
pub const MAX_OPTICAL_DEPTH: f64 = 80.0;

/// Composited color of one ray.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RenderedPixel {
    pub rgb: [f64; 3],
    /// `Σ w_i`.
    pub opacity: f64,
    /// Per-sample compositing weights.
    pub weights: Vec<f64>,
}

/// Gradients of `upstream · rgb` from [`composite_backward`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompositeGrads {
    pub sigmas: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
}

fn check_composite_inputs(sigmas: &[f64], deltas: &[f64], colors: &[[f64; 3]]) -> Result<()> {
    if sigmas.len() != deltas.len() || sigmas.len() != colors.len() {
        return Err(Error::Input(format!(
            "composite length mismatch: {} sigmas, {} deltas, {} colors",
            sigmas.len(),
            deltas.len(),
            colors.len()
        )));
    }
    if let Some(i) = sigmas.iter().position(|s| !(*s >= 0.0)) {
        return Err(Error::Input(format!("sigma[{i}] = {} is negative", sigmas[i])));
    }
    if let Some(i) = deltas.iter().position(|d| !(*d >= 0.0)) {
        return Err(Error::Input(format!("delta[{i}] = {} is negative", deltas[i])));
    }
    Ok(())
}

/// Fills `trans` (length `n + 1`, `trans[i] = T_i`) and `weights` from
/// optical depths.
fn transmittance_and_weights(optical: &[f64], trans: &mut Vec<f64>, weights: &mut Vec<f64>) {
    trans.clear();
    weights.clear();
    let mut acc = 0.0f64;
    trans.push(1.0);
    for &a in optical {
        let t = (-acc).exp();
        weights.push(-t * (-a).exp_m1());
        acc += a;
        trans.push((-acc).exp());
    }
}

/// Front-to-back alpha compositing over a background color.
pub fn composite(sigmas: &[f64], deltas: &[f64], colors: &[[f64; 3]], background: [f64; 3]) -> Result<RenderedPixel> {
    check_composite_inputs(sigmas, deltas, colors)?;
    let optical: Vec<f64> = sigmas
        .iter()
        .zip(deltas)
        .map(|(s, d)| (s * d).min(MAX_OPTICAL_DEPTH))
        .collect();
    let (mut trans, mut weights) = (Vec::new(), Vec::new());
    transmittance_and_weights(&optical, &mut trans, &mut weights);
    let t_final = trans[optical.len()];
    let mut rgb = [0.0; 3];
    for (w, c) in weights.iter().zip(colors) {
        for k in 0..3 {
            rgb[k] += w * c[k];
        }
    }
    for k in 0..3 {
        rgb[k] += t_final * background[k];
    }
    Ok(RenderedPixel {
        rgb,
        opacity: weights.iter().sum(),
        weights,
    })
}

/// Gradient of `upstream · rgb` w.r.t. every `σ_i` and `c_i`, including the
/// coupling of `w_j` to `σ_i` through transmittance for `i < j`.
pub fn composite_backward(
    sigmas: &[f64],
    deltas: &[f64],
    colors: &[[f64; 3]],
    background: [f64; 3],
    upstream: [f64; 3],
) -> Result<CompositeGrads> {
    check_composite_inputs(sigmas, deltas, colors)?;
    let n = sigmas.len();
    let optical: Vec<f64> = sigmas.iter().zip(deltas).map(|(s, d)| s * d).collect();
    let clamped: Vec<f64> = optical.iter().map(|a| a.min(MAX_OPTICAL_DEPTH)).collect();
    let (mut trans, mut weights) = (Vec::new(), Vec::new());
    transmittance_and_weights(&clamped, &mut trans, &mut weights);
    let mut d_optical = vec![0.0; n];
    optical_gradients(&trans, &weights, colors, background, upstream, &mut d_optical);
    let sig = d_optical
        .iter()
        .zip(&optical)
        .zip(deltas)
        .map(|((g, a), d)| if *a < MAX_OPTICAL_DEPTH { g * d } else { 0.0 })
        .collect();
    let col = weights
        .iter()
        .map(|w| [w * upstream[0], w * upstream[1], w * upstream[2]])
        .collect();
    Ok(CompositeGrads {
        sigmas: sig,
        colors: col,
    })
}

/// `∂(g·rgb)/∂a_i = g·(T_{i+1} c_i − Σ_{j>i} w_j c_j − T_{N+1} bg)`.
fn optical_gradients(
    trans: &[f64],
    weights: &[f64],
    colors: &[[f64; 3]],
    background: [f64; 3],
    g: [f64; 3],
    out: &mut [f64],
) {
    let n = weights.len();
    let gdot = |c: &[f64; 3]| g[0] * c[0] + g[1] * c[1] + g[2] * c[2];
    let mut suffix = trans[n] * gdot(&background);
    for i in (0..n).rev() {
        out[i] = trans[i + 1] * gdot(&colors[i]) - suffix;
        suffix += weights[i] * gdot(&colors[i]);
    }
}

/// Per-ray forward tape and buffers, reused across rays by one worker.
///
/// [`RayWorkspace::forward`] records what [`RayWorkspace::backward`] needs.
/// Geometry and compositing run in `f64`; field evaluation runs in `T`.
#[derive(Clone, Debug)]
pub struct RayWorkspace<T> {
    batch: RaySampleBatch,
    stencils: Vec<Stencil<T>>,
    raw: Vec<f64>,
    optical: Vec<f64>,
    trans: Vec<f64>,
    weights: Vec<f64>,
    colors: Vec<[f64; 3]>,
    density_vals: Vec<T>,
    decoded: Vec<usize>,
    app_vals: Vec<T>,
    features: Vec<T>,
    caches: Vec<T>,
    d_optical: Vec<f64>,
    scratch: InterpScratch<T>,
    mlp_scratch: Vec<T>,
    grad_input: Vec<T>,
    grad_app: Vec<T>,
    fill: Vec<T>,
    rgb: [f64; 3],
}

impl<T: Real> RayWorkspace<T> {
    pub fn new(field: &RadianceField<T>) -> Self {
        Self {
            batch: RaySampleBatch::default(),
            stencils: Vec::new(),
            raw: Vec::new(),
            optical: Vec::new(),
            trans: Vec::new(),
            weights: Vec::new(),
            colors: Vec::new(),
            density_vals: Vec::new(),
            decoded: Vec::new(),
            app_vals: Vec::new(),
            features: Vec::new(),
            caches: Vec::new(),
            d_optical: Vec::new(),
            scratch: InterpScratch::for_field(field),
            mlp_scratch: Vec::new(),
            grad_input: vec![T::zero(); field.params.decoder.input_len()],
            grad_app: vec![T::zero(); field.features()],
            fill: vec![T::zero(); 3 * field.params.density.rank()],
            rgb: [0.0; 3],
        }
    }

    /// Samples used by the last forward pass (after early termination).
    pub fn samples_used(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Renders one ray. With `jitter` the samples are stratified-random,
    /// otherwise deterministic stratum midpoints.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        field: &RadianceField<T>,
        ray: &Ray,
        n_samples: usize,
        jitter: Option<&mut R>,
    ) -> Result<RenderedPixel> {
        let cfg = field.config();
        let bg = cfg.background;
        sample_ray(ray, field.layout(), n_samples, jitter, &mut self.batch)?;
        self.stencils.clear();
        self.raw.clear();
        self.optical.clear();
        self.trans.clear();
        self.weights.clear();
        self.colors.clear();
        self.density_vals.clear();
        self.decoded.clear();
        self.app_vals.clear();
        self.features.clear();
        self.caches.clear();

        let density = &field.params.density;
        let nd = 3 * density.rank();
        let mut acc = 0.0;
        self.trans.push(1.0);
        for s in &self.batch.samples {
            let st = density.stencil(&s.query);
            let raw = field.density_at(&st, &mut self.scratch).as_f64();
            self.density_vals.extend_from_slice(&self.scratch.density_vec[..nd]);
            self.density_vals.extend_from_slice(&self.scratch.density_mat[..nd]);
            let a = density_activation(raw) * s.delta;
            let t = self.trans[self.trans.len() - 1];
            self.stencils.push(st);
            self.raw.push(raw);
            self.optical.push(a);
            self.weights.push(-t * (-a.min(MAX_OPTICAL_DEPTH)).exp_m1());
            acc += a.min(MAX_OPTICAL_DEPTH);
            let t_next = (-acc).exp();
            self.trans.push(t_next);
            if t_next < cfg.early_stop_transmittance {
                break;
            }
        }

        let f = field.features();
        let na = 3 * field.params.appearance.rank();
        let mlp = &field.params.decoder;
        let cache_len = mlp.cache_len();
        let uv = direction_to_unit_square(&self.batch.direction);
        let view = [T::cast(uv[0]), T::cast(uv[1])];
        for (i, &w) in self.weights.iter().enumerate() {
            if !(w > cfg.weight_threshold) {
                self.colors.push([0.0; 3]);
                continue;
            }
            let st = &self.stencils[i];
            let fo = self.features.len();
            self.features.resize(fo + f, T::zero());
            field.appearance_at(st, &mut self.scratch, &mut self.features[fo..]);
            self.app_vals.extend_from_slice(&self.scratch.app_vec[..na]);
            self.app_vals.extend_from_slice(&self.scratch.app_mat[..na]);
            let co = self.caches.len();
            self.caches.resize(co + cache_len, T::zero());
            let cache = &mut self.caches[co..];
            field
                .encoder()
                .encode(&self.features[fo..], view, &mut cache[..mlp.input_len()]);
            let c = mlp.forward_in_place(cache);
            self.colors.push([c[0].as_f64(), c[1].as_f64(), c[2].as_f64()]);
            self.decoded.push(i);
        }

        let t_final = self.trans[self.weights.len()];
        let mut rgb = [0.0; 3];
        for (w, c) in self.weights.iter().zip(&self.colors) {
            for k in 0..3 {
                rgb[k] += w * c[k];
            }
        }
        for k in 0..3 {
            rgb[k] += t_final * bg[k];
        }
        self.rgb = rgb;
        Ok(RenderedPixel {
            rgb,
            opacity: self.weights.iter().sum(),
            weights: Vec::new(),
        })
    }

    /// Accumulates into `grads` the gradient of `upstream · rgb` for the ray
    /// of the last [`RayWorkspace::forward`] call.
    pub fn backward(&mut self, field: &RadianceField<T>, upstream: [f64; 3], grads: &mut FieldParams<T>) {
        let n = self.weights.len();
        if n == 0 || upstream == [0.0; 3] {
            return;
        }
        let bg = field.config().background;
        self.d_optical.clear();
        self.d_optical.resize(n, 0.0);
        optical_gradients(
            &self.trans,
            &self.weights,
            &self.colors,
            bg,
            upstream,
            &mut self.d_optical,
        );

        let density = &field.params.density;
        let nd = 3 * density.rank();
        for i in 0..n {
            let a = self.optical[i];
            if a >= MAX_OPTICAL_DEPTH {
                continue;
            }
            let delta = self.batch.samples[i].delta;
            let g = self.d_optical[i] * delta * density_activation_grad(self.raw[i]);
            if g == 0.0 {
                continue;
            }
            self.fill.fill(T::cast(g));
            let vals = &self.density_vals[2 * nd * i..2 * nd * (i + 1)];
            density.accumulate_grad(
                &self.stencils[i],
                &vals[..nd],
                &vals[nd..],
                &self.fill,
                &mut grads.density,
            );
        }

        let f = field.features();
        let na = 3 * field.params.appearance.rank();
        let mlp = &field.params.decoder;
        let cache_len = mlp.cache_len();
        let input_len = mlp.input_len();
        for (k, &i) in self.decoded.iter().enumerate() {
            let w = self.weights[i];
            let up = [
                T::cast(w * upstream[0]),
                T::cast(w * upstream[1]),
                T::cast(w * upstream[2]),
            ];
            let cache = &self.caches[k * cache_len..(k + 1) * cache_len];
            mlp.backward_in_place(
                cache,
                up,
                &mut grads.decoder,
                Some(&mut self.grad_input),
                &mut self.mlp_scratch,
            );
            let feats = &self.features[k * f..(k + 1) * f];
            field
                .encoder()
                .backward(feats, &cache[..input_len], &self.grad_input, &mut self.grad_app);
            let vals = &self.app_vals[2 * na * k..2 * na * (k + 1)];
            self.scratch.app_vec[..na].copy_from_slice(&vals[..na]);
            self.scratch.app_mat[..na].copy_from_slice(&vals[na..]);
            field.appearance_backward_at(&self.stencils[i], &mut self.scratch, &self.grad_app, grads);
        }
    }
}

/// Renders one ray with a fresh workspace; `jitter` selects training-style
/// stratified sampling.
pub fn render_ray<T: Real, R: Rng + ?Sized>(
    field: &RadianceField<T>,
    ray: &Ray,
    n_samples: usize,
    jitter: Option<&mut R>,
) -> Result<RenderedPixel> {
    let mut ws = RayWorkspace::new(field);
    let mut px = ws.forward(field, ray, n_samples, jitter)?;
    px.weights = ws.weights.clone();
    Ok(px)
}

/// Deterministic render of every pixel produced by `ray_at(u, v)`.
fn render_rays<T: Real>(
    field: &RadianceField<T>,
    width: usize,
    height: usize,
    n_samples: usize,
    ray_at: impl Fn(usize, usize) -> Ray + Sync,
) -> Result<Image> {
    let mut img = Image::new(width, height);
    if width == 0 || height == 0 {
        return Ok(img);
    }
    img.data.par_chunks_mut(3 * width).enumerate().try_for_each_init(
        || RayWorkspace::new(field),
        |ws, (v, row)| -> Result<()> {
            for u in 0..width {
                let px = ws.forward::<rand_chacha::ChaCha8Rng>(field, &ray_at(u, v), n_samples, None)?;
                for k in 0..3 {
                    row[3 * u + k] = px.rgb[k].clamp(0.0, 1.0) as f32;
                }
            }
            Ok(())
        },
    )?;
    Ok(img)
}

/// Full equirectangular image from `cam`, rows in parallel.
pub fn render_equirect<T: Real>(field: &RadianceField<T>, cam: &EquirectCamera, n_samples: usize) -> Result<Image> {
    render_rays(field, cam.width, cam.height, n_samples, |u, v| cam.ray(u, v))
}

/// Pinhole image from `cam`.
pub fn render_perspective<T: Real>(field: &RadianceField<T>, cam: &PinholeCamera, n_samples: usize) -> Result<Image> {
    let k = &cam.intrinsics;
    render_rays(field, k.width, k.height, n_samples, |u, v| cam.ray(u, v))
}
