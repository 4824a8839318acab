//! Axis-aligned positional encoding.
//!
//! Every input coordinate `v_k ∈ [0, 1)` is expanded independently into
//! `(cos 2πf_j v_k, sin 2πf_j v_k)` pairs over the ladder
//! `f_j = σ^(j/m)`, `j = 0..m`. Output slots for coordinate `k` occupy
//! `[2mk, 2m(k+1))`, cos before sin for each frequency. The whole vector is
//! scaled by `1/sqrt(m·d)` so it has unit norm.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::config::EncodingConfig;
use crate::decoder::sigmoid;
use crate::geom::{direction_to_unit_square, Vec3};
use crate::real::Real;

static CLAMPED_INPUTS: AtomicU64 = AtomicU64::new(0);

/// Number of encoder inputs clamped into `[0, 1)` since process start.
pub fn clamped_input_count() -> u64 {
    CLAMPED_INPUTS.load(Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub m: usize,
    pub sigma: f64,
}

impl EncodingSpec {
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.sigma.powf(j as f64 / self.m as f64)).collect()
    }

    pub fn output_len(&self, d: usize) -> usize {
        2 * self.m * d
    }
}

#[inline]
fn clamp_unit<T: Real>(v: T) -> T {
    let top = T::one() - T::epsilon() / T::cast(2.0);
    if v >= T::zero() && v <= top {
        return v;
    }
    CLAMPED_INPUTS.fetch_add(1, Ordering::Relaxed);
    if v > top {
        top
    } else {
        T::zero()
    }
}

/// Encodes every entry of `v` into `out` (length `2·m·v.len()`), using
/// angular frequencies `omegas = 2π f_j` and the given norm scale.
#[inline]
fn encode_axes<T: Real>(v: &[T], omegas: &[T], scale: T, out: &mut [T]) {
    let m = omegas.len();
    for (k, &vk) in v.iter().enumerate() {
        let slot = &mut out[2 * m * k..2 * m * (k + 1)];
        for (j, &w) in omegas.iter().enumerate() {
            let (s, c) = (w * vk).sin_cos();
            slot[2 * j] = scale * c;
            slot[2 * j + 1] = scale * s;
        }
    }
}

pub fn axis_aligned_encode(v: &[f64], spec: &EncodingSpec) -> Vec<f64> {
    let omegas: Vec<f64> = spec
        .frequencies()
        .iter()
        .map(|f| 2.0 * std::f64::consts::PI * f)
        .collect();
    let clamped: Vec<f64> = v.iter().map(|&x| clamp_unit(x)).collect();
    let scale = 1.0 / ((spec.m * v.len()) as f64).sqrt();
    let mut out = vec![0.0; spec.output_len(v.len())];
    encode_axes(&clamped, &omegas, scale, &mut out);
    out
}

/// Builds decoder inputs from appearance features and view directions.
///
/// Layout: `[features (F) | APE(squash(features)) (2mF) | APE(view) (4m)]`,
/// the last block present only when view encoding is enabled. The view
/// direction is parameterized as `(θ/π, (φ + π)/2π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureEncoder<T> {
    features: usize,
    omegas: Vec<T>,
    encode_viewdir: bool,
    squash: bool,
    feature_scale: T,
    view_scale: T,
}

impl<T: Real> FeatureEncoder<T> {
    pub fn new(cfg: &EncodingConfig, features: usize) -> Self {
        let spec = EncodingSpec {
            m: cfg.m,
            sigma: cfg.sigma,
        };
        Self {
            features,
            omegas: spec
                .frequencies()
                .iter()
                .map(|f| T::cast(2.0 * std::f64::consts::PI * f))
                .collect(),
            encode_viewdir: cfg.encode_viewdir,
            squash: cfg.squash,
            feature_scale: T::cast(1.0 / ((cfg.m * features) as f64).sqrt()),
            view_scale: T::cast(1.0 / ((cfg.m * 2) as f64).sqrt()),
        }
    }

    pub fn output_len(&self) -> usize {
        let m = self.omegas.len();
        self.features + 2 * m * self.features + if self.encode_viewdir { 4 * m } else { 0 }
    }

    /// Writes the decoder input for one sample. `view_uv` is the view
    /// direction in unit-square form.
    pub fn encode(&self, appearance: &[T], view_uv: [T; 2], out: &mut [T]) {
        let f = self.features;
        let m = self.omegas.len();
        out[..f].copy_from_slice(appearance);
        let (block, rest) = out[f..].split_at_mut(2 * m * f);
        let mut squashed = [T::zero(); 64];
        let mut heap;
        let sq: &mut [T] = if f <= squashed.len() {
            &mut squashed[..f]
        } else {
            heap = vec![T::zero(); f];
            &mut heap
        };
        for (s, &a) in sq.iter_mut().zip(appearance) {
            *s = if self.squash { sigmoid(a) } else { clamp_unit(a) };
        }
        encode_axes(sq, &self.omegas, self.feature_scale, block);
        if self.encode_viewdir {
            let uv = [clamp_unit(view_uv[0]), clamp_unit(view_uv[1])];
            encode_axes(&uv, &self.omegas, self.view_scale, &mut rest[..4 * m]);
        }
    }

    /// Maps the gradient w.r.t. the encoded vector back to the appearance
    /// features. `encoded` is the forward output for the same sample.
    pub fn backward(&self, appearance: &[T], encoded: &[T], grad_out: &[T], grad_app: &mut [T]) {
        let f = self.features;
        let m = self.omegas.len();
        for k in 0..f {
            let base = f + 2 * m * k;
            let mut gv = T::zero();
            for (j, &w) in self.omegas.iter().enumerate() {
                let c = encoded[base + 2 * j];
                let s = encoded[base + 2 * j + 1];
                gv += w * (grad_out[base + 2 * j + 1] * c - grad_out[base + 2 * j] * s);
            }
            let a = appearance[k];
            let dv = if self.squash {
                let v = sigmoid(a);
                v * (T::one() - v)
            } else if a >= T::zero() && a < T::one() {
                T::one()
            } else {
                T::zero()
            };
            grad_app[k] = grad_out[k] + gv * dv;
        }
    }
}

/// Convenience form of [`FeatureEncoder::encode`] for a single sample.
pub fn encode_features(appearance: &[f64], view_dir: &Vec3, cfg: &EncodingConfig) -> Vec<f64> {
    let enc = FeatureEncoder::<f64>::new(cfg, appearance.len());
    let mut out = vec![0.0; enc.output_len()];
    enc.encode(appearance, direction_to_unit_square(view_dir), &mut out);
    out
}
