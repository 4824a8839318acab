//! Configuration types shared by the field, the renderer and the trainer.
//!
//! Everything here is plain data with serde support. The TOML run-config
//! layer in [`crate::cli`] deserializes into these with unknown keys
//! rejected, and checkpoints embed [`SceneConfig`] as JSON.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{SceneBounds, Vec3, Warp};

/// Grid parameterization of the scene volume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Voxelization {
    /// `(ρ, θ, φ)` grid around the scene center, azimuth periodic.
    Spherical,
    /// Cartesian `(x, y, z)` grid over the cube bounding the scene sphere.
    Cubic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingConfig {
    /// Frequencies per encoded coordinate.
    pub m: usize,
    /// Frequency base; frequencies are `sigma^(j/m)`.
    pub sigma: f64,
    /// Append an encoding of the viewing direction to the decoder input.
    pub encode_viewdir: bool,
    /// Map appearance features through a logistic before encoding. When off,
    /// raw features are clamped into `[0, 1)` instead.
    pub squash: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            m: 2,
            sigma: 2.0,
            encode_viewdir: true,
            squash: true,
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("encoding.m must be at least 1".into()));
        }
        if !(self.sigma > 1.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!(
                "encoding.sigma must be a finite value > 1, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Everything needed to rebuild a field's shapes and render it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub center: [f64; 3],
    pub r_max: f64,
    /// Grid nodes per axis: `(R, Θ, Φ)` for spherical grids, `(X, Y, Z)` for cubic.
    pub resolution: [usize; 3],
    pub rank_density: usize,
    pub rank_appearance: usize,
    /// Appearance feature channels fed to the decoder.
    pub features: usize,
    pub voxelization: Voxelization,
    /// Radial warp of the spherical grid; also shapes sample spacing along rays.
    pub warp: Warp,
    pub encoding: EncodingConfig,
    /// Hidden layer widths of the RGB decoder.
    pub hidden: Vec<usize>,
    pub n_samples: usize,
    pub background: [f64; 3],
    /// Factor init standard deviation; `None` means `0.1 / sqrt(rank)`.
    pub init_scale: Option<f64>,
    /// Stop marching once transmittance falls below this.
    pub early_stop_transmittance: f64,
    /// Samples whose compositing weight is at or below this skip the decoder.
    pub weight_threshold: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            center: [0.0; 3],
            r_max: 1.0,
            resolution: [128, 128, 256],
            rank_density: 8,
            rank_appearance: 24,
            features: 27,
            voxelization: Voxelization::Spherical,
            warp: Warp::Log,
            encoding: EncodingConfig::default(),
            hidden: vec![128, 128],
            n_samples: 128,
            background: [0.0; 3],
            init_scale: None,
            early_stop_transmittance: 1e-4,
            weight_threshold: 1e-4,
        }
    }
}

impl SceneConfig {
    /// Desk-scale preset used by the examples and the acceptance suite.
    pub fn tiny() -> Self {
        Self {
            resolution: [64, 64, 128],
            rank_density: 8,
            rank_appearance: 16,
            features: 12,
            hidden: vec![64],
            n_samples: 96,
            ..Self::default()
        }
    }

    pub fn bounds(&self) -> SceneBounds {
        SceneBounds {
            center: Vec3::from(self.center),
            r_max: self.r_max,
        }
    }

    pub fn set_bounds(&mut self, bounds: &SceneBounds) {
        self.center = bounds.center.into();
        self.r_max = bounds.r_max;
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_max > 0.0) || !self.r_max.is_finite() {
            return Err(Error::Config(format!("r_max must be positive, got {}", self.r_max)));
        }
        if self.resolution.iter().any(|&n| n < 2) {
            return Err(Error::Config(format!(
                "every grid resolution must be at least 2, got {:?}",
                self.resolution
            )));
        }
        if self.rank_density == 0 || self.rank_appearance == 0 {
            return Err(Error::Config("ranks must be at least 1".into()));
        }
        if self.features == 0 {
            return Err(Error::Config("features must be at least 1".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.n_samples < 2 {
            return Err(Error::Config("n_samples must be at least 2".into()));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Config("background must lie in [0, 1]".into()));
        }
        if let Some(s) = self.init_scale {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::Config("init_scale must be finite and >= 0".into()));
            }
        }
        if !(0.0..1.0).contains(&self.early_stop_transmittance) {
            return Err(Error::Config("early_stop_transmittance must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.weight_threshold) {
            return Err(Error::Config("weight_threshold must lie in [0, 1)".into()));
        }
        self.encoding.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_rays: usize,
    pub steps: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Weight of the L1 sparsity term on density factors.
    pub l1_weight: f64,
    pub seed: u64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub weight_decay: f64,
    /// Metrics record interval in steps.
    pub log_every: usize,
    /// Periodic checkpoint interval in steps; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
    /// Serialize gradient reduction so runs are bit-reproducible.
    pub strict: bool,
    /// Optimizer steps with non-finite gradients tolerated before aborting.
    pub max_skipped_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_rays: 4096,
            steps: 30_000,
            lr_start: 5e-4,
            lr_end: 5e-5,
            l1_weight: 8e-5,
            seed: 0,
            betas: [0.9, 0.999],
            eps: 1e-8,
            weight_decay: 1e-4,
            log_every: 100,
            checkpoint_every: 0,
            threads: 0,
            strict: false,
            max_skipped_steps: 10,
        }
    }
}

impl TrainConfig {
    /// Desk-scale preset paired with [`SceneConfig::tiny`].
    pub fn tiny() -> Self {
        Self {
            batch_rays: 1024,
            steps: 20_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_rays == 0 {
            return Err(Error::Config("batch_rays must be positive".into()));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.lr_end > self.lr_start {
            return Err(Error::Config(format!(
                "lr_end ({}) must not exceed lr_start ({})",
                self.lr_end, self.lr_start
            )));
        }
        if !(self.l1_weight >= 0.0) {
            return Err(Error::Config("l1_weight must be >= 0".into()));
        }
        if self.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("eps must be > 0 and weight_decay >= 0".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be positive".into()));
        }
        Ok(())
    }
}
