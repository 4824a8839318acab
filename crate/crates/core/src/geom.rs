//! Coordinate conventions, cameras and ray sampling.
//!
//! Conventions (also in `docs/coordinates.md`):
//!
//! - World and camera frames are right-handed; `+z` is up.
//! - Polar angle `θ ∈ [0, π]` is measured from `+z`; azimuth `φ ∈ [−π, π)`
//!   from `+x` towards `+y`.
//! - Equirectangular pixel `(u, v)` (column, row) looks along
//!   `θ = π(v + ½)/H`, `φ = 2π(u + ½)/W − π` in the camera frame.
//! - Camera orientations are camera-to-world rotations.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Voxelization;
use crate::error::{Error, Result};
use crate::field::GridQuery;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const ROTATION_TOL: f64 = 1e-6;

/// Sphere enclosing the reconstructed content.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneBounds {
    pub center: Vec3,
    pub r_max: f64,
}

impl SceneBounds {
    pub fn new(center: Vec3, r_max: f64) -> Result<Self> {
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::Input(format!("r_max must be positive, got {r_max}")));
        }
        Ok(Self { center, r_max })
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (p - self.center).norm() < self.r_max
    }

    /// Parametric interval `[t_near, t_far]` of the ray inside the sphere,
    /// with `t_near` clipped to 0. `None` if the ray never enters.
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, f64)> {
        let oc = ray.origin - self.center;
        let b = ray.direction.dot(&oc);
        let c = oc.norm_squared() - self.r_max * self.r_max;
        let disc = b * b - c;
        if disc <= 0.0 {
            return None;
        }
        let root = disc.sqrt();
        let t_far = -b + root;
        let t_near = (-b - root).max(0.0);
        (t_far > t_near).then_some((t_near, t_far))
    }
}

/// Mapping between world radius and the normalized radial grid coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Warp {
    /// `ρ = ln(1 + r) / ln(1 + r_max)`: cells grow with distance.
    Log,
    /// `ρ = (eʳ − 1) / (e^r_max − 1)`: the inverse reading, cells shrink with distance.
    Literal,
}

impl Warp {
    #[inline]
    pub fn forward(self, r: f64, r_max: f64) -> f64 {
        match self {
            Warp::Log => r.ln_1p() / r_max.ln_1p(),
            Warp::Literal => r.exp_m1() / r_max.exp_m1(),
        }
    }

    #[inline]
    pub fn inverse(self, rho: f64, r_max: f64) -> f64 {
        match self {
            Warp::Log => (rho * r_max.ln_1p()).exp_m1(),
            Warp::Literal => (rho * r_max.exp_m1()).ln_1p(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpedRadius {
    pub rho: f64,
    /// The input exceeded `r_max` and was clamped to `ρ = 1`.
    pub clamped: bool,
}

/// Log-warped radial grid coordinate of world radius `r`.
pub fn warp_radius(r: f64, bounds: &SceneBounds) -> Result<WarpedRadius> {
    if !(r >= 0.0) {
        return Err(Error::Input(format!("radius must be >= 0, got {r}")));
    }
    if r > bounds.r_max {
        return Ok(WarpedRadius {
            rho: 1.0,
            clamped: true,
        });
    }
    Ok(WarpedRadius {
        rho: Warp::Log.forward(r, bounds.r_max),
        clamped: false,
    })
}

pub fn unwarp_radius(rho: f64, bounds: &SceneBounds) -> f64 {
    Warp::Log.inverse(rho, bounds.r_max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

pub fn cartesian_to_spherical(p: &Vec3, bounds: &SceneBounds) -> SphericalPoint {
    let d = p - bounds.center;
    let r = d.norm();
    if r == 0.0 {
        return SphericalPoint {
            r: 0.0,
            theta: 0.0,
            phi: 0.0,
        };
    }
    let theta = (d.z / r).clamp(-1.0, 1.0).acos();
    let mut phi = d.y.atan2(d.x);
    if phi >= std::f64::consts::PI {
        phi -= 2.0 * std::f64::consts::PI;
    }
    SphericalPoint { r, theta, phi }
}

/// Direction in `[0, 1)²` as `(θ/π, (φ + π)/2π)`.
pub fn direction_to_unit_square(dir: &Vec3) -> [f64; 2] {
    let theta = dir.z.clamp(-1.0, 1.0).acos();
    let phi = dir.y.atan2(dir.x);
    [
        theta / std::f64::consts::PI,
        (phi + std::f64::consts::PI) / (2.0 * std::f64::consts::PI),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Input("ray direction must be a finite non-zero vector".into()));
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

fn check_rotation(r: &Mat3) -> Result<()> {
    let err = (r.transpose() * r - Mat3::identity()).amax();
    let det = r.determinant();
    if err > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
        return Err(Error::Input(format!(
            "orientation is not a rotation (orthonormality error {err:.3e}, det {det:.9})"
        )));
    }
    Ok(())
}

/// Rotation about `+z` by `yaw` radians.
pub fn yaw_rotation(yaw: f64) -> Mat3 {
    let (s, c) = yaw.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation whose camera `+x` axis maps to `forward`, keeping `+z` up where possible.
pub fn look_rotation(forward: &Vec3) -> Result<Mat3> {
    let f = forward
        .try_normalize(1e-12)
        .ok_or_else(|| Error::Input("forward direction must be non-zero".into()))?;
    let up_hint = if f.z.abs() > 0.999 { Vec3::x() } else { Vec3::z() };
    let y = up_hint.cross(&f).normalize();
    let z = f.cross(&y);
    Ok(Mat3::from_columns(&[f, y, z]))
}

/// Panoramic camera with a 2:1 equirectangular image.
#[derive(Clone, Debug, PartialEq)]
pub struct EquirectCamera {
    pub position: Vec3,
    pub orientation: Mat3,
    pub width: usize,
    pub height: usize,
}

impl EquirectCamera {
    pub fn new(position: Vec3, orientation: Mat3, width: usize, height: usize) -> Result<Self> {
        if height == 0 || width != 2 * height {
            return Err(Error::Input(format!(
                "equirectangular image must have width == 2 * height, got {width}x{height}"
            )));
        }
        check_rotation(&orientation)?;
        Ok(Self {
            position,
            orientation,
            width,
            height,
        })
    }

    /// Camera-frame direction of a pixel center. No range check.
    #[inline]
    pub fn local_direction(&self, u: usize, v: usize) -> Vec3 {
        let theta = std::f64::consts::PI * (v as f64 + 0.5) / self.height as f64;
        let phi = 2.0 * std::f64::consts::PI * (u as f64 + 0.5) / self.width as f64 - std::f64::consts::PI;
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Vec3::new(st * cp, st * sp, ct)
    }

    pub fn pixel_to_direction(&self, u: usize, v: usize) -> Result<Vec3> {
        if u >= self.width || v >= self.height {
            return Err(Error::Input(format!(
                "pixel ({u}, {v}) outside {}x{} image",
                self.width, self.height
            )));
        }
        Ok(self.orientation * self.local_direction(u, v))
    }

    #[inline]
    pub fn ray(&self, u: usize, v: usize) -> Ray {
        Ray {
            origin: self.position,
            direction: (self.orientation * self.local_direction(u, v)).normalize(),
        }
    }
}

/// Free-function form of [`EquirectCamera::pixel_to_direction`].
pub fn pixel_to_direction(u: usize, v: usize, cam: &EquirectCamera) -> Result<Vec3> {
    cam.pixel_to_direction(u, v)
}

/// Pinhole camera looking along its local `+x`; image right is local `+y`
/// and image down is local `−z`, matching the equirectangular orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinholeIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl PinholeIntrinsics {
    /// Centered intrinsics with the given horizontal field of view in radians.
    pub fn from_fov(width: usize, height: usize, fov_x: f64) -> Result<Self> {
        if !(fov_x > 0.0 && fov_x < std::f64::consts::PI) {
            return Err(Error::Config(format!("field of view must lie in (0, π), got {fov_x}")));
        }
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Ok(Self {
            width,
            height,
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("pinhole image dimensions must be positive".into()));
        }
        let ok = |x: f64| x.is_finite();
        if !(self.fx > 0.0 && self.fy > 0.0) || !ok(self.fx) || !ok(self.fy) {
            return Err(Error::Config("focal lengths must be finite and positive".into()));
        }
        if !ok(self.cx) || !ok(self.cy) {
            return Err(Error::Config("principal point must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PinholeCamera {
    pub position: Vec3,
    pub orientation: Mat3,
    pub intrinsics: PinholeIntrinsics,
}

impl PinholeCamera {
    pub fn new(position: Vec3, orientation: Mat3, intrinsics: PinholeIntrinsics) -> Result<Self> {
        intrinsics.validate()?;
        check_rotation(&orientation).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            position,
            orientation,
            intrinsics,
        })
    }

    pub fn ray(&self, u: usize, v: usize) -> Ray {
        let k = &self.intrinsics;
        let local = Vec3::new(1.0, (u as f64 + 0.5 - k.cx) / k.fx, -(v as f64 + 0.5 - k.cy) / k.fy);
        Ray {
            origin: self.position,
            direction: (self.orientation * local).normalize(),
        }
    }
}

/// How world points map to normalized grid coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridLayout {
    pub bounds: SceneBounds,
    pub voxelization: Voxelization,
    pub warp: Warp,
}

impl GridLayout {
    #[inline]
    pub fn query(&self, p: &Vec3) -> GridQuery {
        match self.voxelization {
            Voxelization::Spherical => {
                let s = cartesian_to_spherical(p, &self.bounds);
                let rho = self.warp.forward(s.r.min(self.bounds.r_max), self.bounds.r_max);
                GridQuery::new(
                    rho,
                    s.theta / std::f64::consts::PI,
                    (s.phi + std::f64::consts::PI) / (2.0 * std::f64::consts::PI),
                )
            }
            Voxelization::Cubic => {
                let d = (p - self.bounds.center) / (2.0 * self.bounds.r_max);
                GridQuery::new(
                    (d.x + 0.5).clamp(0.0, 1.0),
                    (d.y + 0.5).clamp(0.0, 1.0),
                    (d.z + 0.5).clamp(0.0, 1.0),
                )
            }
        }
    }

    /// Whether the last grid axis is periodic (the azimuth of spherical grids).
    pub fn wraps_last_axis(&self) -> bool {
        self.voxelization == Voxelization::Spherical
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaySample {
    /// Distance from the ray origin.
    pub t: f64,
    pub position: Vec3,
    pub query: GridQuery,
    /// World-space gap to the next sample (to the segment end for the last one).
    pub delta: f64,
}

/// Samples along one ray, ordered by distance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RaySampleBatch {
    pub direction: Vec3,
    pub samples: Vec<RaySample>,
}

impl RaySampleBatch {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }
}

/// Places `n_samples` points on the part of `ray` inside the scene sphere.
///
/// Samples are stratified in the warped coordinate
/// `s = warp(t − t_near; t_far − t_near)`, so a ray leaving the scene center
/// gets radii uniform in `ρ`. With `jitter` each sample is drawn uniformly
/// inside its stratum; without it the stratum midpoint is used. A ray that
/// misses the sphere yields an empty batch.
pub fn sample_ray<R: Rng + ?Sized>(
    ray: &Ray,
    layout: &GridLayout,
    n_samples: usize,
    jitter: Option<&mut R>,
    out: &mut RaySampleBatch,
) -> Result<()> {
    if n_samples < 2 {
        return Err(Error::Input(format!("n_samples must be >= 2, got {n_samples}")));
    }
    out.direction = ray.direction;
    out.samples.clear();
    let Some((t0, t1)) = layout.bounds.intersect(ray) else {
        return Ok(());
    };
    let len = t1 - t0;
    let n = n_samples as f64;
    let mut jitter = jitter;
    let mut prev: Option<f64> = None;
    for k in 0..n_samples {
        let offset = match jitter.as_deref_mut() {
            Some(rng) => rng.random::<f64>(),
            None => 0.5,
        };
        let s = (k as f64 + offset) / n;
        let t = t0 + layout.warp.inverse(s, len);
        if let (Some(prev_t), Some(last)) = (prev, out.samples.last_mut()) {
            last.delta = t - prev_t;
        }
        let position = ray.at(t);
        out.samples.push(RaySample {
            t,
            position,
            query: layout.query(&position),
            delta: 0.0,
        });
        prev = Some(t);
    }
    if let Some(last) = out.samples.last_mut() {
        last.delta = t1 - last.t;
    }
    Ok(())
}
