//! Posed panorama datasets, the analytic test scene and its oracle renderer.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{yaw_rotation, EquirectCamera, Mat3, Ray, SceneBounds, Vec3};
use crate::image::Image;

pub const MANIFEST_VERSION: u32 = 1;

/// Which third of a dataset an image belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    /// Assignment by position in filename order.
    pub fn from_index(i: usize) -> Self {
        match i % 3 {
            0 => Split::Train,
            1 => Split::Val,
            _ => Split::Test,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!(
                "unknown split {other:?} (expected train, val or test)"
            ))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestBounds {
    pub center: [f64; 3],
    pub r_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestImage {
    /// Path relative to the manifest's directory.
    pub file: String,
    pub width: usize,
    pub height: usize,
    pub position: [f64; 3],
    /// Camera-to-world rotation, row-major.
    pub rotation: [f64; 9],
}

/// On-disk dataset description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub bounds: ManifestBounds,
    pub images: Vec<ManifestImage>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(path, format!("invalid manifest: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    /// File name as written in the manifest.
    pub file: String,
    pub path: PathBuf,
    pub camera: EquirectCamera,
    pub split: Split,
}

impl DatasetEntry {
    pub fn load_image(&self) -> Result<Image> {
        Image::load_png(&self.path)
    }
}

/// A validated set of posed panoramas sorted by file name.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub bounds: SceneBounds,
    pub root: PathBuf,
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let n = |s| self.split(s).count();
        (n(Split::Train), n(Split::Val), n(Split::Test))
    }

    /// Loads every image of a split, in parallel, in file order.
    pub fn load_split(&self, split: Split) -> Result<Vec<(DatasetEntry, Image)>> {
        let entries: Vec<&DatasetEntry> = self.split(split).collect();
        entries
            .par_iter()
            .map(|e| Ok(((*e).clone(), e.load_image()?)))
            .collect()
    }

    pub fn to_manifest(&self) -> Manifest {
        Manifest {
            version: MANIFEST_VERSION,
            bounds: ManifestBounds {
                center: self.bounds.center.into(),
                r_max: self.bounds.r_max,
            },
            images: self
                .entries
                .iter()
                .map(|e| ManifestImage {
                    file: e.file.clone(),
                    width: e.camera.width,
                    height: e.camera.height,
                    position: e.camera.position.into(),
                    rotation: rotation_to_row_major(&e.camera.orientation),
                })
                .collect(),
        }
    }
}

pub fn rotation_to_row_major(r: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = r[(i, j)];
        }
    }
    out
}

pub fn rotation_from_row_major(v: &[f64; 9]) -> Mat3 {
    Mat3::from_row_slice(v)
}

/// Reads and validates a manifest, checking every image file's existence
/// and dimensions, and assigns splits by sorted file name.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = Manifest::read(manifest_path)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::data(
            manifest_path,
            format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                manifest.version
            ),
        ));
    }
    let bounds = SceneBounds::new(Vec3::from(manifest.bounds.center), manifest.bounds.r_max)
        .map_err(|e| Error::data(manifest_path, e.to_string()))?;
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut images = manifest.images;
    images.sort_by(|a, b| a.file.cmp(&b.file));
    if let Some(w) = images.windows(2).find(|w| w[0].file == w[1].file) {
        return Err(Error::data(
            manifest_path,
            format!("duplicate image entry {:?}", w[0].file),
        ));
    }
    let entries = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let path = root.join(&img.file);
            let bad = |msg: String| Error::data(&path, format!("manifest entry {:?}: {msg}", img.file));
            let camera = EquirectCamera::new(
                Vec3::from(img.position),
                rotation_from_row_major(&img.rotation),
                img.width,
                img.height,
            )
            .map_err(|e| bad(e.to_string()))?;
            if !bounds.contains(&camera.position) {
                return Err(bad("camera position lies outside the scene bounds".into()));
            }
            if !path.is_file() {
                return Err(bad("image file not found".into()));
            }
            let (w, h) = Image::png_dimensions(&path)?;
            if (w, h) != (img.width, img.height) {
                return Err(bad(format!(
                    "image is {w}x{h} but the manifest declares {}x{}",
                    img.width, img.height
                )));
            }
            Ok(DatasetEntry {
                file: img.file.clone(),
                path,
                camera,
                split: Split::from_index(i),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { bounds, root, entries })
}

/// Analytic primitive with constant density and color.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    Sphere {
        center: Vec3,
        radius: f64,
        rgb: [f64; 3],
        density: f64,
    },
    /// Axis-aligned box.
    Cuboid {
        min: Vec3,
        max: Vec3,
        rgb: [f64; 3],
        density: f64,
    },
}

impl Primitive {
    pub fn density(&self) -> f64 {
        match self {
            Primitive::Sphere { density, .. } | Primitive::Cuboid { density, .. } => *density,
        }
    }

    pub fn rgb(&self) -> [f64; 3] {
        match self {
            Primitive::Sphere { rgb, .. } | Primitive::Cuboid { rgb, .. } => *rgb,
        }
    }

    /// Parametric interval of the ray inside the primitive, unclipped.
    pub fn chord(&self, ray: &Ray) -> Option<(f64, f64)> {
        match self {
            Primitive::Sphere { center, radius, .. } => {
                let oc = ray.origin - center;
                let b = ray.direction.dot(&oc);
                let disc = b * b - (oc.norm_squared() - radius * radius);
                if disc <= 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                Some((-b - root, -b + root))
            }
            Primitive::Cuboid { min, max, .. } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    let (o, d) = (ray.origin[a], ray.direction[a]);
                    if d == 0.0 {
                        if o < min[a] || o > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let (ta, tb) = ((min[a] - o) / d, (max[a] - o) / d);
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
                (t1 > t0).then_some((t0, t1))
            }
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        match self {
            Primitive::Sphere { center, radius, .. } => (p - center).norm() < *radius,
            Primitive::Cuboid { min, max, .. } => (0..3).all(|a| p[a] > min[a] && p[a] < max[a]),
        }
    }

    /// Distance from `p` to the primitive's surface region (0 inside).
    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            Primitive::Sphere { center, radius, .. } => ((p - center).norm() - radius).max(0.0),
            Primitive::Cuboid { min, max, .. } => {
                let d = Vec3::from_fn(|a, _| (min[a] - p[a]).max(p[a] - max[a]).max(0.0));
                d.norm()
            }
        }
    }
}

/// Colored primitives inside a bounding sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub bounds: SceneBounds,
    pub primitives: Vec<Primitive>,
    pub background: [f64; 3],
}

impl SyntheticScene {
    pub fn empty(bounds: SceneBounds) -> Self {
        Self {
            bounds,
            primitives: Vec::new(),
            background: [0.0; 3],
        }
    }

    /// The standard test scene: a 10-unit box whose six walls have distinct
    /// colors, with three colored spheres inside.
    pub fn box_spheres() -> Self {
        let h = 5.0;
        let inner = 4.5;
        let wall = 20.0;
        let cuboid = |min: [f64; 3], max: [f64; 3], rgb: [f64; 3]| Primitive::Cuboid {
            min: Vec3::from(min),
            max: Vec3::from(max),
            rgb,
            density: wall,
        };
        let sphere = |c: [f64; 3], r: f64, rgb: [f64; 3]| Primitive::Sphere {
            center: Vec3::from(c),
            radius: r,
            rgb,
            density: 30.0,
        };
        // The x walls span the full box, the y walls fit between them and
        // the z walls between both, so no two slabs overlap.
        let primitives = vec![
            cuboid([-h, -h, -h], [-inner, h, h], [0.80, 0.25, 0.20]),
            cuboid([inner, -h, -h], [h, h, h], [0.20, 0.55, 0.80]),
            cuboid([-inner, -h, -h], [inner, -inner, h], [0.85, 0.75, 0.30]),
            cuboid([-inner, inner, -h], [inner, h, h], [0.35, 0.70, 0.35]),
            cuboid([-inner, -inner, -h], [inner, inner, -inner], [0.45, 0.40, 0.35]),
            cuboid([-inner, -inner, inner], [inner, inner, h], [0.90, 0.90, 0.85]),
            sphere([2.6, 2.4, -3.2], 1.0, [0.95, 0.20, 0.55]),
            sphere([-2.8, 2.2, -3.0], 1.2, [0.25, 0.90, 0.80]),
            sphere([0.5, -3.0, 2.5], 0.9, [0.55, 0.30, 0.95]),
        ];
        Self {
            bounds: SceneBounds {
                center: Vec3::zeros(),
                r_max: 9.5,
            },
            primitives,
            background: [0.0; 3],
        }
    }

    pub fn density_at(&self, p: &Vec3) -> f64 {
        self.primitives
            .iter()
            .filter(|q| q.contains(p))
            .map(Primitive::density)
            .sum()
    }

    /// Clearance from `p` to the nearest primitive.
    pub fn clearance(&self, p: &Vec3) -> f64 {
        self.primitives
            .iter()
            .map(|q| q.distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Oracle result for one ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OraclePixel {
    pub rgb: [f64; 3],
    pub opacity: f64,
    /// Distance to the first primitive entered, infinite if none.
    pub depth: f64,
}

/// Marches `ray` over its segment inside the scene bounds in `n_samples`
/// equal intervals. Each interval's optical depth is the exact integral of
/// the primitives' constant densities over their chords, and its color the
/// density-weighted mean of the overlapping primitives' colors; intervals
/// are then alpha-composited front to back.
pub fn oracle_ray(scene: &SyntheticScene, ray: &Ray, n_samples: usize) -> OraclePixel {
    let bg = scene.background;
    let Some((t0, t1)) = scene.bounds.intersect(ray) else {
        return OraclePixel {
            rgb: bg,
            opacity: 0.0,
            depth: f64::INFINITY,
        };
    };
    let n = n_samples.max(1);
    let dt = (t1 - t0) / n as f64;
    let mut optical = vec![0.0; n];
    let mut tint = vec![[0.0; 3]; n];
    let mut depth = f64::INFINITY;
    for prim in &scene.primitives {
        let Some((a, b)) = prim.chord(ray) else { continue };
        let (a, b) = (a.max(t0), b.min(t1));
        if b <= a || prim.density() <= 0.0 {
            continue;
        }
        depth = depth.min(a);
        let first = (((a - t0) / dt).floor() as usize).min(n - 1);
        let last = (((b - t0) / dt).ceil() as usize).min(n);
        for i in first..last {
            let lo = t0 + i as f64 * dt;
            let overlap = (b.min(lo + dt) - a.max(lo)).max(0.0);
            let tau = prim.density() * overlap;
            optical[i] += tau;
            let rgb = prim.rgb();
            for k in 0..3 {
                tint[i][k] += tau * rgb[k];
            }
        }
    }
    let mut trans = 1.0;
    let mut rgb = [0.0; 3];
    let mut opacity = 0.0;
    for i in 0..n {
        if optical[i] <= 0.0 {
            continue;
        }
        let w = -trans * (-optical[i].min(80.0)).exp_m1();
        for k in 0..3 {
            rgb[k] += w * tint[i][k] / optical[i];
        }
        opacity += w;
        trans *= (-optical[i].min(80.0)).exp();
    }
    for k in 0..3 {
        rgb[k] += trans * bg[k];
    }
    OraclePixel { rgb, opacity, depth }
}

/// Oracle color and first-hit depth for every pixel of `cam`.
pub fn oracle_render_with_depth(scene: &SyntheticScene, cam: &EquirectCamera, n_samples: usize) -> (Image, Vec<f64>) {
    let (w, h) = (cam.width, cam.height);
    let pixels: Vec<OraclePixel> = (0..w * h)
        .into_par_iter()
        .map(|i| oracle_ray(scene, &cam.ray(i % w, i / w), n_samples))
        .collect();
    let mut img = Image::new(w, h);
    for (i, p) in pixels.iter().enumerate() {
        for k in 0..3 {
            img.data[3 * i + k] = p.rgb[k].clamp(0.0, 1.0) as f32;
        }
    }
    (img, pixels.iter().map(|p| p.depth).collect())
}

pub fn oracle_render(scene: &SyntheticScene, cam: &EquirectCamera, n_samples: usize) -> Image {
    oracle_render_with_depth(scene, cam, n_samples).0
}

/// Settings for [`generate_synthetic_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub n_cameras: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    /// Oracle intervals per ray.
    pub oracle_samples: usize,
    /// Camera positions are drawn uniformly within `spread · r_max` of the
    /// center; at most 0.5.
    pub spread: f64,
    /// Minimum distance from a camera to any primitive.
    pub clearance: f64,
    /// Also write lossless `.f32` images.
    pub write_f32: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            n_cameras: 24,
            seed: 0,
            height: 128,
            width: 256,
            oracle_samples: 512,
            spread: 0.5,
            clearance: 0.5,
            write_f32: false,
        }
    }
}

/// Seeded camera poses: rejection-sampled positions with clearance from
/// every primitive and a random yaw about `+z`.
pub fn synthetic_cameras(scene: &SyntheticScene, opts: &SynthOptions) -> Result<Vec<EquirectCamera>> {
    if !(opts.spread > 0.0 && opts.spread <= 0.5) {
        return Err(Error::Config(format!(
            "camera spread must lie in (0, 0.5], got {}",
            opts.spread
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let radius = opts.spread * scene.bounds.r_max;
    let mut cams = Vec::with_capacity(opts.n_cameras);
    let mut attempts = 0usize;
    while cams.len() < opts.n_cameras {
        attempts += 1;
        if attempts > 10_000 * (opts.n_cameras + 1) {
            return Err(Error::Config(
                "could not place cameras clear of the scene content".into(),
            ));
        }
        let offset = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if offset.norm() >= 1.0 {
            continue;
        }
        let pos = scene.bounds.center + offset * radius;
        if scene.clearance(&pos) < opts.clearance {
            continue;
        }
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        cams.push(EquirectCamera::new(pos, yaw_rotation(yaw), opts.width, opts.height)?);
    }
    Ok(cams)
}

/// Renders `scene` from seeded cameras and writes `cam_NNN.png` files plus
/// `manifest.json` into `out_dir`. Output is byte-identical for equal inputs.
pub fn generate_synthetic_dataset(scene: &SyntheticScene, opts: &SynthOptions, out_dir: &Path) -> Result<Dataset> {
    if opts.height == 0 || opts.width != 2 * opts.height {
        return Err(Error::Config(format!(
            "image dimensions must satisfy width == 2 * height, got {}x{}",
            opts.height, opts.width
        )));
    }
    let cams = synthetic_cameras(scene, opts)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files: Vec<String> = (0..cams.len()).map(|i| format!("cam_{i:03}.png")).collect();
    cams.par_iter().zip(&files).try_for_each(|(cam, file)| {
        let img = oracle_render(scene, cam, opts.oracle_samples);
        let path = out_dir.join(file);
        img.save_png(&path)?;
        if opts.write_f32 {
            img.save_f32(&path.with_extension("f32"))?;
        }
        Ok::<_, Error>(())
    })?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        bounds: ManifestBounds {
            center: scene.bounds.center.into(),
            r_max: scene.bounds.r_max,
        },
        images: cams
            .iter()
            .zip(&files)
            .map(|(c, f)| ManifestImage {
                file: f.clone(),
                width: c.width,
                height: c.height,
                position: c.position.into(),
                rotation: rotation_to_row_major(&c.orientation),
            })
            .collect(),
    };
    let manifest_path = out_dir.join("manifest.json");
    manifest.write(&manifest_path)?;
    load_dataset(&manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_opts(n: usize) -> SynthOptions {
        SynthOptions {
            n_cameras: n,
            seed: 7,
            height: 8,
            width: 16,
            oracle_samples: 64,
            ..SynthOptions::default()
        }
    }

    #[test]
    fn split_rule_is_mod_three() {
        let s: Vec<Split> = (0..6).map(Split::from_index).collect();
        assert_eq!(
            s,
            [
                Split::Train,
                Split::Val,
                Split::Test,
                Split::Train,
                Split::Val,
                Split::Test
            ]
        );
        assert_eq!("val".parse::<Split>().unwrap(), Split::Val);
        assert!("holdout".parse::<Split>().is_err());
    }

    #[test]
    fn empty_scene_renders_background() {
        let mut scene = SyntheticScene::empty(SceneBounds::new(Vec3::zeros(), 3.0).unwrap());
        scene.background = [0.1, 0.2, 0.3];
        let cam = EquirectCamera::new(Vec3::zeros(), Mat3::identity(), 8, 4).unwrap();
        let img = oracle_render(&scene, &cam, 32);
        for p in img.data.chunks(3) {
            assert_eq!(p, [0.1f32, 0.2, 0.3]);
        }
    }

    #[test]
    fn camera_inside_opaque_sphere_sees_its_color() {
        let mut scene = SyntheticScene::empty(SceneBounds::new(Vec3::zeros(), 5.0).unwrap());
        let c = [0.3, 0.6, 0.9];
        scene.primitives.push(Primitive::Sphere {
            center: Vec3::new(0.2, 0.0, 0.0),
            radius: 2.0,
            rgb: c,
            density: 50.0,
        });
        let cam = EquirectCamera::new(Vec3::zeros(), Mat3::identity(), 16, 8).unwrap();
        let img = oracle_render(&scene, &cam, 256);
        for p in img.data.chunks(3) {
            for k in 0..3 {
                assert!((p[k] as f64 - c[k]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn sphere_through_center_matches_beer_lambert() {
        let mut scene = SyntheticScene::empty(SceneBounds::new(Vec3::zeros(), 4.0).unwrap());
        scene.primitives.push(Primitive::Sphere {
            center: Vec3::new(1.0, 0.5, 0.0),
            radius: 1.0,
            rgb: [1.0; 3],
            density: 1.0,
        });
        let dir = Vec3::new(1.0, 0.5, 0.0);
        let ray = Ray::new(Vec3::zeros(), dir).unwrap();
        let px = oracle_ray(&scene, &ray, 1024);
        assert!((px.opacity - (1.0 - (-2.0f64).exp())).abs() < 1e-3);
        assert!((px.depth - (dir.norm() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn cuboid_chord_and_standard_scene_layout() {
        let b = Primitive::Cuboid {
            min: Vec3::new(-1.0, -1.0, -1.0),
            max: Vec3::new(1.0, 1.0, 1.0),
            rgb: [0.0; 3],
            density: 1.0,
        };
        let ray = Ray::new(Vec3::new(-3.0, 0.0, 0.0), Vec3::x()).unwrap();
        assert_eq!(b.chord(&ray), Some((2.0, 4.0)));

        let scene = SyntheticScene::box_spheres();
        assert_eq!(scene.primitives.len(), 9);
        // Walls never overlap, so interior wall points see exactly one density.
        let wall = Vec3::new(4.75, 4.75, 4.75);
        assert_eq!(scene.density_at(&wall), 20.0);
        assert_eq!(scene.density_at(&Vec3::zeros()), 0.0);
        for p in &scene.primitives {
            if let Primitive::Cuboid { max, min, .. } = p {
                assert!(max.norm() < scene.bounds.r_max && min.norm() < scene.bounds.r_max);
            }
        }
    }

    #[test]
    fn oracle_conserves_and_converges_on_standard_scene() {
        let scene = SyntheticScene::box_spheres();
        let cam = EquirectCamera::new(Vec3::new(0.3, -0.2, 0.1), yaw_rotation(0.4), 32, 16).unwrap();
        let a = oracle_render(&scene, &cam, 512);
        let b = oracle_render(&scene, &cam, 1024);
        let worst = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        assert!(worst < 2.0 / 255.0, "worst change {worst}");
        for v in 0..16 {
            for u in 0..32 {
                let px = oracle_ray(&scene, &cam.ray(u, v), 256);
                assert!(px.opacity <= 1.0 + 1e-9);
                // Every ray from inside the box ends on a wall.
                assert!(px.opacity > 0.999);
            }
        }
    }

    #[test]
    fn generated_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SynthOptions {
            write_f32: true,
            ..small_opts(3)
        };
        let ds = generate_synthetic_dataset(&SyntheticScene::box_spheres(), &opts, dir.path()).unwrap();
        assert_eq!(ds.split_sizes(), (1, 1, 1));
        for e in &ds.entries {
            assert!(e.camera.position.norm() < 0.5 * 9.5);
            let png = e.load_image().unwrap();
            let raw = Image::load_f32(&e.path.with_extension("f32")).unwrap();
            for (a, b) in png.data.iter().zip(&raw.data) {
                assert!((a - b).abs() <= 1.0 / 255.0);
            }
        }
        let manifest_path = dir.path().join("manifest.json");
        let first = fs::read_to_string(&manifest_path).unwrap();
        assert_eq!(ds.to_manifest().to_json(), first);

        let dir2 = tempfile::tempdir().unwrap();
        generate_synthetic_dataset(&SyntheticScene::box_spheres(), &opts, dir2.path()).unwrap();
        for name in ["manifest.json", "cam_000.png", "cam_002.png", "cam_001.f32"] {
            assert_eq!(
                fs::read(dir.path().join(name)).unwrap(),
                fs::read(dir2.path().join(name)).unwrap()
            );
        }
    }

    #[test]
    fn zero_cameras_give_a_valid_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic_dataset(&SyntheticScene::box_spheres(), &small_opts(0), dir.path()).unwrap();
        assert!(ds.entries.is_empty());
        assert!(Manifest::read(&dir.path().join("manifest.json"))
            .unwrap()
            .images
            .is_empty());
    }

    #[test]
    fn invalid_entries_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic_dataset(&SyntheticScene::box_spheres(), &small_opts(2), dir.path()).unwrap();
        let path = dir.path().join("manifest.json");
        let good = Manifest::read(&path).unwrap();

        let mut m = good.clone();
        m.images[1].width = 15;
        m.write(&path).unwrap();
        let err = load_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("cam_001.png"), "{err}");

        let mut m = good.clone();
        m.images[0].rotation = [1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        m.write(&path).unwrap();
        let err = load_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("cam_000.png"), "{err}");

        let mut m = good.clone();
        m.images[0].file = "missing.png".into();
        m.write(&path).unwrap();
        let err = load_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("missing.png"), "{err}");

        let mut m = good;
        m.images[0].width = 32;
        m.images[0].height = 16;
        m.write(&path).unwrap();
        let err = load_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("cam_000.png") && err.contains("declares"), "{err}");
    }

    #[test]
    fn mod_three_split_of_315() {
        let sizes = (0..315).fold((0, 0, 0), |acc, i| match Split::from_index(i) {
            Split::Train => (acc.0 + 1, acc.1, acc.2),
            Split::Val => (acc.0, acc.1 + 1, acc.2),
            Split::Test => (acc.0, acc.1, acc.2 + 1),
        });
        assert_eq!(sizes, (105, 105, 105));
    }
}
