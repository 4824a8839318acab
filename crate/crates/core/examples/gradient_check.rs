//! Compares the hand-written backward pass of a full ray render against
//! central finite differences on a small random field.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use panorf::render::RayWorkspace;
use panorf::{RadianceField, Ray, SceneConfig, Vec3};
use rand_chacha::ChaCha8Rng;

fn render(field: &RadianceField<f64>, ray: &Ray, up: [f64; 3]) -> f64 {
    let mut ws = RayWorkspace::new(field);
    let px = ws.forward::<ChaCha8Rng>(field, ray, 12, None).expect("valid ray");
    (0..3).map(|k| px.rgb[k] * up[k]).sum()
}

fn main() -> panorf::Result<()> {
    let cfg = SceneConfig {
        resolution: [6, 6, 8],
        rank_density: 2,
        rank_appearance: 3,
        features: 4,
        hidden: vec![8],
        n_samples: 12,
        r_max: 2.0,
        init_scale: Some(0.6),
        early_stop_transmittance: 0.0,
        weight_threshold: 0.0,
        ..SceneConfig::default()
    };
    let field = RadianceField::<f64>::init(cfg, 1)?;
    let ray = Ray::new(Vec3::new(0.1, 0.2, -0.1), Vec3::new(0.6, -0.7, 0.2))?;
    let up = [0.5, -0.3, 0.8];

    let mut ws = RayWorkspace::new(&field);
    ws.forward::<ChaCha8Rng>(&field, &ray, 12, None)?;
    let mut grads = field.params.zeros_like();
    ws.backward(&field, up, &mut grads);
    let analytic: Vec<f64> = grads.slices().into_iter().flatten().copied().collect();

    let h = 1e-4;
    let names = ["density", "appearance", "basis", "decoder"];
    let lens: Vec<usize> = field.params.slices().iter().map(|s| s.len()).collect();
    let mut worst = [0.0f64; 4];
    let mut offset = 0;
    for (slice, len) in lens.iter().enumerate() {
        // Slices come in order: density factors, appearance factors, basis, decoder layers.
        let group = if slice < 6 {
            0
        } else if slice < 12 {
            1
        } else if slice == 12 {
            2
        } else {
            3
        };
        for i in offset..offset + len {
            let bump = |d: f64| {
                let mut f = field.clone();
                let mut idx = i;
                for s in f.params.slices_mut() {
                    if idx < s.len() {
                        s[idx] += d;
                        break;
                    }
                    idx -= s.len();
                }
                render(&f, &ray, up)
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            let scale = numeric.abs().max(analytic[i].abs()).max(1e-6);
            worst[group] = worst[group].max((numeric - analytic[i]).abs() / scale);
        }
        offset += len;
    }
    for (name, w) in names.iter().zip(worst) {
        println!("{name:<11} max relative error {w:.2e}");
    }
    Ok(())
}
