//! Acceptance suite. Each test prints one `acceptance <name>: PASS|FAIL` line.
//!
//! `end_to_end_overfit` trains for up to 20 000 steps and is ignored by
//! default; run it with `cargo test --release --test acceptance -- --ignored`.

use std::io::Write;
use std::time::Instant;

use panorf::bench::{compare_voxelizations, BenchScene};
use panorf::checkpoint;
use panorf::config::{SceneConfig, TrainConfig};
use panorf::data::{
    generate_synthetic_dataset, load_dataset, oracle_ray, Primitive, Split, SynthOptions, SyntheticScene,
};
use panorf::decoder::{mlp_backward, mlp_forward, Mlp};
use panorf::encode::{axis_aligned_encode, EncodingSpec};
use panorf::eval::{evaluate, EvalOptions, FieldRenderer};
use panorf::field::{FactoredTensor3, FieldParams, GridQuery, RadianceField};
use panorf::geom::{sample_ray, GridLayout, Ray, RaySampleBatch, SceneBounds, Vec3, Warp};
use panorf::render::{composite, composite_backward, RayWorkspace};
use panorf::train::{lr_at, train, TrainOutputs, TrainingData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type NoRng = ChaCha8Rng;

/// Writes straight to stdout so the line shows even when the harness captures output.
fn report(name: &str, pass: bool, detail: String) {
    let line = format!("acceptance {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(pass, "{name}: {detail}");
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Dense grid by summing every rank-1 term through the public accessors.
fn brute_dense(t: &FactoredTensor3<f32>) -> Vec<f64> {
    let [r0, r1, r2] = t.resolution();
    let mut out = vec![0.0; r0 * r1 * r2];
    for n in 0..t.rank() {
        for i in 0..r0 {
            for j in 0..r1 {
                for k in 0..r2 {
                    let v = t.vector(0, n, i) as f64 * t.matrix(0, n, j, k) as f64
                        + t.vector(1, n, j) as f64 * t.matrix(1, n, i, k) as f64
                        + t.vector(2, n, k) as f64 * t.matrix(2, n, i, j) as f64;
                    out[(i * r1 + j) * r2 + k] += v;
                }
            }
        }
    }
    out
}

/// Trilinear lookup: the first two axes clamp, the last wraps when `wrap`.
fn trilinear(dense: &[f64], res: [usize; 3], wrap: bool, q: [f64; 3]) -> f64 {
    let mut corners = [[(0usize, 0.0f64); 2]; 3];
    for a in 0..3 {
        let n = res[a];
        corners[a] = if a == 2 && wrap {
            let x = q[a].rem_euclid(1.0) * n as f64;
            let i = (x.floor() as usize) % n;
            let f = x - x.floor();
            [(i, 1.0 - f), ((i + 1) % n, f)]
        } else {
            let x = q[a].clamp(0.0, 1.0) * (n - 1) as f64;
            let i = (x.floor() as usize).min(n - 2);
            let f = x - i as f64;
            [(i, 1.0 - f), (i + 1, f)]
        };
    }
    let mut v = 0.0;
    for (i, wi) in corners[0] {
        for (j, wj) in corners[1] {
            for (k, wk) in corners[2] {
                v += wi * wj * wk * dense[(i * res[1] + j) * res[2] + k];
            }
        }
    }
    v
}

#[test]
fn factored_vs_dense_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for inst in 0..20 {
        let res = [
            rng.random_range(2..=8),
            rng.random_range(2..=8),
            rng.random_range(2..=8),
        ];
        let rank = rng.random_range(1..=3);
        let wrap = inst % 2 == 0;
        let mut t = FactoredTensor3::<f32>::zeros(res, rank, wrap);
        for s in t.slices_mut() {
            for v in s {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let dense = brute_dense(&t);
        for _ in 0..200 {
            let q = [
                rng.random_range(-0.1..1.1),
                rng.random_range(-0.1..1.1),
                rng.random_range(-0.5..1.5),
            ];
            let got = t.interp(&GridQuery::new(q[0], q[1], q[2])) as f64;
            let want = trilinear(&dense, res, wrap, q);
            worst = worst.max((got - want).abs() / (1.0 + want.abs()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "factored_vs_dense",
        worst <= 1e-5 && secs < 10.0,
        format!("max scaled error {worst:.2e}, {secs:.2} s"),
    );
}

fn micro_config() -> SceneConfig {
    SceneConfig {
        resolution: [5, 6, 7],
        rank_density: 2,
        rank_appearance: 2,
        features: 4,
        hidden: vec![8],
        n_samples: 8,
        r_max: 2.0,
        init_scale: Some(0.6),
        early_stop_transmittance: 0.0,
        weight_threshold: 0.0,
        ..SceneConfig::default()
    }
}

fn param_at(p: &mut FieldParams<f64>, mut idx: usize) -> &mut f64 {
    for s in p.slices_mut() {
        if idx < s.len() {
            return &mut s[idx];
        }
        idx -= s.len();
    }
    panic!("index out of range");
}

fn flat(p: &FieldParams<f64>) -> Vec<f64> {
    p.slices().into_iter().flatten().copied().collect()
}

/// Worst relative error between `analytic` and central differences of `f`
/// over the parameters selected by `stride`.
fn fd_check(
    field: &RadianceField<f64>,
    analytic: &[f64],
    stride: usize,
    h: f64,
    f: impl Fn(&RadianceField<f64>) -> f64,
) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in (0..analytic.len()).step_by(stride) {
        let mut plus = field.clone();
        *param_at(&mut plus.params, i) += h;
        let mut minus = field.clone();
        *param_at(&mut minus.params, i) -= h;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
        if numeric.abs() < 1e-9 && analytic[i].abs() < 1e-9 {
            continue;
        }
        worst = worst.max(rel_err(analytic[i], numeric));
        checked += 1;
    }
    (worst, checked)
}

#[test]
fn gradient_suite() {
    let start = Instant::now();
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let field = RadianceField::<f64>::init(micro_config(), 2).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;

    let q = GridQuery::new(0.37, 0.61, 0.83);
    let mut g = field.params.zeros_like();
    field.interp_density_backward(&q, 1.0, &mut g);
    let (e, n) = fd_check(&field, &flat(&g), 1, h, |f| f.interp_density(&q));
    pass &= e <= 1e-3 && n > 0;
    lines.push(format!("interp_density {e:.1e}/{n}"));

    let proj: Vec<f64> = (0..field.features()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut g = field.params.zeros_like();
    field.interp_appearance_backward(&q, &proj, &mut g);
    let (e, n) = fd_check(&field, &flat(&g), 1, h, |f| {
        f.interp_appearance(&q).iter().zip(&proj).map(|(a, b)| a * b).sum()
    });
    pass &= e <= 1e-3 && n > 0;
    lines.push(format!("interp_appearance {e:.1e}/{n}"));

    let mlp = Mlp::<f64>::init(6, &[7, 5], &mut rng);
    let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let up = [0.3, -0.7, 0.5];
    let eval = |m: &Mlp<f64>, x: &[f64]| {
        let (y, _) = mlp_forward(m, x).unwrap();
        y.iter().zip(up).map(|(a, b)| a * b).sum::<f64>()
    };
    let (_, cache) = mlp_forward(&mlp, &x).unwrap();
    let (gx, gw) = mlp_backward(&mlp, &cache, up);
    let mut e = 0.0f64;
    for i in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += h;
        xm[i] -= h;
        e = e.max(rel_err(gx[i], (eval(&mlp, &xp) - eval(&mlp, &xm)) / (2.0 * h)));
    }
    let analytic: Vec<f64> = gw.slices().flatten().copied().collect();
    let count = analytic.len();
    for i in 0..count {
        let bump = |d: f64| {
            let mut m = mlp.clone();
            *m.slices_mut().flatten().nth(i).unwrap() += d;
            eval(&m, &x)
        };
        let numeric = (bump(h) - bump(-h)) / (2.0 * h);
        if numeric.abs() > 1e-9 || analytic[i].abs() > 1e-9 {
            e = e.max(rel_err(analytic[i], numeric));
        }
    }
    pass &= e <= 1e-3;
    lines.push(format!("mlp {e:.1e}"));

    let n = 12;
    let sig: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
    let del: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.3)).collect();
    let col: Vec<[f64; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let bg = [0.2, 0.4, 0.6];
    let upc = [0.9, -0.4, 0.6];
    let scalar = |s: &[f64], c: &[[f64; 3]]| {
        let px = composite(s, &del, c, bg).unwrap();
        (0..3).map(|k| px.rgb[k] * upc[k]).sum::<f64>()
    };
    let cg = composite_backward(&sig, &del, &col, bg, upc).unwrap();
    let mut e = 0.0f64;
    for i in 0..n {
        let (mut sp, mut sm) = (sig.clone(), sig.clone());
        sp[i] += h;
        sm[i] -= h;
        e = e.max(rel_err(
            cg.sigmas[i],
            (scalar(&sp, &col) - scalar(&sm, &col)) / (2.0 * h),
        ));
        for k in 0..3 {
            let (mut cp, mut cm) = (col.clone(), col.clone());
            cp[i][k] += h;
            cm[i][k] -= h;
            e = e.max(rel_err(
                cg.colors[i][k],
                (scalar(&sig, &cp) - scalar(&sig, &cm)) / (2.0 * h),
            ));
        }
    }
    pass &= e <= 1e-3;
    lines.push(format!("composite {e:.1e}"));

    let ray = Ray::new(Vec3::new(0.2, -0.1, 0.15), Vec3::new(0.8, 0.5, -0.3)).unwrap();
    let upr = [0.7, -0.2, 0.4];
    let render = |f: &RadianceField<f64>| {
        let mut ws = RayWorkspace::new(f);
        let px = ws.forward::<NoRng>(f, &ray, 8, None).unwrap();
        (0..3).map(|k| px.rgb[k] * upr[k]).sum::<f64>()
    };
    let mut ws = RayWorkspace::new(&field);
    ws.forward::<NoRng>(&field, &ray, 8, None).unwrap();
    let mut g = field.params.zeros_like();
    ws.backward(&field, upr, &mut g);
    let (e, n) = fd_check(&field, &flat(&g), 3, h, render);
    pass &= e <= 5e-3 && n >= 20;
    lines.push(format!("render_ray {e:.1e}/{n}"));

    let secs = start.elapsed().as_secs_f64();
    report(
        "gradient_suite",
        pass && secs < 60.0,
        format!("{}, {secs:.2} s", lines.join(", ")),
    );
}

#[test]
fn compositing_conservation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut monotone = true;
    for _ in 0..10_000 {
        let n = rng.random_range(1..96);
        let sig: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(0.0..50.0)
                }
            })
            .collect();
        let del: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.2)).collect();
        let col: Vec<[f64; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let px = composite(&sig, &del, &col, [0.0; 3]).unwrap();
        let mut t = 1.0f64;
        let mut prev = 1.0f64;
        let mut optical = 0.0f64;
        for (i, w) in px.weights.iter().enumerate() {
            t -= w;
            monotone &= t <= prev + 1e-15;
            prev = t;
            optical += (sig[i] * del[i]).min(80.0);
        }
        let t_final = (-optical).exp();
        let sum: f64 = px.weights.iter().sum();
        worst = worst.max((sum + t_final - 1.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "compositing_conservation",
        worst <= 1e-6 && monotone && secs < 5.0,
        format!("max |Σw + T − 1| {worst:.2e}, monotone {monotone}, {secs:.2} s"),
    );
}

#[test]
fn oracle_scene_convergence() {
    let start = Instant::now();
    let (sigma, radius) = (2.5, 1.3);
    let bounds = SceneBounds::new(Vec3::zeros(), 4.0).unwrap();
    let mut scene = SyntheticScene::empty(bounds);
    scene.primitives.push(Primitive::Sphere {
        center: Vec3::new(0.5, -0.2, 0.1),
        radius,
        rgb: [1.0, 0.5, 0.25],
        density: sigma,
    });
    let expect = 1.0 - (-2.0 * sigma * radius).exp();
    let ray = Ray::new(
        Vec3::new(-3.0, 0.6, -0.5),
        Vec3::new(0.5, -0.2, 0.1) - Vec3::new(-3.0, 0.6, -0.5),
    )
    .unwrap();
    let oracle = oracle_ray(&scene, &ray, 1024).opacity;

    // Same ray through the compositor with 1024 point samples.
    let (t0, t1) = bounds.intersect(&ray).unwrap();
    let n = 1024;
    let dt = (t1 - t0) / n as f64;
    let sig: Vec<f64> = (0..n)
        .map(|i| {
            let p = ray.at(t0 + (i as f64 + 0.5) * dt);
            if (p - Vec3::new(0.5, -0.2, 0.1)).norm() < radius {
                sigma
            } else {
                0.0
            }
        })
        .collect();
    let composited = composite(&sig, &vec![dt; n], &vec![[1.0; 3]; n], [0.0; 3])
        .unwrap()
        .opacity;
    let secs = start.elapsed().as_secs_f64();
    let (eo, ec) = ((oracle - expect).abs(), (composited - expect).abs());
    report(
        "oracle_scene_convergence",
        eo <= 1e-3 && ec <= 1e-3 && secs < 5.0,
        format!("closed form {expect:.6}, oracle err {eo:.1e}, compositor err {ec:.1e}"),
    );
}

#[test]
#[ignore = "trains up to 20 000 steps on the full synthetic scene"]
fn end_to_end_overfit() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SynthOptions {
        n_cameras: 24,
        seed: 7,
        height: 128,
        width: 256,
        ..SynthOptions::default()
    };
    generate_synthetic_dataset(&SyntheticScene::box_spheres(), &opts, dir.path()).unwrap();
    let ds = load_dataset(&dir.path().join("manifest.json")).unwrap();
    let mut scene = SceneConfig::tiny();
    scene.set_bounds(&ds.bounds);
    let cfg = TrainConfig::tiny();
    let data = TrainingData::from_dataset(&ds, Split::Train).unwrap();
    let field = RadianceField::<f32>::init(scene, cfg.seed).unwrap();
    let metrics = dir.path().join("metrics.ndjson");
    let outputs = TrainOutputs {
        checkpoint: None,
        metrics: Some(metrics),
    };
    let start = Instant::now();
    let outcome = train(field, data, &cfg, &outputs, |r| {
        if r.step % 1000 == 0 {
            eprintln!("step {} loss {:.5} {:.0} rays/s", r.step, r.loss, r.rays_per_sec);
        }
    })
    .unwrap();
    let train_secs = start.elapsed().as_secs_f64();
    let renderer = FieldRenderer {
        field: &outcome.field,
        n_samples: outcome.field.config().n_samples,
    };
    let rep = evaluate(&renderer, &ds, Split::Test, &EvalOptions::default()).unwrap();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    report(
        "end_to_end_overfit",
        rep.mean_psnr >= 30.0 && rep.mean_ssim >= 0.90 && train_secs <= 1800.0,
        format!(
            "{} steps, test PSNR {:.2} dB, SSIM {:.4}, training {:.0} s on {cores} cores",
            cfg.steps, rep.mean_psnr, rep.mean_ssim, train_secs
        ),
    );
}

#[test]
fn end_to_end_overfit_notice() {
    let _ = std::io::stdout()
        .lock()
        .write_all(b"acceptance end_to_end_overfit: SKIPPED by default (run with --ignored)\n");
}

#[test]
fn warp_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let r_max = 9.5;
    let mut worst_rt = 0.0f64;
    for _ in 0..10_000 {
        let r = rng.random_range(0.0..r_max);
        let rho = Warp::Log.forward(r, r_max);
        let back = Warp::Log.inverse(rho, r_max);
        worst_rt = worst_rt.max((back - r).abs() / r.max(1e-12));
    }
    let bounds = SceneBounds::new(Vec3::new(0.3, -0.2, 0.1), r_max).unwrap();
    let layout = GridLayout {
        bounds,
        voxelization: panorf::config::Voxelization::Spherical,
        warp: Warp::Log,
    };
    let mut batch = RaySampleBatch::default();
    let mut ok = true;
    for i in 0..1000 {
        let dir = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        // Half the rays leave the center, half start at random interior points.
        let origin = if i % 2 == 0 {
            bounds.center
        } else {
            bounds.center
                + Vec3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                )
        };
        let Ok(ray) = Ray::new(origin, dir) else { continue };
        sample_ray::<NoRng>(&ray, &layout, 64, None, &mut batch).unwrap();
        let key: Vec<f64> = if i % 2 == 0 {
            batch
                .samples
                .iter()
                .map(|s| (s.position - bounds.center).norm())
                .collect()
        } else {
            batch.samples.iter().map(|s| s.t).collect()
        };
        for w in key.windows(3) {
            ok &= w[2] - w[1] >= (w[1] - w[0]) * (1.0 - 1e-9);
        }
    }
    report(
        "warp_properties",
        worst_rt <= 1e-6 && ok,
        format!("round-trip {worst_rt:.1e}, spacing non-decreasing {ok}"),
    );
}

fn determinism_setup() -> (tempfile::TempDir, TrainingData, SceneConfig, TrainConfig) {
    let dir = tempfile::tempdir().unwrap();
    let opts = SynthOptions {
        n_cameras: 6,
        seed: 7,
        height: 32,
        width: 64,
        oracle_samples: 128,
        ..SynthOptions::default()
    };
    let ds = generate_synthetic_dataset(&SyntheticScene::box_spheres(), &opts, dir.path()).unwrap();
    let mut scene = SceneConfig {
        resolution: [12, 12, 24],
        rank_density: 4,
        rank_appearance: 4,
        features: 6,
        hidden: vec![16],
        n_samples: 24,
        ..SceneConfig::tiny()
    };
    scene.set_bounds(&ds.bounds);
    let cfg = TrainConfig {
        steps: 200,
        batch_rays: 128,
        strict: true,
        threads: 3,
        seed: 7,
        log_every: 50,
        ..TrainConfig::tiny()
    };
    let data = TrainingData::from_dataset(&ds, Split::Train).unwrap();
    (dir, data, scene, cfg)
}

#[test]
fn determinism() {
    let (dir, data, scene, cfg) = determinism_setup();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let path = dir.path().join(format!("run{run}.ckpt"));
        let field = RadianceField::<f32>::init(scene.clone(), cfg.seed).unwrap();
        let outputs = TrainOutputs {
            checkpoint: Some(path.clone()),
            metrics: None,
        };
        train(field, data.clone(), &cfg, &outputs, |_| {}).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    let identical = bytes[0] == bytes[1];
    let loaded = checkpoint::load(&dir.path().join("run0.ckpt")).unwrap();
    let round_trip = checkpoint::to_bytes(&loaded) == bytes[0];
    let resaved = dir.path().join("resaved.ckpt");
    checkpoint::save(&loaded, &resaved).unwrap();
    let resave_identical = std::fs::read(&resaved).unwrap() == bytes[0];
    report(
        "determinism",
        identical && round_trip && resave_identical,
        format!("runs identical {identical}, round-trip identical {round_trip}, re-save identical {resave_identical}"),
    );
}

#[test]
fn schedule_endpoints() {
    let cfg = TrainConfig::default();
    let (a, b) = (lr_at(0, &cfg), lr_at(cfg.steps, &cfg));
    let tiny = TrainConfig::tiny();
    let (c, d) = (lr_at(0, &tiny), lr_at(tiny.steps, &tiny));
    report(
        "schedule_endpoints",
        a == 5e-4 && b == 5e-5 && c == 5e-4 && d == 5e-5,
        format!("lr(0) {a:e}, lr(end) {b:e}; tiny preset {c:e}, {d:e}"),
    );
}

#[test]
fn encoding_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_norm = 0.0f64;
    let mut local = true;
    let mut ladder = true;
    for m in [1usize, 2, 4] {
        let spec = EncodingSpec { m, sigma: 2.0 };
        let freqs = spec.frequencies();
        ladder &= freqs.len() == m;
        for (j, f) in freqs.iter().enumerate() {
            ladder &= (f - 2f64.powf(j as f64 / m as f64)).abs() <= 1e-15;
        }
        for _ in 0..500 {
            let d = rng.random_range(1..8);
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let e = axis_aligned_encode(&v, &spec);
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst_norm = worst_norm.max((norm - 1.0).abs());
            // Recover each frequency from its cos/sin slot pair.
            let scale = 1.0 / ((m * d) as f64).sqrt();
            for (k, &vk) in v.iter().enumerate() {
                for (j, f) in freqs.iter().enumerate() {
                    let arg = 2.0 * std::f64::consts::PI * f * vk;
                    let (c, s) = (e[2 * m * k + 2 * j], e[2 * m * k + 2 * j + 1]);
                    ladder &= (c - scale * arg.cos()).abs() < 1e-12 && (s - scale * arg.sin()).abs() < 1e-12;
                }
            }
            let k = rng.random_range(0..d);
            let mut w = v.clone();
            w[k] = rng.random_range(0.0..1.0);
            let e2 = axis_aligned_encode(&w, &spec);
            for (i, (a, b)) in e.iter().zip(&e2).enumerate() {
                if i / (2 * m) != k {
                    local &= a == b;
                }
            }
        }
    }
    report(
        "encoding_properties",
        worst_norm <= 1e-9 && local && ladder,
        format!("max |‖e‖ − 1| {worst_norm:.1e}, axis-local {local}, ladder {ladder}"),
    );
}

#[test]
fn bench_artifact() {
    let opts = SynthOptions {
        n_cameras: 24,
        seed: 7,
        height: 64,
        width: 128,
        oracle_samples: 256,
        ..SynthOptions::default()
    };
    let scene = BenchScene::render(SyntheticScene::box_spheres(), &opts, None).unwrap();
    let cfg = SceneConfig {
        resolution: [24, 24, 48],
        n_samples: 48,
        ..SceneConfig::tiny()
    };
    let train_cfg = TrainConfig {
        steps: 400,
        batch_rays: 512,
        strict: true,
        ..TrainConfig::tiny()
    };
    let rep = compare_voxelizations(&scene, &cfg, &train_cfg, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("voxelization.json");
    std::fs::write(&path, rep.to_json()).unwrap();
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let mut ok = true;
    for v in ["spherical", "cubic"] {
        for band in ["near_psnr", "far_psnr"] {
            ok &= json[v][band].as_f64().is_some_and(f64::is_finite);
        }
    }
    let ordering = if rep.near_delta + rep.far_delta > 0.0 {
        "spherical ahead"
    } else {
        "cubic ahead"
    };
    report(
        "bench_artifact",
        ok,
        format!(
            "spherical near/far {:.3}/{:.3} dB, cubic {:.3}/{:.3} dB, {ordering}",
            rep.spherical.near_psnr, rep.spherical.far_psnr, rep.cubic.near_psnr, rep.cubic.far_psnr
        ),
    );
}
