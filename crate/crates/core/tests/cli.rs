//! End-to-end checks of the `panorf` binary: outputs, reproducibility and
//! exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use panorf::checkpoint;
use panorf::data::load_dataset;
use panorf::eval::psnr;
use panorf::image::Image;
use panorf::{RadianceField, SceneConfig};

fn panorf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_panorf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
[scene]
resolution = [10, 10, 20]
rank_density = 3
rank_appearance = 4
features = 5
hidden = [12]
n_samples = 20

[train]
batch_rays = 64
steps = 20
log_every = 5
threads = 2
"#;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("small.toml"), SMALL).unwrap();
        let f = Self { dir };
        let o = panorf(&[
            "synth",
            "--cameras",
            "6",
            "--dims",
            "16x32",
            "--oracle-samples",
            "64",
            "--seed",
            "7",
            "--out",
            f.s("ds"),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        f
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn s(&self, rel: &str) -> &'static str {
        Box::leak(self.p(rel).to_string_lossy().into_owned().into_boxed_str())
    }

    fn train(&self, ckpt: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "train",
            "--config",
            self.s("small.toml"),
            "--data",
            self.s("ds"),
            "--checkpoint",
            self.s(ckpt),
        ];
        args.extend_from_slice(extra);
        panorf(&args)
    }
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .map(|rd| {
            rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

#[test]
fn synth_is_byte_reproducible_and_checks_dims() {
    let f = Fixture::new();
    let o = panorf(&[
        "synth",
        "--cameras",
        "6",
        "--dims",
        "16x32",
        "--oracle-samples",
        "64",
        "--seed",
        "7",
        "--out",
        f.s("ds2"),
    ]);
    assert_eq!(code(&o), 0);
    let names = files_in(&f.p("ds"));
    assert_eq!(names.len(), 7);
    assert_eq!(names, files_in(&f.p("ds2")));
    for n in &names {
        assert_eq!(
            fs::read(f.p("ds").join(n)).unwrap(),
            fs::read(f.p("ds2").join(n)).unwrap(),
            "{n}"
        );
    }
    let o = panorf(&["synth", "--dims", "100x150", "--out", f.s("bad")]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("100x150"), "{}", stderr(&o));
}

#[test]
fn zero_step_training_writes_the_initial_field() {
    let f = Fixture::new();
    let o = f.train("init.ckpt", &["--steps", "0", "--seed", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ds = load_dataset(&f.p("ds/manifest.json")).unwrap();
    let text = fs::read_to_string(f.p("small.toml")).unwrap();
    let mut scene = panorf::cli::RunConfig::from_toml(&text, Path::new("small.toml"))
        .unwrap()
        .scene;
    scene.set_bounds(&ds.bounds);
    let init = RadianceField::<f32>::init(scene, 4).unwrap();
    assert_eq!(fs::read(f.p("init.ckpt")).unwrap(), checkpoint::to_bytes(&init));
}

#[test]
fn strict_training_is_reproducible_and_logs_every_k_steps() {
    let f = Fixture::new();
    for run in ["a", "b"] {
        let metrics = format!("{run}.ndjson");
        let o = f.train(
            &format!("{run}.ckpt"),
            &["--strict", "--seed", "3", "--metrics", f.s(&metrics)],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("final train loss"));
    }
    assert_eq!(fs::read(f.p("a.ckpt")).unwrap(), fs::read(f.p("b.ckpt")).unwrap());
    let strip = |p: PathBuf| -> Vec<serde_json::Value> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                let obj = v.as_object_mut().unwrap();
                obj.remove("rays_per_sec");
                obj.remove("wallclock_ms");
                v
            })
            .collect()
    };
    let (a, b) = (strip(f.p("a.ndjson")), strip(f.p("b.ndjson")));
    assert_eq!(a.len(), 20 / 5);
    assert_eq!(a, b);
    assert_eq!(a.last().unwrap()["step"], 20);
}

#[test]
fn training_errors_map_to_exit_codes() {
    let f = Fixture::new();
    let missing = f.s("nowhere");
    let o = panorf(&["train", "--data", missing, "--checkpoint", f.s("x.ckpt")]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nowhere"), "{}", stderr(&o));

    fs::write(f.p("typo.toml"), "[train]\nbatch_rayz = 3\n").unwrap();
    let o = panorf(&[
        "train",
        "--config",
        f.s("typo.toml"),
        "--data",
        f.s("ds"),
        "--checkpoint",
        f.s("x.ckpt"),
    ]);
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("batch_rayz") && stderr(&o).contains("typo.toml"),
        "{}",
        stderr(&o)
    );

    let blowup = format!("{SMALL}lr_start = 1e30\nlr_end = 1e30\n");
    fs::write(f.p("blowup.toml"), blowup).unwrap();
    let o = panorf(&[
        "train",
        "--config",
        f.s("blowup.toml"),
        "--data",
        f.s("ds"),
        "--checkpoint",
        f.s("nan.ckpt"),
    ]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    if f.p("nan.ckpt").exists() {
        let field = checkpoint::load(&f.p("nan.ckpt")).unwrap();
        assert!(field.params.is_finite());
    }
}

#[test]
fn render_eval_and_inspect() {
    let f = Fixture::new();
    let o = f.train("m.ckpt", &["--steps", "60"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = panorf(&["inspect", "--checkpoint", f.s("m.ckpt")]);
    assert_eq!(code(&o), 0);
    let header: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(header["version"], 1);
    let cfg: SceneConfig = serde_json::from_value(header["config"].clone()).unwrap();
    assert_eq!(cfg.resolution, [10, 10, 20]);

    let mut reports = Vec::new();
    for split in ["val", "test"] {
        let path = format!("{split}.json");
        let o = panorf(&[
            "eval",
            "--checkpoint",
            f.s("m.ckpt"),
            "--data",
            f.s("ds"),
            "--split",
            split,
            "--report",
            f.s(&path),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.p(&path)).unwrap()).unwrap();
        for key in ["split", "per_image", "mean_psnr", "mean_ssim", "render_ms_total"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for m in v["per_image"].as_array().unwrap() {
            assert!(m["file"].is_string() && m["psnr"].is_number() && m["ssim"].is_number());
        }
        reports.push(v);
    }
    let files = |v: &serde_json::Value| -> Vec<String> {
        v["per_image"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m["file"].as_str().unwrap().to_owned())
            .collect()
    };
    let (val, test) = (files(&reports[0]), files(&reports[1]));
    assert!(!val.is_empty() && !test.is_empty());
    assert!(val.iter().all(|v| !test.contains(v)));

    // Rendering a training pose scores no worse than the held-out mean − 3 dB.
    let o = panorf(&[
        "render",
        "--checkpoint",
        f.s("m.ckpt"),
        "--data",
        f.s("ds"),
        "--split",
        "train",
        "--out",
        f.s("frames"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ds = load_dataset(&f.p("ds/manifest.json")).unwrap();
    let first = ds.split(panorf::data::Split::Train).next().unwrap();
    let frame = Image::load_png(&f.p("frames/frame_0000.png")).unwrap();
    let train_psnr = psnr(&frame, &first.load_image().unwrap()).unwrap();
    let test_mean = reports[1]["mean_psnr"].as_f64().unwrap();
    assert!(train_psnr >= test_mean - 3.0, "{train_psnr} vs {test_mean}");
}

#[test]
fn render_pose_lists_and_checkpoint_errors() {
    let f = Fixture::new();
    let o = f.train("m.ckpt", &["--steps", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    fs::write(f.p("none.json"), r#"{"poses": []}"#).unwrap();
    let o = panorf(&[
        "render",
        "--checkpoint",
        f.s("m.ckpt"),
        "--poses",
        f.s("none.json"),
        "--out",
        f.s("empty"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(files_in(&f.p("empty")).is_empty());

    let poses = r#"{"poses": [
        {"kind": "equirect", "width": 16, "height": 8, "position": [0.2, 0.1, 0.0], "rotation": [1,0,0,0,1,0,0,0,1]},
        {"kind": "pinhole", "width": 12, "height": 9, "fov_x_deg": 80, "position": [0, 0, 0], "rotation": [1,0,0,0,1,0,0,0,1]}
    ]}"#;
    fs::write(f.p("two.json"), poses).unwrap();
    let o = panorf(&[
        "render",
        "--checkpoint",
        f.s("m.ckpt"),
        "--poses",
        f.s("two.json"),
        "--out",
        f.s("two"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(files_in(&f.p("two")), ["frame_0000.png", "frame_0001.png"]);
    assert_eq!(Image::load_png(&f.p("two/frame_0001.png")).unwrap().width, 12);

    fs::write(f.p("bad.json"), r#"{"poses": [{"kind": "equirect", "width": 10}]}"#).unwrap();
    let o = panorf(&[
        "render",
        "--checkpoint",
        f.s("m.ckpt"),
        "--poses",
        f.s("bad.json"),
        "--out",
        f.s("bad"),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.json"), "{}", stderr(&o));

    let mut bytes = fs::read(f.p("m.ckpt")).unwrap();
    bytes[0] = b'Z';
    fs::write(f.p("corrupt.ckpt"), &bytes).unwrap();
    let o = panorf(&[
        "render",
        "--checkpoint",
        f.s("corrupt.ckpt"),
        "--poses",
        f.s("two.json"),
        "--out",
        f.s("c"),
    ]);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("corrupt.ckpt"), "{}", stderr(&o));
    let mut bytes = fs::read(f.p("m.ckpt")).unwrap();
    bytes[4] = 2;
    fs::write(f.p("v2.ckpt"), &bytes).unwrap();
    let o = panorf(&["inspect", "--checkpoint", f.s("v2.ckpt")]);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("version"), "{}", stderr(&o));
}
