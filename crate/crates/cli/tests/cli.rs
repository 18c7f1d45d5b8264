use std::path::Path;
use std::process::{Command, Output};

use image::{Luma, Rgb, RgbImage};

fn microcount(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_microcount"))
        .current_dir(dir)
        .env_remove("MICROCOUNT_DATA_ROOT")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn textured(w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7) as u8, (y * 5) as u8, ((x + y) * 3) as u8]))
}

fn counts(manifest: &Path) -> Vec<u64> {
    std::fs::read_to_string(manifest)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["count"].as_u64().unwrap())
        .collect()
}

const SMALL: [&str; 8] = ["--n-images", "10", "--width", "64", "--height", "64", "--max-count", "9"];

#[test]
fn generate_writes_images_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["--run-name", "g", "generate"];
    args.extend(SMALL);
    let stdout = ok(&microcount(tmp.path(), &args));
    assert!(stdout.contains("images: 10"));
    let run = tmp.path().join("runs/g");
    assert_eq!(counts(&run.join("dataset/manifest.jsonl")).len(), 10);
    assert_eq!(std::fs::read_dir(run.join("dataset/images")).unwrap().count(), 10);
    assert!(run.join("config.json").exists());
}

#[test]
fn same_seed_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let mut args = vec!["--seed", "5", "--run-name", name, "generate"];
        args.extend(SMALL);
        ok(&microcount(tmp.path(), &args));
    }
    let read = |run: &str, file: &str| std::fs::read(tmp.path().join("runs").join(run).join(file)).unwrap();
    assert_eq!(read("a", "dataset/manifest.jsonl"), read("b", "dataset/manifest.jsonl"));
    assert_eq!(read("a", "dataset/images/syn_000003.png"), read("b", "dataset/images/syn_000003.png"));
    assert_eq!(read("a", "config.json"), read("b", "config.json"));
}

#[test]
fn dry_run_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["generate", "--dry-run"];
    args.extend(SMALL);
    let stdout = ok(&microcount(tmp.path(), &args));
    assert!(stdout.contains("\"n_images\": 10"));
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn bad_configs_fail_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("spec.json"),
        r#"{"n_images": 3, "scene": {"width": 8, "height": 8, "target_count": 0}, "colour": 1}"#,
    )
    .unwrap();
    let out = microcount(tmp.path(), &["generate", "--config", "spec.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let mut args = vec!["--out", "file/runs", "generate"];
    args.extend(SMALL);
    assert!(!microcount(tmp.path(), &args).status.success());
}

#[test]
fn adapt_vgg_fnc_and_cancer_fixtures() {
    let tmp = tempfile::tempdir().unwrap();
    let vgg = tmp.path().join("data/vgg");
    std::fs::create_dir_all(&vgg).unwrap();
    for (i, n) in [3u32, 5].iter().enumerate() {
        textured(20, 20).save(vgg.join(format!("{i:03}cell.png"))).unwrap();
        let mut dots = RgbImage::new(20, 20);
        for k in 0..*n {
            dots.put_pixel(k * 3, k * 2, Rgb([255, 0, 0]));
        }
        dots.save(vgg.join(format!("{i:03}dots.png"))).unwrap();
    }
    let fnc = tmp.path().join("data/fnc");
    std::fs::create_dir_all(fnc.join("images")).unwrap();
    std::fs::create_dir_all(fnc.join("masks")).unwrap();
    let mask = image::GrayImage::from_fn(40, 40, |x, y| {
        let inside = |cx: i32, cy: i32| (x as i32 - cx).pow(2) + (y as i32 - cy).pow(2) <= 25;
        Luma([if inside(10, 10) || inside(28, 28) { 255 } else { 0 }])
    });
    mask.save(fnc.join("masks/m.png")).unwrap();
    textured(40, 40).save(fnc.join("images/m.png")).unwrap();
    let cancer = tmp.path().join("data/cancer");
    std::fs::create_dir_all(&cancer).unwrap();
    textured(16, 16).save(cancer.join("c.png")).unwrap();
    std::fs::write(cancer.join("counts.csv"), "image,count\nc.png,17\n").unwrap();

    let data_root = tmp.path().join("data");
    let root = data_root.to_str().unwrap();
    for (layout, expected) in [("vgg", vec![3, 5]), ("fnc", vec![2]), ("cancer", vec![17])] {
        ok(&microcount(tmp.path(), &["--data-root", root, "--run-name", layout, "adapt", layout, layout]));
        let run = tmp.path().join("runs").join(layout);
        assert_eq!(counts(&run.join("dataset/manifest.jsonl")), expected, "{layout}");
        assert!(run.join("stats.json").exists());
    }
}

#[test]
fn unknown_layout_lists_the_known_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let out = microcount(tmp.path(), &["adapt", "coco", "."]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("vgg") && err.contains("fnc") && err.contains("cancer"));
}

#[test]
fn flops_reports_crossvit_size() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(&microcount(tmp.path(), &["flops", "crossvit-ti"]));
    assert!(stdout.contains("params: 2970818 (2.97e6)"), "{stdout}");
}

#[test]
fn train_then_eval_a_toy_model() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&microcount(
        tmp.path(),
        &[
            "--run-name",
            "data",
            "generate",
            "--n-images",
            "100",
            "--width",
            "64",
            "--height",
            "64",
            "--max-count",
            "10",
        ],
    ));
    let stdout = ok(&microcount(
        tmp.path(),
        &[
            "--run-name",
            "t",
            "train",
            "--preset",
            "toy-vit",
            "--manifest",
            "runs/data/dataset",
            "--epochs",
            "2",
            "--batch-size",
            "16",
            "--lr",
            "1e-3",
            "--warmup-steps",
            "5",
        ],
    ));
    assert!(stdout.contains("epochs: 2"));
    let run = tmp.path().join("runs/t");
    for f in ["config.json", "report.json", "loss_curve.csv", "model.ckpt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    ok(&microcount(
        tmp.path(),
        &["--run-name", "e", "eval", "--checkpoint", "runs/t/model.ckpt", "--manifest", "runs/data/dataset"],
    ));
    let csv = std::fs::read_to_string(tmp.path().join("runs/e/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let missing = microcount(tmp.path(), &["eval", "--checkpoint", "nope.ckpt", "--manifest", "runs/data/dataset"]);
    assert!(!missing.status.success());
}

#[test]
fn bench_table_covers_every_preset_in_cost_order() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&microcount(tmp.path(), &["--run-name", "b", "bench"]));
    let csv = std::fs::read_to_string(tmp.path().join("runs/b/costs.csv")).unwrap();
    let rows: Vec<(String, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[3].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 12);
    let macs = |name: &str| rows.iter().find(|r| r.0 == name).unwrap().1;
    let order = ["crossvit-ti", "parallelvit-ti", "vit-vanilla", "resnet101", "transcrowd-t"];
    for w in order.windows(2) {
        assert!(macs(w[0]) < macs(w[1]), "{} vs {}", w[0], w[1]);
    }
}
