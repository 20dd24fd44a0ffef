#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::{Command, Output};

use ccpl_cli::imageio::{read_rgb_png, write_rgb_png};
use ccpl_core::features::load_features;
use ccpl_core::fit::apply_model;
use ccpl_core::stain::DEFAULT_I0;
use ccpl_core::RgbRaster;
use serde_json::Value;

fn ccpl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccpl"))
        .args(args)
        .env_remove("CCPL_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes `n` tissue images into both directories; `real` gets a D-shifted copy.
fn pair_dirs(root: &Path, n: u64, identical: bool) -> (std::path::PathBuf, std::path::PathBuf) {
    let (gen, real) = (root.join("gen"), root.join("real"));
    std::fs::create_dir_all(&gen).unwrap();
    std::fs::create_dir_all(&real).unwrap();
    let shift = common::known_model();
    for i in 0..n {
        let img = common::tissue(i, 32);
        let name = format!("tile_{i:02}.png");
        write_rgb_png(gen.join(&name), &img).unwrap();
        let other = if identical { img } else { apply_model(&shift, &img, DEFAULT_I0) };
        write_rgb_png(real.join(&name), &other).unwrap();
    }
    (gen, real)
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()));
    rows
}

fn report_args<'a>(gen: &'a Path, real: &'a Path, csv: &'a Path, json: &'a Path) -> Vec<&'a str> {
    vec![
        "report", "--gen-dir", s(gen), "--real-dir", s(real), "--out-csv", s(csv), "--out-json",
        s(json),
    ]
}

#[test]
fn identical_pairs_report_zero_losses() {
    let dir = tempfile::tempdir().unwrap();
    let (gen, real) = pair_dirs(dir.path(), 3, true);
    let (csv, json) = (dir.path().join("r.csv"), dir.path().join("r.json"));
    let o = ccpl(&report_args(&gen, &real, &csv, &json));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let rows = read_csv(&csv);
    assert_eq!(
        rows[0],
        ["identifier", "L_H", "L_D", "L_dual", "L_fd", "R_g", "R_r", "L_cross", "psnr", "ssim", "pcc", "errors"]
    );
    assert_eq!(rows.len(), 4);
    for row in &rows[1..] {
        for col in [1, 2, 3, 4, 7] {
            assert_eq!(row[col], "0", "{row:?}");
        }
        assert_eq!(row[5], row[6]);
        assert_eq!(&row[8..], ["inf", "1", "1", ""]);
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["pairs"], 3);
    assert_eq!(summary["failed"], 0);
    assert_eq!(summary["means"]["psnr"], "inf");
    assert_eq!(summary["means"]["L_dual"], 0.0);
    assert_eq!(summary["config"]["fod_h"]["threshold"], 0.15);
}

#[test]
fn report_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let (gen, real) = pair_dirs(dir.path(), 6, false);
    let mut outputs = Vec::new();
    for workers in ["1", "8"] {
        let csv = dir.path().join(format!("r{workers}.csv"));
        let json = dir.path().join(format!("r{workers}.json"));
        let mut args = report_args(&gen, &real, &csv, &json);
        args.extend(["--workers", workers]);
        assert_eq!(ccpl(&args).status.code(), Some(0));
        outputs.push(std::fs::read(&csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn unreadable_file_fails_only_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let (gen, real) = pair_dirs(dir.path(), 3, false);
    std::fs::write(gen.join("tile_01.png"), b"truncated").unwrap();
    let (csv, json) = (dir.path().join("r.csv"), dir.path().join("r.json"));
    let o = ccpl(&report_args(&gen, &real, &csv, &json));
    assert_eq!(o.status.code(), Some(2));

    let rows = read_csv(&csv);
    assert_eq!(rows.len(), 4);
    assert!(rows[2][11].contains("tile_01.png"), "{:?}", rows[2]);
    assert!(rows[2][1..11].iter().all(String::is_empty));
    for i in [1, 3] {
        assert!(rows[i][11].is_empty());
        assert!(rows[i][1..11].iter().all(|c| !c.is_empty()));
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["failed"], 1);
    assert_eq!(summary["errors"][0]["identifier"], "tile_01.png");
}

#[test]
fn disjoint_directories_are_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let (gen, real) = (dir.path().join("g"), dir.path().join("r"));
    std::fs::create_dir_all(&gen).unwrap();
    std::fs::create_dir_all(&real).unwrap();
    write_rgb_png(gen.join("a.png"), &common::tissue(0, 16)).unwrap();
    write_rgb_png(real.join("b.png"), &common::tissue(0, 16)).unwrap();
    let (csv, json) = (dir.path().join("r.csv"), dir.path().join("r.json"));
    let o = ccpl(&report_args(&gen, &real, &csv, &json));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no file names in common"));
}

#[test]
fn config_file_from_environment_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let (gen, real) = pair_dirs(dir.path(), 1, false);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"dcp": {"alpha_weight": 0.4, "n_bins": 16}}"#).unwrap();
    let (csv, json) = (dir.path().join("r.csv"), dir.path().join("r.json"));
    let mut args = report_args(&gen, &real, &csv, &json);
    args.extend(["--n-bins", "8"]);
    let o = Command::new(env!("CARGO_BIN_EXE_ccpl"))
        .args(&args)
        .env("CCPL_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["config"]["dcp"]["alpha_weight"], 0.4);
    assert_eq!(summary["config"]["dcp"]["n_bins"], 8);
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("a.png");
    write_rgb_png(&img, &common::tissue(0, 16)).unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"fd": {"beta": 3.0}}"#).unwrap();
    let o = ccpl(&["fd-loss", "--gen", s(&img), "--real", s(&img), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn non_png_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let jpeg = dir.path().join("x.jpg");
    std::fs::write(&jpeg, [0xFF, 0xD8, 0xFF, 0xE0, 0, 16, b'J', b'F', b'I', b'F', 0]).unwrap();
    let o = ccpl(&["dcp-loss", "--gen", s(&jpeg), "--real", s(&jpeg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("only 8-bit RGB PNG"));
}

#[test]
fn single_pair_losses() {
    let dir = tempfile::tempdir().unwrap();
    let (gen, real) = pair_dirs(dir.path(), 1, false);
    let (g, r) = (gen.join("tile_00.png"), real.join("tile_00.png"));

    let dcp = stdout_json(&ccpl(&["dcp-loss", "--gen", s(&g), "--real", s(&r)]));
    let (l_h, l_d) = (dcp["L_H"].as_f64().unwrap(), dcp["L_D"].as_f64().unwrap());
    assert!((dcp["L_dual"].as_f64().unwrap() - (0.1 * l_h + 0.9 * l_d)).abs() < 1e-12);
    let same = stdout_json(&ccpl(&["dcp-loss", "--gen", s(&g), "--real", s(&g)]));
    assert_eq!(same["L_dual"], 0.0);
    let endpoint = stdout_json(&ccpl(&["dcp-loss", "--gen", s(&g), "--real", s(&r), "--alpha-weight", "1"]));
    assert_eq!(endpoint["L_dual"], dcp["L_H"]);

    let fd = stdout_json(&ccpl(&["fd-loss", "--gen", s(&g), "--real", s(&r)]));
    assert!(fd["L_fd"].as_f64().unwrap() > 0.0);
    assert!(fd.get("L_cos").is_some() && fd.get("L_L2").is_some());

    let toy = stdout_json(&ccpl(&["nmcc", "--gen", s(&g), "--real", s(&r), "--toy-extractor"]));
    let default = stdout_json(&ccpl(&["nmcc", "--gen", s(&g), "--real", s(&r)]));
    assert_eq!(toy, default);
    assert!(toy["L_cross"].as_f64().unwrap() >= 0.0);
}

#[test]
fn nmcc_from_precomputed_channel_features() {
    let dir = tempfile::tempdir().unwrap();
    let (gen, real) = pair_dirs(dir.path(), 1, false);
    let (g, r) = (gen.join("tile_00.png"), real.join("tile_00.png"));
    let (fg, fr) = (dir.path().join("g.ccf"), dir.path().join("r.ccf"));
    for (img, out) in [(&g, &fg), (&r, &fr)] {
        let v = stdout_json(&ccpl(&["features", "--input", s(img), "--out", s(out), "--stain-channels"]));
        assert_eq!(v["count"], 2);
    }
    let set = load_features(&fg).unwrap();
    assert_eq!(set.ids(), ["H", "D"]);

    let from_files = stdout_json(&ccpl(&["nmcc", "--features-gen", s(&fg), "--features-real", s(&fr)]));
    let from_images = stdout_json(&ccpl(&["nmcc", "--gen", s(&g), "--real", s(&r)]));
    // stored features are f32, so agreement is to single precision
    for key in ["R_g", "R_r"] {
        let (a, b) = (from_files[key].as_f64().unwrap(), from_images[key].as_f64().unwrap());
        assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0), "{key}: {a} vs {b}");
    }
}

#[test]
fn directory_features_and_eval_with_frechet() {
    let dir = tempfile::tempdir().unwrap();
    let (gen, real) = pair_dirs(dir.path(), 4, false);
    let (fg, fr) = (dir.path().join("g.ccf"), dir.path().join("r.ccf"));
    stdout_json(&ccpl(&["features", "--input-dir", s(&gen), "--out", s(&fg)]));
    stdout_json(&ccpl(&["features", "--input-dir", s(&real), "--out", s(&fr)]));
    let set = load_features(&fg).unwrap();
    assert_eq!(set.len(), 4);
    assert_eq!(set.dim(), 46);
    assert_eq!(set.ids()[0], "tile_00.png");
    assert!(fg.with_extension("ccf.json").exists());

    let fd = stdout_json(&ccpl(&[
        "fd-loss", "--features-gen", s(&fg), "--features-real", s(&fr), "--id", "tile_02.png",
    ]));
    assert!(fd["L_fd"].as_f64().unwrap() > 0.0);

    let (csv, json) = (dir.path().join("e.csv"), dir.path().join("e.json"));
    let o = ccpl(&[
        "eval", "--gen-dir", s(&gen), "--real-dir", s(&real), "--gen-features", s(&fg),
        "--real-features", s(&fr), "--out-csv", s(&csv), "--out-json", s(&json),
    ]);
    let v = stdout_json(&o);
    assert!(v["frechet"].as_f64().unwrap() > 0.0);
    let rows = read_csv(&csv);
    assert_eq!(rows[0], ["identifier", "psnr", "ssim", "pcc", "errors"]);
    assert_eq!(rows.len(), 5);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["frechet"], v["frechet"]);
}

#[test]
fn separate_and_fod_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("tile.png");
    write_rgb_png(&img, &common::tissue(3, 24)).unwrap();
    let out = dir.path().join("sep");
    let v = stdout_json(&ccpl(&["separate", "--input", s(&img), "--out-dir", s(&out)]));
    for c in ["H", "E", "D"] {
        let p = out.join(format!("tile_{c}.png"));
        assert_eq!(read_rgb_png(&p).unwrap().dims(), (24, 24));
        assert!(v["mean_concentration"][c].is_number());
    }

    let fod = dir.path().join("fod_d.png");
    let v = stdout_json(&ccpl(&["fod", "--input", s(&img), "--channel", "D", "--out", s(&fod)]));
    assert_eq!(v["sidecar"]["scale"], 10_000.0);
    let side: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fod_d.png.json")).unwrap()).unwrap();
    assert_eq!(side["channel"], "D");
    assert_eq!(side["T"], 0.15);
    assert_eq!(side["alpha"], 1.8);
    let png = image::open(&fod).unwrap();
    assert_eq!(png.color(), image::ColorType::L16);
}

#[test]
fn fit_writes_model_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("pairs");
    std::fs::create_dir_all(root.join("source")).unwrap();
    std::fs::create_dir_all(root.join("target")).unwrap();
    for (i, p) in common::synthetic_pairs().iter().take(2).enumerate() {
        write_rgb_png(root.join("source").join(format!("p{i}.png")), &p.source).unwrap();
        write_rgb_png(root.join("target").join(format!("p{i}.png")), &p.target).unwrap();
    }
    let (model, trace, emit) = (dir.path().join("m.json"), dir.path().join("t.csv"), dir.path().join("emit"));
    let v = stdout_json(&ccpl(&[
        "fit", "--pairs-dir", s(&root), "--out-model", s(&model), "--trace", s(&trace),
        "--emit-dir", s(&emit), "--lambda-dual", "0", "--lambda-fd", "0", "--lambda-cross", "0",
        "--lambda-ssim", "0", "--max-iters", "25", "--workers", "2",
    ]));
    assert_eq!(v["pairs"], 2);

    let m: Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(m["A"].as_array().unwrap().len(), 3);
    assert_eq!(m["b"].as_array().unwrap().len(), 3);

    let rows = read_csv(&trace);
    assert_eq!(rows[0], ["iteration", "step", "total", "mse", "dual", "fd", "cross", "ssim"]);
    let totals: Vec<f64> = rows[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(totals.len() > 1);
    assert!(totals.windows(2).all(|w| w[1] <= w[0]));
    assert!(emit.join("p0.png").exists() && emit.join("p1.png").exists());
}
