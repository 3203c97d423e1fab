//! End-to-end tests of the command-line interface. Every artifact goes
//! through real files in a temporary directory, and every check reads the
//! process exit status and printed JSON exactly as a shell user would.

use std::path::Path;
use std::process::{Command, Output};

use pixseal::corpus::{generate, CorpusPreset};
use pixseal::raster::{load_mask, save_image, save_mask, MaskMap};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pixseal"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("failed to spawn the binary")
}

/// Runs the binary, asserts success, and returns trimmed stdout.
fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed with {:?}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap().trim().to_string()
}

fn json(stdout: &str) -> serde_json::Value {
    serde_json::from_str(stdout).unwrap_or_else(|e| panic!("bad JSON: {e}\n{stdout}"))
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

/// Writes a textured test image and returns its path.
fn write_photo(dir: &TempDir, name: &str, seed: u64, side: usize) -> String {
    let img = &generate(seed, 1, side, side, CorpusPreset::PhotographicStyle)[0];
    let path = p(dir, name);
    save_image(img, &path).unwrap();
    path
}

/// Key, clean image, and a full-frame watermarked copy carrying `deadbeef`.
fn standard_setup(dir: &TempDir) -> (String, String, String) {
    let key = p(dir, "key.psky");
    run_ok(&["gen-key", "--out", &key, "--seed", "11"]);
    let clean = write_photo(dir, "clean.png", 301, 128);
    let wm = p(dir, "wm.png");
    run_ok(&["embed", "--input", &clean, "--out", &wm, "--key", &key, "--msg", "deadbeef"]);
    (key, clean, wm)
}

#[test]
fn key_embed_decode_round_trip() {
    let dir = TempDir::new().unwrap();
    let key = p(&dir, "key.psky");
    let gen = json(&run_ok(&["gen-key", "--out", &key, "--seed", "11"]));
    assert_eq!(gen["n_bits"], 32);
    assert_eq!(gen["tile"], 8);
    assert!(Path::new(&key).exists());

    let clean = write_photo(&dir, "clean.png", 301, 128);
    let wm = p(&dir, "wm.png");
    let emb = json(&run_ok(&[
        "embed", "--input", &clean, "--out", &wm, "--key", &key, "--msg", "deadbeef",
    ]));
    let psnr = emb["psnr"].as_f64().unwrap();
    assert!((30.0..60.0).contains(&psnr), "embedding PSNR {psnr}");

    let decoded = run_ok(&["decode", "--input", &wm, "--key", &key, "--tau", "0.9"]);
    assert_eq!(decoded, "deadbeef");
}

#[test]
fn detect_flags_watermarked_but_not_clean() {
    let dir = TempDir::new().unwrap();
    let (key, clean, wm) = standard_setup(&dir);

    let hit = json(&run_ok(&["detect", "--input", &wm, "--key", &key, "--tau", "0.9"]));
    assert_eq!(hit["flagged"], true);
    assert!(hit["s_det"].as_f64().unwrap() > 0.5);

    let miss = json(&run_ok(&["detect", "--input", &clean, "--key", &key, "--tau", "0.9"]));
    assert_eq!(miss["flagged"], false);
    assert!(miss["s_det"].as_f64().unwrap() < 0.07);
}

#[test]
fn wamd_tensor_round_trip_needs_no_key() {
    let dir = TempDir::new().unwrap();
    let (key, _, wm) = standard_setup(&dir);

    let tensor = p(&dir, "planes.wamd");
    let ext = json(&run_ok(&["extract", "--input", &wm, "--out", &tensor, "--key", &key]));
    assert_eq!(ext["n_bits"], 32);
    assert_eq!(ext["width"], 128);

    // Downstream commands read the tensor directly, no key required.
    let decoded = run_ok(&["decode", "--input", &tensor, "--tau", "0.9"]);
    assert_eq!(decoded, "deadbeef");
    let det = json(&run_ok(&["detect", "--input", &tensor, "--tau", "0.9"]));
    assert_eq!(det["flagged"], true);

    let located = p(&dir, "where.png");
    let loc = json(&run_ok(&["locate", "--input", &tensor, "--out", &located, "--tau", "0.9"]));
    assert!(loc["pixels"].as_u64().unwrap() > 10_000);
    let mask = load_mask(&located).unwrap();
    assert!(mask.count_ones() > 10_000);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = TempDir::new().unwrap();
    let (key, clean, _) = standard_setup(&dir);

    // 2: a domain failure, decoding with nothing above threshold.
    let out = run(&["decode", "--input", &clean, "--key", &key, "--tau", "0.999"]);
    assert_eq!(out.status.code(), Some(2), "no-watermark decode");

    // 2: malformed message hex.
    let out = run(&[
        "embed", "--input", &clean, "--out", &p(&dir, "x.png"), "--key", &key, "--msg", "zz",
    ]);
    assert_eq!(out.status.code(), Some(2), "bad hex");

    // 3: unreadable input file.
    let out = run(&["detect", "--input", &p(&dir, "missing.png"), "--key", &key]);
    assert_eq!(out.status.code(), Some(3), "missing file");

    // 1: usage errors from the argument parser.
    let out = run(&["decode"]);
    assert_eq!(out.status.code(), Some(1), "missing required flag");
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1), "unknown subcommand");

    // 0: help.
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0), "help");
}

#[test]
fn calibrate_writes_config_and_detect_consumes_it() {
    let dir = TempDir::new().unwrap();
    let (key, _, wm) = standard_setup(&dir);
    let negatives = dir.path().join("negatives");
    std::fs::create_dir(&negatives).unwrap();
    for i in 0..4 {
        let img = &generate(900 + i, 1, 96, 96, CorpusPreset::PhotographicStyle)[0];
        save_image(img, negatives.join(format!("n{i}.png"))).unwrap();
    }

    let cfg = p(&dir, "pixseal.conf");
    let cal = json(&run_ok(&[
        "calibrate",
        "--dir",
        negatives.to_str().unwrap(),
        "--target-fpr",
        "1e-2",
        "--config",
        &cfg,
        "--key",
        &key,
    ]));
    let tau = cal["tau"].as_f64().unwrap();
    assert!((0.5..1.0).contains(&tau), "calibrated tau {tau}");
    assert_eq!(cal["pixels"], 4 * 96 * 96);
    let text = std::fs::read_to_string(&cfg).unwrap();
    assert!(text.contains("tau ="), "config written: {text}");

    let det = json(&run_ok(&["detect", "--input", &wm, "--key", &key, "--config", &cfg]));
    assert_eq!(det["flagged"], true);
}

#[test]
fn decode_multi_separates_two_regions() {
    let dir = TempDir::new().unwrap();
    let key = p(&dir, "key.psky");
    run_ok(&["gen-key", "--out", &key, "--seed", "23"]);
    let clean = write_photo(&dir, "clean.png", 302, 128);

    let mut a = MaskMap::zeros(128, 128);
    a.fill_rect(8, 8, 48, 48);
    let mask_a = p(&dir, "a.png");
    save_mask(&a, &mask_a).unwrap();
    let mut b = MaskMap::zeros(128, 128);
    b.fill_rect(72, 72, 48, 48);
    let mask_b = p(&dir, "b.png");
    save_mask(&b, &mask_b).unwrap();

    let one = p(&dir, "one.png");
    let two = p(&dir, "two.png");
    run_ok(&[
        "embed", "--input", &clean, "--out", &one, "--key", &key, "--msg", "11111111",
        "--mask", &mask_a,
    ]);
    run_ok(&[
        "embed", "--input", &one, "--out", &two, "--key", &key, "--msg", "22222222",
        "--mask", &mask_b,
    ]);

    let assignment = p(&dir, "assignment.png");
    let out = json(&run_ok(&[
        "decode-multi",
        "--input",
        &two,
        "--key",
        &key,
        "--tau",
        "0.5",
        "--epsilon",
        "1",
        "--min-samples",
        "500",
        "--window",
        "8",
        "--assignment",
        &assignment,
    ]));
    let clusters = out.as_array().unwrap();
    assert_eq!(clusters.len(), 2, "clusters: {out}");
    let mut msgs: Vec<&str> = clusters.iter().map(|c| c["msg"].as_str().unwrap()).collect();
    msgs.sort();
    assert_eq!(msgs, ["11111111", "22222222"]);
    for c in clusters {
        assert!(c["pixels"].as_u64().unwrap() >= 500);
    }
    assert!(Path::new(&assignment).exists());
}

#[test]
fn gen_mask_protocol_and_augment_survival() {
    let dir = TempDir::new().unwrap();
    let (key, _, wm) = standard_setup(&dir);

    let stem = p(&dir, "proto.png");
    let gm = json(&run_ok(&[
        "gen-mask", "--kind", "protocol", "--width", "128", "--height", "128", "--count", "2",
        "--out", &stem,
    ]));
    let paths = gm["out"].as_array().unwrap();
    assert_eq!(paths.len(), 2);
    for path in paths {
        let m = load_mask(path.as_str().unwrap()).unwrap();
        assert!(m.count_ones() > 0);
    }

    // A mild valuemetric chain leaves the message recoverable.
    let aug = p(&dir, "aug.png");
    run_ok(&[
        "augment", "--input", &wm, "--out", &aug, "--chain", "jpeg:95,brightness:1.2",
    ]);
    let decoded = run_ok(&["decode", "--input", &aug, "--key", &key, "--tau", "0.9"]);
    assert_eq!(decoded, "deadbeef");

    // Geometric ops co-transform a mask through --mask/--mask-out.
    let mask_in = p(&dir, "m.png");
    let mut m = MaskMap::zeros(128, 128);
    m.fill_rect(0, 0, 64, 128);
    save_mask(&m, &mask_in).unwrap();
    let flipped_img = p(&dir, "flip.png");
    let flipped_mask = p(&dir, "flipm.png");
    run_ok(&[
        "augment", "--input", &wm, "--out", &flipped_img, "--op", "hflip",
        "--mask", &mask_in, "--mask-out", &flipped_mask,
    ]);
    let fm = load_mask(&flipped_mask).unwrap();
    assert_eq!(fm.count_ones(), 64 * 128, "horizontal flip keeps the area");
    assert_eq!(fm.get(0, 0), 1.0, "top rows stay on after a horizontal flip");
}

#[test]
fn eval_writes_json_and_csv_reports() {
    let dir = TempDir::new().unwrap();
    let out_json = p(&dir, "report.json");
    let out_csv = p(&dir, "report.csv");
    run_ok(&[
        "eval",
        "--scenario",
        "localization",
        "--synthetic",
        "2",
        "--size",
        "96",
        "--fractions",
        "0.25",
        "--out",
        &out_json,
        "--csv",
        &out_csv,
        "--seed",
        "5",
    ]);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_json).unwrap()).unwrap();
    assert_eq!(report["config"]["scenario"], "localization");
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["scenario"], "fraction:0.25");
    assert!(rows[0]["metrics"]["bit_acc"].as_f64().unwrap() > 0.9);

    let csv = std::fs::read_to_string(&out_csv).unwrap();
    assert!(csv.lines().count() >= 2, "csv has a header and a row: {csv}");
    assert!(csv.contains("fraction:0.25"));
}
