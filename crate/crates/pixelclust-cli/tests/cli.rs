//! End-to-end checks of the `pixelclust` binary against a small
//! generated dataset: every subcommand runs, files land where promised,
//! and repeated runs are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pixelclust")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("PIXELCLUST_DATA")
        .output()
        .expect("spawning the binary")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Writes one binary 8-bit PGM.
fn write_pgm(path: &Path, w: usize, h: usize, samples: &[u8]) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(samples);
    fs::write(path, bytes).unwrap();
}

/// Three classes at separated base intensities with a deterministic
/// per-pixel wiggle; trivially classifiable, but with enough distinct
/// pixel-vectors for small cluster counts.
fn make_dataset(root: &Path, classes: usize, per_class: usize, w: usize, h: usize) {
    for c in 0..classes {
        let dir = root.join(format!("person{c}"));
        fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            let samples: Vec<u8> = (0..w * h)
                .map(|j| (40 + c * 70 + ((i * 7 + j * 3) % 8) * 4) as u8)
                .collect();
            write_pgm(&dir.join(format!("img{i}.pgm")), w, h, &samples);
        }
    }
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    out: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("faces");
    let out = dir.path().join("out");
    make_dataset(&root, 3, 4, 6, 5);
    Fixture {
        root,
        out,
        _dir: dir,
    }
}

fn fit_fixture(fx: &Fixture) {
    run_ok(&[
        "fit",
        "--dataset",
        fx.root.to_str().unwrap(),
        "--clusters-formed",
        "4",
        "--seed",
        "7",
        "--out",
        fx.out.to_str().unwrap(),
    ]);
}

#[test]
fn fit_writes_partition_projection_and_manifest() {
    let fx = fixture();
    let stdout = run_ok(&[
        "fit",
        "--dataset",
        fx.root.to_str().unwrap(),
        "--n",
        "4",
        "--seed",
        "7",
        "--out",
        fx.out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("formed 4 regions"), "stdout: {stdout}");

    let partition = fs::read_to_string(fx.out.join("partition.txt")).unwrap();
    assert!(partition.starts_with("6 5 4\n"), "header: {partition}");
    assert_eq!(partition.lines().count(), 1 + 30);

    let projection = fs::read_to_string(fx.out.join("projection.txt")).unwrap();
    assert!(projection.starts_with("6 5 4 30\n"), "header: {projection}");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fx.out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["clusters_formed"], 4);
    assert_eq!(manifest["dataset"]["classes"], 3);
    assert_eq!(manifest["dataset"]["samples"], 12);
    assert_eq!(manifest["dataset"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn fit_resolves_dataset_names_through_the_environment() {
    let fx = fixture();
    let out = Command::new(bin())
        .args([
            "fit",
            "--dataset",
            "faces",
            "--clusters-formed",
            "3",
            "--out",
            fx.out.to_str().unwrap(),
        ])
        .env("PIXELCLUST_DATA", fx.root.parent().unwrap())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // Without the variable, the bare name must fail with a pointer to it.
    let out = run(&["fit", "--dataset", "faces", "--n", "3", "--out", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("PIXELCLUST_DATA"));
}

#[test]
fn project_prints_one_feature_per_region() {
    let fx = fixture();
    fit_fixture(&fx);
    let stdout = run_ok(&[
        "project",
        "--model",
        fx.out.join("projection.txt").to_str().unwrap(),
        "--image",
        fx.root.join("person0/img0.pgm").to_str().unwrap(),
    ]);
    let values: Vec<f64> = stdout
        .lines()
        .map(|l| l.parse().expect("feature lines parse as floats"))
        .collect();
    assert_eq!(values.len(), 4);
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));

    // The same features land in a file with --out.
    let feature_path = fx.out.join("features.txt");
    run_ok(&[
        "project",
        "--model",
        fx.out.join("projection.txt").to_str().unwrap(),
        "--image",
        fx.root.join("person0/img0.pgm").to_str().unwrap(),
        "--out",
        feature_path.to_str().unwrap(),
    ]);
    assert_eq!(fs::read_to_string(&feature_path).unwrap(), stdout);
}

#[test]
fn reconstruct_writes_a_matching_size_pgm() {
    let fx = fixture();
    fit_fixture(&fx);
    let recon = fx.out.join("recon.pgm");
    run_ok(&[
        "reconstruct",
        "--model",
        fx.out.join("projection.txt").to_str().unwrap(),
        "--image",
        fx.root.join("person1/img2.pgm").to_str().unwrap(),
        "--out",
        recon.to_str().unwrap(),
    ]);
    let bytes = fs::read(&recon).unwrap();
    assert!(bytes.starts_with(b"P5\n6 5\n255\n"));
    assert_eq!(bytes.len(), "P5\n6 5\n255\n".len() + 30);
}

#[test]
fn classify_recovers_the_class_of_a_training_image() {
    let fx = fixture();
    fit_fixture(&fx);
    for c in 0..3 {
        let stdout = run_ok(&[
            "classify",
            "--model",
            fx.out.join("projection.txt").to_str().unwrap(),
            "--dataset",
            fx.root.to_str().unwrap(),
            "--image",
            fx.root
                .join(format!("person{c}/img1.pgm"))
                .to_str()
                .unwrap(),
        ]);
        assert_eq!(stdout.trim(), format!("person{c}"));
    }
}

#[test]
fn size_mismatches_are_rejected_with_a_clear_message() {
    let fx = fixture();
    fit_fixture(&fx);
    let odd = fx.out.join("odd.pgm");
    write_pgm(&odd, 3, 3, &[128; 9]);
    let out = run(&[
        "project",
        "--model",
        fx.out.join("projection.txt").to_str().unwrap(),
        "--image",
        odd.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("3x3") && stderr.contains("6x5"), "stderr: {stderr}");
}

#[test]
fn region_map_renders_the_partition() {
    let fx = fixture();
    fit_fixture(&fx);
    let map = fx.out.join("map.pgm");
    let stdout = run_ok(&[
        "region-map",
        "--partition",
        fx.out.join("partition.txt").to_str().unwrap(),
        "--out",
        map.to_str().unwrap(),
    ]);
    assert!(stdout.contains("4 regions"));
    let bytes = fs::read(&map).unwrap();
    assert!(bytes.starts_with(b"P5\n6 5\n255\n"));
    // Four regions spread over the full gray range: both extremes occur.
    let samples = &bytes["P5\n6 5\n255\n".len()..];
    assert!(samples.contains(&0) && samples.contains(&255));
}

fn experiment_config(fx: &Fixture) -> PathBuf {
    let path = fx.root.parent().unwrap().join("config.json");
    let body = format!(
        r#"{{
  "dataset_name": "faces",
  "dataset_root": "{}",
  "repetitions": 2,
  "base_seed": 5,
  "clusters_formed": [2, 4],
  "projection_training_classes": [1],
  "few_classes_features": 3,
  "overcluster_formed": [4],
  "overcluster_kept": [2, 4]
}}"#,
        fx.root.display()
    );
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn experiment_writes_deterministic_results() {
    let fx = fixture();
    let config = experiment_config(&fx);
    let out_a = fx.out.join("a");
    let out_b = fx.out.join("b");
    for out in [&out_a, &out_b] {
        let stdout = run_ok(&[
            "experiment",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(stdout.contains("k_sweep: 4 rows"), "stdout: {stdout}");
        assert!(stdout.contains("few_classes: 4 rows"), "stdout: {stdout}");
        assert!(stdout.contains("overcluster: 4 rows"), "stdout: {stdout}");
    }

    let results_a = fs::read(out_a.join("results.csv")).unwrap();
    let results_b = fs::read(out_b.join("results.csv")).unwrap();
    assert_eq!(results_a, results_b);
    assert_eq!(
        fs::read(out_a.join("summary.csv")).unwrap(),
        fs::read(out_b.join("summary.csv")).unwrap()
    );

    let text = String::from_utf8(results_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,dataset,method,clusters_formed,features_kept,repetition,seed,accuracy"
    );
    assert_eq!(lines.count(), 12);
    assert!(text.contains("eigen_baseline"));
    assert!(text.contains("region_means"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["base_seed"], 5);
    assert_eq!(manifest["dataset"]["classes"], 3);
    assert_eq!(manifest["dataset"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn experiment_families_can_be_filtered() {
    let fx = fixture();
    let config = experiment_config(&fx);
    let stdout = run_ok(&[
        "experiment",
        "--config",
        config.to_str().unwrap(),
        "--families",
        "k_sweep",
        "--out",
        fx.out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("k_sweep: 4 rows"));
    assert!(!stdout.contains("few_classes:"));

    let text = fs::read_to_string(fx.out.join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);

    let out = run(&[
        "experiment",
        "--config",
        config.to_str().unwrap(),
        "--families",
        "nonsense",
        "--out",
        fx.out.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}
