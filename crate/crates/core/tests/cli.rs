use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use leda::cli::{list_files, verify_manifest, Table, MANIFEST};

fn leda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leda"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> PathBuf {
    let out = leda(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUICK: [&str; 6] = [
    "--set",
    "autoencoder.steps=2",
    "--set",
    "denoiser.steps=2",
    "--set",
    "data.photon_count=5000",
];

fn gen(dir: &Path, train: usize, test: usize) -> PathBuf {
    let mut args = vec!["gen-phantoms", "--quiet", "--out", s(dir)];
    let (a, b) = (train.to_string(), test.to_string());
    args.extend(["--count-train", &a, "--count-test", &b]);
    args.extend(QUICK);
    ok(&args)
}

fn hashes(dir: &Path) -> String {
    fs::read_to_string(dir.join(MANIFEST)).unwrap()
}

#[test]
fn gen_phantoms_count_manifest_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let a = gen(&tmp.path().join("a"), 5, 3);
    let files = list_files(&a).unwrap();
    let count = |prefix: &str| files.iter().filter(|f| f.starts_with(prefix) && f.ends_with(".cti")).count();
    assert_eq!(count("train/ndct/"), 5);
    assert_eq!(count("train/ldct/"), 5);
    assert_eq!(count("test/ndct/"), 3);
    assert_eq!(count("test/ldct/"), 3);
    assert!(verify_manifest(&a).unwrap().is_empty());
    let listed = hashes(&a).lines().count();
    assert_eq!(listed, files.len() - 1);

    let b = gen(&tmp.path().join("b"), 5, 3);
    assert_eq!(hashes(&a), hashes(&b));
}

#[test]
fn gen_phantoms_refuses_non_empty_target_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("keep.txt"), "x").unwrap();
    let out = leda(&["gen-phantoms", "--quiet", "--out", s(&dir), "--count-train", "1", "--count-test", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error ["));
    ok(&["gen-phantoms", "--quiet", "--force", "--out", s(&dir), "--count-train", "1", "--count-test", "1"]);
    assert!(verify_manifest(&dir).unwrap().is_empty());
}

#[test]
fn exit_codes_follow_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    let out = leda(&["train-ae", "--quiet", "--data", s(&missing), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[missing-prerequisite]"));

    let data = gen(&tmp.path().join("data"), 1, 1);
    let out = leda(&["train-denoiser", "--quiet", "--data", s(&data), "--autoencoder", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));

    let out = leda(&["eval", "--quiet", "--data", s(&data), "--set", "denoiser.lambda=-1", "--passthrough"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[config]"));

    let out = leda(&["eval", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(3));

    let out = leda(&["eval", "--quiet", "--config", s(&missing), "--data", s(&data), "--passthrough"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn passthrough_eval_reproduces_noisy_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen(&tmp.path().join("data"), 1, 4);
    let runs = tmp.path().join("runs");
    let run = ok(&["eval", "--quiet", "--data", s(&data), "--out", s(&runs), "--passthrough"]);
    let t = Table::read(&run.join("metrics-noisy.csv")).unwrap();
    assert_eq!(t.rows.len(), 4);

    let pairs = leda::ctdata::load_split(&data, leda::ctdata::Split::Test).unwrap();
    let noisy: Vec<_> = pairs.iter().map(|p| p.ldct().clone()).collect();
    let refs: Vec<_> = pairs.iter().map(|p| p.ndct().clone()).collect();
    let direct = leda::metrics::evaluate_pairs(&noisy, &refs, leda::ctdata::WindowSpec::ABDOMINAL).unwrap();
    let psnr = t.numbers("psnr").unwrap();
    for (p, d) in psnr.iter().zip(&direct.pairs) {
        assert_eq!(*p, d.psnr);
    }
    assert!(fs::read_to_string(run.join("table.md")).unwrap().contains("noisy"));
    assert!(run.join("config.txt").is_file());
}

#[test]
fn pipeline_smoke_and_config_echo() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen(&tmp.path().join("data"), 2, 2);
    let before = hashes(&data);
    let runs = tmp.path().join("runs");
    let mut args = vec!["train-ae", "--quiet", "--data", s(&data), "--out", s(&runs)];
    args.extend(QUICK);
    let ae = ok(&args);
    assert!(ae.join("autoencoder.manifest").is_file());
    assert_eq!(Table::read(&ae.join("history.csv")).unwrap().rows.len(), 2);

    let mut args = vec!["train-denoiser", "--quiet", "--data", s(&data), "--autoencoder", s(&ae), "--out", s(&runs)];
    args.extend(QUICK);
    let den = ok(&args);
    let echo = fs::read_to_string(den.join("config.txt")).unwrap();
    assert!(echo.contains("command = train-denoiser") || echo.contains("command=train-denoiser"), "{echo}");
    assert!(echo.contains("input.autoencoder"));
    assert!(echo.contains("seed"));

    let run = ok(&["eval", "--quiet", "--data", s(&data), "--out", s(&runs), "--denoiser", s(&den), "--passthrough"]);
    let summary = Table::read(&run.join("summary.csv")).unwrap();
    assert_eq!(summary.column("label").unwrap(), vec!["noisy", "LEDA"]);

    let ex = ok(&["explain", "--quiet", "--autoencoder", s(&ae), "--data", s(&data), "--limit", "1", "--out", s(&runs)]);
    let txt: Vec<_> = list_files(&ex).unwrap().into_iter().filter(|f| f.ends_with(".txt") && f.starts_with("tokens-")).collect();
    assert_eq!(txt.len(), 1);

    let plots = ok(&[
        "plot",
        "--quiet",
        "--history",
        s(&ae.join("history.csv")),
        "--metrics",
        s(&run.join("summary.csv")),
        "--out",
        s(&runs),
    ]);
    for f in ["loss-semantic.svg", "summary.svg", "metric-psnr.svg"] {
        assert!(fs::metadata(plots.join(f)).unwrap().len() > 0, "{f}");
    }
    assert_eq!(hashes(&data), before);
    assert!(verify_manifest(&data).unwrap().is_empty());
}

#[test]
fn plot_is_deterministic_and_names_missing_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("h.csv");
    let mut text = String::from("step,mse,continuous,discrete,total,lr\n");
    for i in 0..10 {
        let v = 1.0 / (i + 1) as f64;
        text.push_str(&format!("{i},{v},{},{},{},0.0001\n", v / 2.0, v / 4.0, v * 1.75));
    }
    fs::write(&csv, text).unwrap();
    let runs = tmp.path().join("runs");
    let a = ok(&["plot", "--quiet", "--history", s(&csv), "--out", s(&runs)]);
    let b = ok(&["plot", "--quiet", "--history", s(&csv), "--out", s(&runs)]);
    assert_ne!(a, b);
    for f in list_files(&a).unwrap() {
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{f}");
    }
    assert!(a.join("loss-continuous.svg").is_file());

    let bad = tmp.path().join("ae.csv");
    fs::write(&bad, "step,recon,commit,gan,perceptual,omega,total,lr\n0,1,1,1,1,1,1,1\n").unwrap();
    let out = leda(&["plot", "--quiet", "--history", s(&bad), "--out", s(&runs)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`semantic`"));

    let junk = tmp.path().join("junk.csv");
    fs::write(&junk, "step,mse\n0,1,2\n").unwrap();
    let out = leda(&["plot", "--quiet", "--history", s(&junk), "--out", s(&runs)]);
    assert_eq!(out.status.code(), Some(3));
}
