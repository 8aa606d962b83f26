use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use extreme_series::dataset::write_dataset;
use extreme_series::synthetic::{generate, SyntheticConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_extreme-series"))
}

fn run_in(dir: &Path, args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = bin();
    cmd.current_dir(dir).args(args);
    if let Some(n) = threads {
        cmd.env("RAYON_NUM_THREADS", n.to_string());
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_record(dir: &Path, n_cycles: usize) {
    let ds = generate(&SyntheticConfig {
        n_cycles,
        event_tail: 3.0,
        event_scale: 3.0,
        trend_slope: 1e-5,
        seed: 21,
        ..Default::default()
    })
    .unwrap();
    write_dataset(&ds, std::fs::File::create(dir.join("data.csv")).unwrap()).unwrap();
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_in(d.path(), &["--help"], None)), 0);
    assert_eq!(code(&run_in(d.path(), &["--version"], None)), 0);
    assert_eq!(code(&run_in(d.path(), &["fit", "--help"], None)), 0);
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_in(d.path(), &[], None)), 1);
    assert_eq!(code(&run_in(d.path(), &["frobnicate"], None)), 1);
    assert_eq!(code(&run_in(d.path(), &["fit", "--no-such-flag"], None)), 1);
    assert_eq!(code(&run_in(d.path(), &["fit", "--seed", "abc"], None)), 1);
    assert_eq!(
        code(&run_in(d.path(), &["fit", "--cost-quantile", "0.9", "--u-ell", "3"], None)),
        1
    );
}

#[test]
fn bad_config_exits_one() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.toml"), "seed = 1\nnot_a_key = 2\n").unwrap();
    let o = run_in(d.path(), &["fit", "--config", "bad.toml"], None);
    assert_eq!(code(&o), 1);
    std::fs::write(d.path().join("range.toml"), "[fit]\np_u = 1.5\n").unwrap();
    assert_eq!(code(&run_in(d.path(), &["fit", "--config", "range.toml"], None)), 1);
    assert_eq!(code(&run_in(d.path(), &["fit", "--config", "absent.toml"], None)), 1);
}

#[test]
fn missing_input_is_a_dataset_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), &["fit", "--input", "nowhere.csv", "--out", "out"], None);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("dataset"), "stderr: {err}");
    assert!(!d.path().join("out/model.json").exists());
}

#[test]
fn malformed_input_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("data.csv"), "M,timestamp,t1,t2\n1,2000-01-01,0.5,x\n").unwrap();
    let o = run_in(d.path(), &["fit", "--input", "data.csv", "--out", "out"], None);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_without_bundle_fails() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), &["simulate", "--out", "out"], None);
    assert_eq!(code(&o), 2);
}

#[test]
fn fit_and_simulate_are_byte_identical_across_runs_and_threads() {
    let runs: Vec<_> = [Some(1), Some(1), Some(4), None]
        .into_iter()
        .map(|threads| {
            let d = tempfile::tempdir().unwrap();
            write_record(d.path(), 6000);
            let fit = run_in(d.path(), &["fit", "--input", "data.csv", "--out", "out", "--seed", "9"], threads);
            assert_eq!(code(&fit), 0, "{}", String::from_utf8_lossy(&fit.stderr));
            let sim = run_in(
                d.path(),
                &["simulate", "--out", "out", "--seed", "9", "--n-sim", "300", "--retrend"],
                threads,
            );
            assert_eq!(code(&sim), 0, "{}", String::from_utf8_lossy(&sim.stderr));
            let files = tree(&d.path().join("out"));
            (d, files)
        })
        .collect();
    let first = &runs[0].1;
    for name in ["model.json", "batch.csv", "batch_retrended.csv", "fit_manifest.json", "simulate_manifest.json"] {
        assert!(first.contains_key(Path::new(name)), "missing {name}");
    }
    for (_, files) in &runs[1..] {
        assert_eq!(files.keys().collect::<Vec<_>>(), first.keys().collect::<Vec<_>>());
        for (name, bytes) in files {
            assert!(bytes == &first[name], "{} differs", name.display());
        }
    }

    let manifest: serde_json::Value = serde_json::from_slice(&first[Path::new("simulate_manifest.json")]).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["simulation"]["seed"], 9);
    assert_eq!(manifest["summary"]["n_sim"], 300);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn flags_override_config_file() {
    let d = tempfile::tempdir().unwrap();
    write_record(d.path(), 6000);
    std::fs::write(
        d.path().join("run.toml"),
        "seed = 3\ninput = \"data.csv\"\nout = \"from_file\"\n[fit]\ndelta = 2\n[simulation]\nn_sim = 50\n",
    )
    .unwrap();
    let fit = run_in(d.path(), &["fit", "--config", "run.toml", "--delta", "3", "--out", "o"], None);
    assert_eq!(code(&fit), 0, "{}", String::from_utf8_lossy(&fit.stderr));
    assert!(!d.path().join("from_file").exists());
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("o/fit_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["fit"]["delta"], 3);
    assert_eq!(m["seed"], 3);

    let sim = run_in(d.path(), &["simulate", "--config", "run.toml", "--out", "o", "--n-sim", "1"], None);
    assert_eq!(code(&sim), 0);
    let batch = std::fs::read_to_string(d.path().join("o/batch.csv")).unwrap();
    assert_eq!(batch.lines().count(), 2, "header plus exactly one series");
}

#[test]
fn validate_and_diagnose_write_their_tables() {
    let d = tempfile::tempdir().unwrap();
    write_record(d.path(), 6000);
    let common = ["--input", "data.csv", "--out", "out", "--seed", "4"];
    assert_eq!(code(&run_in(d.path(), &[&["fit"][..], &common].concat(), None)), 0);
    assert_eq!(code(&run_in(d.path(), &["simulate", "--out", "out", "--seed", "4"], None)), 0);

    std::fs::write(
        d.path().join("quick.toml"),
        "[validation]\nbootstrap = 200\nn_trees = 50\nchi = false\n",
    )
    .unwrap();
    let v = run_in(
        d.path(),
        &["validate", "--config", "quick.toml", "--input", "data.csv", "--out", "out", "--reps", "10"],
        None,
    );
    let c = code(&v);
    assert!(c == 0 || c == 2, "{}", String::from_utf8_lossy(&v.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.path().join("out/validation/report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"].as_bool().unwrap(), c == 0);
    for f in ["bands.csv", "extremogram.csv", "return_levels.csv", "classification.csv"] {
        assert!(d.path().join("out/validation").join(f).exists(), "missing {f}");
    }

    // an empty batch is a data error
    std::fs::write(d.path().join("empty.csv"), "draw_id,radius,initial_cycle,t1\n").unwrap();
    let e = run_in(
        d.path(),
        &["validate", "--input", "data.csv", "--out", "out", "--batch", "empty.csv"],
        None,
    );
    assert_eq!(code(&e), 2);

    let g = run_in(d.path(), &["diagnose", "--input", "data.csv", "--out", "out"], None);
    assert_eq!(code(&g), 0, "{}", String::from_utf8_lossy(&g.stderr));
    for f in ["acf_pacf.csv", "thresholds.csv", "shape_vs_k.csv", "convergence.csv"] {
        assert!(d.path().join("out/diagnose").join(f).exists(), "missing {f}");
    }
    assert!(d.path().join("out/diagnose_manifest.json").exists());
}
