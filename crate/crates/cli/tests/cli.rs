use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;
use wembed::ot::{exact_ot_lp, DiscreteMeasure};

fn wembed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wembed"))
        .args(args)
        .env_remove("WEMBED_OUT_ROOT")
        .env_remove("WEMBED_THREADS")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn wembed")
}

fn ok(args: &[&str]) -> String {
    let out = wembed(args);
    assert!(
        out.status.success(),
        "wembed {args:?} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn value_after(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.split_whitespace().next().unwrap().parse().unwrap()))
        .unwrap_or_else(|| panic!("no {key:?} in\n{stdout}"))
}

fn manifest(dir: &Path) -> Value {
    let hits: Vec<_> =
        fs::read_dir(dir).unwrap().filter_map(|e| e.ok()).filter(|e| e.file_name() == "manifest.json").collect();
    assert_eq!(hits.len(), 1);
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn assert_digests_match(m: &Value) {
    for entry in m["inputs"].as_array().unwrap().iter().chain(m["outputs"].as_array().unwrap()) {
        let bytes = fs::read(entry["path"].as_str().unwrap()).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), wembed::digest_bytes(&bytes));
    }
}

fn tiny_job(dir: &Path, epochs: usize, extra_specs: Value) -> PathBuf {
    let mut specs = json!([
        {"family": "normal", "mean": 0.0, "sd": 1.0},
        {"family": "normal", "mean": 1.0, "sd": 0.5},
        {"family": "uniform", "low": -1.0, "high": 1.0},
        {"family": "gamma", "shape": 2.0, "scale": 0.5}
    ]);
    specs.as_array_mut().unwrap().extend(extra_specs.as_array().unwrap().iter().cloned());
    let corpus = json!({"name": "tiny", "specs": specs, "draws_per_spec": 1, "sample_size": 20});
    let job = json!({
        "corpus": corpus,
        "heldout": corpus,
        "out_of_sample": {"name": "tiny_oos", "specs": [
            {"family": "normal", "mean": 0.5, "sd": 0.7},
            {"family": "dirac", "location": [0.0]},
            {"family": "binomial", "trials": 3, "prob": 0.5}
        ], "draws_per_spec": 1, "sample_size": 20},
        "train": {
            "epochs": epochs,
            "batch_size": 2,
            "schedule": {"kind": "constant"},
            "patience": null,
            "arch": {"phi_widths": [8, 8], "rho_hidden": [8], "output_dim": 2}
        },
        "eval": {
            "sample_size": 20,
            "translation_draws": 2,
            "scale_draws": 2,
            "dirac_steps": 3,
            "barycenter_grid": 40,
            "sweep_sizes": [10, 40],
            "sweep_repetitions": 3
        },
        "ablation_seeds": [0]
    });
    write(dir, "job.json", &serde_json::to_string_pretty(&job).unwrap())
}

#[test]
fn gen_default_preset_has_eight_families() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("c");
    let stdout = ok(&["gen", "--seed", "3", "--out", s(&out)]);
    let families = stdout.lines().find_map(|l| l.split_once("families: ")).unwrap().1;
    assert_eq!(families.split(", ").count(), 8, "{families}");
    assert!(stdout.contains("# gen config"));
    let m = manifest(&out);
    assert_eq!(m["status"], "complete");
    assert_eq!(m["seeds"], json!([3]));
    assert_digests_match(&m);
}

#[test]
fn gen_same_seed_gives_identical_corpus() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["gen", "--preset", "desk_1d", "--seed", "9", "--out", s(&a)]);
    ok(&["gen", "--preset", "desk_1d", "--seed", "9", "--out", s(&b)]);
    assert_eq!(fs::read(a.join("corpus.bin")).unwrap(), fs::read(b.join("corpus.bin")).unwrap());
}

#[test]
fn gen_bad_params_fail_with_message() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.json",
        r#"{"specs": [{"family": "normal", "mean": 0.0, "sd": -1.0}], "draws_per_spec": 1, "sample_size": 5}"#,
    );
    let out = wembed(&["gen", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sd"));
}

#[test]
fn gen_unknown_preset_lists_valid_ones() {
    let tmp = TempDir::new().unwrap();
    let out = wembed(&["gen", "--preset", "nope", "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("full_1d"));
}

#[test]
fn sinkhorn_between_two_points() {
    let tmp = TempDir::new().unwrap();
    let a = write(tmp.path(), "a.csv", "0\n");
    let b = write(tmp.path(), "b.csv", "1\n");
    let stdout = ok(&["sinkhorn", s(&a), s(&b), "--p", "1"]);
    assert!((value_after(&stdout, "distance ") - 1.0).abs() < 1e-12);
}

#[test]
fn sinkhorn_same_file_warns_about_bias() {
    let tmp = TempDir::new().unwrap();
    let a = write(tmp.path(), "a.csv", "x\n0.0\n0.5\n1.5\n");
    let out = wembed(&["sinkhorn", s(&a), s(&a), "--lambda", "5"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(value_after(&stdout, "distance ") > 0.0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("biased"));
}

#[test]
fn sinkhorn_large_lambda_tracks_lp() {
    let tmp = TempDir::new().unwrap();
    let xs = [0.0, 0.4, 1.1, 2.0];
    let ys = [0.3, 0.9, 1.0, 2.7];
    let file = |name, v: &[f64]| write(tmp.path(), name, &v.iter().map(|x| format!("{x}\n")).collect::<String>());
    let (a, b) = (file("a.csv", &xs), file("b.csv", &ys));
    let out_dir = tmp.path().join("run");
    let stdout = ok(&[
        "sinkhorn",
        s(&a),
        s(&b),
        "--p",
        "2",
        "--lambda",
        "200",
        "--tol",
        "1e-7",
        "--max-iter",
        "100000",
        "--out",
        s(&out_dir),
    ]);
    let lp = exact_ot_lp(
        &DiscreteMeasure::from_points_1d(&xs).unwrap(),
        &DiscreteMeasure::from_points_1d(&ys).unwrap(),
        2.0,
    )
    .unwrap();
    let sd = value_after(&stdout, "distance ");
    assert!((sd - lp).abs() <= 0.02 * lp, "sd {sd} lp {lp}");
    assert!(out_dir.join("plan.csv").exists());
    assert_digests_match(&manifest(&out_dir));
}

#[test]
fn sinkhorn_budget_exhaustion_exits_nonzero_and_marks_partial() {
    let tmp = TempDir::new().unwrap();
    let a = write(tmp.path(), "a.csv", "0\n0.3\n2\n");
    let b = write(tmp.path(), "b.csv", "1\n1.2\n5\n");
    let out_dir = tmp.path().join("run");
    let out = wembed(&[
        "sinkhorn",
        s(&a),
        s(&b),
        "--lambda",
        "50",
        "--max-iter",
        "1",
        "--tol",
        "1e-12",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(manifest(&out_dir)["status"], "partial");
}

#[test]
fn train_resume_and_threads() {
    let tmp = TempDir::new().unwrap();
    let job = tiny_job(tmp.path(), 3, json!([]));
    let first = tmp.path().join("first");
    let stdout = ok(&["train", "--config", s(&job), "--seed", "4", "--out", s(&first)]);
    assert!(stdout.contains("# train config"));
    for f in ["checkpoint.json", "train_log.csv", "targets.csv", "heldout_targets.csv", "job.json"] {
        assert!(first.join(f).exists(), "{f}");
    }
    let m = manifest(&first);
    assert_eq!(m["seeds"], json!([4]));
    assert_digests_match(&m);

    let resumed = tmp.path().join("resumed");
    let ck = first.join("checkpoint.json");
    ok(&["train", "--config", s(&job), "--seed", "4", "--epochs", "5", "--resume", s(&ck), "--out", s(&resumed)]);
    let log = fs::read_to_string(resumed.join("train_log.csv")).unwrap();
    let epochs: Vec<&str> = log.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["4", "5"]);

    let single = tmp.path().join("single");
    let multi = tmp.path().join("multi");
    ok(&["--threads", "1", "train", "--config", s(&job), "--seed", "4", "--out", s(&single)]);
    ok(&["--threads", "3", "train", "--config", s(&job), "--seed", "4", "--out", s(&multi)]);
    assert_eq!(fs::read(single.join("checkpoint.json")).unwrap(), fs::read(multi.join("checkpoint.json")).unwrap());
    assert_eq!(fs::read(first.join("checkpoint.json")).unwrap(), fs::read(single.join("checkpoint.json")).unwrap());
}

#[test]
fn train_refuses_eval_only_family() {
    let tmp = TempDir::new().unwrap();
    let job = tiny_job(tmp.path(), 1, json!([{"family": "dirac", "location": [0.0]}]));
    let out = wembed(&["train", "--config", s(&job), "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("evaluation-only"));
}

#[test]
fn out_root_env_resolves_relative_out() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_wembed"))
        .args(["gen", "--preset", "desk_oos_1d", "--out", "nested"])
        .env("WEMBED_OUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("nested").join("corpus.bin").exists());
}

#[test]
fn eval_all_emits_eight_reports_and_rejects_unknown_names() {
    let tmp = TempDir::new().unwrap();
    let job = tiny_job(tmp.path(), 2, json!([]));
    let train_dir = tmp.path().join("train");
    ok(&["train", "--config", s(&job), "--out", s(&train_dir)]);
    let ck = train_dir.join("checkpoint.json");

    let eval_dir = tmp.path().join("eval");
    let targets = train_dir.join("targets.csv");
    ok(&["eval", "--config", s(&job), "--checkpoint", s(&ck), "--targets", s(&targets), "--out", s(&eval_dir)]);
    let reports: Vec<String> = fs::read_dir(&eval_dir)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".json") && n != "manifest.json")
        .collect();
    assert_eq!(reports.len(), 8, "{reports:?}");
    for name in
        ["distance_in", "distance_oos", "translation", "scaling", "moments", "dirac_limit", "barycenter", "sample_size"]
    {
        assert!(eval_dir.join(format!("{name}.csv")).exists(), "{name}");
    }
    let m = manifest(&eval_dir);
    assert_eq!(m["status"], "complete");
    assert_digests_match(&m);

    let out = wembed(&["eval", "--checkpoint", s(&ck), "--experiment", "bogus", "--out", s(&tmp.path().join("x"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("distance_in") && err.contains("ablation"), "{err}");
}

#[test]
fn eval_ablation_trains_every_arm() {
    let tmp = TempDir::new().unwrap();
    let job = tiny_job(tmp.path(), 1, json!([]));
    let dir = tmp.path().join("abl");
    let stdout = ok(&["eval", "--config", s(&job), "--experiment", "ablation", "--out", s(&dir)]);
    assert!(stdout.contains("| Task |"));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.join("ablation.json")).unwrap()).unwrap();
    let arms: Vec<&str> = report["runs"].as_array().unwrap().iter().map(|r| r["arm"].as_str().unwrap()).collect();
    assert_eq!(arms.len(), 3);
    for arm in ["full", "scaling_only", "none"] {
        assert!(arms.contains(&arm), "{arms:?}");
    }
}

fn weights_csv(path: &Path) -> Vec<(f64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (x, w) = l.split_once(',').unwrap();
            (x.parse().unwrap(), w.parse().unwrap())
        })
        .collect()
}

fn mode(rows: &[(f64, f64)]) -> f64 {
    rows.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0
}

#[test]
fn barycenter_of_two_diracs_sits_at_midpoint() {
    let tmp = TempDir::new().unwrap();
    let a = write(tmp.path(), "a.csv", "0\n");
    let b = write(tmp.path(), "b.csv", "1\n");
    let dir = tmp.path().join("bary");
    ok(&["barycenter", s(&a), s(&b), "--p", "2", "--out", s(&dir)]);
    let rows = weights_csv(&dir.join("barycenter.csv"));
    let step = rows[1].0 - rows[0].0;
    assert!((mode(&rows) - 0.5).abs() <= step / 2.0 + 1e-12, "mode {}", mode(&rows));
    assert_digests_match(&manifest(&dir));
}

#[test]
fn barycenter_of_one_input_echoes_it() {
    let tmp = TempDir::new().unwrap();
    let a = write(tmp.path(), "a.csv", "0.25\n");
    let dir = tmp.path().join("bary");
    ok(&["barycenter", s(&a), "--grid", "101", "--out", s(&dir)]);
    let rows = weights_csv(&dir.join("barycenter.csv"));
    let step = rows[1].0 - rows[0].0;
    assert!((mode(&rows) - 0.25).abs() <= step / 2.0 + 1e-12);
    let mean: f64 = rows.iter().map(|(x, w)| x * w).sum();
    assert!((mean - 0.25).abs() < step);
}

#[test]
fn barycenter_rejects_non_simplex_weights() {
    let tmp = TempDir::new().unwrap();
    let a = write(tmp.path(), "a.csv", "0\n");
    let b = write(tmp.path(), "b.csv", "1\n");
    for w in ["0.7,0.7", "1.5,-0.5", "1"] {
        let out = wembed(&["barycenter", s(&a), s(&b), "--weights", w, "--out", s(&tmp.path().join("o"))]);
        assert!(!out.status.success(), "weights {w} accepted");
    }
}
