//! End-to-end tests against the compiled binary: exit codes, file layout,
//! flag precedence, and byte-stable reruns.

use std::path::Path;
use std::process::{Command, Output};

fn genserve(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genserve"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: serde_json::Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn tiny_config() -> serde_json::Value {
    serde_json::json!({
        "schedulers": ["fcfs"],
        "seeds": [1],
        "trace": {
            "n_requests": 6,
            "arrival": { "process": "poisson", "rate_per_min": 24.0 }
        }
    })
}

#[test]
fn run_writes_the_documented_report_tree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), tiny_config());
    let out = genserve(&["run", "--config", &cfg, "--out", "out"], dir.path());
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run_dir = dir.path().join("out/sigma1-rate24-mix0.5/seed1/fcfs");
    for name in [
        "report.json",
        "report.csv",
        "cdf.csv",
        "timing.json",
        "result.json",
        "result.csv",
    ] {
        assert!(run_dir.join(name).is_file(), "missing {name}");
    }
    assert!(dir.path().join("out/comparison.csv").is_file());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("sigma1-rate24-mix0.5/seed1/fcfs: sar_overall="),
        "{stdout}"
    );
}

#[test]
fn reruns_produce_byte_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), tiny_config());
    assert!(
        genserve(&["run", "--config", &cfg, "--out", "a"], dir.path())
            .status
            .success()
    );
    assert!(
        genserve(&["run", "--config", &cfg, "--out", "b"], dir.path())
            .status
            .success()
    );
    for name in [
        "sigma1-rate24-mix0.5/seed1/fcfs/report.json",
        "comparison.csv",
    ] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn invalid_partition_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = tiny_config();
    body["partition"] = serde_json::json!({"mode": "dedicated", "image_gpus": 5, "video_gpus": 5});
    let cfg = write_config(dir.path(), body);
    let out = genserve(&["run", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("partition"), "{stderr}");
}

#[test]
fn unknown_scheduler_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = genserve(&["run", "--scheduler", "lifo", "--out", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("scheduler"), "{stderr}");
}

#[test]
fn sigma_flag_overrides_the_config_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), tiny_config());
    let out = genserve(
        &["run", "--config", &cfg, "--out", "out", "--sigma", "0.7"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir
        .path()
        .join("out/sigma0.7-rate24-mix0.5/seed1/fcfs/report.json")
        .is_file());
}

#[test]
fn sweep_expands_config_axes_while_run_ignores_them() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = tiny_config();
    body["trace"]["n_requests"] = serde_json::json!(4);
    body["sweep"] = serde_json::json!({"sigmas": [0.8, 1.0]});
    let cfg = write_config(dir.path(), body);

    let out = genserve(&["sweep", "--config", &cfg, "--out", "sw"], dir.path());
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir
        .path()
        .join("sw/sigma0.8-rate24-mix0.5/seed1/fcfs/report.json")
        .is_file());
    assert!(dir
        .path()
        .join("sw/sigma1-rate24-mix0.5/seed1/fcfs/report.json")
        .is_file());

    let out = genserve(&["run", "--config", &cfg, "--out", "single"], dir.path());
    assert!(out.status.success());
    assert!(dir
        .path()
        .join("single/sigma1-rate24-mix0.5/seed1/fcfs/report.json")
        .is_file());
    assert!(!dir.path().join("single/sigma0.8-rate24-mix0.5").exists());
}

#[test]
fn gen_trace_is_deterministic_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = tiny_config();
    body["trace"]["n_requests"] = serde_json::json!(5);
    let cfg = write_config(dir.path(), body);
    let run = |name: &str| {
        let out = genserve(
            &[
                "gen-trace",
                "--config",
                &cfg,
                "--trace-out",
                name,
                "--seed",
                "9",
            ],
            dir.path(),
        );
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let a = run("a.jsonl");
    let b = run("b.jsonl");
    assert_eq!(a, b);
    assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 5);
}

#[test]
fn validate_profile_accepts_good_and_rejects_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let good = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/profiles/default.json");
    let out = genserve(&["validate-profile", good], dir.path());
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"not\": \"a profile\"}").unwrap();
    let out = genserve(&["validate-profile", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ablate_and_dedicated_emit_their_variant_sets() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = tiny_config();
    body["trace"]["n_requests"] = serde_json::json!(4);
    body["schedulers"] = serde_json::json!(["genserve"]);
    let cfg = write_config(dir.path(), body);

    let out = genserve(&["ablate", "--config", &cfg, "--out", "ab"], dir.path());
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let point = dir.path().join("ab/sigma1-rate24-mix0.5/seed1");
    for v in ["fcfs", "plus-preemption", "plus-dp", "plus-sp"] {
        assert!(
            point.join(v).join("report.json").is_file(),
            "missing variant {v}"
        );
    }

    let out = genserve(&["dedicated", "--config", &cfg, "--out", "ded"], dir.path());
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let point = dir.path().join("ded/sigma1-rate24-mix0.5/seed1");
    for v in [
        "replicated-genserve",
        "img2-vid6-genserve",
        "img3-vid5-genserve",
        "img4-vid4-genserve",
    ] {
        assert!(
            point.join(v).join("report.json").is_file(),
            "missing variant {v}"
        );
    }
}
