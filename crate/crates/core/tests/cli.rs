use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use cadlag_kit::cli::{main_with_args, read_paths_jsonl, FamilySpec, Operation, RunConfig};
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs")
}

fn run(verb: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["cadlag-kit", verb, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    main_with_args(args)
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn poisson_regularity_passes_with_traces() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("check-regularity", &configs().join("poisson_regularity.json"), dir.path(), &[]), 0);
    let r = report(dir.path());
    assert_eq!(r["verdict"], "pass");
    let checks: Vec<&str> = r["reports"].as_array().unwrap().iter().map(|c| c["check"].as_str().unwrap()).collect();
    assert!(checks.contains(&"r1_right_continuity") && checks.contains(&"r2_bounded_jumps"));
    let csv = fs::read_to_string(dir.path().join("00_r1_right_continuity_r1_trace.csv")).unwrap();
    assert!(csv.starts_with("step,r,offset,stay_prob\n"));
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 31);
}

#[test]
fn perturbed_family_fails_consistency() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("check-consistency", &configs().join("perturbed_consistency.json"), dir.path(), &[]), 1);
    let w = &report(dir.path())["reports"][0]["witnesses"][0];
    assert_eq!(w["time"]["decimal"], 0.5);
    assert!((w["gap"].as_f64().unwrap() - 0.1).abs() < 1e-9);
}

#[test]
fn simulation_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = configs().join("ctmc_simulate.json");
    assert_eq!(run("simulate", &config, a.path(), &["--threads", "1"]), 0);
    assert_eq!(run("simulate", &config, b.path(), &["--threads", "4"]), 0);
    for file in ["paths.jsonl", "report.json", "00_simulate_jump_counts.csv"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
    let c = tempfile::tempdir().unwrap();
    assert_eq!(run("simulate", &config, c.path(), &["--seed", "43"]), 0);
    assert_ne!(fs::read(a.path().join("paths.jsonl")).unwrap(), fs::read(c.path().join("paths.jsonl")).unwrap());
    let paths = read_paths_jsonl(&a.path().join("paths.jsonl")).unwrap();
    assert_eq!(paths.len(), 5);
}

#[test]
fn reconstruct_and_hitting() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("reconstruct", &configs().join("reconstruct.json"), dir.path(), &[]), 0);
    let original = read_paths_jsonl(&configs().join("sample_paths.jsonl")).unwrap();
    let rebuilt = read_paths_jsonl(&dir.path().join("reconstructed.jsonl")).unwrap();
    for (p, q) in original.iter().zip(&rebuilt) {
        assert_eq!(p.jumps(), q.jumps());
    }
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("hitting", &configs().join("poisson_hitting.json"), dir.path(), &[]), 0);
}

#[test]
fn usage_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(main_with_args(["cadlag-kit", "simulate"]), 3);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"family": {"kind": "poisson", "rate": -2}}"#).unwrap();
    assert_eq!(run("check-regularity", &bad, dir.path(), &[]), 3);
    assert_eq!(run("hitting", &configs().join("poisson_regularity.json"), dir.path(), &[]), 3);
    assert_eq!(run("check-regularity", &configs().join("poisson_regularity.json"), dir.path(), &["--tolerance-scale", "-1"]), 3);
}

#[test]
fn validate_lists_every_violation() {
    let base = configs();
    assert!(RunConfig::load(&base.join("poisson_regularity.json")).unwrap().diagnostics(&base, None).is_empty());
    let negative = FamilySpec::Poisson { rate: -1.0 }.diagnostics("family");
    assert_eq!(negative.len(), 1);
    assert!(negative[0].field.contains("rate"));
    let d = RunConfig::load(&base.join("bad_generator.json")).unwrap().diagnostics(&base, Some(Operation::CheckRegularity));
    let fields: Vec<&str> = d.iter().map(|x| x.field.as_str()).collect();
    assert_eq!(fields, vec!["family.generator[1]", "params.ratio"]);
    assert_eq!(main_with_args(["cadlag-kit", "validate", "--config", base.join("bad_generator.json").to_str().unwrap()]), 3);
    assert_eq!(main_with_args(["cadlag-kit", "validate", "--config", base.join("ctmc_verify.json").to_str().unwrap()]), 0);
}

#[test]
fn binary_reports_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_cadlag-kit"))
        .args(["check-regularity", "--config"])
        .arg(configs().join("iid_regularity.json"))
        .arg("--out")
        .arg(dir.path())
        .env("CADLAG_KIT_LOG", "info")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let status = Command::new(env!("CARGO_BIN_EXE_cadlag-kit")).arg("--version").status().unwrap();
    assert_eq!(status.code(), Some(0));
}
