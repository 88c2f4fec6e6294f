use std::process::Command;

use kuranishi::atlas::atlas_from_doc;
use kuranishi::config::Tolerances;
use kuranishi::pipeline::Report;
use kuranishi::refine::ReductionContext;
use kuranishi::vfc::vfc_count;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kuranishi"))
}

fn tmp(name: &str) -> String {
    let dir = std::env::temp_dir().join(format!("kuranishi-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name).to_string_lossy().into_owned()
}

fn read_report(path: &str) -> Report {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn planar_vfc_exits_zero_with_count_two() {
    let path = tmp("planar.json");
    let out = bin().args(["vfc", "gen:planar", "--jobs", "2", "--report", &path]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("count = 2"));
    assert_eq!(read_report(&path).vfc.unwrap().count, 2);
}

#[test]
fn nonlin_validate_exits_nonzero_and_names_injectivity() {
    let path = tmp("nonlin.json");
    let out = bin().args(["validate", "ex-nonlin", "--density", "20", "--report", &path]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("first failing verdict"));
    let r = read_report(&path);
    assert!(r.failed_checks.iter().any(|c| c == "injectivity-hausdorff"), "{:?}", r.failed_checks);
}

#[test]
fn replay_writes_identical_reports_and_honours_the_seed_variable() {
    let a = tmp("replay.json");
    let mut bodies = Vec::new();
    for _ in 0..2 {
        let out = bin().args(["perturb", "ex-change", "--report", &a]).env("KURANISHI_SEED", "17").output().unwrap();
        assert!(out.status.success());
        bodies.push(std::fs::read(&a).unwrap());
    }
    assert!(bodies[0] == bodies[1]);
    let r = read_report(&a);
    assert_eq!(r.config.seed, 17);
    assert_eq!(r.perturbation.unwrap().seed, 17);
}

#[test]
fn report_alone_replays_the_count() {
    let path = tmp("cubic.json");
    assert!(bin().args(["vfc", "cubic", "--report", &path]).output().unwrap().status.success());
    let r = read_report(&path);
    let atlas = atlas_from_doc(r.atlas.as_ref().unwrap()).unwrap();
    let ctx = ReductionContext::from_doc(&atlas, r.reduction.as_ref().unwrap()).unwrap();
    let z = vfc_count(&atlas, &ctx, r.perturbation.as_ref().unwrap(), &Tolerances::default()).unwrap();
    assert_eq!(z.count, r.vfc.as_ref().unwrap().count);
    assert_eq!(z.classes, r.vfc.unwrap().classes);
}

#[test]
fn generate_writes_a_loadable_atlas_and_oracle_agrees() {
    let path = tmp("quartic-atlas.json");
    assert!(bin().args(["generate", "quartic", "--atlas-out", &path]).output().unwrap().status.success());
    let out = bin().args(["vfc", &path]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("count = 0"));
    let out = bin().args(["oracle", "cubic-curve"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("degree = -1"));
}

/// A triple root needs a perturbation of size ε with slope 3ε^{2/3}; a
/// tiny budget cannot reach the transversality threshold.
#[test]
fn undersized_sigma_fails_with_replay_data() {
    let atlas = tmp("triple.json");
    let a = kuranishi::fixtures::single(&["x1^3"], &[("-2", "2")]);
    std::fs::write(&atlas, kuranishi::atlas::atlas_to_json(&a)).unwrap();
    let ok = bin().args(["vfc", &atlas]).output().unwrap();
    assert!(ok.status.success());
    let path = tmp("triple-report.json");
    let out = bin().args(["vfc", &atlas, "--sigma", "1e-12", "--report", &path]).output().unwrap();
    assert!(!out.status.success());
    let r = read_report(&path);
    assert_eq!(r.config.sigma, Some(1e-12));
    assert!(r.first_failure.unwrap().contains("transversality"));
}
