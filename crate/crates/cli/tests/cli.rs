//! Contract tests for the command workflows: exit codes, exact verdict
//! lines, artifacts, determinism, and the binary's argv surface.

use std::fs;
use std::path::Path;
use std::process::Command as Process;

use hyperplan::{exit_code, run, Command, RunConfig, NO_PLAN_MESSAGE, VERIFIED_MESSAGE};
use hyperplan_core::encoding::Variant;
use hyperplan_core::solver::SolverChoice;

const TOGGLE: &str = "\
atoms a
locations lA lB
directions dA dB
init lA
label lA a
trans lA dA lA
trans lA dB lB
trans lB dA lA
trans lB dB lB
";

const MIRROR: &str = "forall p1. exists p2. G (a_p1 <-> X a_p2)";

fn write_toggle(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("toggle.ts");
    fs::write(&p, TOGGLE).unwrap();
    p
}

#[test]
fn verify_reports_verified_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::new(Command::Verify, write_toggle(dir.path()), MIRROR);
    let out = run(&cfg);
    assert_eq!(out.code, exit_code::OK);
    assert!(out.human.starts_with(&format!("{VERIFIED_MESSAGE}\n")));
    assert_eq!(out.json["verdict"], "verified");
    assert_eq!(out.json["plan"]["kind"], "strong-cyclic");
    assert_eq!(out.artifacts[0].0, "policy.json");
}

#[test]
fn no_plan_line_is_exact_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Command::Verify, write_toggle(dir.path()), MIRROR);
    // A strong plan cannot exist here: the adversary can always delay.
    cfg.solver = SolverChoice::Strong;
    let out = run(&cfg);
    assert_eq!(out.code, exit_code::INCONCLUSIVE);
    assert_eq!(out.human.lines().next().unwrap(), NO_PLAN_MESSAGE);
    assert_eq!(out.json["verdict"], "no-plan");
}

#[test]
fn unsupported_prefix_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::new(
        Command::Verify,
        write_toggle(dir.path()),
        "exists p1. forall p2. G a_p1",
    );
    let out = run(&cfg);
    assert_eq!(out.code, exit_code::UNSUPPORTED);
    assert!(out.human.starts_with("UNSUPPORTED"));
}

#[test]
fn parse_errors_exit_ten() {
    let dir = tempfile::tempdir().unwrap();
    let bad_ts = dir.path().join("bad.ts");
    fs::write(&bad_ts, "locations l0\n").unwrap();
    let out = run(&RunConfig::new(Command::Verify, &bad_ts, MIRROR));
    assert_eq!(out.code, exit_code::PARSE);

    let out = run(&RunConfig::new(
        Command::Verify,
        write_toggle(dir.path()),
        "forall p1. G (a_p1 &",
    ));
    assert_eq!(out.code, exit_code::PARSE);

    // Atoms must be declared by the system.
    let out = run(&RunConfig::new(
        Command::Verify,
        write_toggle(dir.path()),
        "forall p1. exists p2. G (zz_p1 <-> X zz_p2)",
    ));
    assert_eq!(out.code, exit_code::PARSE);
}

#[test]
fn unclassifiable_body_exits_eleven() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::new(
        Command::Verify,
        write_toggle(dir.path()),
        "forall p1. exists p2. G F a_p1",
    );
    let out = run(&cfg);
    assert_eq!(out.code, exit_code::CLASSIFICATION);
}

#[test]
fn exceeding_a_cap_exits_twelve() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Command::Verify, write_toggle(dir.path()), MIRROR);
    cfg.max_explicit_states = 2;
    let out = run(&cfg);
    assert_eq!(out.code, exit_code::RESOURCE);
}

#[test]
fn variant_expectation_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Command::Verify, write_toggle(dir.path()), MIRROR);
    cfg.expect_variant = Some(Variant::Reach);
    let out = run(&cfg);
    assert_eq!(out.code, exit_code::CLASSIFICATION);
    cfg.expect_variant = Some(Variant::Safe);
    assert_eq!(run(&cfg).code, exit_code::OK);
}

#[test]
fn formula_can_come_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let fpath = dir.path().join("mirror.hltl");
    fs::write(&fpath, format!("# delayed copy\n{MIRROR}\n")).unwrap();
    let cfg = RunConfig::new(
        Command::Verify,
        write_toggle(dir.path()),
        fpath.to_str().unwrap(),
    );
    assert_eq!(run(&cfg).code, exit_code::OK);
}

#[test]
fn outputs_are_written_and_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let ts = write_toggle(dir.path());
    let mut artifacts = Vec::new();
    for sub in ["a", "b"] {
        let mut cfg = RunConfig::new(Command::Verify, &ts, MIRROR);
        cfg.out_dir = Some(dir.path().join(sub));
        let out = run(&cfg);
        assert_eq!(out.code, exit_code::OK);
        let read = |name: &str| fs::read(dir.path().join(sub).join(name)).unwrap();
        artifacts.push((read("policy.json"), read("report.txt"), read("report.json")));
    }
    assert_eq!(artifacts[0], artifacts[1]);
}

#[test]
fn check_validates_the_solvers_own_policy() {
    let dir = tempfile::tempdir().unwrap();
    let ts = write_toggle(dir.path());
    let mut cfg = RunConfig::new(Command::Verify, &ts, MIRROR);
    cfg.out_dir = Some(dir.path().join("v"));
    assert_eq!(run(&cfg).code, exit_code::OK);

    let mut check = RunConfig::new(Command::Check, &ts, MIRROR);
    check.policy_path = Some(dir.path().join("v").join("policy.json"));
    let out = run(&check);
    assert_eq!(out.code, exit_code::OK);
    assert!(out.human.starts_with("VALIDATED\n"));
    assert_eq!(out.json["execution"]["result"], "ok");
}

#[test]
fn check_refutes_a_corrupted_controller_with_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let ts = write_toggle(dir.path());
    let mut cfg = RunConfig::new(Command::Verify, &ts, MIRROR);
    cfg.out_dir = Some(dir.path().join("v"));
    assert_eq!(run(&cfg).code, exit_code::OK);

    // Pin every node to dA: the controller stops mirroring.
    let path = dir.path().join("v").join("policy.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    for node in doc["nodes"].as_array_mut().unwrap() {
        node["action"] = serde_json::json!(["dA"]);
    }
    let bad = dir.path().join("bad.json");
    fs::write(&bad, serde_json::to_string(&doc).unwrap()).unwrap();

    let mut check = RunConfig::new(Command::Check, &ts, MIRROR);
    check.policy_path = Some(bad);
    let out = run(&check);
    assert_eq!(out.code, exit_code::INCONCLUSIVE);
    assert!(out.human.starts_with("REFUTED"));
    assert_eq!(out.json["validation"]["result"], "violated");
    // The report carries the replayed trace of the counterexample.
    assert!(out.json["validation"]["trace"].as_str().unwrap().contains("| q"));
}

#[test]
fn check_ingests_pddl_named_controllers_via_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let ts = write_toggle(dir.path());
    let mut verify = RunConfig::new(Command::Verify, &ts, MIRROR);
    verify.out_dir = Some(dir.path().join("v"));
    assert_eq!(run(&verify).code, exit_code::OK);
    let mut emit = RunConfig::new(Command::EmitPddl, &ts, MIRROR);
    emit.out_dir = Some(dir.path().join("p"));
    assert_eq!(run(&emit).code, exit_code::OK);

    // Rewrite the controller's direction tuples into PDDL action names.
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("p").join("manifest.json")).unwrap(),
    )
    .unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("v").join("policy.json")).unwrap(),
    )
    .unwrap();
    for node in doc["nodes"].as_array_mut().unwrap() {
        let dirs = node["action"].clone();
        let name = manifest["actions"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e[1] == dirs)
            .expect("every action tuple is in the manifest")[0]
            .clone();
        node["action"] = name;
    }
    let named = dir.path().join("named.json");
    fs::write(&named, serde_json::to_string(&doc).unwrap()).unwrap();

    let mut check = RunConfig::new(Command::Check, &ts, MIRROR);
    check.policy_path = Some(named);
    check.manifest_path = Some(dir.path().join("p").join("manifest.json"));
    let out = run(&check);
    assert_eq!(out.code, exit_code::OK, "{}", out.human);
}

#[test]
fn emit_pddl_writes_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Command::EmitPddl, write_toggle(dir.path()), MIRROR);
    cfg.out_dir = Some(dir.path().join("p"));
    let out = run(&cfg);
    assert_eq!(out.code, exit_code::OK);
    for name in ["domain.pddl", "problem.pddl", "manifest.json"] {
        assert!(dir.path().join("p").join(name).is_file(), "missing {name}");
    }
}

#[test]
fn emit_pddl_rejects_partial_observability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::new(
        Command::EmitPddl,
        write_toggle(dir.path()),
        "forall p1. exists p2. forall p3. G (a_p1 <-> X a_p2)",
    );
    assert_eq!(run(&cfg).code, exit_code::UNSUPPORTED);
}

#[test]
fn binary_honors_the_documented_interface() {
    let dir = tempfile::tempdir().unwrap();
    let ts = write_toggle(dir.path());
    let exe = env!("CARGO_BIN_EXE_hyperplan");

    let out = Process::new(exe)
        .args(["verify", "--ts", ts.to_str().unwrap(), "--formula", MIRROR])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("VERIFIED\n"));

    let out = Process::new(exe)
        .args([
            "verify",
            "--ts",
            ts.to_str().unwrap(),
            "--formula",
            MIRROR,
            "--solver",
            "strong",
            "--json",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(report["verdict"], "no-plan");
    assert_eq!(report["message"], NO_PLAN_MESSAGE);
}
