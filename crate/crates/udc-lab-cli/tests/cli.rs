//! End-to-end CLI flows over temp directories: record, replay, check,
//! enumerate, extract, convert, and the exit-code contract.

use std::path::Path;

use udc_lab_cli::app;

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["udc-lab".to_string()];
    full.extend(args.iter().map(|s| s.to_string()));
    app::run(&full)
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SCENARIO: &str = "\
n = 3
t = 3
protocol = udc-strong-fd
oracle = strong
horizon = 40
budget = 8
seed = 12
channel = fair-lossy
drop_percent = 50
init = 0:a0.0
crash = explicit:4:p2
";

#[test]
fn run_writes_a_trace_with_the_configured_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.cfg");
    let out = dir.path().join("run.trace");
    write(&cfg, SCENARIO);
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("3|40|8|12\n"));
}

#[test]
fn identical_invocations_reproduce_the_trace_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.cfg");
    write(&cfg, SCENARIO);
    let a = dir.path().join("a.trace");
    let b = dir.path().join("b.trace");
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]), 0);
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn config_errors_exit_2_naming_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    write(&cfg, "n = 3\nt = 1\ncrash = explicit:1:p0;2:p1\ninit = 0:a0.0\n");
    let out = dir.path().join("x.trace");
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 2);
    write(&cfg, "n = 3\nfrobnicate = yes\n");
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 2);
}

#[test]
fn check_udc_on_a_recorded_trace_exits_by_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.cfg");
    let out = dir.path().join("run.trace");
    write(&cfg, SCENARIO);
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    // a bare trace carries no closeout certificate: liveness obligations at
    // the horizon stay INCONCLUSIVE (exit 4), never FAIL
    let code = run(&[
        "check",
        "--input",
        out.to_str().unwrap(),
        "--spec",
        "udc",
        "--action",
        "a0.0",
    ]);
    assert!(code == 0 || code == 4, "got {code}");
}

#[test]
fn adversarial_trace_fails_strong_accuracy_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("adversarial.cfg");
    write(
        &cfg,
        "\
n = 3
t = 3
protocol = nudc-gossip
oracle = adversarial-suspect-live:p0,p2,3
horizon = 20
budget = 8
seed = 5
init = 0:a0.0
crash = none
",
    );
    let out = dir.path().join("adv.trace");
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    assert_eq!(
        run(&["check", "--input", out.to_str().unwrap(), "--spec", "fd:strong-accuracy"]),
        1
    );
    // weak accuracy is untouched by the single lie
    assert_eq!(
        run(&["check", "--input", out.to_str().unwrap(), "--spec", "fd:weak-accuracy"]),
        0
    );
}

const EXHAUSTIVE: &str = "\
n = 3
t = 3
protocol = udc-strong-fd
oracle = perfect
horizon = 8
budget = 2
seed = 1
channel = fair-lossy
fip = true
init = 0:a0.0
crash = random:3
exhaustive = true
exhaustive_links = per-process
crash_window = 2
closure_a1 = true
closure_a2 = true
closure_a5 = true
";

#[test]
fn enumerate_extract_and_check_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("family.cfg");
    write(&cfg, EXHAUSTIVE);
    let sysdir = dir.path().join("system");
    assert_eq!(
        run(&["enumerate", "--config", cfg.to_str().unwrap(), "--out", sysdir.to_str().unwrap()]),
        0
    );
    assert!(sysdir.join("manifest").exists());
    assert!(sysdir.join("certs").exists());
    assert!(sysdir.join("run_00000.trace").exists());

    // the A-condition gates pass on the enumerated family
    assert_eq!(
        run(&["check", "--input", sysdir.to_str().unwrap(), "--spec", "conditions", "--t", "3"]),
        0
    );
    // and so does the account property
    assert_eq!(
        run(&["check", "--input", sysdir.to_str().unwrap(), "--spec", "account", "--action", "a0.0"]),
        0
    );

    // extraction writes a primed system whose detector is perfect
    let outdir = dir.path().join("extracted");
    assert_eq!(
        run(&[
            "extract",
            "--system",
            sysdir.to_str().unwrap(),
            "--mode",
            "f",
            "--out",
            outdir.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(
        run(&[
            "check",
            "--input",
            outdir.to_str().unwrap(),
            "--spec",
            "fd:strong-accuracy",
            "--source",
            "primed",
        ]),
        0
    );

    // the generalized extraction clamps oversized t with a note; at this
    // horizon some runs' subset windows close early, so the usefulness
    // clause may stay INCONCLUSIVE (exit 4) but accuracy must never fail
    let outdir2 = dir.path().join("extracted-fprime");
    let code = run(&[
        "extract",
        "--system",
        sysdir.to_str().unwrap(),
        "--mode",
        "fprime",
        "--t",
        "9",
        "--out",
        outdir2.to_str().unwrap(),
    ]);
    assert!(code == 0 || code == 4, "got {code}");
}

#[test]
fn extract_refuses_sampled_systems() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.cfg");
    write(&cfg, "n = 2\nhorizon = 10\ninit = 0:a0.0\ncrash = none\nsample_runs = 2\n");
    let sysdir = dir.path().join("sampled");
    assert_eq!(
        run(&["run", "--config", cfg.to_str().unwrap(), "--out", sysdir.to_str().unwrap()]),
        0
    );
    let outdir = dir.path().join("nope");
    assert_eq!(
        run(&[
            "extract",
            "--system",
            sysdir.to_str().unwrap(),
            "--mode",
            "f",
            "--out",
            outdir.to_str().unwrap(),
        ]),
        2
    );
}

#[test]
fn convert_impermanent_streams_to_strong() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.cfg");
    write(
        &cfg,
        "\
n = 3
t = 1
protocol = nudc-gossip
oracle = impermanent-strong
horizon = 40
budget = 8
seed = 9
init = 0:a0.0
crash = explicit:3:p1
sample_runs = 2
",
    );
    let sysdir = dir.path().join("system");
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", sysdir.to_str().unwrap()]), 0);
    let outdir = dir.path().join("converted");
    assert_eq!(
        run(&[
            "convert",
            "--input",
            sysdir.to_str().unwrap(),
            "--mode",
            "impermanent-to-strong",
            "--out",
            outdir.to_str().unwrap(),
        ]),
        0
    );
}

#[test]
fn raw_formulas_check_against_recorded_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.cfg");
    write(&cfg, SCENARIO);
    let out = dir.path().join("run.trace");
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    // the init is recorded, so its negation is refuted somewhere
    assert_eq!(
        run(&[
            "check",
            "--input",
            out.to_str().unwrap(),
            "--spec",
            "formula",
            "--formula",
            "(not (init p0 a0.0))",
        ]),
        1
    );
    // a tautology is valid
    assert_eq!(
        run(&[
            "check",
            "--input",
            out.to_str().unwrap(),
            "--spec",
            "formula",
            "--formula",
            "(or (crash p1) (not (crash p1)))",
        ]),
        0
    );
    // parse errors exit 2
    assert_eq!(
        run(&["check", "--input", out.to_str().unwrap(), "--spec", "formula", "--formula", "(zap)"]),
        2
    );
}

#[test]
fn unknown_flags_and_specs_exit_2() {
    assert_eq!(run(&["check", "--input", "/nonexistent", "--spec", "udc"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.cfg");
    write(&cfg, SCENARIO);
    let out = dir.path().join("run.trace");
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    assert_eq!(run(&["check", "--input", out.to_str().unwrap(), "--spec", "wibble"]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
}
