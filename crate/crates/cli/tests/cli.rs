use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vtube_cli::output::{self, Summary};
use vtube_cli::scenario::ScenarioFile;

fn vtube(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtube")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn summary(dir: &Path) -> Summary {
    serde_json::from_str(&std::fs::read_to_string(dir.join(output::SUMMARY_FILE)).unwrap()).unwrap()
}

/// A bundled scenario with a shorter horizon, written into `dir`.
fn shortened(dir: &Path, name: &str, t_end: f64) -> PathBuf {
    let mut file = ScenarioFile::load(&manifest(&format!("scenarios/{name}"))).unwrap();
    file.sim.t_end = t_end;
    let path = dir.join(name);
    std::fs::write(&path, file.to_json()).unwrap();
    path
}

#[test]
fn malformed_scenarios_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_json = tmp.path().join("bad.json");
    std::fs::write(&bad_json, "{ not json").unwrap();
    let text = std::fs::read_to_string(manifest("scenarios/swarm4_chain.json")).unwrap();
    let extra = tmp.path().join("extra.json");
    std::fs::write(&extra, text.replacen("\"version\"", "\"colour\": 1,\n  \"version\"", 1)).unwrap();

    for path in [&bad_json, &extra, &tmp.path().join("missing.json")] {
        assert_eq!(code(&vtube(&["check", "--scenario", arg(path)])), 2, "{}", path.display());
        let out = tmp.path().join("out");
        assert_eq!(code(&vtube(&["simulate", "--scenario", arg(path), "--out", arg(&out)])), 2);
    }
}

#[test]
fn invalid_geometry_exits_3_and_names_the_clause() {
    let tmp = tempfile::tempdir().unwrap();
    let path = manifest("tests/fixtures/narrow_corridor.json");
    let out = vtube(&["check", "--scenario", arg(&path)]);
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).contains("scenario is invalid:"));
    assert!(stdout(&out).contains("wide enough for at least one agent to pass"), "{}", stdout(&out));
    let sim = vtube(&["simulate", "--scenario", arg(&path), "--out", arg(&tmp.path().join("o"))]);
    assert_eq!(code(&sim), 3);
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn unsatisfiable_direction_constraints_exit_5() {
    let out = vtube(&["check", "--scenario", arg(&manifest("tests/fixtures/funnel_long.json"))]);
    assert_eq!(code(&out), 5);
    let text = stdout(&out);
    assert!(text.contains("validation: ok"));
    assert!(text.contains("check failed: first failing oracle direction_constraints"), "{text}");
}

#[test]
fn bundled_scenarios_pass_check() {
    for name in ["swarm4_chain.json", "trapezoid5_v1.json", "deadlock_turn.json"] {
        let out = vtube(&["check", "--scenario", arg(&manifest(&format!("scenarios/{name}")))]);
        assert_eq!(code(&out), 0, "{name}: {}", stdout(&out));
        assert!(stdout(&out).contains("check passed"));
    }
}

#[test]
fn direct_switching_failure_exits_4_and_keeps_the_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("direct");
    let out = vtube(&[
        "simulate",
        "--scenario",
        arg(&manifest("scenarios/deadlock_turn.json")),
        "--out",
        arg(&dir),
        "--logic-override",
        "direct",
    ]);
    assert_eq!(code(&out), 4, "{}", stdout(&out));
    let s = summary(&dir);
    assert_eq!(s.outcome, "control_error");
    assert_eq!(s.violations.len(), 1);
    assert!(s.steps > 0);
    let metrics = std::fs::read_to_string(dir.join(output::METRICS_FILE)).unwrap();
    assert_eq!(metrics.lines().count(), s.steps + 1);
}

#[test]
fn short_horizon_times_out_with_exit_0() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = shortened(tmp.path(), "swarm4_chain.json", 0.5);
    let dir = tmp.path().join("run");
    let out = vtube(&["simulate", "--scenario", arg(&scenario), "--out", arg(&dir), "--snapshot-times", "0,0.25"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("outcome=timeout steps=500"), "{}", stdout(&out));
    let s = summary(&dir);
    assert_eq!((s.outcome.as_str(), s.arrived, s.steps), ("timeout", 0, 500));
    assert!(s.arrival_times.iter().all(Option::is_none));
    for f in [
        output::TRAJECTORY_FILE,
        output::METRICS_FILE,
        output::LYAPUNOV_FILE,
        output::SUMMARY_FILE,
        output::SCENARIO_COPY,
        "snapshot_0.000.svg",
        "snapshot_0.250.svg",
    ] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    // the copy is the scenario that actually ran
    let copy = ScenarioFile::load(&dir.join(output::SCENARIO_COPY)).unwrap();
    assert_eq!(copy, ScenarioFile::load(&scenario).unwrap());
}

#[test]
fn dt_override_changes_the_step_count() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = shortened(tmp.path(), "swarm4_chain.json", 0.5);
    let dir = tmp.path().join("run");
    let out = vtube(&["simulate", "--scenario", arg(&scenario), "--out", arg(&dir), "--dt-override", "0.005"]);
    assert_eq!(code(&out), 0);
    let s = summary(&dir);
    assert_eq!(s.steps, 100);
    assert_eq!(s.dt, 0.005);
}

#[test]
fn plot_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = shortened(tmp.path(), "swarm4_chain.json", 2.0);
    let dir = tmp.path().join("run");
    assert_eq!(code(&vtube(&["simulate", "--scenario", arg(&scenario), "--out", arg(&dir)])), 0);
    let mut svgs = Vec::new();
    for k in 0..2 {
        let target = tmp.path().join(format!("plot{k}.svg"));
        let out = vtube(&["plot", "--trace", arg(&dir), "--out", arg(&target)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let paths = tmp.path().join(format!("plot{k}_trajectories.svg"));
        svgs.push((std::fs::read(&target).unwrap(), std::fs::read(&paths).unwrap()));
    }
    assert_eq!(svgs[0], svgs[1]);
    assert!(String::from_utf8_lossy(&svgs[0].0).starts_with("<svg"));
}

#[test]
fn plot_rejects_an_empty_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = shortened(tmp.path(), "swarm4_chain.json", 0.1);
    let dir = tmp.path().join("run");
    assert_eq!(code(&vtube(&["simulate", "--scenario", arg(&scenario), "--out", arg(&dir)])), 0);
    std::fs::write(dir.join(output::METRICS_FILE), "t,min_pair_dist,min_boundary_dist\n").unwrap();
    let out = vtube(&["plot", "--trace", arg(&dir), "--out", arg(&tmp.path().join("p.svg"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("has no steps"));

    let missing = vtube(&["plot", "--trace", arg(&tmp.path().join("nowhere")), "--out", arg(&tmp.path().join("q.svg"))]);
    assert_eq!(code(&missing), 1);
}
