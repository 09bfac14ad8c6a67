use std::path::Path;
use std::process::{Command, Output};

use hvs_cli::commands::{cmd_run, cmd_sweep, sweep_seed, Status};
use hvs_cli::config::parse_config;
use hvs_cli::trace_io::{read_trace, write_trace};
use hvs_cli::{CliError, RunConfig};

fn hvs(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hvs"))
        .args(args)
        .current_dir(dir)
        .env_remove("HVS_OUT_DIR")
        .output()
        .expect("spawn hvs")
}

fn short(duration: f64) -> RunConfig {
    RunConfig {
        duration,
        ..RunConfig::default()
    }
}

#[test]
fn default_config_round_trips_through_text() {
    let cfg = RunConfig::default();
    let text = cfg.to_text();
    let back = parse_config(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_text(), text);
}

#[test]
fn edited_config_round_trips() {
    let mut cfg = RunConfig::default();
    cfg.gains.lambda = 0.1 + 0.2;
    cfg.scenario = "rectangle".parse().unwrap();
    cfg.start_offset[1] = -1.0 / 3.0;
    cfg.output_dir = "runs/a b".into();
    let back = parse_config(&cfg.to_text()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn partial_config_keeps_defaults() {
    let cfg = parse_config("# comment\ngains.lambda = 12\n\nscenario.kind = \"static\"\n").unwrap();
    let mut expected = RunConfig::default();
    expected.gains.lambda = 12.0;
    expected.scenario = "static".parse().unwrap();
    assert_eq!(cfg, expected);
}

#[test]
fn unknown_key_is_rejected() {
    match parse_config("gains.lamda = 3.0\n") {
        Err(CliError::UnknownKey(k)) => assert_eq!(k, "gains.lamda"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        parse_config("robot.link.1.colour = 1\n"),
        Err(CliError::UnknownKey(_))
    ));
}

#[test]
fn syntax_error_reports_line() {
    match parse_config("gains.lambda = 3.0\ngains.k2 = = 1\n") {
        Err(CliError::Syntax { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn validation_names_the_field() {
    let cases = [
        ("gains.lambda = -1.0", "gains.lambda"),
        ("scenario.dt = 0.0", "scenario.dt"),
        ("estimates.delta = 1.5", "estimates.delta"),
        ("gains.k2 = \"ten\"", "gains.k2"),
        ("start.offset = [0.1, 0.2]", "start.offset"),
        ("robot.link.4.mass = 1.0", "robot.link.4.mass"),
        (
            "rig.eih.intrinsics = [600.0, 600.0, 1.5707963267948966, 320.0, 240.0, -1.0]",
            "rig.eih.intrinsics",
        ),
    ];
    for (text, key) in cases {
        match parse_config(text) {
            Err(CliError::Invalid { key: k, .. }) => assert_eq!(k, key, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn trace_csv_is_exact() {
    let (_, outcome) = hvs_cli::commands::simulate(&short(0.05)).unwrap();
    let mut buf = Vec::new();
    write_trace(&outcome.trace, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    let second_line = text.lines().nth(1).unwrap();
    let first = second_line.split(',').nth(1).unwrap();
    assert_eq!(
        first
            .split('e')
            .next()
            .unwrap()
            .replace(['-', '.'], "")
            .len(),
        17
    );
    assert_eq!(
        read_trace(buf.as_slice()).unwrap().records,
        outcome.trace.records
    );
}

#[test]
fn malformed_trace_names_the_record() {
    let (_, outcome) = hvs_cli::commands::simulate(&short(0.01)).unwrap();
    let mut buf = Vec::new();
    write_trace(&outcome.trace, &mut buf).unwrap();
    let mut lines: Vec<String> = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    let mut fields: Vec<&str> = lines[4].split(',').collect();
    fields[2] = "abc";
    lines[4] = fields.join(",");
    let body = lines.join("\n");
    match read_trace(body.as_bytes()) {
        Err(CliError::TraceParse { record, message }) => {
            assert_eq!(record, 3);
            assert!(message.contains("q1"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    lines[6].push_str(",1.0");
    let body = lines[..7].join("\n").replace("abc", "0");
    match read_trace(body.as_bytes()) {
        Err(CliError::TraceParse { record, .. }) => assert_eq!(record, 5),
        other => panic!("{other:?}"),
    }
}

#[test]
fn run_writes_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short(0.2);
    cmd_run(&cfg, &dir.path().join("a")).unwrap();
    cmd_run(&cfg, &dir.path().join("b")).unwrap();
    for f in ["trace.csv", "summary.txt", "config.toml"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = hvs(
        &[
            "run",
            "--set",
            "scenario.duration=2",
            "--set",
            "estimates.delta=0",
            "--out",
            "ok",
        ],
        dir.path(),
    );
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(String::from_utf8_lossy(&ok.stdout).contains("status = converged"));

    let bad = hvs(
        &[
            "run",
            "--set",
            "scenario.duration=1",
            "--set",
            "gains.k2=1e-6",
            "--set",
            "gains.lambda=1000",
            "--out",
            "bad",
        ],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("status = diverged"));
    assert!(dir.path().join("bad/trace.csv").exists());

    let err = hvs(&["run", "--set", "gains.lambda=-3"], dir.path());
    assert_eq!(err.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&err.stderr).contains("gains.lambda"));

    let missing = hvs(&["run", "--config", "nope.toml"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn out_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hvs"));
        cmd.args([
            "run",
            "--set",
            "scenario.duration=0",
            "--set",
            "output.dir=from_config",
        ])
        .args(extra)
        .current_dir(dir.path())
        .env_remove("HVS_OUT_DIR");
        if let Some(v) = env {
            cmd.env("HVS_OUT_DIR", v);
        }
        cmd.output().unwrap()
    };
    run(&[], None);
    assert!(dir.path().join("from_config/trace.csv").exists());
    run(&[], Some("from_env"));
    assert!(dir.path().join("from_env/trace.csv").exists());
    run(&["--out", "from_flag"], Some("from_env2"));
    assert!(dir.path().join("from_flag/trace.csv").exists());
    assert!(!dir.path().join("from_env2").exists());
}

#[test]
fn cli_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "scenario.seed = 5\nscenario.kind = \"circle\"\n",
    )
    .unwrap();
    let out = hvs(
        &[
            "config",
            "--config",
            "c.toml",
            "--seed",
            "9",
            "--scenario",
            "rectangle",
            "--set",
            "gains.k2=4",
        ],
        dir.path(),
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("scenario.seed = 9"));
    assert!(text.contains("scenario.kind = \"rectangle\""));
    assert!(text.contains("gains.k2 = 4.0"));
}

#[test]
fn plots_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    cmd_run(&short(0.3), dir.path()).unwrap();
    let trace = dir.path().join("trace.csv");
    let a = hvs_cli::commands::cmd_plot(&trace, &dir.path().join("p1")).unwrap();
    let b = hvs_cli::commands::cmd_plot(&trace, &dir.path().join("p2")).unwrap();
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        let sx = std::fs::read_to_string(x).unwrap();
        assert!(sx.starts_with("<svg"));
        assert_eq!(sx, std::fs::read_to_string(y).unwrap());
    }
}

#[test]
fn single_record_trace_plots() {
    let dir = tempfile::tempdir().unwrap();
    cmd_run(&short(0.0), dir.path()).unwrap();
    let out = hvs(&["plot", "trace.csv", "--out", "p"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("p/lyapunov.svg").exists());
}

#[test]
fn plot_of_malformed_trace_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.csv"), "t,q0\n0.0,x\n").unwrap();
    let out = hvs(&["plot", "t.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("record 0"));
}

#[test]
fn sweep_isolates_failures() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short(0.1);
    cfg.seed = 40;
    let report = cmd_sweep(&cfg, 3, dir.path(), false).unwrap();
    assert_eq!(
        report.runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
        vec![40, 41, 42]
    );
    assert_eq!(sweep_seed(40, 2), 42);
    assert!(dir.path().join("sweep.csv").exists());
    let summary = std::fs::read_to_string(dir.path().join("sweep.txt")).unwrap();
    assert!(summary.contains("runs = 3"));

    // An unreachable start pose makes every run fail; the sweep still reports.
    let mut broken = short(0.1);
    broken.target_center = [5.0, 0.0, 0.4];
    let report = cmd_sweep(&broken, 2, &dir.path().join("broken"), false).unwrap();
    assert!(report
        .runs
        .iter()
        .all(|r| matches!(r.status, Status::Failed(_))));
    assert_eq!(report.fraction(), 0.0);
}

#[test]
fn selftest_passes() {
    let checks = hvs_cli::commands::selftest(&RunConfig::default()).unwrap();
    for c in checks {
        assert!(c.passed(), "{} = {}", c.name, c.value);
    }
}

#[test]
fn sweep_with_true_estimates_converges_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short(2.0);
    cfg.estimates.delta = 0.0;
    let report = cmd_sweep(&cfg, 3, dir.path(), false).unwrap();
    assert_eq!(report.fraction(), 1.0);
}

#[test]
fn single_seed_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short(0.3);
    cfg.seed = 4;
    let single = cmd_run(&cfg, &dir.path().join("run")).unwrap();
    let sweep = cmd_sweep(&cfg, 1, &dir.path().join("sweep"), true).unwrap();
    assert_eq!(sweep.runs[0].status, single.status);
    assert_eq!(sweep.runs[0].metrics, single.metrics);
    let a = std::fs::read(dir.path().join("run/trace.csv")).unwrap();
    let b = std::fs::read(dir.path().join("sweep/trace_seed4.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short(0.2);
    cmd_sweep(&cfg, 2, &dir.path().join("a"), false).unwrap();
    cmd_sweep(&cfg, 2, &dir.path().join("b"), false).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("a/sweep.csv")).unwrap(),
        std::fs::read(dir.path().join("b/sweep.csv")).unwrap()
    );
}
