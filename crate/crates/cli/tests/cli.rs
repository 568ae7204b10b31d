use std::process::Command as Process;

use rollpe_cli::{execute, run, CliError, Command, Format, Report, RunConfig};

fn config(command: Command, n: usize, trials: usize) -> RunConfig {
    let mut cfg = RunConfig::new(command);
    cfg.n = n;
    cfg.trials = trials;
    cfg
}

fn residuals(r: &Report) -> Vec<Option<f64>> {
    r.rows.iter().map(|row| row.residual).collect()
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_rollpe"))
}

#[test]
fn equivariance_report_passes() {
    let r = execute(&config(Command::EquivarianceReport, 16, 1000)).unwrap();
    assert_eq!(r.rows.len(), 1000);
    assert!(r.summary.max_residual.unwrap() < 1e-12);
    assert_eq!(r.exit_code(), 0);
}

#[test]
fn rope_equivalence_passes() {
    let r = execute(&config(Command::RopeEquivalence, 8, 1000)).unwrap();
    assert!(r.summary.max_residual.unwrap() < 1e-9);
    assert_eq!(r.summary.passed, Some(true));
}

#[test]
fn sweeps_are_deterministic() {
    for command in [
        Command::EquivarianceReport,
        Command::RopeEquivalence,
        Command::GradCheck,
        Command::MultiplexWitness,
        Command::AttentionDemo,
    ] {
        let cfg = config(command, 8, 20);
        let a = execute(&cfg).unwrap();
        let b = execute(&cfg).unwrap();
        assert_eq!(residuals(&a), residuals(&b), "{command:?}");
        assert_eq!(a.rows, b.rows, "{command:?}");
        let mut other = cfg.clone();
        other.seed = 1;
        if command != Command::AttentionDemo && command != Command::MultiplexWitness {
            assert_ne!(
                residuals(&a),
                residuals(&execute(&other).unwrap()),
                "{command:?}"
            );
        }
    }
}

#[test]
fn multiplex_witness_exit_semantics() {
    let mut cfg = config(Command::MultiplexWitness, 8, 10_000);
    let found = execute(&cfg).unwrap();
    assert_eq!(found.summary.passed, Some(true));
    assert!(found.summary.max_residual.unwrap() > 1e-3);

    cfg.waves = 1;
    cfg.trials = 200;
    let single = execute(&cfg).unwrap();
    assert_eq!(single.summary.notes["witness_found"], false);
    assert_eq!(single.summary.passed, Some(true));
}

#[test]
fn attention_demo_single_token_scores_are_one() {
    let mut cfg = config(Command::AttentionDemo, 8, 1);
    cfg.t = 1;
    let r = execute(&cfg).unwrap();
    assert_eq!(r.rows.len(), 6);
    for row in &r.rows {
        assert_eq!(row.extras["score"], 1.0);
    }
}

#[test]
fn attention_demo_flags_translation_behavior() {
    let r = execute(&config(Command::AttentionDemo, 8, 1)).unwrap();
    let gaps = &r.summary.notes["max_gap_by_kind"];
    assert_eq!(gaps["roll_discrete"], 0.0);
    assert!(gaps["multiplexed_roll"].as_f64().unwrap() > 0.0);
    assert_eq!(r.summary.passed, Some(true));
}

#[test]
fn bench_reports_rates_without_verdict() {
    let mut cfg = config(Command::Bench, 64, 2000);
    cfg.bench_warmup = 10;
    let r = execute(&cfg).unwrap();
    for op in ["roll_discrete", "roll_continuous_fft", "rope_apply"] {
        assert!(r.summary.ops_per_sec[op] > 0.0, "{op}");
    }
    assert_eq!(r.summary.passed, None);
    assert_eq!(r.exit_code(), 0);
}

#[test]
fn invalid_configs_are_rejected() {
    let odd = config(Command::GradCheck, 7, 1);
    assert!(matches!(execute(&odd), Err(CliError::Config(_))));
    let mut demo = config(Command::AttentionDemo, 8, 1);
    demo.t = 257;
    assert!(matches!(execute(&demo), Err(CliError::Config(_))));
    let mut lambda = config(Command::RopeEquivalence, 8, 1);
    lambda.lambda = -1.0;
    assert!(matches!(execute(&lambda), Err(CliError::Config(_))));
}

#[test]
fn writes_json_and_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Command::RopeEquivalence, 8, 10);
    cfg.out = Some(dir.path().join("r.json"));
    let report = run(&cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("r.json")).unwrap();
    let back: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(back.schema_version, "1");
    assert_eq!(back.rows, report.rows);

    cfg.format = Format::Csv;
    cfg.out = Some(dir.path().join("r.csv"));
    run(&cfg).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.starts_with("trial,n,lambda,p_q,p_k,residual\n"));
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Command::RopeEquivalence, 8, 2);
    cfg.out = Some(dir.path().join("missing").join("r.json"));
    assert!(matches!(run(&cfg), Err(CliError::Io { .. })));
}

#[test]
fn binary_exit_codes() {
    let ok = binary()
        .args([
            "--command",
            "equivariance-report",
            "--n",
            "8",
            "--trials",
            "50",
            "--format",
            "csv",
        ])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8(ok.stdout)
        .unwrap()
        .starts_with("trial,n,lambda,p_q,p_k,residual"));

    let bad = binary()
        .args(["--command", "grad-check", "--n", "7"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(!bad.stderr.is_empty());

    let unknown = binary().args(["--command", "nope"]).output().unwrap();
    assert_ne!(unknown.status.code(), Some(0));
}

#[test]
fn binary_writes_to_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.json");
    let out = binary()
        .args([
            "--command",
            "multiplex-witness",
            "--n",
            "8",
            "--w",
            "2",
            "--seed",
            "3",
            "--out",
        ])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let report: Report = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report.command, Command::MultiplexWitness);
    assert_eq!(report.config.waves, 2);
}
