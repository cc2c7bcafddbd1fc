use std::fs;
use std::path::Path;
use std::process::Command;

use gsde_cli::config::{from_table, parse_table};
use gsde_cli::{load_config, run_experiment, Pipeline, EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK};

fn gsde(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_gsde")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn minimal_config_takes_documented_defaults() {
    let cfg = from_table(parse_table("pipeline = \"solve\"\nhorizon = 1.0\nsteps = 10\n", "inline").unwrap()).unwrap();
    assert_eq!(cfg.pipeline, Pipeline::Solve);
    assert_eq!((cfg.state_dim, cfg.driver_dim), (1, 1));
    assert_eq!((cfg.sigma_min, cfg.sigma_max, cfg.control_levels), (0.5, 1.0, 5));
    assert_eq!((cfg.replicates, cfg.seed, cfg.max_iter, cfg.max_particles), (1000, 0, 15, 64));
    assert_eq!((cfg.tol, cfg.p, cfg.c_p), (1e-3, 2.0, 4.0));
    assert_eq!(cfg.coefficient.name, "mean-field-ou");
    assert_eq!(cfg.x0(), vec![1.0]);
    assert_eq!(cfg.metric.instances, 200);
}

#[test]
fn missing_key_is_named() {
    let err = from_table(parse_table("pipeline = \"solve\"\nsteps = 10\n", "inline").unwrap()).unwrap_err();
    assert!(format!("{err:#}").contains("horizon"), "{err:#}");
}

#[test]
fn syntax_errors_carry_line_context() {
    let err = parse_table("horizon = 1.0\nsteps = = 3\n", "bad.toml").unwrap_err();
    let text = format!("{err:#}");
    assert!(text.contains("bad.toml") && text.contains('2'), "{text}");
}

#[test]
fn invalid_values_rejected_before_compute() {
    for body in [
        "horizon = -1.0\nsteps = 10",
        "horizon = 1.0\nsteps = 0",
        "horizon = 1.0\nsteps = 10\nreplicates = 0",
        "horizon = 1.0\nsteps = 10\ntol = 0.0",
        "horizon = 1.0\nsteps = 10\n[coefficient]\nname = \"nope\"",
        "horizon = 1.0\nsteps = 10\n[coefficient.params]\nzzz = 1.0",
    ] {
        let text = format!("pipeline = \"solve\"\n{body}\n");
        assert!(from_table(parse_table(&text, "inline").unwrap()).is_err(), "{body}");
    }
}

#[test]
fn written_config_reproduces_hash() {
    let dir = tempfile::tempdir().unwrap();
    let text = "pipeline = \"integrals\"\nhorizon = 0.5\nsteps = 8\nreplicates = 20\nseed = 9\noutput_dir = \"elsewhere\"\n[integrals]\nexponents = [1.0, 3.0]\n";
    let cfg = from_table(parse_table(text, "inline").unwrap()).unwrap();
    let path = dir.path().join("cfg.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let back = load_config(&path).unwrap();
    assert_eq!(back.hash(), cfg.hash());
    // Output location never enters the hash.
    assert_eq!(back.output_dir, None);
}

#[test]
fn same_seed_gives_identical_bytes_and_manifest() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = "pipeline = \"solve\"\nhorizon = 1.0\nsteps = 20\nreplicates = 100\ncontrol_levels = 3\nseed = 4\n";
    let cfg = from_table(parse_table(text, "inline").unwrap()).unwrap();
    let ra = run_experiment(&cfg, a.path()).unwrap();
    let rb = run_experiment(&cfg, b.path()).unwrap();
    assert_eq!(ra.exit_code, EXIT_OK);
    assert_eq!(csvs(a.path()), csvs(b.path()));
    assert_eq!(
        fs::read(a.path().join("manifest.json")).unwrap(),
        fs::read(b.path().join("manifest.json")).unwrap()
    );
    assert_eq!(ra.config_hash, rb.config_hash);
}

#[test]
fn unknown_coefficient_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, err) = gsde(&["solve", "--horizon", "1", "--steps", "5", "--coefficient", "nope", "--out", out]);
    assert_eq!(code, EXIT_ERROR);
    assert!(err.contains("unknown coefficient"), "{err}");
}

#[test]
fn single_iteration_on_mean_field_problem_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _) = gsde(&["solve", "--horizon", "1", "--steps", "20", "--replicates", "50", "--max-iter", "1", "--out", out]);
    assert_eq!(code, EXIT_NOT_CONVERGED);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["converged"], false);
    assert_eq!(manifest["exit_code"], 2);
}

#[test]
fn run_subcommand_reads_pipeline_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "pipeline = \"metric\"\nhorizon = 1.0\nsteps = 1\n[metric]\ninstances = 5\n").unwrap();
    let out = dir.path().join("o");
    let (code, err) = gsde(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--set", "metric.instances=7"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let metric = fs::read_to_string(out.join("metric.csv")).unwrap();
    assert_eq!(metric.lines().count(), 8);
    assert!(!metric.contains('\r'));
    assert!(out.join("timings.json").exists());
}
