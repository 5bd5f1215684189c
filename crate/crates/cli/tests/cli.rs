//! End-to-end tests driving the compiled binary: exit codes, CSV output,
//! determinism, and the report formats of every subcommand.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_biofilm"))
}

fn run_args(args: &[&str]) -> Output {
    bin().args(args).output().expect("failed to spawn the biofilm binary")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run_args(args);
    assert!(
        out.status.success(),
        "biofilm {args:?} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("binary was killed by a signal")
}

const HEADER: &str = "t,H_rel,dissipation,mass_mean,min_u,max_M";

/// Parses a diagnostics CSV into rows of six floats, asserting the header.
fn parse_rows(text: &str) -> Vec<Vec<f64>> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(HEADER), "unexpected CSV header");
    lines
        .map(|line| {
            let row: Vec<f64> = line
                .split(',')
                .map(|f| f.parse().unwrap_or_else(|_| panic!("bad CSV field {f:?}")))
                .collect();
            assert_eq!(row.len(), 6, "row {line:?} does not have 6 fields");
            row
        })
        .collect()
}

fn csv_path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn run_writes_a_parsable_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = csv_path(dir.path(), "t1.csv");
    run_ok(&["run", "test=1", "nx=8", "ny=8", "t_final=0.01", "sample_every=20", &format!("out={out}")]);
    let rows = parse_rows(&std::fs::read_to_string(&out).unwrap());
    assert!(rows.len() >= 3, "expected several samples, got {}", rows.len());
    assert_eq!(rows[0][0], 0.0);
    let h: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    assert!(h.windows(2).all(|w| w[1] <= w[0]), "H_rel is not decreasing: {h:?}");
}

#[test]
fn identical_configs_give_byte_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (csv_path(dir.path(), "a.csv"), csv_path(dir.path(), "b.csv"));
    let args = ["run", "test=1", "nx=8", "ny=8", "t_final=0.01", "sample_every=10"];
    run_ok(&[&args[..], &[&format!("out={a}")]].concat());
    run_ok(&[&args[..], &[&format!("out={b}")]].concat());
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "two runs of the same config differ"
    );
}

#[test]
fn csv_goes_to_stdout_when_out_is_omitted() {
    let out = run_ok(&["run", "test=2", "nx=8", "ny=8", "t_final=0.002", "sample_every=10"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with(HEADER), "stdout does not start with the CSV header");
    parse_rows(&stdout);
}

#[test]
fn zero_final_time_emits_the_header_and_one_row() {
    let out = run_ok(&["run", "test=2", "nx=8", "ny=8", "t_final=0"]);
    let rows = parse_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 1, "expected exactly the initial sample");
    assert_eq!(rows[0][0], 0.0);
}

#[test]
fn neumann_benchmark_conserves_mass_in_the_csv() {
    let out = run_ok(&["run", "test=2", "nx=8", "ny=8", "t_final=0.02", "sample_every=50"]);
    // a = 1 sits on the relaxed corner of the exponent range; the run must
    // say so on stderr.
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("note:"), "missing a = 1 note on stderr: {stderr}");
    let rows = parse_rows(&String::from_utf8(out.stdout).unwrap());
    let masses: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let spread = masses.iter().cloned().fold(f64::MIN, f64::max)
        - masses.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 1e-10, "mass_mean drifted by {spread:e}");
}

#[test]
fn overrides_beat_config_file_entries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# small smoke benchmark\ntest = 2\nnx = 8\nny = 8\nt_final = 0.002\nsample_every = 10\n",
    )
    .unwrap();
    let out = run_ok(&["run", cfg.to_str().unwrap(), "t_final=0.004"]);
    let rows = parse_rows(&String::from_utf8(out.stdout).unwrap());
    let t_end = rows.last().unwrap()[0];
    assert!((t_end - 0.004).abs() <= 1e-9, "override ignored, run ended at t = {t_end}");
}

#[test]
fn unknown_keys_are_a_config_error() {
    let out = run_args(&["run", "test=1", "nxx=8"]);
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("nxx"), "stderr does not name the bad key: {stderr}");
}

#[test]
fn unknown_subcommands_print_usage() {
    let out = run_args(&["frobnicate"]);
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("usage:"), "no usage text: {stderr}");
    assert!(stderr.contains("frobnicate"));
}

#[test]
fn missing_subcommand_prints_usage() {
    let out = run_args(&[]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8(out.stderr).unwrap().contains("usage:"));
}

#[test]
fn a_second_config_file_is_rejected() {
    let out = run_args(&["run", "one.cfg", "two.cfg"]);
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("two config files"), "unexpected stderr: {stderr}");
}

#[test]
fn fit_reports_a_positive_decay_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = csv_path(dir.path(), "decay.csv");
    run_ok(&["run", "test=1", "nx=8", "ny=8", "t_final=0.05", "sample_every=5", &format!("out={out}")]);
    let fit = run_ok(&["fit", &format!("in={out}"), "model=exponential"]);
    let stdout = String::from_utf8(fit.stdout).unwrap();
    let beta_line = stdout
        .lines()
        .find(|l| l.starts_with("beta = "))
        .unwrap_or_else(|| panic!("no beta line in:\n{stdout}"));
    let beta: f64 = beta_line.trim_start_matches("beta = ").parse().unwrap();
    assert!(beta > 0.0, "fitted decay rate {beta} is not positive");

    let alg = run_ok(&["fit", &format!("in={out}"), "model=algebraic"]);
    let stdout = String::from_utf8(alg.stdout).unwrap();
    assert!(stdout.contains("constant = "), "algebraic report missing constant:\n{stdout}");
}

#[test]
fn fit_on_a_missing_file_is_an_input_error() {
    let out = run_args(&["fit", "in=/nonexistent/decay.csv"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn fit_rejects_unknown_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = csv_path(dir.path(), "decay.csv");
    run_ok(&["run", "test=1", "nx=8", "ny=8", "t_final=0.05", "sample_every=5", &format!("out={out}")]);
    let fit = run_args(&["fit", &format!("in={out}"), "model=parabolic"]);
    assert_eq!(exit_code(&fit), 2);
    assert!(String::from_utf8(fit.stderr).unwrap().contains("parabolic"));
}

#[test]
fn lattice_study_prints_the_refinement_table() {
    let out = run_ok(&["lattice-study", "base=4", "levels=2", "t_end=0.001"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("cells"), "missing table header:\n{stdout}");
    assert!(stdout.contains("sup_error"));
    assert_eq!(stdout.lines().count(), 3, "expected header plus two levels:\n{stdout}");
}

#[test]
fn validate_reactions_is_report_only() {
    let out = run_ok(&["validate-reactions", "samples=2000"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("kind = relaxation"), "wrong kind:\n{stdout}");
    assert!(stdout.contains("PASSED  dissipative pairing"), "pairing check missing:\n{stdout}");
    // The vanishing-biomass smallness check fails by design for the
    // relaxation kind; the command must still exit 0.
    assert!(stdout.contains("FAILED"), "expected the by-design failure:\n{stdout}");
}

#[test]
fn implicit_scheme_runs_from_the_cli() {
    let out = run_ok(&[
        "run", "test=1", "nx=8", "ny=8", "scheme=implicit", "dt=1e-3", "t_final=0.005",
        "sample_every=1",
    ]);
    let rows = parse_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 6);
}

#[test]
fn verify_suite_passes_end_to_end() {
    let out = run_ok(&["verify"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("regression fixture"), "fixture check missing:\n{stdout}");
    assert!(stdout.contains("checks passed"), "no summary line:\n{stdout}");
    assert!(!stdout.contains("FAIL "), "a check failed:\n{stdout}");
}
