//! End-to-end checks of the command-line binary: every subcommand against a
//! compact configuration, byte determinism, CSV/JSON shape, and the
//! documented exit codes (0 ok, 2 config, 3 estimation, 4 singular scene).

use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU32, Ordering};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riscal"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn stdout_of(out: &Output) -> &str {
    std::str::from_utf8(&out.stdout).expect("utf-8 stdout")
}

fn stderr_of(out: &Output) -> &str {
    std::str::from_utf8(&out.stderr).expect("utf-8 stderr")
}

static CONFIG_ID: AtomicU32 = AtomicU32::new(0);

fn write_config(body: &str) -> PathBuf {
    let id = CONFIG_ID.fetch_add(1, Ordering::Relaxed);
    let path = std::env::temp_dir().join(format!(
        "riscal-cli-test-{}-{id}.toml",
        std::process::id()
    ));
    std::fs::write(&path, body).expect("config written");
    path
}

/// Small arrays, short sounding, coarse grid: seconds instead of minutes,
/// same code paths as the reference scenario.
fn compact_config(user: [f64; 3]) -> String {
    format!(
        r#"
seed = 11
trials = 4
gain_seed = 1

[waveform]
carrier_hz = 28.0e9
bandwidth_hz = 400.0e6
subcarriers = 64
transmissions = 12
tx_power_dbm = 30.0
noise_psd_dbm_hz = -173.8
noise_figure_db = 10.0

[bs]
position = [0.0, 0.0, 0.0]
array_rows = 4
array_cols = 4

[ris]
position = [4.0, 10.0, 0.0]
yaw_rad = -1.5707963267948966
array_rows = 8
array_cols = 8

[[users]]
position = [{}, {}, {}]
clock_offset_s = 1.0e-8

[priors]
user_box_min = [0.0, 0.0, -10.0]
user_box_max = [10.0, 10.0, 0.0]
yaw_min_rad = -3.141592653589793
yaw_max_rad = 3.141592653589793
distance_step_m = 0.25
yaw_step_deg = 0.5
"#,
        user[0], user[1], user[2]
    )
}

#[test]
fn estimate_emits_deterministic_well_formed_json() {
    let cfg = write_config(&compact_config([5.0, 6.0, -5.0]));
    let cfg = cfg.to_str().unwrap();
    let first = run(&["--config", cfg, "estimate"]);
    let second = run(&["--config", cfg, "estimate"]);
    assert!(first.status.success(), "stderr: {}", stderr_of(&first));
    assert_eq!(first.stdout, second.stdout, "same invocation, same bytes");

    let json: serde_json::Value = serde_json::from_str(stdout_of(&first)).expect("valid JSON");
    assert!(json["converged"].is_boolean());
    assert!(json["iterations"].as_u64().is_some());
    assert_eq!(json["truth"]["users"].as_array().unwrap().len(), 1);
    assert!(json["refined_errors"]["ris_position_m"].as_f64().is_some());
    assert!(json["trace"].as_array().unwrap().len() >= 1);
}

#[test]
fn zero_noise_estimate_recovers_a_clean_scene() {
    let cfg = write_config(&compact_config([5.0, 6.0, -5.0]));
    let out = run(&["--config", cfg.to_str().unwrap(), "--zero-noise", "estimate"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let json: serde_json::Value = serde_json::from_str(stdout_of(&out)).unwrap();
    assert_eq!(json["converged"], true);
    let errs = &json["refined_errors"];
    assert!(errs["ris_position_m"].as_f64().unwrap() < 1e-6);
    assert!(errs["ris_yaw_deg"].as_f64().unwrap() < 1e-6);
    assert!(errs["user_position_m"][0].as_f64().unwrap() < 1e-6);
    assert!(errs["clock_ns"][0].as_f64().unwrap() < 1e-5);
}

#[test]
fn seed_override_changes_the_noise_draw() {
    let cfg = write_config(&compact_config([5.0, 6.0, -5.0]));
    let cfg = cfg.to_str().unwrap();
    let a = run(&["--config", cfg, "--seed", "21", "estimate"]);
    let b = run(&["--config", cfg, "--seed", "22", "estimate"]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn bounds_map_emits_flagged_rows_with_inf_and_no_nan() {
    let cfg = write_config(&compact_config([8.0, 8.0, -5.0]));
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "bounds-map",
        "--grid-nx",
        "6",
        "--grid-ny",
        "6",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x,y,user_bound_m,ris_bound_m,orient_bound_deg,clock_bound_ns,singular"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 36);
    assert!(!text.contains("NaN") && !text.contains("nan"));

    // Users on the x = 0 plane sit in the BS array plane: flagged singular
    // with inf bounds.
    let on_plane: Vec<&Vec<&str>> = rows.iter().filter(|r| r[0] == "0").collect();
    assert_eq!(on_plane.len(), 6);
    for row in on_plane {
        assert_eq!(row[6], "1");
        assert_eq!(row[2], "inf");
    }
    // Away from the blind structures the bounds are finite.
    assert!(rows.iter().any(|r| r[6] == "0" && r[2].parse::<f64>().unwrap().is_finite()));
}

#[test]
fn bounds_vs_ris_size_covers_all_variants_per_size() {
    // More sounding than the other tests: the joint problem needs it before
    // any variant becomes identifiable at these array sizes.
    let body = compact_config([8.0, 8.0, -5.0])
        .replace("transmissions = 12", "transmissions = 64");
    let cfg = write_config(&body);
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "bounds-vs-ris-size",
        "--sizes",
        "16,64",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n_ris,variant,user_bound_m,ris_bound_m,orient_bound_deg,clock_bound_ns,singular"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8, "two sizes, four variants");
    for variant in ["benchmark", "known_pRy", "known_oR", "known_pU"] {
        assert_eq!(rows.iter().filter(|r| r[1] == variant).count(), 2);
    }
    let row = |n: &str, variant: &str| -> &Vec<&str> {
        rows.iter().find(|r| r[0] == n && r[1] == variant).unwrap()
    };
    // Singular rows carry the inf literal; known blocks report zero.
    for r in &rows {
        if r[6] == "1" {
            assert_eq!(r[2], "inf");
            assert_eq!(r[5], "inf");
        }
    }
    assert_eq!(row("16", "known_pU")[2], "0", "known user block");
    assert_eq!(row("16", "known_oR")[4], "0", "known orientation block");
    // More elements tighten the identifiable variants.
    let user_bound = |n: &str, v: &str| -> f64 { row(n, v)[2].parse().unwrap() };
    assert!(user_bound("64", "known_pRy") < user_bound("16", "known_pRy"));
}

#[test]
fn mc_sweep_users_is_deterministic_across_runs() {
    let cfg = write_config(&compact_config([8.0, 8.0, -5.0]));
    let cfg = cfg.to_str().unwrap();
    let args = ["--config", cfg, "mc-sweep-users", "--users", "1,2", "--trials", "3"];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success(), "stderr: {}", stderr_of(&first));
    assert_eq!(first.stdout, second.stdout);
    let text = stdout_of(&first);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3, "header plus one row per user count");
    assert!(rows[1].starts_with("1,3,"));
    assert!(rows[2].starts_with("2,3,"));
    assert!(!text.contains("NaN"));
}

#[test]
fn cost_surface_flags_one_argmin_near_the_truth() {
    let cfg = write_config(&compact_config([5.0, 6.0, -5.0]));
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--zero-noise",
        "cost-surface",
        "--user",
        "5,6,-5",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "d0_m,o3_deg,cost,is_argmin");
    let argmins: Vec<Vec<&str>> = lines
        .map(|l| l.split(',').collect::<Vec<&str>>())
        .filter(|r| r[3] == "1")
        .collect();
    assert_eq!(argmins.len(), 1);
    let d0: f64 = argmins[0][0].parse().unwrap();
    let truth = (25.0f64 + 36.0 + 25.0).sqrt();
    assert!(
        (d0 - truth).abs() <= 0.25 + 1e-9,
        "argmin distance {d0} vs truth {truth}"
    );
}

#[test]
fn unknown_config_keys_are_rejected_with_line_diagnostics() {
    let cfg = write_config("mystery_knob = 3\n");
    let out = run(&["--config", cfg.to_str().unwrap(), "estimate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("mystery_knob"), "stderr: {err}");
    assert!(err.contains("line 1"), "stderr: {err}");
}

#[test]
fn missing_config_file_exits_with_config_code() {
    let out = run(&["--config", "/definitely/not/here.toml", "estimate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_square_ris_sizes_are_a_config_error() {
    let cfg = write_config(&compact_config([8.0, 8.0, -5.0]));
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "bounds-vs-ris-size",
        "--sizes",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("perfect squares"));
}

#[test]
fn zero_trials_are_a_config_error() {
    let cfg = write_config(&compact_config([8.0, 8.0, -5.0]));
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "mc-sweep-users",
        "--users",
        "1",
        "--trials",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn blind_scene_in_single_scene_command_exits_singular() {
    // A single sounding snapshot cannot separate the channel gains from the
    // measurement parameters: synthesis is singular, exit code 4.
    let body = compact_config([8.0, 8.0, -5.0])
        .replace("transmissions = 12", "transmissions = 1");
    let cfg = write_config(&body);
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "cost-surface",
        "--user",
        "8,8,-5",
    ]);
    assert_eq!(out.status.code(), Some(4), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("singular"), "stderr: {}", stderr_of(&out));
}

#[test]
fn estimate_reports_init_failure_when_prior_excludes_the_ray() {
    // Prior box far below the direct path: the bearing ray never enters it,
    // initialization cannot place the user, exit code 3 with a JSON error.
    let body = compact_config([8.0, 8.0, -5.0]).replace(
        "user_box_min = [0.0, 0.0, -10.0]\nuser_box_max = [10.0, 10.0, 0.0]",
        "user_box_min = [0.0, 0.0, -10.0]\nuser_box_max = [1.0, 1.0, -9.0]",
    );
    assert!(body.contains("[1.0, 1.0, -9.0]"), "replacement applied");
    let cfg = write_config(&body);
    let out = run(&["--config", cfg.to_str().unwrap(), "estimate"]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
    let json: serde_json::Value = serde_json::from_str(stdout_of(&out)).expect("JSON error report");
    assert!(json["error"].as_str().is_some());
}

#[test]
fn ambiguous_user_triggers_a_warning() {
    // The reference benchmark user admits a second in-prior geometry that
    // reproduces the measurement exactly; the estimate command must say so.
    let cfg = write_config(&compact_config([8.0, 8.0, -5.0]));
    let out = run(&["--config", cfg.to_str().unwrap(), "--zero-noise", "estimate"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let json: serde_json::Value = serde_json::from_str(stdout_of(&out)).unwrap();
    let warnings = json["warnings"].as_array().unwrap();
    assert!(
        warnings.iter().any(|w| w.as_str().unwrap().contains("ambiguous")),
        "warnings: {warnings:?}"
    );
}

#[test]
fn output_file_matches_stdout_stream() {
    let cfg = write_config(&compact_config([5.0, 6.0, -5.0]));
    let cfg = cfg.to_str().unwrap();
    let out_path = std::env::temp_dir().join(format!("riscal-out-{}.csv", std::process::id()));
    let streamed = run(&["--config", cfg, "bounds-vs-ris-size", "--sizes", "16"]);
    let filed = run(&[
        "--config",
        cfg,
        "--out",
        out_path.to_str().unwrap(),
        "bounds-vs-ris-size",
        "--sizes",
        "16",
    ]);
    assert!(filed.status.success());
    assert!(filed.stdout.is_empty(), "file mode keeps stdout clean");
    let written = std::fs::read(&out_path).unwrap();
    assert_eq!(written, streamed.stdout);
    std::fs::remove_file(&out_path).ok();
}
