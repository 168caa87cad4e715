//! End-to-end CLI tests driving the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ssmrom")
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_synth_config(dir: &Path) -> PathBuf {
    let path = dir.join("synth.toml");
    std::fs::write(
        &path,
        r#"
system = "stuart_landau"
lambda_re = -0.05
lambda_im = 1.0
gamma_re = -0.1
gamma_im = -0.2
n_obs = 5
lift_seed = 3
noise = 0.0
dt = 0.05
horizon = 45.0
amplitudes = [0.3, 0.45, 0.6, 0.5]
phases = [0.0, 0.9, 1.8, 2.7]
"#,
    )
    .unwrap();
    path
}

fn write_run_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        r#"
d = 2
m = 3
r = 3
n = 3
p = 1
k = 1
test_indices = [3]
alpha = "coord:0"
omega_min = 0.5
omega_max = 1.5
frc_rho_max = 1.5
frc_points = 200
calibration = [[1.02, 0.1]]
"#,
    )
    .unwrap();
    path
}

/// synth -> fit -> predict -> inspect -> backbone -> frc, checking outputs
/// and printed NMTE along the way.
#[test]
fn full_cli_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let synth_cfg = write_synth_config(root);
    let run_cfg = write_run_config(root);

    // synth
    let out = run(
        &[
            "synth",
            "--config",
            synth_cfg.to_str().unwrap(),
            "--out",
            "data",
            "--seed",
            "7",
        ],
        root,
    );
    assert!(
        out.status.success(),
        "synth: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for i in 0..4 {
        assert!(root.join(format!("data/traj_{i:03}.csv")).exists());
    }
    assert!(root.join("data/ground_truth.txt").exists());
    let gt = std::fs::read_to_string(root.join("data/ground_truth.txt")).unwrap();
    assert!(gt.contains("rho' ="), "{gt}");

    // fit
    let out = run(
        &[
            "fit",
            "--config",
            run_cfg.to_str().unwrap(),
            "--out",
            "model.ssm",
            "data/traj_000.csv",
            "data/traj_001.csv",
            "data/traj_002.csv",
            "data/traj_003.csv",
        ],
        root,
    );
    assert!(
        out.status.success(),
        "fit: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("eigenvalues:"), "{report}");
    assert!(report.contains("test NMTE"), "{report}");

    // predict on the held-out trajectory: NMTE < 1%
    let out = run(
        &[
            "predict",
            "--archive",
            "model.ssm",
            "--out",
            "pred.csv",
            "data/traj_003.csv",
        ],
        root,
    );
    assert!(
        out.status.success(),
        "predict: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    let nmte_pct: f64 = text
        .trim()
        .strip_prefix("NMTE ")
        .and_then(|s| s.strip_suffix('%'))
        .expect("NMTE line")
        .parse()
        .unwrap();
    assert!(nmte_pct < 1.0, "NMTE {nmte_pct}%");
    let pred = std::fs::read_to_string(root.join("pred.csv")).unwrap();
    assert!(pred.lines().count() > 100);

    // inspect prints the polar normal form
    let out = run(&["inspect", "--archive", "model.ssm"], root);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("rho' ="), "{text}");
    assert!(text.contains("rho theta' ="), "{text}");

    // backbone CSV
    let out = run(
        &[
            "backbone",
            "--archive",
            "model.ssm",
            "--rho-max",
            "1.0",
            "--points",
            "30",
            "--out",
            "bb.csv",
        ],
        root,
    );
    assert!(
        out.status.success(),
        "backbone: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let bb = std::fs::read_to_string(root.join("bb.csv")).unwrap();
    assert!(bb.starts_with("# config_hash"));
    assert!(bb
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("rho,omega_rad_s,amplitude"));
    assert_eq!(bb.lines().count(), 32);

    // frc via calibration from the config
    let out = run(
        &[
            "frc",
            "--archive",
            "model.ssm",
            "--config",
            run_cfg.to_str().unwrap(),
            "--out",
            "frc.csv",
        ],
        root,
    );
    assert!(
        out.status.success(),
        "frc: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let frc = std::fs::read_to_string(root.join("frc.csv")).unwrap();
    assert!(frc
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("omega_rad_s,rho0,psi0_rad,amplitude,stable,branch,f"));
    assert!(frc.lines().count() > 10, "{frc}");
}

#[test]
fn frc_rejects_zero_forcing_with_exit_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let synth_cfg = write_synth_config(root);
    let run_cfg = write_run_config(root);
    let out = run(
        &[
            "synth",
            "--config",
            synth_cfg.to_str().unwrap(),
            "--out",
            "data",
        ],
        root,
    );
    assert!(out.status.success());
    let out = run(
        &[
            "fit",
            "--config",
            run_cfg.to_str().unwrap(),
            "--out",
            "model.ssm",
            "data/traj_000.csv",
            "data/traj_001.csv",
            "data/traj_002.csv",
            "data/traj_003.csv",
        ],
        root,
    );
    assert!(out.status.success());

    let out = run(
        &[
            "frc",
            "--archive",
            "model.ssm",
            "--f",
            "0",
            "--out",
            "frc.csv",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("forcing must be positive"), "{err}");
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let synth_cfg = write_synth_config(root);
    let run_cfg = write_run_config(root);

    let mut archives = Vec::new();
    let mut backbones = Vec::new();
    for tag in ["one", "two"] {
        let data_dir = format!("data_{tag}");
        let model = format!("model_{tag}.ssm");
        let bb = format!("bb_{tag}.csv");
        let out = run(
            &[
                "synth",
                "--config",
                synth_cfg.to_str().unwrap(),
                "--out",
                &data_dir,
                "--seed",
                "21",
            ],
            root,
        );
        assert!(out.status.success());
        let out = run(
            &[
                "fit",
                "--config",
                run_cfg.to_str().unwrap(),
                "--out",
                &model,
                &format!("{data_dir}/traj_000.csv"),
                &format!("{data_dir}/traj_001.csv"),
                &format!("{data_dir}/traj_002.csv"),
                &format!("{data_dir}/traj_003.csv"),
            ],
            root,
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let out = run(
            &[
                "backbone",
                "--archive",
                &model,
                "--rho-max",
                "0.8",
                "--points",
                "20",
                "--out",
                &bb,
            ],
            root,
        );
        assert!(out.status.success());
        archives.push(std::fs::read(root.join(&model)).unwrap());
        backbones.push(std::fs::read(root.join(&bb)).unwrap());
    }
    assert_eq!(archives[0], archives[1], "archives differ between runs");
    assert_eq!(
        backbones[0], backbones[1],
        "curve outputs differ between runs"
    );
}

#[test]
fn missing_file_and_bad_config_exit_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let run_cfg = write_run_config(root);
    let out = run(
        &[
            "fit",
            "--config",
            run_cfg.to_str().unwrap(),
            "--out",
            "model.ssm",
            "nonexistent.csv",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(root.join("bad.toml"), "d = 0\nm = 1\nr = 1\nn = 1\n").unwrap();
    std::fs::write(root.join("data.csv"), "t,y1\n0.0,1.0\n0.1,2.0\n").unwrap();
    let out = run(
        &[
            "fit",
            "--config",
            "bad.toml",
            "--out",
            "model.ssm",
            "data.csv",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(1));
}
