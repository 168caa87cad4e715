//! Command-line interface: synthetic data generation, fitting, prediction,
//! and curve export.
//!
//! Exit codes: 0 success, 1 data/configuration error, 2 numerical failure.
//! Diagnostics go to standard error; results go to files or standard output.

use super::archive::{self, ArchiveMeta};
use super::csvio;
use super::{fit, RunConfig, SynthConfig};
use crate::error::{Error, Result};
use crate::predict::{
    backbone, forcing_amplitude, frc, frc_rho_grid, nmte, predict_decay, AmplitudeFunctional, Frc,
};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "ssmrom",
    version,
    about = "Data-driven reduced-order models on spectral submanifolds: \
             fit invariant manifolds and sparse normal forms from decay data, \
             then predict decay, backbone curves, and forced response."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic oracle datasets (CSV files plus a ground-truth sidecar).
    Synth {
        /// Synthetic system description (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for trajectory CSVs.
        #[arg(long)]
        out: PathBuf,
        /// Noise seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the model chain to trajectory CSVs and write a model archive.
    Fit {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Archive output path.
        #[arg(long)]
        out: PathBuf,
        /// Unused; accepted for interface uniformity.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Free-form provenance stamp stored in the archive (no whitespace).
        #[arg(long, default_value = "")]
        stamp: String,
        /// Trajectory CSV files.
        #[arg(required = true)]
        data: Vec<PathBuf>,
    },
    /// Predict the decay of a trajectory from its first embedded snapshot
    /// and report the NMTE against the rest of it.
    Predict {
        /// Model archive.
        #[arg(long)]
        archive: PathBuf,
        /// Predicted-trajectory CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional run configuration (unused here; accepted for uniformity).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reference trajectory CSV.
        data: PathBuf,
    },
    /// Sample the backbone curve and write rho, omega_rad_s, amplitude.
    Backbone {
        #[arg(long)]
        archive: PathBuf,
        /// Largest normal-form amplitude to sample.
        #[arg(long)]
        rho_max: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Curve CSV output.
        #[arg(long)]
        out: PathBuf,
        /// Optional run configuration providing the amplitude functional.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Trace forced response curves and write
    /// omega_rad_s, rho0, psi0_rad, amplitude, stable, branch, f.
    Frc {
        #[arg(long)]
        archive: PathBuf,
        /// Normal-form forcing amplitude; omit to calibrate from the
        /// configuration's calibration points.
        #[arg(long)]
        f: Option<f64>,
        /// Run configuration with omega range, rho sweep, calibration points.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Curve CSV output.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the fitted normal form in polar coordinates.
    Inspect {
        #[arg(long)]
        archive: PathBuf,
        /// Optional output file (defaults to standard output).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out, seed } => cmd_synth(&config, &out, seed),
        Command::Fit {
            config,
            out,
            stamp,
            data,
            seed: _,
        } => cmd_fit(&config, &out, &stamp, &data),
        Command::Predict {
            archive,
            out,
            data,
            config: _,
            seed: _,
        } => cmd_predict(&archive, out.as_deref(), &data),
        Command::Backbone {
            archive,
            rho_max,
            points,
            out,
            config,
            seed: _,
        } => cmd_backbone(&archive, rho_max, points, &out, config.as_deref()),
        Command::Frc {
            archive,
            f,
            config,
            out,
            seed: _,
        } => cmd_frc(&archive, f, config.as_deref(), &out),
        Command::Inspect {
            archive,
            out,
            config: _,
            seed: _,
        } => cmd_inspect(&archive, out.as_deref()),
    }
}

fn read_config(path: &Path) -> Result<(RunConfig, String)> {
    let text = std::fs::read_to_string(path)?;
    Ok((RunConfig::from_toml(&text)?, text))
}

fn cmd_synth(config: &Path, out: &Path, seed: u64) -> Result<()> {
    let text = std::fs::read_to_string(config)?;
    let cfg = SynthConfig::from_toml(&text)?;
    let system = cfg.build_system()?;
    std::fs::create_dir_all(out)?;

    let n_pairs = system.kind().state_dim() / 2;
    for (i, &amp) in cfg.amplitudes.iter().enumerate() {
        let phase = cfg.phases.get(i).copied().unwrap_or(0.0);
        let mut z0 = vec![num_complex::Complex64::from_polar(amp, phase)];
        if n_pairs == 2 {
            let amp2 = cfg.amplitudes2.get(i).copied().unwrap_or(amp);
            z0.push(num_complex::Complex64::from_polar(amp2, phase * 0.5));
        }
        let traj = system.simulate(&z0, cfg.horizon, cfg.dt, seed.wrapping_add(i as u64))?;
        let path = out.join(format!("traj_{i:03}.csv"));
        csvio::write_trajectory(
            &path,
            &traj,
            &format!(
                "synthetic {} trajectory {i}, seed {seed}, noise chacha8",
                cfg.system
            ),
        )?;
        eprintln!("wrote {}", path.display());
    }

    // ground-truth sidecar, when the normal form is known in closed form
    match system.ground_truth_normal_form() {
        Ok(nf) => {
            let polar = crate::normal_form::to_polar(&nf)?;
            let mut text = String::from("# ground-truth normal form\n");
            for line in polar.format_equations(6) {
                text.push_str(&line);
                text.push('\n');
            }
            for line in super::describe_polymap(nf.dynamics(), 6) {
                text.push_str(&line);
                text.push('\n');
            }
            std::fs::write(out.join("ground_truth.txt"), text)?;
        }
        Err(e) => eprintln!("no ground-truth sidecar: {e}"),
    }
    Ok(())
}

fn cmd_fit(config: &Path, out: &Path, stamp: &str, data: &[PathBuf]) -> Result<()> {
    if stamp.chars().any(char::is_whitespace) {
        return Err(Error::Config("stamp must not contain whitespace".into()));
    }
    let (cfg, cfg_text) = read_config(config)?;
    let set = csvio::load_trajectories(data)?;
    let (model, report) = fit(&cfg, &set)?;
    let meta = ArchiveMeta {
        tool_version: TOOL_VERSION.into(),
        config_hash: archive::fnv1a64(cfg_text.as_bytes()),
        stamp: stamp.to_string(),
    };
    archive::save(out, &model, &meta)?;
    print!("{}", report.render());
    eprintln!("archive written to {}", out.display());
    Ok(())
}

fn cmd_predict(archive_path: &Path, out: Option<&Path>, data: &Path) -> Result<()> {
    let (model, meta) = archive::load(archive_path)?;
    let traj = csvio::read_trajectory(data)?;
    if traj.n_obs() != model.n_obs {
        return Err(Error::Data(format!(
            "trajectory has {} observables, model expects {}",
            traj.n_obs(),
            model.n_obs
        )));
    }
    let snapshots = crate::embed::delay_embed(&traj, &model.embedding)?;
    let y0 = snapshots.data().column(0).into_owned();
    let horizon = (snapshots.n_cols() - 1) as f64 * model.embedding.dt;
    let predicted = predict_decay(&model, &y0, horizon)?;
    let reference =
        crate::embed::Trajectory::from_uniform(0.0, model.embedding.dt, snapshots.data().clone())?;
    let err = nmte(&reference, &predicted)?;
    println!("NMTE {:.4}%", 100.0 * err);

    if let Some(path) = out {
        // write the raw observable rows (delay-0 row of each channel block)
        let mut rows = nalgebra::DMatrix::zeros(model.n_obs, predicted.len());
        for c in 0..model.n_obs {
            rows.set_row(c, &predicted.samples().row(c * model.embedding.p));
        }
        let out_traj =
            crate::embed::Trajectory::new(traj.times()[..predicted.len()].to_vec(), rows)?;
        csvio::write_trajectory(
            path,
            &out_traj,
            &format!("predicted decay, config_hash {:016x}", meta.config_hash),
        )?;
        eprintln!("prediction written to {}", path.display());
    }
    Ok(())
}

fn alpha_from_config(config: Option<&Path>) -> Result<(AmplitudeFunctional, Option<RunConfig>)> {
    match config {
        Some(path) => {
            let (cfg, _) = read_config(path)?;
            Ok((cfg.amplitude_functional()?, Some(cfg)))
        }
        None => Ok((AmplitudeFunctional::Coordinate(0), None)),
    }
}

fn cmd_backbone(
    archive_path: &Path,
    rho_max: f64,
    points: usize,
    out: &Path,
    config: Option<&Path>,
) -> Result<()> {
    let (model, meta) = archive::load(archive_path)?;
    let (alpha, _) = alpha_from_config(config)?;
    let bb = backbone(&model, rho_max, points, alpha)?;
    csvio::write_backbone(out, &bb, meta.config_hash)?;
    eprintln!("backbone written to {}", out.display());
    Ok(())
}

fn cmd_frc(
    archive_path: &Path,
    f_direct: Option<f64>,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let (model, meta) = archive::load(archive_path)?;
    let (alpha, cfg) = alpha_from_config(config)?;
    let (omega_range, rho_max, n_points, calibration) = match &cfg {
        Some(c) => (
            (c.omega_min, c.omega_max),
            c.frc_rho_max,
            c.frc_points,
            c.calibration.clone(),
        ),
        None => ((0.0, f64::INFINITY), 1.0, 400, Vec::new()),
    };

    let mut forcings = Vec::new();
    if let Some(f) = f_direct {
        if f <= 0.0 {
            return Err(Error::Config("forcing must be positive".into()));
        }
        forcings.push(f);
    }
    for &(omega_cal, u_cal) in &calibration {
        let f = crate::predict::calibrate_forcing(&model, omega_cal, u_cal, alpha)?;
        eprintln!("calibrated f = {f:.6e} at omega = {omega_cal}, u = {u_cal}");
        forcings.push(f);
    }
    if forcings.is_empty() {
        return Err(Error::Config(
            "no forcing given: pass --f or calibration points in the config".into(),
        ));
    }

    let mut curves: Vec<Frc> = Vec::new();
    for f in forcings {
        let grid = frc_rho_grid(&model.polar, f, rho_max, n_points)?;
        let curve = frc(&model, f, omega_range, alpha, &grid)?;
        if curve.points.is_empty() {
            eprintln!("forcing f = {f:.4e}: no response points in range (f too small?)");
        }
        curves.push(curve);
    }
    csvio::write_frc(out, &curves, meta.config_hash)?;
    eprintln!("forced response written to {}", out.display());
    Ok(())
}

fn cmd_inspect(archive_path: &Path, out: Option<&Path>) -> Result<()> {
    let (model, meta) = archive::load(archive_path)?;
    let mut text = String::new();
    use std::fmt::Write;
    let _ = writeln!(text, "archive tool version: {}", meta.tool_version);
    let _ = writeln!(text, "config hash: {:016x}", meta.config_hash);
    if !meta.stamp.is_empty() {
        let _ = writeln!(text, "stamp: {}", meta.stamp);
    }
    let _ = writeln!(
        text,
        "embedding: p = {}, k = {}, dt = {}",
        model.embedding.p, model.embedding.k, model.embedding.dt
    );
    let _ = writeln!(
        text,
        "dimensions: observable {} -> manifold {} (order {}), dynamics order {}, normal form order {}",
        model.ssm.obs_dim(),
        model.ssm.d(),
        model.ssm.order(),
        model.reduced.order(),
        model.normal_form.order(),
    );
    let _ = writeln!(text, "eigenvalues:");
    for l in model.reduced.eigenvalues() {
        let _ = writeln!(text, "  {:.6} {:+.6}i", l.re, l.im);
    }
    let _ = writeln!(text, "normal form (polar):");
    for line in model.polar.format_equations(4) {
        let _ = writeln!(text, "  {line}");
    }
    if !model.normal_form.resonances().is_empty() {
        let basis = model.normal_form.dynamics().basis();
        let _ = writeln!(text, "retained resonant monomials:");
        for (row, exps) in model.normal_form.resonances() {
            if let Some(i) = basis.index_of(exps) {
                let _ = writeln!(text, "  row {}: {}", row + 1, basis.monomial_string(i, "z"));
            }
        }
    }
    for (i, e) in model.training_nmte.iter().enumerate() {
        let _ = writeln!(text, "training NMTE [{i}]: {:.4}%", 100.0 * e);
    }
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Re-exported for integration tests that check calibration arithmetic.
pub fn calibration_forcing_from_polar(
    polar: &crate::normal_form::PolarForm,
    omega_cal: f64,
    rho_cal: f64,
) -> Result<f64> {
    forcing_amplitude(polar, omega_cal, rho_cal)
}
