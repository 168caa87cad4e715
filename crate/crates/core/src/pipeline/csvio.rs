//! Trajectory and curve CSV input/output.
//!
//! Trajectory schema: a header row, column 1 `t` in seconds, remaining
//! columns observables; one trajectory per file.

use crate::embed::Trajectory;
use crate::error::{Error, Result};
use crate::predict::{Backbone, Frc};
use nalgebra::DMatrix;
use std::io::Write;
use std::path::Path;

/// A set of trajectories loaded from files (or built in memory), with the
/// observable dimension validated to be consistent.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    pub trajectories: Vec<Trajectory>,
    pub names: Vec<String>,
}

impl TrajectorySet {
    pub fn new(trajectories: Vec<Trajectory>, names: Vec<String>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::Data("trajectory set is empty".into()));
        }
        let n_obs = trajectories[0].n_obs();
        for (i, t) in trajectories.iter().enumerate() {
            if t.n_obs() != n_obs {
                return Err(Error::Data(format!(
                    "trajectory {} ({}) has {} observables, expected {n_obs}",
                    i,
                    names.get(i).map(String::as_str).unwrap_or("?"),
                    t.n_obs()
                )));
            }
        }
        Ok(TrajectorySet {
            trajectories,
            names,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.trajectories[0].n_obs()
    }
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }
    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Reads one trajectory from a CSV file.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let name = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{name}: {e}")))?;
    let n_cols = reader
        .headers()
        .map_err(|e| Error::Data(format!("{name}: {e}")))?
        .len();
    if n_cols < 2 {
        return Err(Error::Data(format!(
            "{name}: need a time column and at least one observable"
        )));
    }
    let mut times = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{name} row {}: {e}", row + 1)))?;
        if record.len() != n_cols {
            return Err(Error::Data(format!(
                "{name} row {}: {} fields, expected {n_cols}",
                row + 1,
                record.len()
            )));
        }
        let mut fields = record.iter().map(|s| {
            s.parse::<f64>()
                .map_err(|e| Error::Data(format!("{name} row {}: {e}", row + 1)))
        });
        times.push(fields.next().unwrap()?);
        for f in fields {
            values.push(f?);
        }
    }
    if times.is_empty() {
        return Err(Error::Data(format!("{name}: no samples")));
    }
    let n_obs = n_cols - 1;
    let samples = DMatrix::from_fn(n_obs, times.len(), |r, c| values[c * n_obs + r]);
    Trajectory::new(times, samples).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{name}: {msg}")),
        other => other,
    })
}

/// Loads and validates a set of trajectory files.
pub fn load_trajectories(paths: &[impl AsRef<Path>]) -> Result<TrajectorySet> {
    let mut trajectories = Vec::with_capacity(paths.len());
    let mut names = Vec::with_capacity(paths.len());
    for p in paths {
        trajectories.push(read_trajectory(p.as_ref())?);
        names.push(p.as_ref().display().to_string());
    }
    TrajectorySet::new(trajectories, names)
}

/// Writes a trajectory in the standard schema.
pub fn write_trajectory(path: &Path, traj: &Trajectory, header_comment: &str) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    if !header_comment.is_empty() {
        writeln!(out, "# {header_comment}")?;
    }
    write!(out, "t")?;
    for i in 0..traj.n_obs() {
        write!(out, ",y{}", i + 1)?;
    }
    writeln!(out)?;
    for (j, &t) in traj.times().iter().enumerate() {
        write!(out, "{t}")?;
        for r in 0..traj.n_obs() {
            write!(out, ",{}", traj.samples()[(r, j)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Writes a backbone curve: rho, omega_rad_s, amplitude.
pub fn write_backbone(path: &Path, bb: &Backbone, config_hash: u64) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# config_hash {config_hash:016x}")?;
    writeln!(out, "rho,omega_rad_s,amplitude")?;
    for i in 0..bb.rho.len() {
        writeln!(out, "{},{},{}", bb.rho[i], bb.omega[i], bb.amplitude[i])?;
    }
    Ok(())
}

/// Writes a forced response curve:
/// omega_rad_s, rho0, psi0_rad, amplitude, stable, branch, f.
pub fn write_frc(path: &Path, curves: &[Frc], config_hash: u64) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# config_hash {config_hash:016x}")?;
    writeln!(out, "omega_rad_s,rho0,psi0_rad,amplitude,stable,branch,f")?;
    for curve in curves {
        for p in &curve.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.omega,
                p.rho0,
                p.psi0,
                p.amplitude,
                u8::from(p.stable),
                p.branch,
                curve.f
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let samples = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let traj = Trajectory::from_uniform(0.0, 0.5, samples).unwrap();
        write_trajectory(&path, &traj, "test").unwrap();
        let loaded = read_trajectory(&path).unwrap();
        assert_eq!(loaded.samples(), traj.samples());
        assert_eq!(loaded.times(), traj.times());

        let set = load_trajectories(&[&path, &path]).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.n_obs(), 2);
    }

    #[test]
    fn time_gap_is_rejected_with_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gap.csv");
        std::fs::write(&path, "t,y1\n0.0,1.0\n0.1,2.0\n0.2,3.0\n0.4,4.0\n").unwrap();
        match read_trajectory(&path) {
            Err(Error::Data(msg)) => assert!(msg.contains("row 3"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn header_only_file_is_no_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "t,y1,y2\n").unwrap();
        match read_trajectory(&path) {
            Err(Error::Data(msg)) => assert!(msg.contains("no samples"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_observable_counts_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        std::fs::write(&a, "t,y1\n0.0,1.0\n0.1,2.0\n").unwrap();
        std::fs::write(&b, "t,y1,y2\n0.0,1.0,1.0\n0.1,2.0,2.0\n").unwrap();
        assert!(matches!(load_trajectories(&[&a, &b]), Err(Error::Data(_))));
    }
}
