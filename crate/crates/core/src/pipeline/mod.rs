//! Pipeline orchestration: run configuration, the end-to-end fit, model
//! persistence, and the command-line interface.

pub mod archive;
pub mod cli;
pub mod csvio;

pub use csvio::{load_trajectories, TrajectorySet};

use crate::embed::{
    delay_embed, estimate_frequencies, suggest_timelag, trim_transient, EmbeddingConfig, TrimPolicy,
};
use crate::error::{Error, Result};
use crate::manifold::SsmModel;
use crate::normal_form::{
    cubic_normal_form_2d, general_normal_form, to_polar, InverseStrategy, ResonanceCriterion,
    ResonanceOptions,
};
use crate::poly::PolyMap;
use crate::predict::{nmte, predict_decay, AmplitudeFunctional, FullModel};
use crate::reduced::{differentiate, fit_reduced_dynamics, modalize, ModalOptions};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;

/// User-chosen orders and pipeline settings, read from a flat TOML file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Manifold dimension.
    pub d: usize,
    /// Manifold parametrization order.
    pub m: u32,
    /// Reduced dynamics order.
    pub r: u32,
    /// Normal form order.
    pub n: u32,
    /// Delay embedding dimension (1 = no embedding).
    #[serde(default = "default_p")]
    pub p: usize,
    /// Timelag multiplier; 0 selects it from the second dominant frequency.
    #[serde(default)]
    pub k: usize,
    /// Transient policy: "none", "auto", "index:N", or "time:T".
    #[serde(default = "default_trim")]
    pub trim: String,
    /// Relative near-resonance tolerance.
    #[serde(default = "default_tol_res")]
    pub tol_res: f64,
    /// Use the full complex detuning instead of imaginary parts only.
    #[serde(default)]
    pub resonance_full_complex: bool,
    /// Indices (into the input file list) held out as test trajectories.
    #[serde(default)]
    pub test_indices: Vec<usize>,
    /// Amplitude functional: "coord:I" or "block:START:LEN" over embedded
    /// coordinates.
    #[serde(default = "default_alpha")]
    pub alpha: String,
    /// FRC frequency range (rad/s).
    #[serde(default)]
    pub omega_min: f64,
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
    /// Largest response amplitude swept when tracing FRCs.
    #[serde(default = "default_rho_max")]
    pub frc_rho_max: f64,
    /// Number of rho samples per FRC sweep.
    #[serde(default = "default_frc_points")]
    pub frc_points: usize,
    /// Calibration points (omega_cal rad/s, u_cal observable amplitude).
    #[serde(default)]
    pub calibration: Vec<(f64, f64)>,
}

fn default_p() -> usize {
    1
}
fn default_trim() -> String {
    "none".into()
}
fn default_tol_res() -> f64 {
    0.05
}
fn default_alpha() -> String {
    "coord:0".into()
}
fn default_omega_max() -> f64 {
    f64::INFINITY
}
fn default_rho_max() -> f64 {
    1.0
}
fn default_frc_points() -> usize {
    400
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 || self.r == 0 || self.n == 0 {
            return Err(Error::Config("orders d, m, r, n must all be >= 1".into()));
        }
        if self.p == 0 {
            return Err(Error::Config("embedding dimension p must be >= 1".into()));
        }
        if self.d % 2 != 0 {
            log::warn!(
                "manifold dimension d = {} is odd; normal forms assume conjugate pairs",
                self.d
            );
        }
        if !(0.0..1.0).contains(&self.tol_res) {
            return Err(Error::Config("tol_res must lie in [0, 1)".into()));
        }
        self.trim_policy()?;
        self.amplitude_functional()?;
        Ok(())
    }

    pub fn trim_policy(&self) -> Result<TrimPolicy> {
        let s = self.trim.as_str();
        if s == "none" {
            return Ok(TrimPolicy::Index(0));
        }
        if s == "auto" {
            return Ok(TrimPolicy::Auto {
                n_modes: (self.d / 2).max(1),
                threshold: 0.05,
            });
        }
        if let Some(rest) = s.strip_prefix("index:") {
            let i = rest
                .parse()
                .map_err(|e| Error::Config(format!("trim index: {e}")))?;
            return Ok(TrimPolicy::Index(i));
        }
        if let Some(rest) = s.strip_prefix("time:") {
            let t = rest
                .parse()
                .map_err(|e| Error::Config(format!("trim time: {e}")))?;
            return Ok(TrimPolicy::Time(t));
        }
        Err(Error::Config(format!(
            "unknown trim policy '{s}' (use none, auto, index:N, or time:T)"
        )))
    }

    pub fn amplitude_functional(&self) -> Result<AmplitudeFunctional> {
        let s = self.alpha.as_str();
        if let Some(rest) = s.strip_prefix("coord:") {
            let i = rest
                .parse()
                .map_err(|e| Error::Config(format!("alpha coordinate: {e}")))?;
            return Ok(AmplitudeFunctional::Coordinate(i));
        }
        if let Some(rest) = s.strip_prefix("block:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() == 2 {
                let start = parts[0]
                    .parse()
                    .map_err(|e| Error::Config(format!("alpha block: {e}")))?;
                let len = parts[1]
                    .parse()
                    .map_err(|e| Error::Config(format!("alpha block: {e}")))?;
                return Ok(AmplitudeFunctional::BlockNorm { start, len });
            }
        }
        Err(Error::Config(format!(
            "unknown amplitude functional '{s}' (use coord:I or block:START:LEN)"
        )))
    }
}

/// Everything the fit reports besides the model itself.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub k_used: usize,
    pub singular_values: Vec<f64>,
    pub energy_captured: f64,
    pub manifold_recon_error: f64,
    pub tangent_alignment: f64,
    pub dynamics_residual: f64,
    pub eigenvalues: Vec<Complex64>,
    pub resonance_lines: Vec<String>,
    /// Distinct phase combinations governing the resonant terms,
    /// e.g. "2 theta1 - theta2".
    pub resonance_relations: Vec<String>,
    pub gray_zone_lines: Vec<String>,
    pub regression_inverse_residual: f64,
    pub training_nmte: Vec<f64>,
    pub test_nmte: Vec<f64>,
    pub trim_starts: Vec<usize>,
}

impl FitReport {
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "timelag multiplier k = {}", self.k_used);
        let _ = writeln!(
            s,
            "leading singular values: {}",
            self.singular_values
                .iter()
                .take(8)
                .map(|v| format!("{v:.4e}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        let _ = writeln!(s, "subspace energy captured: {:.6}", self.energy_captured);
        let _ = writeln!(
            s,
            "manifold reconstruction error: {:.4e}",
            self.manifold_recon_error
        );
        let _ = writeln!(
            s,
            "tangent alignment angle: {:.4e} rad",
            self.tangent_alignment
        );
        let _ = writeln!(s, "dynamics fit residual: {:.4e}", self.dynamics_residual);
        let _ = writeln!(
            s,
            "eigenvalues: {}",
            self.eigenvalues
                .iter()
                .map(|l| format!("{:.6}{:+.6}i", l.re, l.im))
                .collect::<Vec<_>>()
                .join(", ")
        );
        if self.resonance_lines.is_empty() {
            let _ = writeln!(s, "resonances: none");
        } else {
            let _ = writeln!(s, "resonances ({}):", self.resonance_lines.len());
            for line in &self.resonance_lines {
                let _ = writeln!(s, "  {line}");
            }
        }
        for rel in &self.resonance_relations {
            let _ = writeln!(s, "resonance relation: psi = {rel}");
        }
        for line in &self.gray_zone_lines {
            let _ = writeln!(s, "near-resonance warning: {line}");
        }
        let _ = writeln!(
            s,
            "regression inverse residual: {:.4e}",
            self.regression_inverse_residual
        );
        for (i, e) in self.training_nmte.iter().enumerate() {
            let _ = writeln!(s, "training NMTE [{i}]: {:.4}%", 100.0 * e);
        }
        for (i, e) in self.test_nmte.iter().enumerate() {
            let _ = writeln!(s, "test NMTE [{i}]: {:.4}%", 100.0 * e);
        }
        s
    }
}

fn pool_columns(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = mats[0].nrows();
    let total: usize = mats.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, total);
    let mut col = 0;
    for m in mats {
        out.columns_mut(col, m.ncols()).copy_from(m);
        col += m.ncols();
    }
    out
}

/// Runs the full fitting chain on a trajectory set.
///
/// Embeddings and derivatives are computed per trajectory (samples never
/// cross trajectory boundaries); the manifold and dynamics regressions pool
/// all training columns.
pub fn fit(config: &RunConfig, data: &TrajectorySet) -> Result<(FullModel, FitReport)> {
    config.validate()?;
    for &i in &config.test_indices {
        if i >= data.len() {
            return Err(Error::Config(format!(
                "test index {i} out of range ({} trajectories)",
                data.len()
            )));
        }
    }
    let train_idx: Vec<usize> = (0..data.len())
        .filter(|i| !config.test_indices.contains(i))
        .collect();
    if train_idx.is_empty() {
        return Err(Error::Config("no training trajectories left".into()));
    }

    let dt = data.trajectories[0].dt();
    for (i, t) in data.trajectories.iter().enumerate() {
        if (t.dt() - dt).abs() > 1e-9 * dt {
            return Err(Error::Data(format!(
                "trajectory {i} has sampling time {:.6e}, expected {dt:.6e}",
                t.dt()
            )));
        }
    }

    // transient removal
    let policy = config.trim_policy()?;
    let mut trimmed = Vec::with_capacity(data.len());
    let mut trim_starts = Vec::with_capacity(data.len());
    for (i, traj) in data.trajectories.iter().enumerate() {
        let t = trim_transient(traj, policy).map_err(|e| annotate(e, i, "trim_transient"))?;
        trim_starts.push(traj.len() - t.len());
        trimmed.push(t);
    }

    // timelag selection
    let k_used = if config.k > 0 {
        config.k
    } else {
        let n_modes = (config.d / 2).max(2);
        let freqs = estimate_frequencies(&trimmed[train_idx[0]], n_modes)
            .map_err(|e| annotate(e, train_idx[0], "estimate_frequencies"))?;
        let omega2 = *freqs.last().expect("at least one peak");
        suggest_timelag(omega2, dt)?
    };
    let embedding = EmbeddingConfig::new(config.p, k_used, dt)?;
    embedding.check_takens(data.n_obs(), config.d);

    // per-trajectory embedding
    let mut snapshots = Vec::with_capacity(data.len());
    for (i, traj) in trimmed.iter().enumerate() {
        snapshots.push(delay_embed(traj, &embedding).map_err(|e| annotate(e, i, "delay_embed"))?);
    }

    // manifold fit on pooled training columns
    let train_data: Vec<DMatrix<f64>> = train_idx
        .iter()
        .map(|&i| snapshots[i].data().clone())
        .collect();
    let pooled = pool_columns(&train_data);
    let ssm = SsmModel::fit(&pooled, config.d, config.m)
        .map_err(|e| annotate_stage(e, "fit_tangent_space/fit_parametrization"))?;

    // reduced dynamics: differentiate per trajectory, pool
    let mut xi_mids = Vec::new();
    let mut xi_dots = Vec::new();
    for &i in &train_idx {
        let xi = ssm.reduce(snapshots[i].data())?;
        let (mid, dot, _) = differentiate(&xi, dt).map_err(|e| annotate(e, i, "differentiate"))?;
        xi_mids.push(mid);
        xi_dots.push(dot);
    }
    let xi_pool = pool_columns(&xi_mids);
    let dot_pool = pool_columns(&xi_dots);
    let (r_map, dynamics_residual) = fit_reduced_dynamics(&xi_pool, &dot_pool, config.r)
        .map_err(|e| annotate_stage(e, "fit_reduced_dynamics"))?;
    let reduced = modalize(&r_map, dynamics_residual, &ModalOptions::default())
        .map_err(|e| annotate_stage(e, "modalize"))?;

    // normal form
    let opts = ResonanceOptions {
        tol_res: config.tol_res,
        criterion: if config.resonance_full_complex {
            ResonanceCriterion::FullComplex
        } else {
            ResonanceCriterion::ImaginaryOnly
        },
    };
    let mut normal_form = if config.d == 2 && config.n == 3 {
        cubic_normal_form_2d(reduced.modal(), reduced.eigenvalues()[0], &opts)
            .map_err(|e| annotate_stage(e, "cubic_normal_form_2d"))?
    } else {
        general_normal_form(reduced.modal(), reduced.eigenvalues(), config.n, &opts)
            .map_err(|e| annotate_stage(e, "general_normal_form"))?
    };

    // regression inverse on pooled training modal coordinates
    let zeta_pool = reduced.to_modal(&ssm.reduce(&pooled)?);
    let regression_inverse_residual = normal_form
        .fit_regression_inverse(&zeta_pool)
        .map_err(|e| annotate_stage(e, "fit_regression_inverse"))?;

    // training amplitude in normal-form coordinates
    let z_pool = crate::normal_form::inverse_transform(
        &normal_form,
        &zeta_pool,
        InverseStrategy::Regression,
    )?;
    let training_amplitude = z_pool.iter().map(|z| z.norm()).fold(0.0, f64::max);

    let polar = to_polar(&normal_form).map_err(|e| annotate_stage(e, "to_polar"))?;

    let mut model = FullModel {
        embedding,
        n_obs: data.n_obs(),
        ssm,
        reduced,
        normal_form,
        polar,
        training_nmte: Vec::new(),
        training_amplitude,
    };
    model.validate()?;

    // training/test NMTE by free-decay prediction from the first snapshot
    let decay_nmte = |model: &FullModel, idx: usize| -> Result<f64> {
        let snap = &snapshots[idx];
        let y0 = snap.data().column(0).into_owned();
        let horizon = (snap.n_cols() - 1) as f64 * dt;
        let predicted = predict_decay(model, &y0, horizon)?;
        let reference = crate::embed::Trajectory::from_uniform(0.0, dt, snap.data().clone())?;
        nmte(&reference, &predicted)
    };
    let mut training_nmte = Vec::new();
    for &i in &train_idx {
        training_nmte.push(decay_nmte(&model, i).map_err(|e| annotate(e, i, "predict_decay"))?);
    }
    let mut test_nmte = Vec::new();
    for &i in &config.test_indices {
        test_nmte.push(decay_nmte(&model, i).map_err(|e| annotate(e, i, "predict_decay"))?);
    }
    model.training_nmte = training_nmte.clone();

    let basis = model.normal_form.dynamics().basis().clone();
    let describe = |items: &[(usize, Vec<u32>)]| -> Vec<String> {
        items
            .iter()
            .map(|(row, exps)| {
                let i = basis.index_of(exps).expect("valid monomial");
                format!("row {} monomial {}", row + 1, basis.monomial_string(i, "z"))
            })
            .collect()
    };
    let report = FitReport {
        k_used,
        singular_values: model.ssm.diagnostics().singular_values.clone(),
        energy_captured: model.ssm.diagnostics().energy_captured,
        manifold_recon_error: model.ssm.recon_error(),
        tangent_alignment: model.ssm.tangent_alignment(),
        dynamics_residual,
        eigenvalues: model.reduced.eigenvalues().to_vec(),
        resonance_lines: describe(model.normal_form.resonances()),
        resonance_relations: model.polar.resonance_relations(),
        gray_zone_lines: describe(model.normal_form.gray_zone()),
        regression_inverse_residual,
        training_nmte,
        test_nmte,
        trim_starts,
    };
    Ok((model, report))
}

fn annotate(e: Error, traj: usize, stage: &str) -> Error {
    annotate_stage(e, &format!("{stage} (trajectory {traj})"))
}

fn annotate_stage(e: Error, stage: &str) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{stage}: {m}")),
        Error::Data(m) => Error::Data(format!("{stage}: {m}")),
        Error::Shape(m) => Error::Shape(format!("{stage}: {m}")),
        Error::Rank(m) => Error::Rank(format!("{stage}: {m}")),
        Error::Conditioning(m) => Error::Conditioning(format!("{stage}: {m}")),
        Error::Resonance(m) => Error::Resonance(format!("{stage}: {m}")),
        Error::Calibration(m) => Error::Calibration(format!("{stage}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("{stage}: {m}")),
        Error::Io(m) => Error::Io(m),
    }
}

/// Synthetic-data generation settings for the `synth` subcommand.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// "linear", "stuart_landau", "cubic_oscillator", or "resonant_pair".
    pub system: String,
    #[serde(default)]
    pub lambda_re: f64,
    #[serde(default)]
    pub lambda_im: f64,
    #[serde(default)]
    pub gamma_re: f64,
    #[serde(default)]
    pub gamma_im: f64,
    #[serde(default)]
    pub lambda2_re: f64,
    #[serde(default)]
    pub lambda2_im: f64,
    /// Resonant-pair coupling coefficients, six (re, im) pairs:
    /// mixed1, self1, cross1, mixed2, self2, cross2.
    #[serde(default)]
    pub coupling: Vec<(f64, f64)>,
    /// Cubic oscillator parameters.
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub zeta: f64,
    #[serde(default)]
    pub beta: f64,
    pub n_obs: usize,
    #[serde(default)]
    pub lift_seed: u64,
    #[serde(default)]
    pub noise: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Initial amplitudes |z1| (and |z2| for the resonant pair, paired with
    /// `amplitudes2`); one trajectory per entry.
    pub amplitudes: Vec<f64>,
    #[serde(default)]
    pub amplitudes2: Vec<f64>,
    #[serde(default)]
    pub phases: Vec<f64>,
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<SynthConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("synth config: {e}")))
    }

    pub fn build_system(&self) -> Result<crate::synth::SyntheticSystem> {
        use crate::synth::{ResonantCoeffs, SyntheticSystem, SystemKind};
        let kind = match self.system.as_str() {
            "linear" => SystemKind::Linear {
                lambda: Complex64::new(self.lambda_re, self.lambda_im),
            },
            "stuart_landau" => SystemKind::StuartLandau {
                lambda: Complex64::new(self.lambda_re, self.lambda_im),
                gamma: Complex64::new(self.gamma_re, self.gamma_im),
            },
            "cubic_oscillator" => SystemKind::CubicOscillator {
                omega: self.omega,
                zeta: self.zeta,
                beta: self.beta,
            },
            "resonant_pair" => {
                if self.coupling.len() != 6 {
                    return Err(Error::Config(
                        "resonant_pair needs 6 coupling coefficient pairs".into(),
                    ));
                }
                let c = |i: usize| Complex64::new(self.coupling[i].0, self.coupling[i].1);
                SystemKind::ResonantPair {
                    lambda1: Complex64::new(self.lambda_re, self.lambda_im),
                    lambda2: Complex64::new(self.lambda2_re, self.lambda2_im),
                    coeffs: ResonantCoeffs {
                        mixed1: c(0),
                        self1: c(1),
                        cross1: c(2),
                        mixed2: c(3),
                        self2: c(4),
                        cross2: c(5),
                    },
                }
            }
            other => return Err(Error::Config(format!("unknown synthetic system '{other}'"))),
        };
        let state_dim = kind.state_dim();
        let lift = if self.n_obs == state_dim && self.lift_seed == 0 {
            DMatrix::identity(self.n_obs, state_dim)
        } else {
            crate::synth::SyntheticSystem::random_lift(self.n_obs, state_dim, self.lift_seed)
        };
        SyntheticSystem::new(kind, lift, self.noise)
    }
}

/// Convenience: a PolyMap pretty-printer used by reports and `inspect`.
pub fn describe_polymap(map: &PolyMap<Complex64>, digits: usize) -> Vec<String> {
    let mut lines = Vec::new();
    for row in 0..map.output_dim() {
        let mut parts = Vec::new();
        for (i, _) in map.basis().exponents().iter().enumerate() {
            let v = map.coeffs()[(row, i)];
            if v.norm() == 0.0 {
                continue;
            }
            parts.push(format!(
                "({}{:+}i) {}",
                crate::normal_form::format_sig(v.re, digits),
                v.im,
                map.basis().monomial_string(i, "z")
            ));
        }
        lines.push(format!("z{}' = {}", row + 1, parts.join(" + ")));
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{SyntheticSystem, SystemKind};

    fn stuart_landau_set(
        n_obs: usize,
        n_train: usize,
        n_test: usize,
        seed: u64,
    ) -> (TrajectorySet, Vec<usize>) {
        let lambda = Complex64::new(-0.05, 1.0);
        let gamma = Complex64::new(-0.1, -0.2);
        let lift = SyntheticSystem::random_lift(n_obs, 2, seed);
        let sys =
            SyntheticSystem::new(SystemKind::StuartLandau { lambda, gamma }, lift, 0.0).unwrap();
        let total = n_train + n_test;
        let mut trajectories = Vec::new();
        let mut names = Vec::new();
        for i in 0..total {
            let amp = 0.3 + 0.5 * i as f64 / total.max(2) as f64;
            let phase = 0.7 * i as f64;
            let z0 = Complex64::from_polar(amp, phase);
            trajectories.push(sys.simulate(&[z0], 50.0, 0.05, 100 + i as u64).unwrap());
            names.push(format!("traj{i}"));
        }
        let test_indices = (n_train..total).collect();
        (
            TrajectorySet::new(trajectories, names).unwrap(),
            test_indices,
        )
    }

    fn base_config() -> RunConfig {
        RunConfig::from_toml(
            r#"
d = 2
m = 3
r = 3
n = 3
p = 1
k = 1
"#,
        )
        .unwrap()
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = RunConfig::from_toml(
            r#"
d = 2
m = 5
r = 3
n = 3
p = 7
trim = "index:10"
alpha = "block:0:3"
calibration = [[7.1, 0.02], [7.2, 0.04]]
"#,
        )
        .unwrap();
        assert_eq!(cfg.p, 7);
        assert_eq!(cfg.k, 0);
        assert!(matches!(cfg.trim_policy().unwrap(), TrimPolicy::Index(10)));
        assert!(matches!(
            cfg.amplitude_functional().unwrap(),
            AmplitudeFunctional::BlockNorm { start: 0, len: 3 }
        ));
        assert_eq!(cfg.calibration.len(), 2);

        assert!(RunConfig::from_toml("d = 0\nm = 1\nr = 1\nn = 1").is_err());
        assert!(RunConfig::from_toml("d = 2\nm = 1\nr = 1\nn = 1\nbogus = 3").is_err());
    }

    #[test]
    fn fit_recovers_stuart_landau() {
        let (data, test_indices) = stuart_landau_set(7, 5, 1, 11);
        let mut cfg = base_config();
        cfg.test_indices = test_indices;
        let (model, report) = fit(&cfg, &data).unwrap();

        // eigenvalue recovery
        let l = model.reduced.eigenvalues()[0];
        assert!(
            (l - Complex64::new(-0.05, 1.0)).norm() / l.norm() < 1e-4,
            "{l}"
        );
        // held-out prediction under 1%
        assert!(
            report.test_nmte[0] < 0.01,
            "test NMTE {}",
            report.test_nmte[0]
        );
        // report renders
        let text = report.render();
        assert!(text.contains("test NMTE"));
    }

    #[test]
    fn fit_rejects_excessive_dimension() {
        // 3 observables but rank-2 data: asking for d = 3 hits a zero
        // singular value
        let (data, _) = stuart_landau_set(3, 2, 0, 5);
        let mut cfg = base_config();
        cfg.d = 3;
        match fit(&cfg, &data) {
            Err(Error::Rank(msg)) => {
                assert!(msg.contains("fit_tangent_space"), "{msg}")
            }
            other => panic!("expected rank error, got {other:?}"),
        }
        // d beyond the matrix dimensions is a configuration error
        cfg.d = 50;
        assert!(matches!(fit(&cfg, &data), Err(Error::Config(_))));
    }

    #[test]
    fn boundary_marker_equivalence() {
        // shifting the absolute times of one file must not change anything:
        // embeddings and derivatives are strictly per-trajectory
        let (data, _) = stuart_landau_set(4, 2, 0, 9);
        let cfg = base_config();
        let (model_a, _) = fit(&cfg, &data).unwrap();

        let t1 = &data.trajectories[1];
        let shifted =
            crate::embed::Trajectory::from_uniform(1234.5, t1.dt(), t1.samples().clone()).unwrap();
        let moved = TrajectorySet::new(
            vec![data.trajectories[0].clone(), shifted],
            vec!["a".into(), "b-shifted".into()],
        )
        .unwrap();
        let (model_b, _) = fit(&cfg, &moved).unwrap();
        let meta = archive::ArchiveMeta {
            tool_version: "t".into(),
            config_hash: 0,
            stamp: String::new(),
        };
        assert_eq!(
            archive::to_string(&model_a, &meta),
            archive::to_string(&model_b, &meta)
        );
    }

    #[test]
    fn automatic_timelag_selection_runs() {
        let (data, _) = stuart_landau_set(5, 3, 0, 17);
        let mut cfg = base_config();
        cfg.k = 0; // select from the spectrum
        cfg.p = 3;
        let (_, report) = fit(&cfg, &data).unwrap();
        assert!(report.k_used >= 1);
    }

    #[test]
    fn fit_is_deterministic() {
        let (data, _) = stuart_landau_set(5, 3, 0, 3);
        let cfg = base_config();
        let (m1, _) = fit(&cfg, &data).unwrap();
        let (m2, _) = fit(&cfg, &data).unwrap();
        let meta = archive::ArchiveMeta {
            tool_version: "t".into(),
            config_hash: 1,
            stamp: String::new(),
        };
        assert_eq!(
            archive::to_string(&m1, &meta),
            archive::to_string(&m2, &meta)
        );
    }

    #[test]
    fn archive_round_trip_is_bit_exact() {
        let (data, _) = stuart_landau_set(5, 3, 0, 7);
        let cfg = base_config();
        let (model, _) = fit(&cfg, &data).unwrap();
        let meta = archive::ArchiveMeta {
            tool_version: "0.1.0".into(),
            config_hash: 0xabcdef,
            stamp: "run-1".into(),
        };
        let text = archive::to_string(&model, &meta);
        let (loaded, meta2) = archive::from_str(&text).unwrap();
        assert_eq!(meta, meta2);
        let text2 = archive::to_string(&loaded, &meta2);
        assert_eq!(text, text2);
        // spot-check numerical identity
        assert_eq!(model.ssm.tangent(), loaded.ssm.tangent());
        assert_eq!(
            model.normal_form.dynamics().coeffs(),
            loaded.normal_form.dynamics().coeffs()
        );
        assert_eq!(model.training_amplitude, loaded.training_amplitude);
    }

    #[test]
    fn trajectory_boundaries_stay_isolated() {
        // same data presented as one set of two files in either order gives
        // the same derivative sample count (boundaries never mix)
        let (data, _) = stuart_landau_set(4, 2, 0, 9);
        let cfg = base_config();
        let (model_a, _) = fit(&cfg, &data).unwrap();
        let swapped = TrajectorySet::new(
            vec![data.trajectories[1].clone(), data.trajectories[0].clone()],
            vec!["b".into(), "a".into()],
        )
        .unwrap();
        let (model_b, _) = fit(&cfg, &swapped).unwrap();
        // pooled regressions are permutation invariant up to roundoff
        let la = model_a.reduced.eigenvalues()[0];
        let lb = model_b.reduced.eigenvalues()[0];
        assert!((la - lb).norm() < 1e-9, "{la} vs {lb}");
    }
}
