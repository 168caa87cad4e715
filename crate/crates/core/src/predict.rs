//! Predictions from a fitted model chain: free decay in the observable
//! space, backbone curves, and calibrated forced-response curves.

use crate::embed::{delay_embed, EmbeddingConfig, Trajectory};
use crate::error::{Error, Result};
use crate::manifold::SsmModel;
use crate::normal_form::{inverse_transform, InverseStrategy, NormalFormModel, PolarForm};
use crate::ode::{integrate_sampled, OdeOptions};
use crate::reduced::ReducedModel;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// The full fitted chain: embedding, manifold, reduced dynamics, normal
/// form, and its polar representation.
#[derive(Debug, Clone)]
pub struct FullModel {
    pub embedding: EmbeddingConfig,
    pub n_obs: usize,
    pub ssm: SsmModel,
    pub reduced: ReducedModel,
    pub normal_form: NormalFormModel,
    pub polar: PolarForm,
    /// NMTE of the model on each training trajectory, recorded at fit time.
    pub training_nmte: Vec<f64>,
    /// Largest |z| reached by the training data in normal-form coordinates;
    /// predictions started far outside this range are extrapolations.
    pub training_amplitude: f64,
}

impl FullModel {
    pub fn validate(&self) -> Result<()> {
        let d = self.ssm.d();
        if self.ssm.obs_dim() != self.embedding.p * self.n_obs {
            return Err(Error::Shape(format!(
                "manifold lives in dimension {} but the embedding produces {}",
                self.ssm.obs_dim(),
                self.embedding.p * self.n_obs
            )));
        }
        if self.reduced.dim() != d || self.normal_form.dim() != d {
            return Err(Error::Shape(format!(
                "dimension chain broken: manifold d = {d}, modal d = {}, normal form d = {}",
                self.reduced.dim(),
                self.normal_form.dim()
            )));
        }
        Ok(())
    }

    /// Normal-form coordinates of embedded observable snapshots.
    pub fn observable_to_normal(
        &self,
        y: &DMatrix<f64>,
        strategy: InverseStrategy,
    ) -> Result<DMatrix<Complex64>> {
        let xi = self.ssm.reduce(y)?;
        let zeta = self.reduced.to_modal(&xi);
        inverse_transform(&self.normal_form, &zeta, strategy)
    }

    /// Observable snapshots from normal-form coordinates; returns the
    /// largest relative imaginary residue alongside the real output.
    pub fn normal_to_observable(&self, z: &DMatrix<Complex64>) -> Result<(DMatrix<f64>, f64)> {
        let zeta = self.normal_form.transform().eval(z)?;
        let xi_c = self.reduced.from_modal(&zeta);
        let mut max_im: f64 = 0.0;
        let mut scale: f64 = 0.0;
        let xi = xi_c.map(|v| {
            max_im = max_im.max(v.im.abs());
            scale = scale.max(v.norm());
            v.re
        });
        let y = self.ssm.lift(&xi)?;
        let residue = if scale > 0.0 { max_im / scale } else { 0.0 };
        Ok((y, residue))
    }
}

/// Integrates the normal-form dynamics from an embedded observable snapshot
/// and maps the result back to the observable space.
pub fn predict_decay(model: &FullModel, y0: &DVector<f64>, horizon: f64) -> Result<Trajectory> {
    if y0.len() != model.ssm.obs_dim() {
        return Err(Error::Shape(format!(
            "initial snapshot has {} entries, embedded observable dimension is {}",
            y0.len(),
            model.ssm.obs_dim()
        )));
    }
    let dt = model.embedding.dt;
    let y0_mat = DMatrix::from_column_slice(y0.len(), 1, y0.as_slice());
    let z0_mat = model.observable_to_normal(&y0_mat, InverseStrategy::Newton)?;
    let z0: DVector<Complex64> = z0_mat.column(0).into_owned();

    let z0_amp = z0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if model.training_amplitude > 0.0 && z0_amp > 1.2 * model.training_amplitude {
        log::warn!(
            "initial condition amplitude {z0_amp:.3e} exceeds the training range \
             {:.3e}; the prediction extrapolates the model",
            model.training_amplitude
        );
    }

    let n_samples = (horizon / dt).floor() as usize + 1;
    let field = {
        let nf = model.normal_form.dynamics().clone();
        move |_t: f64, z: &DVector<Complex64>| nf.eval_vec(z).expect("dimension checked")
    };
    let opts = OdeOptions {
        rel_tol: 1e-9,
        abs_tol: 1e-13,
        norm_bound: 1e6 * z0_amp.max(1.0),
        ..Default::default()
    };
    let states = integrate_sampled(field, &z0, 0.0, dt, n_samples, &opts)?;

    let mut z_mat = DMatrix::from_element(z0.len(), n_samples, Complex64::new(0.0, 0.0));
    for (j, s) in states.iter().enumerate() {
        z_mat.set_column(j, s);
    }
    let (y, residue) = model.normal_to_observable(&z_mat)?;
    if residue > 1e-6 {
        log::warn!("imaginary residue {residue:.3e} in the reconstructed observables");
    }
    Trajectory::from_uniform(0.0, dt, y)
}

/// Normalized mean trajectory error between a reference and a prediction
/// with identical sampling.
pub fn nmte(reference: &Trajectory, prediction: &Trajectory) -> Result<f64> {
    if reference.len() != prediction.len() {
        return Err(Error::Shape(format!(
            "trajectory lengths differ: {} vs {}",
            reference.len(),
            prediction.len()
        )));
    }
    if reference.n_obs() != prediction.n_obs() {
        return Err(Error::Shape("observable dimensions differ".into()));
    }
    if (reference.dt() - prediction.dt()).abs() > 1e-9 * reference.dt() {
        return Err(Error::Shape("sampling times differ".into()));
    }
    let n = reference.len();
    let mut max_norm: f64 = 0.0;
    let mut total = 0.0;
    for j in 0..n {
        let r = reference.samples().column(j);
        let p = prediction.samples().column(j);
        max_norm = max_norm.max(r.norm());
        total += (p - r).norm();
    }
    if max_norm == 0.0 {
        return Err(Error::Data(
            "reference trajectory is identically zero; NMTE is undefined".into(),
        ));
    }
    Ok(total / (n as f64 * max_norm))
}

/// Observable amplitude functional used by backbone and FRC outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeFunctional {
    /// Absolute value of one embedded observable coordinate.
    Coordinate(usize),
    /// Euclidean norm of a contiguous block of embedded coordinates.
    BlockNorm { start: usize, len: usize },
}

impl AmplitudeFunctional {
    pub fn eval(&self, y: &DVector<f64>) -> f64 {
        match *self {
            AmplitudeFunctional::Coordinate(i) => y[i].abs(),
            AmplitudeFunctional::BlockNorm { start, len } => y.rows(start, len).norm(),
        }
    }
}

/// Amplitude map: the largest observable amplitude on the normal-form circle
/// of radius rho, maximized over a uniform phase grid with one quadratic
/// refinement at the discrete maximum.
pub fn amplitude_map(
    model: &FullModel,
    rho: f64,
    alpha: AmplitudeFunctional,
    theta_grid: usize,
) -> Result<f64> {
    if rho < 0.0 {
        return Err(Error::Config("amplitude rho must be nonnegative".into()));
    }
    if model.normal_form.dim() != 2 {
        return Err(Error::Config(
            "the amplitude map is defined for a single conjugate pair (2D normal form)".into(),
        ));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let grid = theta_grid.max(8);
    let eval_at = |theta: f64| -> Result<f64> {
        let z = DMatrix::from_column_slice(
            2,
            1,
            &[
                Complex64::from_polar(rho, theta),
                Complex64::from_polar(rho, -theta),
            ],
        );
        let (y, _) = model.normal_to_observable(&z)?;
        Ok(alpha.eval(&y.column(0).into_owned()))
    };
    let mut values = Vec::with_capacity(grid);
    for i in 0..grid {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / grid as f64;
        values.push(eval_at(theta)?);
    }
    let (imax, &vmax) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .expect("nonempty grid");
    // quadratic refinement around the discrete argmax
    let h = 2.0 * std::f64::consts::PI / grid as f64;
    let vm = values[(imax + grid - 1) % grid];
    let vp = values[(imax + 1) % grid];
    let denom = vm - 2.0 * vmax + vp;
    let mut best = vmax;
    if denom < 0.0 {
        let delta = 0.5 * (vm - vp) / denom;
        if delta.abs() <= 0.5 {
            let theta_star = h * (imax as f64 + delta);
            best = best.max(eval_at(theta_star)?);
        }
    }
    Ok(best)
}

/// Backbone curve samples: amplitude-dependent frequency against observable
/// amplitude.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub rho: Vec<f64>,
    pub omega: Vec<f64>,
    pub amplitude: Vec<f64>,
}

/// Samples the backbone curve on a uniform rho grid in [0, rho_max].
pub fn backbone(
    model: &FullModel,
    rho_max: f64,
    n_points: usize,
    alpha: AmplitudeFunctional,
) -> Result<Backbone> {
    if model.polar.is_resonant() || model.polar.n_pairs() != 1 {
        return Err(Error::Config(
            "backbone curves are defined for a single non-resonant pair".into(),
        ));
    }
    if rho_max <= 0.0 || n_points < 2 {
        return Err(Error::Config(
            "backbone needs rho_max > 0 and at least 2 points".into(),
        ));
    }
    let mut rho = Vec::with_capacity(n_points);
    let mut omega = Vec::with_capacity(n_points);
    let mut amplitude = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let r = rho_max * i as f64 / (n_points - 1) as f64;
        rho.push(r);
        omega.push(model.polar.frequency(r)?);
        amplitude.push(amplitude_map(model, r, alpha, 128)?);
    }
    Ok(Backbone {
        rho,
        omega,
        amplitude,
    })
}

/// Normal-form forcing amplitude from one calibration point: the response
/// amplitude rho_cal observed at forcing frequency omega_cal.
pub fn forcing_amplitude(polar: &PolarForm, omega_cal: f64, rho_cal: f64) -> Result<f64> {
    let c = polar.damping(rho_cal)?;
    let w = polar.frequency(rho_cal)?;
    Ok((c * c * rho_cal * rho_cal + (w - omega_cal) * (w - omega_cal) * rho_cal * rho_cal).sqrt())
}

/// Calibrates the normal-form forcing amplitude by delay-embedding a cosine
/// of the observed amplitude and frequency, projecting it through the model
/// chain, and applying the steady-state force balance at the resulting
/// normal-form amplitude.
pub fn calibrate_forcing(
    model: &FullModel,
    omega_cal: f64,
    u_cal: f64,
    alpha: AmplitudeFunctional,
) -> Result<f64> {
    if u_cal <= 0.0 {
        return Err(Error::Config(
            "calibration amplitude must be positive".into(),
        ));
    }
    if omega_cal <= 0.0 {
        return Err(Error::Config(
            "calibration frequency must be positive".into(),
        ));
    }
    let dt = model.embedding.dt;
    // the channel carrying the calibration cosine: the one alpha refers to
    let channel = match alpha {
        AmplitudeFunctional::Coordinate(i) => i / model.embedding.p,
        AmplitudeFunctional::BlockNorm { start, .. } => start / model.embedding.p,
    };
    if channel >= model.n_obs {
        return Err(Error::Config(format!(
            "amplitude functional refers to channel {channel}, model has {}",
            model.n_obs
        )));
    }
    let period = 2.0 * std::f64::consts::PI / omega_cal;
    let n_extra = (period / dt).ceil() as usize + 1;
    let n = (model.embedding.p - 1) * model.embedding.k + n_extra.max(2);
    let samples = DMatrix::from_fn(model.n_obs, n, |r, j| {
        if r == channel {
            u_cal * (omega_cal * j as f64 * dt).cos()
        } else {
            0.0
        }
    });
    let traj = Trajectory::from_uniform(0.0, dt, samples)?;
    let snapshots = delay_embed(&traj, &model.embedding)?;
    let z = model.observable_to_normal(snapshots.data(), InverseStrategy::Newton)?;
    // maximal response amplitude over one forcing period
    let rho_cal = (0..z.ncols()).map(|j| z[(0, j)].norm()).fold(0.0, f64::max);
    if rho_cal <= 1e-12 {
        return Err(Error::Calibration(
            "calibration signal maps to the origin in normal-form coordinates".into(),
        ));
    }
    forcing_amplitude(&model.polar, omega_cal, rho_cal)
}

/// One steady-state point of the forced response.
#[derive(Debug, Clone, Copy)]
pub struct FrcPoint {
    pub omega: f64,
    pub rho0: f64,
    pub psi0: f64,
    pub amplitude: f64,
    pub stable: bool,
    /// +1 for the upper frequency branch, -1 for the lower.
    pub branch: i8,
}

/// Forced response curve at fixed normal-form forcing amplitude f.
#[derive(Debug, Clone)]
pub struct Frc {
    pub f: f64,
    pub points: Vec<FrcPoint>,
    /// Largest fixed-point equation residual over all emitted points.
    pub max_residual: f64,
}

/// Traces the forced response curve by sweeping the response amplitude and
/// solving the steady-state force balance explicitly for the two frequency
/// branches; stability comes from the trace and determinant of the polar
/// Jacobian at the fixed point.
pub fn frc(
    model: &FullModel,
    f: f64,
    omega_range: (f64, f64),
    alpha: AmplitudeFunctional,
    rho_grid: &[f64],
) -> Result<Frc> {
    if f <= 0.0 {
        return Err(Error::Config("forcing must be positive".into()));
    }
    if model.polar.is_resonant() || model.polar.n_pairs() != 1 {
        return Err(Error::Config(
            "forced response curves are defined for a single non-resonant pair".into(),
        ));
    }
    let polar = &model.polar;
    let radicand_at = |rho: f64| -> Result<f64> {
        let c = polar.damping(rho)?;
        Ok(f * f / (rho * rho) - c * c)
    };

    let mut rhos: Vec<f64> = rho_grid.iter().cloned().filter(|&r| r > 0.0).collect();
    rhos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rhos.dedup();

    // refine the fold points where the radicand changes sign, so the two
    // branches close up exactly
    let mut folds = Vec::new();
    for pair in rhos.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (ra, rb) = (radicand_at(a)?, radicand_at(b)?);
        if (ra >= 0.0) == (rb >= 0.0) {
            continue;
        }
        let (mut lo, mut hi) = (a, b);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let rm = radicand_at(mid)?;
            if (rm >= 0.0) == (ra >= 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        folds.push(if ra >= 0.0 { lo } else { hi });
    }
    rhos.extend(folds);
    rhos.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut points = Vec::new();
    let mut max_residual: f64 = 0.0;
    for &rho0 in &rhos {
        let c = polar.damping(rho0)?;
        let w = polar.frequency(rho0)?;
        let mut radicand = f * f / (rho0 * rho0) - c * c;
        // a fold evaluates to a tiny negative under roundoff
        if radicand < 0.0 && radicand > -1e-12 * f * f / (rho0 * rho0) {
            radicand = 0.0;
        }
        if radicand < 0.0 {
            continue;
        }
        let root = radicand.sqrt();
        let amplitude = amplitude_map(model, rho0, alpha, 128)?;
        for (branch, omega) in [(1i8, w + root), (-1i8, w - root)] {
            if omega < omega_range.0 || omega > omega_range.1 {
                continue;
            }
            // sin psi0 = -c rho/f; the branch fixes the cosine sign
            let s = (-c * rho0 / f).clamp(-1.0, 1.0);
            let mut psi0 = if branch == 1 {
                s.asin()
            } else {
                std::f64::consts::PI - s.asin()
            };
            if psi0 > std::f64::consts::PI {
                psi0 -= 2.0 * std::f64::consts::PI;
            }
            let stable = {
                let cp = polar.damping_prime(rho0)?;
                let wp = polar.frequency_prime(rho0)?;
                let detune = omega - w;
                let tr = 2.0 * c + cp * rho0;
                let det = c * (c + cp * rho0) - rho0 * wp * detune + detune * detune;
                tr < 0.0 && det > 0.0
            };
            let r1 = (c * rho0 + f * psi0.sin()).abs();
            let r2 = (w - omega + f / rho0 * psi0.cos()).abs();
            max_residual = max_residual.max(r1.max(r2));
            points.push(FrcPoint {
                omega,
                rho0,
                psi0,
                amplitude,
                stable,
                branch,
            });
        }
    }
    if points.is_empty() {
        log::warn!(
            "forced response curve is empty in the requested range; \
             the forcing f = {f:.3e} may be too small"
        );
    }
    Ok(Frc {
        f,
        points,
        max_residual,
    })
}

/// A sensible default rho grid for FRC sweeps: uniformly covers amplitudes
/// up to where the response can still balance the forcing, padded slightly.
pub fn frc_rho_grid(polar: &PolarForm, f: f64, rho_cap: f64, n: usize) -> Result<Vec<f64>> {
    let probe = 4096;
    let mut rho_ub: f64 = 0.0;
    for i in 1..=probe {
        let r = rho_cap * i as f64 / probe as f64;
        let c = polar.damping(r)?;
        if f * f / (r * r) - c * c >= 0.0 {
            rho_ub = r;
        }
    }
    if rho_ub == 0.0 {
        rho_ub = rho_cap;
    }
    let top = (rho_ub * 1.02).min(rho_cap);
    Ok((1..=n).map(|i| top * i as f64 / n as f64).collect())
}
