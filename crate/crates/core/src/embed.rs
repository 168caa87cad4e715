//! Delay embedding of observed time series and embedding-parameter selection.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rustfft::{num_complex::Complex, FftPlanner};

/// Uniformly sampled multivariate time series; one column per time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    samples: DMatrix<f64>,
}

impl Trajectory {
    /// Relative tolerance on sampling uniformity.
    pub const UNIFORMITY_TOL: f64 = 1e-9;

    pub fn new(times: Vec<f64>, samples: DMatrix<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Data("trajectory needs at least 2 samples".into()));
        }
        if samples.ncols() != times.len() {
            return Err(Error::Shape(format!(
                "{} sample columns vs {} times",
                samples.ncols(),
                times.len()
            )));
        }
        let dt = times[1] - times[0];
        if dt <= 0.0 {
            return Err(Error::Data("times must be strictly increasing".into()));
        }
        for i in 1..times.len() {
            let gap = times[i] - times[i - 1];
            if (gap - dt).abs() > Self::UNIFORMITY_TOL * dt {
                return Err(Error::Data(format!(
                    "non-uniform sampling at row {i}: gap {gap:.9e} vs dt {dt:.9e}"
                )));
            }
        }
        Ok(Trajectory { times, samples })
    }

    /// Builds a trajectory from a start time and uniform spacing.
    pub fn from_uniform(t0: f64, dt: f64, samples: DMatrix<f64>) -> Result<Self> {
        let times = (0..samples.ncols()).map(|i| t0 + i as f64 * dt).collect();
        Trajectory::new(times, samples)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }
    /// Number of observable channels.
    pub fn n_obs(&self) -> usize {
        self.samples.nrows()
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Sub-trajectory starting at sample `start`.
    pub fn tail(&self, start: usize) -> Result<Self> {
        if start + 2 > self.len() {
            return Err(Error::Data(format!(
                "trim of {start} samples leaves fewer than 2 of {}",
                self.len()
            )));
        }
        let times = self.times[start..].to_vec();
        let samples = self.samples.columns(start, self.len() - start).into_owned();
        Trajectory::new(times, samples)
    }
}

/// Delay-embedding parameters: dimension `p`, timelag multiplier `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingConfig {
    pub p: usize,
    pub k: usize,
    pub dt: f64,
}

impl EmbeddingConfig {
    pub fn new(p: usize, k: usize, dt: f64) -> Result<Self> {
        if p < 1 || k < 1 {
            return Err(Error::Config(format!(
                "embedding needs p >= 1 and k >= 1 (got p={p}, k={k})"
            )));
        }
        if dt <= 0.0 {
            return Err(Error::Config("sampling time must be positive".into()));
        }
        Ok(EmbeddingConfig { p, k, dt })
    }

    /// Timelag tau = k * dt in seconds.
    pub fn tau(&self) -> f64 {
        self.k as f64 * self.dt
    }

    /// Warns when p is below the Takens bound 2d+1 for a known manifold dimension.
    pub fn check_takens(&self, n_obs: usize, d: usize) {
        if self.p * n_obs < 2 * d + 1 {
            log::warn!(
                "embedded dimension p*n_obs = {} is below the Takens bound 2d+1 = {}",
                self.p * n_obs,
                2 * d + 1
            );
        }
    }
}

/// Delay-embedded snapshot matrix. Rows are grouped per observable channel:
/// channel c occupies rows c*p .. (c+1)*p, its row j holding the channel
/// series shifted by j*k samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
    config: EmbeddingConfig,
    n_obs: usize,
    /// Time of the first (unshifted) row entry for each column.
    times: Vec<f64>,
}

impl SnapshotMatrix {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }
    pub fn config(&self) -> &EmbeddingConfig {
        &self.config
    }
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    /// Rows holding the unshifted (delay-0) series of each channel.
    pub fn delay0_rows(&self) -> Vec<usize> {
        (0..self.n_obs).map(|c| c * self.config.p).collect()
    }

    /// The unshifted series of every channel: inverts the embedding up to the
    /// last (p-1)*k samples.
    pub fn head_series(&self) -> DMatrix<f64> {
        let rows = self.delay0_rows();
        let mut out = DMatrix::zeros(self.n_obs, self.data.ncols());
        for (c, &r) in rows.iter().enumerate() {
            out.set_row(c, &self.data.row(r));
        }
        out
    }
}

/// Builds the delay-embedded snapshot matrix of a trajectory.
pub fn delay_embed(traj: &Trajectory, config: &EmbeddingConfig) -> Result<SnapshotMatrix> {
    let n = traj.len();
    let (p, k) = (config.p, config.k);
    let min_len = (p - 1) * k + 2;
    if n < min_len {
        return Err(Error::Data(format!(
            "series of length {n} too short for embedding (p={p}, k={k}): need at least {min_len}"
        )));
    }
    let n_emb = n - (p - 1) * k;
    let n_obs = traj.n_obs();
    let mut data = DMatrix::zeros(p * n_obs, n_emb);
    for c in 0..n_obs {
        for j in 0..p {
            for col in 0..n_emb {
                data[(c * p + j, col)] = traj.samples()[(c, col + j * k)];
            }
        }
    }
    Ok(SnapshotMatrix {
        data,
        config: *config,
        n_obs,
        times: traj.times()[..n_emb].to_vec(),
    })
}

/// Timelag multiplier k such that omega2 * k * dt is closest to pi/2.
pub fn suggest_timelag(omega2: f64, dt: f64) -> Result<usize> {
    if omega2 <= 0.0 || dt <= 0.0 {
        return Err(Error::Config(
            "suggest_timelag needs positive frequency and sampling time".into(),
        ));
    }
    let k = (std::f64::consts::FRAC_PI_2 / (omega2 * dt)).round() as i64;
    Ok(k.max(1) as usize)
}

/// Hann-windowed power spectrum summed over channels; returns (power per bin,
/// angular bin width). Only bins 0..n/2 are meaningful.
fn power_spectrum(samples: &DMatrix<f64>, dt: f64) -> (Vec<f64>, f64) {
    let n = samples.ncols();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let hann: Vec<f64> = (0..n)
        .map(|i| {
            let x = std::f64::consts::PI * i as f64 / n as f64;
            x.sin() * x.sin()
        })
        .collect();
    let mut power = vec![0.0; n / 2 + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for c in 0..samples.nrows() {
        let row = samples.row(c);
        let mean = row.iter().sum::<f64>() / n as f64;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new((row[i] - mean) * hann[i], 0.0);
        }
        fft.process(&mut buf);
        for (i, p) in power.iter_mut().enumerate() {
            *p += buf[i].norm_sqr();
        }
    }
    let bin_width = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    (power, bin_width)
}

/// Local-maximum bins of a power spectrum, strongest first.
fn spectral_peaks(power: &[f64]) -> Vec<usize> {
    let floor = power.iter().cloned().fold(0.0, f64::max) * 1e-20;
    let mut peaks: Vec<usize> = (1..power.len().saturating_sub(1))
        .filter(|&i| power[i] > power[i - 1] && power[i] >= power[i + 1] && power[i] > floor)
        .collect();
    peaks.sort_by(|&a, &b| power[b].partial_cmp(&power[a]).unwrap());
    peaks
}

/// The `n_peaks` dominant angular frequencies of the signal, ascending (rad/s).
///
/// Uses a Hann window and quadratic interpolation around each peak bin;
/// accuracy well within one frequency bin.
pub fn estimate_frequencies(traj: &Trajectory, n_peaks: usize) -> Result<Vec<f64>> {
    if traj.len() < 32 {
        return Err(Error::Data(format!(
            "need at least 32 samples for spectral analysis, got {}",
            traj.len()
        )));
    }
    if n_peaks == 0 {
        return Err(Error::Config("n_peaks must be at least 1".into()));
    }
    let (power, bin_width) = power_spectrum(traj.samples(), traj.dt());
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return Err(Error::Data("signal is constant: no spectral peaks".into()));
    }
    let peaks = spectral_peaks(&power);
    if peaks.is_empty() {
        return Err(Error::Data("no spectral peaks found".into()));
    }
    let mut freqs: Vec<f64> = peaks
        .iter()
        .take(n_peaks)
        .map(|&i| {
            // parabolic interpolation on log power
            let (a, b, c) = (power[i - 1].ln(), power[i].ln(), power[i + 1].ln());
            let denom = a - 2.0 * b + c;
            let delta = if denom.abs() > 0.0 {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            (i as f64 + delta) * bin_width
        })
        .collect();
    freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(freqs)
}

/// Transient-removal policy for [`trim_transient`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrimPolicy {
    /// Drop exactly this many leading samples.
    Index(usize),
    /// Drop all samples strictly before this time.
    Time(f64),
    /// Drop the shortest prefix after which the windowed spectral content
    /// outside the `n_modes` retained peak frequencies falls below
    /// `threshold` (out-of-band to in-band amplitude ratio).
    Auto { n_modes: usize, threshold: f64 },
}

impl TrimPolicy {
    pub fn auto(n_modes: usize) -> Self {
        TrimPolicy::Auto {
            n_modes,
            threshold: 0.05,
        }
    }
}

/// Out-of-model content of one window: the signal is regressed on the
/// retained harmonics (with a linear envelope-drift term per harmonic, which
/// also absorbs first-order frequency estimation error) plus a linear trend;
/// returns residual RMS over fitted RMS.
fn harmonic_residual_ratio(window: &DMatrix<f64>, dt: f64, retained: &[f64]) -> f64 {
    let w = window.ncols();
    let n_reg = 2 + 4 * retained.len();
    let features = DMatrix::from_fn(n_reg, w, |r, j| {
        let t = j as f64 * dt;
        let u = j as f64 / (w - 1) as f64;
        match r {
            0 => 1.0,
            1 => u,
            _ => {
                let m = (r - 2) / 4;
                let arg = retained[m] * t;
                match (r - 2) % 4 {
                    0 => arg.cos(),
                    1 => arg.sin(),
                    2 => u * arg.cos(),
                    _ => u * arg.sin(),
                }
            }
        }
    });
    let coeffs = match crate::poly::fit_polynomial(window, &features) {
        Ok(c) => c,
        Err(_) => return f64::INFINITY,
    };
    let fitted = &coeffs * &features;
    let fit_norm = fitted.norm();
    if fit_norm <= 0.0 {
        return f64::INFINITY;
    }
    (window - fitted).norm() / fit_norm
}

/// Removes the initial transient from a trajectory.
///
/// The auto policy slides a window of about four periods of the slowest
/// retained mode across the signal and accepts the first window whose
/// out-of-model residual is below the threshold; the cut is placed at the
/// window end, so for monotonically decaying transients the residual ratio
/// at the cut is already below the threshold.
pub fn trim_transient(traj: &Trajectory, policy: TrimPolicy) -> Result<Trajectory> {
    match policy {
        TrimPolicy::Index(0) => Ok(traj.clone()),
        TrimPolicy::Index(i) => traj.tail(i),
        TrimPolicy::Time(t0) => {
            let start = traj.times().iter().position(|&t| t >= t0).ok_or_else(|| {
                Error::Data(format!("trim time {t0} is beyond the trajectory end"))
            })?;
            traj.tail(start)
        }
        TrimPolicy::Auto { n_modes, threshold } => {
            if n_modes == 0 {
                return Err(Error::Config("auto trim needs n_modes >= 1".into()));
            }
            let n = traj.len();
            if n < 256 {
                return Err(Error::Data(format!(
                    "auto trim needs at least 256 samples, got {n}"
                )));
            }
            // retained frequencies from the final half, where transients
            // have decayed the most
            let tail = traj.tail(n / 2)?;
            let retained = estimate_frequencies(&tail, n_modes)?;
            let slowest = retained[0];
            let period = 2.0 * std::f64::consts::PI / slowest;
            let w_s = ((4.0 * period / traj.dt()).ceil() as usize)
                .max(12 + 12 * n_modes)
                .min(n / 4);
            let step = (w_s / 4).max(1);

            let mut i = 0;
            while i + w_s <= n {
                let window = traj.samples().columns(i, w_s).into_owned();
                let ratio = harmonic_residual_ratio(&window, traj.dt(), &retained);
                if ratio <= threshold {
                    // a clean first window means there was no transient
                    let cut = if i == 0 { 0 } else { (i + w_s).min(n - 2) };
                    return if cut == 0 {
                        Ok(traj.clone())
                    } else {
                        traj.tail(cut)
                    };
                }
                i += step;
            }
            Err(Error::Data(
                "auto trim: no window met the spectral-purity threshold".into(),
            ))
        }
    }
}
