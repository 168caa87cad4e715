//! Synthetic systems with known reduced dynamics: ground-truth generators
//! and a high-accuracy oracle integrator for tests and the CLI demo.

use crate::embed::Trajectory;
use crate::error::{Error, Result};
use crate::normal_form::{NormalFormModel, ResonanceOptions};
use crate::ode::{integrate_sampled, OdeOptions};
use crate::poly::{enumerate_monomials, PolyMap};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Coefficients of the 1:2 internally resonant pair system, written in the
/// modal coordinates (z1, z1bar, z2, z2bar); the system is its own normal
/// form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonantCoeffs {
    /// z1' coefficient of z1bar z2.
    pub mixed1: Complex64,
    /// z1' coefficient of z1^2 z1bar.
    pub self1: Complex64,
    /// z1' coefficient of z1 z2 z2bar.
    pub cross1: Complex64,
    /// z2' coefficient of z1^2.
    pub mixed2: Complex64,
    /// z2' coefficient of z2^2 z2bar.
    pub self2: Complex64,
    /// z2' coefficient of z1 z1bar z2.
    pub cross2: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemKind {
    /// z' = lambda z.
    Linear { lambda: Complex64 },
    /// z' = lambda z + gamma z^2 zbar; already in normal form.
    StuartLandau { lambda: Complex64, gamma: Complex64 },
    /// x'' + 2 zeta omega x' + omega^2 x + beta x^3 = 0, state (x, x').
    CubicOscillator { omega: f64, zeta: f64, beta: f64 },
    /// Two conjugate pairs with Im lambda2 close to 2 Im lambda1 and the
    /// corresponding resonant coupling terms.
    ResonantPair {
        lambda1: Complex64,
        lambda2: Complex64,
        coeffs: ResonantCoeffs,
    },
}

impl SystemKind {
    /// Real state dimension (complex pairs count as two).
    pub fn state_dim(&self) -> usize {
        match self {
            SystemKind::Linear { .. }
            | SystemKind::StuartLandau { .. }
            | SystemKind::CubicOscillator { .. } => 2,
            SystemKind::ResonantPair { .. } => 4,
        }
    }

    fn eigenvalues(&self) -> Vec<Complex64> {
        match self {
            SystemKind::Linear { lambda } | SystemKind::StuartLandau { lambda, .. } => {
                vec![*lambda]
            }
            SystemKind::CubicOscillator { omega, zeta, .. } => {
                let wd = omega * (1.0 - zeta * zeta).max(0.0).sqrt();
                vec![Complex64::new(-zeta * omega, wd)]
            }
            SystemKind::ResonantPair {
                lambda1, lambda2, ..
            } => vec![*lambda1, *lambda2],
        }
    }

    /// Complex state derivative in pair coordinates.
    fn complex_field(&self, z: &[Complex64]) -> Vec<Complex64> {
        match self {
            SystemKind::Linear { lambda } => vec![lambda * z[0]],
            SystemKind::StuartLandau { lambda, gamma } => {
                vec![lambda * z[0] + gamma * z[0] * z[0] * z[0].conj()]
            }
            SystemKind::CubicOscillator { .. } => unreachable!("real-state system"),
            SystemKind::ResonantPair {
                lambda1,
                lambda2,
                coeffs,
            } => {
                let (z1, z2) = (z[0], z[1]);
                let dz1 = lambda1 * z1
                    + coeffs.mixed1 * z1.conj() * z2
                    + coeffs.self1 * z1 * z1 * z1.conj()
                    + coeffs.cross1 * z1 * z2 * z2.conj();
                let dz2 = lambda2 * z2
                    + coeffs.mixed2 * z1 * z1
                    + coeffs.self2 * z2 * z2 * z2.conj()
                    + coeffs.cross2 * z1 * z1.conj() * z2;
                vec![dz1, dz2]
            }
        }
    }

    /// Real vector field on the state (Re z1, Im z1, ...) or (x, x').
    fn real_field(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            SystemKind::CubicOscillator { omega, zeta, beta } => DVector::from_column_slice(&[
                y[1],
                -2.0 * zeta * omega * y[1] - omega * omega * y[0] - beta * y[0] * y[0] * y[0],
            ]),
            _ => {
                let n = y.len() / 2;
                let z: Vec<Complex64> = (0..n)
                    .map(|i| Complex64::new(y[2 * i], y[2 * i + 1]))
                    .collect();
                let dz = self.complex_field(&z);
                DVector::from_fn(2 * n, |i, _| {
                    if i % 2 == 0 {
                        dz[i / 2].re
                    } else {
                        dz[i / 2].im
                    }
                })
            }
        }
    }
}

/// A synthetic system together with its observable lift and noise level.
#[derive(Debug, Clone)]
pub struct SyntheticSystem {
    kind: SystemKind,
    lift: DMatrix<f64>,
    noise_level: f64,
}

impl SyntheticSystem {
    pub fn new(kind: SystemKind, lift: DMatrix<f64>, noise_level: f64) -> Result<Self> {
        for l in kind.eigenvalues() {
            if l.re >= 0.0 {
                return Err(Error::Config(format!(
                    "unstable origin (eigenvalue {l}); synthetic systems must decay \
                     (use new_unstable to override)"
                )));
            }
        }
        Self::new_unstable(kind, lift, noise_level)
    }

    /// Like [`SyntheticSystem::new`] but without the stable-origin check.
    pub fn new_unstable(kind: SystemKind, lift: DMatrix<f64>, noise_level: f64) -> Result<Self> {
        let dim = kind.state_dim();
        if lift.ncols() != dim {
            return Err(Error::Shape(format!(
                "lift has {} columns, state dimension is {dim}",
                lift.ncols()
            )));
        }
        let sv = lift.clone().svd(false, false).singular_values;
        if sv[sv.len() - 1] <= 1e-12 * sv[0] {
            return Err(Error::Config(
                "observable lift must have full column rank".into(),
            ));
        }
        if noise_level < 0.0 {
            return Err(Error::Config("noise level must be nonnegative".into()));
        }
        Ok(SyntheticSystem {
            kind,
            lift,
            noise_level,
        })
    }

    /// A random full-rank linear lift into `n_obs` dimensions.
    pub fn random_lift(n_obs: usize, state_dim: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n_obs, state_dim, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }
    pub fn lift(&self) -> &DMatrix<f64> {
        &self.lift
    }
    pub fn n_obs(&self) -> usize {
        self.lift.nrows()
    }

    /// Real initial state from pair coordinates (or (x, v) for the
    /// oscillator, packed as x + i v).
    pub fn state_from_pairs(&self, z0: &[Complex64]) -> Result<DVector<f64>> {
        let n = self.kind.state_dim() / 2;
        if z0.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} complex initial coordinates, got {}",
                z0.len()
            )));
        }
        Ok(DVector::from_fn(2 * n, |i, _| {
            if i % 2 == 0 {
                z0[i / 2].re
            } else {
                z0[i / 2].im
            }
        }))
    }

    /// Integrates the system at oracle accuracy (rel tol 1e-11), samples
    /// uniformly, lifts to observable space, and adds seeded Gaussian noise
    /// when the noise level is positive (ChaCha8 keyed by `seed`,
    /// Box-Muller).
    pub fn simulate(
        &self,
        z0: &[Complex64],
        horizon: f64,
        dt: f64,
        seed: u64,
    ) -> Result<Trajectory> {
        if horizon <= 0.0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        let y0 = self.state_from_pairs(z0)?;
        let n_samples = (horizon / dt).floor() as usize + 1;
        let opts = OdeOptions {
            rel_tol: 1e-11,
            abs_tol: 1e-14,
            norm_bound: 1e9 * y0.norm().max(1.0),
            ..Default::default()
        };
        let kind = self.kind.clone();
        let field = move |_t: f64, y: &DVector<f64>| kind.real_field(y);
        let states = integrate_sampled(field, &y0, 0.0, dt, n_samples, &opts)?;

        let mut samples = DMatrix::zeros(self.n_obs(), n_samples);
        for (j, state) in states.iter().enumerate() {
            let obs = &self.lift * state;
            samples.set_column(j, &obs);
        }
        if self.noise_level > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for c in 0..self.n_obs() {
                let peak = samples.row(c).iter().map(|x| x.abs()).fold(0.0, f64::max);
                let std = self.noise_level * peak;
                for j in 0..n_samples {
                    // Box-Muller
                    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                    let u2: f64 = rng.random();
                    let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                    samples[(c, j)] += std * g;
                }
            }
        }
        Trajectory::from_uniform(0.0, dt, samples)
    }

    /// The exact normal form the pipeline should recover, for kinds that are
    /// already in normal form.
    pub fn ground_truth_normal_form(&self) -> Result<NormalFormModel> {
        let zero = Complex64::new(0.0, 0.0);
        match &self.kind {
            SystemKind::Linear { lambda } => {
                let basis = enumerate_monomials(2, 1, 3)?;
                let mut n_coeffs = DMatrix::from_element(2, basis.len(), zero);
                n_coeffs[(0, 0)] = *lambda;
                n_coeffs[(1, 1)] = lambda.conj();
                Ok(NormalFormModel::from_parts(
                    vec![*lambda, lambda.conj()],
                    PolyMap::new(basis, n_coeffs)?,
                    PolyMap::<Complex64>::identity(2),
                    vec![],
                    ResonanceOptions::default(),
                    None,
                ))
            }
            SystemKind::StuartLandau { lambda, gamma } => {
                let basis = enumerate_monomials(2, 1, 3)?;
                let mut n_coeffs = DMatrix::from_element(2, basis.len(), zero);
                n_coeffs[(0, 0)] = *lambda;
                n_coeffs[(1, 1)] = lambda.conj();
                n_coeffs[(0, basis.index_of(&[2, 1]).unwrap())] = *gamma;
                n_coeffs[(1, basis.index_of(&[1, 2]).unwrap())] = gamma.conj();
                Ok(NormalFormModel::from_parts(
                    vec![*lambda, lambda.conj()],
                    PolyMap::new(basis, n_coeffs)?,
                    PolyMap::<Complex64>::identity(2),
                    vec![(0, vec![2, 1]), (1, vec![1, 2])],
                    ResonanceOptions::default(),
                    None,
                ))
            }
            SystemKind::ResonantPair {
                lambda1,
                lambda2,
                coeffs,
            } => {
                let basis = enumerate_monomials(4, 1, 3)?;
                let lam = vec![*lambda1, lambda1.conj(), *lambda2, lambda2.conj()];
                let mut n_coeffs = DMatrix::from_element(4, basis.len(), zero);
                for (i, l) in lam.iter().enumerate() {
                    let mut e = vec![0u32; 4];
                    e[i] = 1;
                    n_coeffs[(i, basis.index_of(&e).unwrap())] = *l;
                }
                let entries: [(usize, [u32; 4], Complex64); 6] = [
                    (0, [0, 1, 1, 0], coeffs.mixed1),
                    (0, [2, 1, 0, 0], coeffs.self1),
                    (0, [1, 0, 1, 1], coeffs.cross1),
                    (2, [2, 0, 0, 0], coeffs.mixed2),
                    (2, [0, 0, 2, 1], coeffs.self2),
                    (2, [1, 1, 1, 0], coeffs.cross2),
                ];
                let mut resonances = Vec::new();
                for (row, exps, value) in entries {
                    let i = basis.index_of(&exps).unwrap();
                    n_coeffs[(row, i)] = value;
                    resonances.push((row, exps.to_vec()));
                    // conjugate row: swap each pair's exponents
                    let mirrored = [exps[1], exps[0], exps[3], exps[2]];
                    let j = basis.index_of(&mirrored).unwrap();
                    n_coeffs[(row + 1, j)] = value.conj();
                    resonances.push((row + 1, mirrored.to_vec()));
                }
                Ok(NormalFormModel::from_parts(
                    lam,
                    PolyMap::new(basis, n_coeffs)?,
                    PolyMap::<Complex64>::identity(4),
                    resonances,
                    ResonanceOptions::default(),
                    None,
                ))
            }
            SystemKind::CubicOscillator { .. } => Err(Error::Config(
                "the cubic oscillator has no closed-form normal form here".into(),
            )),
        }
    }
}
