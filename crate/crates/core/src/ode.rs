//! Adaptive embedded Runge-Kutta integration (Dormand-Prince 5(4)).
//!
//! Steps are clamped so every requested sample time is hit exactly; no
//! interpolation error enters the sampled output.

use crate::error::{Error, Result};
use crate::poly::Coeff;
use nalgebra::DVector;

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Abort when the state norm exceeds this bound (divergence guard).
    pub norm_bound: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_steps: 50_000_000,
            norm_bound: 1e12,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `dy/dt = f(t, y)` from `t0`, returning the state at the
/// `n_samples` uniformly spaced times `t0, t0 + dt, ..., t0 + (n_samples-1) dt`.
pub fn integrate_sampled<T, F>(
    f: F,
    y0: &DVector<T>,
    t0: f64,
    dt: f64,
    n_samples: usize,
    opts: &OdeOptions,
) -> Result<Vec<DVector<T>>>
where
    T: Coeff,
    F: Fn(f64, &DVector<T>) -> DVector<T>,
{
    if dt <= 0.0 {
        return Err(Error::Config("sample spacing must be positive".into()));
    }
    if n_samples == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(n_samples);
    out.push(y0.clone());
    if n_samples == 1 {
        return Ok(out);
    }

    let dim = y0.len();
    let mut t = t0;
    let mut y = y0.clone();
    let mut h = dt.min(1e-2 * dt.max(1.0));
    let mut k1 = f(t, &y);
    let mut next_sample = 1usize;
    let mut steps = 0usize;

    while next_sample < n_samples {
        if steps >= opts.max_steps {
            return Err(Error::Numerical(format!(
                "integrator exceeded {} steps at t = {t:.6e}",
                opts.max_steps
            )));
        }
        steps += 1;

        let t_target = t0 + next_sample as f64 * dt;
        let mut h_try = h.min(t_target - t);
        if h_try <= 0.0 {
            h_try = dt * 1e-6;
        }

        // stages
        let mut k = Vec::with_capacity(7);
        k.push(k1.clone());
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[s - 1][j];
                if a != 0.0 {
                    ys.axpy(T::from_real(a * h_try), kj, T::one());
                }
            }
            k.push(f(t + C[s] * h_try, &ys));
        }

        let mut y5 = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if B5[j] != 0.0 {
                y5.axpy(T::from_real(B5[j] * h_try), kj, T::one());
            }
        }

        // embedded error estimate, normalized per component
        let mut err_sq = 0.0;
        for i in 0..dim {
            let mut e = T::zero();
            for (j, kj) in k.iter().enumerate() {
                let db = B5[j] - B4[j];
                if db != 0.0 {
                    e += kj[i] * T::from_real(db * h_try);
                }
            }
            let scale = opts.abs_tol + opts.rel_tol * y[i].modulus().max(y5[i].modulus());
            let r = e.modulus() / scale;
            err_sq += r * r;
        }
        let err = (err_sq / dim as f64).sqrt();

        if err <= 1.0 {
            t += h_try;
            y = y5;
            k1 = k.pop().expect("7 stages"); // FSAL
            if y.iter().any(|v| !v.modulus().is_finite()) || y.norm() > opts.norm_bound {
                return Err(Error::Numerical(format!(
                    "trajectory diverged at t = {t:.6e} (norm bound {:.3e})",
                    opts.norm_bound
                )));
            }
            if (t - t_target).abs() <= 1e-12 * dt.max(t.abs()) {
                out.push(y.clone());
                next_sample += 1;
            }
        }

        let factor = if err > 0.0 {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h = (h_try * factor).max(1e-14 * dt);
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let lambda = Complex64::new(-0.1, 2.0);
        let f = |_t: f64, y: &DVector<Complex64>| y * lambda;
        let y0 = DVector::from_element(1, Complex64::new(1.0, 0.0));
        let opts = OdeOptions {
            rel_tol: 1e-11,
            ..Default::default()
        };
        let dt = 0.1;
        let n = 101;
        let sol = integrate_sampled(f, &y0, 0.0, dt, n, &opts).unwrap();
        for (i, y) in sol.iter().enumerate() {
            let t = i as f64 * dt;
            let exact = (lambda * t).exp();
            assert!((y[0] - exact).norm() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn divergence_is_reported() {
        let f = |_t: f64, y: &DVector<f64>| y * 10.0;
        let y0 = DVector::from_element(1, 1.0);
        let opts = OdeOptions {
            norm_bound: 1e6,
            ..Default::default()
        };
        let res = integrate_sampled(f, &y0, 0.0, 1.0, 10, &opts);
        assert!(matches!(res, Err(Error::Numerical(_))));
    }

    #[test]
    fn sample_times_are_exact_count() {
        let f = |t: f64, _y: &DVector<f64>| DVector::from_element(1, t.cos());
        let y0 = DVector::from_element(1, 0.0);
        let sol = integrate_sampled(f, &y0, 0.0, 0.25, 41, &OdeOptions::default()).unwrap();
        assert_eq!(sol.len(), 41);
        // y(t) = sin(t)
        let t_end = 10.0_f64;
        assert!((sol[40][0] - t_end.sin()).abs() < 1e-8);
    }
}
