//! Reduced dynamics on the manifold: time differentiation of the reduced
//! coordinates, polynomial regression of the vector field, and the change to
//! modal coordinates with a diagonal linear part.

use crate::error::{Error, Result};
use crate::poly::{
    compose, enumerate_monomials, eval_monomials, fit_polynomial_with, FitOptions, PolyMap,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::ops::Range;

/// Finite-difference weights on an arbitrary grid by the Fornberg recursion:
/// returns the weights of the `deriv`-th derivative at `x0` for function
/// values on `grid`.
pub fn fornberg_weights(x0: f64, grid: &[f64], deriv: usize) -> Vec<f64> {
    let n = grid.len();
    assert!(n > deriv, "need more grid points than the derivative order");
    let mut c = vec![vec![0.0_f64; deriv + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = grid[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = grid[i] - x0;
        for j in 0..i {
            let c3 = grid[i] - grid[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[deriv]).collect()
}

/// Half-width of the central difference stencil (4 points per side).
pub const STENCIL_HALF: usize = 4;

/// Order-8 central finite differences of uniformly sampled columns.
///
/// The first and last 4 columns cannot be differentiated at full accuracy and
/// are dropped from both outputs; the returned range maps the output columns
/// back to input indices.
pub fn differentiate(
    xi: &DMatrix<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Range<usize>)> {
    let n = xi.ncols();
    let w = STENCIL_HALF;
    if n < 2 * w + 1 {
        return Err(Error::Data(format!(
            "need at least {} samples for the 9-point stencil, got {n}",
            2 * w + 1
        )));
    }
    if dt <= 0.0 {
        return Err(Error::Config("sampling time must be positive".into()));
    }
    let grid: Vec<f64> = (-(w as isize)..=w as isize).map(|i| i as f64).collect();
    let weights = fornberg_weights(0.0, &grid, 1);
    let kept = n - 2 * w;
    let mid = xi.columns(w, kept).into_owned();
    let mut dot = DMatrix::zeros(xi.nrows(), kept);
    for out in 0..kept {
        let center = out + w;
        for (s, &wt) in weights.iter().enumerate() {
            if wt == 0.0 {
                continue;
            }
            let col = center + s - w;
            for r in 0..xi.nrows() {
                dot[(r, out)] += wt * xi[(r, col)];
            }
        }
    }
    dot /= dt;
    Ok((mid, dot, w..n - w))
}

/// Polynomial regression of the reduced vector field over orders 1..r.
/// Returns the coefficient map and the relative fit residual.
pub fn fit_reduced_dynamics(
    xi: &DMatrix<f64>,
    xi_dot: &DMatrix<f64>,
    r: u32,
) -> Result<(PolyMap<f64>, f64)> {
    if xi.ncols() != xi_dot.ncols() {
        return Err(Error::Shape(format!(
            "coordinate and derivative sample counts differ: {} vs {}",
            xi.ncols(),
            xi_dot.ncols()
        )));
    }
    let basis = enumerate_monomials(xi.nrows(), 1, r)?;
    if xi.ncols() < basis.len() {
        return Err(Error::Data(format!(
            "{} samples cannot determine {} dynamics coefficients; lower the order r",
            xi.ncols(),
            basis.len()
        )));
    }
    let features = eval_monomials(&basis, xi)?;
    let (coeffs, info) = fit_polynomial_with(xi_dot, &features, &FitOptions::default())?;
    Ok((PolyMap::new(basis, coeffs)?, info.residual_rel))
}

/// Tolerance for recognizing lambda_i, lambda_j as a conjugate pair.
fn is_conjugate_pair(a: Complex64, b: Complex64) -> bool {
    (a - b.conj()).norm() <= 1e-8 * a.norm().max(1.0)
}

/// Eigenvalues and eigenvectors of a small real matrix. Eigenvectors are
/// computed as the null space of (A - lambda I) via complex SVD, normalized
/// to unit length with the largest-magnitude component rotated to the
/// positive real axis.
pub fn complex_eig(a: &DMatrix<f64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::Shape(
            "eigendecomposition needs a square matrix".into(),
        ));
    }
    let eigvals: Vec<Complex64> = a.complex_eigenvalues().iter().cloned().collect();
    let ac = a.map(|x| Complex64::new(x, 0.0));

    let eigvec_for = |lambda: Complex64| -> Result<DVector<Complex64>> {
        let mut shifted = ac.clone();
        for i in 0..d {
            shifted[(i, i)] -= lambda;
        }
        let svd = shifted
            .try_svd(false, true, f64::EPSILON, 0)
            .ok_or_else(|| Error::Numerical("eigenvector SVD did not converge".into()))?;
        let v_t = svd.v_t.expect("v_t computed");
        let mut v: DVector<Complex64> = v_t.row(d - 1).adjoint();
        // rotate the largest component to the positive real axis
        let (imax, _) = v
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm().partial_cmp(&y.1.norm()).unwrap())
            .expect("nonempty");
        let phase = v[imax] / v[imax].norm();
        v /= phase;
        Ok(v)
    };

    // group into conjugate pairs and real singles
    let mut used = vec![false; d];
    struct Mode {
        re_abs: f64,
        values: Vec<Complex64>,
        vectors: Vec<DVector<Complex64>>,
    }
    let mut modes: Vec<Mode> = Vec::new();
    for i in 0..d {
        if used[i] {
            continue;
        }
        let li = eigvals[i];
        if li.im.abs() > 1e-12 * li.norm().max(1.0) {
            let mut partner = None;
            for j in i + 1..d {
                if !used[j] && is_conjugate_pair(li, eigvals[j]) {
                    partner = Some(j);
                    break;
                }
            }
            let j = partner.ok_or_else(|| {
                Error::Numerical(format!(
                    "complex eigenvalue {li} has no conjugate partner; input not real?"
                ))
            })?;
            used[i] = true;
            used[j] = true;
            let (lp, _ln) = if li.im > 0.0 {
                (li, eigvals[j])
            } else {
                (eigvals[j], li)
            };
            let vp = eigvec_for(lp)?;
            let vn = vp.map(|c| c.conj());
            modes.push(Mode {
                re_abs: lp.re.abs(),
                values: vec![lp, lp.conj()],
                vectors: vec![vp, vn],
            });
        } else {
            used[i] = true;
            let lr = Complex64::new(li.re, 0.0);
            let v = eigvec_for(lr)?;
            modes.push(Mode {
                re_abs: lr.re.abs(),
                values: vec![lr],
                vectors: vec![v],
            });
        }
    }
    modes.sort_by(|a, b| a.re_abs.partial_cmp(&b.re_abs).unwrap());

    let mut lambda = Vec::with_capacity(d);
    let mut w = DMatrix::zeros(d, d);
    let mut col = 0;
    for mode in &modes {
        for (v, vec) in mode.values.iter().zip(mode.vectors.iter()) {
            lambda.push(*v);
            w.set_column(col, vec);
            col += 1;
        }
    }
    Ok((lambda, w))
}

/// Reduced dynamics with its modal form: real coefficients R, eigenstructure
/// (W, Lambda), and the complex modal coefficients G with diagonal linear part.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    dynamics: PolyMap<f64>,
    eigvecs: DMatrix<Complex64>,
    eigvecs_inv: DMatrix<Complex64>,
    lambda: Vec<Complex64>,
    modal: PolyMap<Complex64>,
    order: u32,
    fit_residual: f64,
}

/// Options for [`modalize`].
#[derive(Debug, Clone)]
pub struct ModalOptions {
    /// Maximum allowed condition number of the eigenvector matrix.
    pub max_condition: f64,
}

impl Default for ModalOptions {
    fn default() -> Self {
        ModalOptions { max_condition: 1e8 }
    }
}

/// Change of coordinates to modal form: diagonalizes the linear part and
/// transforms all coefficients exactly (zeta = W^-1 xi), forcing the linear
/// block to the diagonal eigenvalue matrix.
pub fn modalize(
    dynamics: &PolyMap<f64>,
    fit_residual: f64,
    opts: &ModalOptions,
) -> Result<ReducedModel> {
    let d = dynamics.output_dim();
    if dynamics.input_dim() != d {
        return Err(Error::Shape("reduced dynamics must map d -> d".into()));
    }
    let r1 = dynamics.linear_block();
    let (lambda, w) = complex_eig(&r1)?;

    let sv = w.clone().svd(false, false).singular_values;
    let cond = sv[0] / sv[sv.len() - 1];
    if !cond.is_finite() || cond > opts.max_condition {
        return Err(Error::Conditioning(format!(
            "eigenvector matrix condition number {cond:.3e} exceeds {:.1e}; \
             the linear part is too close to defective",
            opts.max_condition
        )));
    }
    let w_inv = w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Conditioning("eigenvector matrix is numerically singular".into()))?;

    // G(zeta) = W^-1 R(W zeta), computed exactly on the coefficients
    let order = dynamics.basis().order_hi();
    let rc = dynamics.to_complex();
    let composed = compose(&rc, &PolyMap::linear(w.clone()), order)?;
    let mut g_coeffs = &w_inv * composed.coeffs();
    // force the linear block to be exactly diagonal
    for (i, exps) in composed.basis().exponents().iter().enumerate() {
        if exps.iter().sum::<u32>() == 1 {
            let var = exps.iter().position(|&e| e == 1).unwrap();
            for row in 0..d {
                g_coeffs[(row, i)] = if row == var {
                    lambda[row]
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
        }
    }
    let modal = PolyMap::new(composed.basis().clone(), g_coeffs)?;

    Ok(ReducedModel {
        dynamics: dynamics.clone(),
        eigvecs: w,
        eigvecs_inv: w_inv,
        lambda,
        modal,
        order,
        fit_residual,
    })
}

impl ReducedModel {
    pub fn from_parts(
        dynamics: PolyMap<f64>,
        eigvecs: DMatrix<Complex64>,
        lambda: Vec<Complex64>,
        modal: PolyMap<Complex64>,
        fit_residual: f64,
    ) -> Result<Self> {
        let eigvecs_inv = eigvecs
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Conditioning("eigenvector matrix is singular".into()))?;
        let order = dynamics.basis().order_hi();
        Ok(ReducedModel {
            dynamics,
            eigvecs,
            eigvecs_inv,
            lambda,
            modal,
            order,
            fit_residual,
        })
    }

    pub fn dynamics(&self) -> &PolyMap<f64> {
        &self.dynamics
    }
    pub fn eigvecs(&self) -> &DMatrix<Complex64> {
        &self.eigvecs
    }
    pub fn eigvecs_inv(&self) -> &DMatrix<Complex64> {
        &self.eigvecs_inv
    }
    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.lambda
    }
    pub fn modal(&self) -> &PolyMap<Complex64> {
        &self.modal
    }
    pub fn order(&self) -> u32 {
        self.order
    }
    pub fn fit_residual(&self) -> f64 {
        self.fit_residual
    }
    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// Modal coordinates of reduced-space points: zeta = W^-1 xi.
    pub fn to_modal(&self, xi: &DMatrix<f64>) -> DMatrix<Complex64> {
        &self.eigvecs_inv * xi.map(|x| Complex64::new(x, 0.0))
    }

    /// Reduced-space points from modal coordinates: xi = W zeta (real part).
    pub fn from_modal(&self, zeta: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        &self.eigvecs * zeta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate_sampled, OdeOptions};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fornberg_reproduces_known_central_weights() {
        let grid: Vec<f64> = (-4..=4).map(|i| i as f64).collect();
        let w = fornberg_weights(0.0, &grid, 1);
        let expected = [
            1.0 / 280.0,
            -4.0 / 105.0,
            1.0 / 5.0,
            -4.0 / 5.0,
            0.0,
            4.0 / 5.0,
            -1.0 / 5.0,
            4.0 / 105.0,
            -1.0 / 280.0,
        ];
        for (got, want) in w.iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn derivative_of_constant_and_ramp() {
        let n = 20;
        let constant = DMatrix::from_element(1, n, 3.5);
        let (_, dot, range) = differentiate(&constant, 0.1).unwrap();
        assert_eq!(range, 4..16);
        assert!(dot.iter().all(|&x| x.abs() < 1e-12));

        let ramp = DMatrix::from_fn(1, n, |_, j| j as f64 * 0.1);
        let (_, dot, _) = differentiate(&ramp, 0.1).unwrap();
        assert!(dot.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn derivative_exact_on_degree_eight() {
        let dt = 0.01;
        let n = 200;
        let xi = DMatrix::from_fn(1, n, |_, j| {
            let t = 1.0 + j as f64 * dt;
            t.powi(8)
        });
        let (mid, dot, range) = differentiate(&xi, dt).unwrap();
        assert_eq!(mid.ncols(), n - 8);
        for (out, j) in range.clone().enumerate() {
            let t = 1.0 + j as f64 * dt;
            let exact = 8.0 * t.powi(7);
            let rel = (dot[(0, out)] - exact).abs() / exact.abs();
            assert!(rel < 1e-10, "t = {t}: rel err {rel:.3e}");
        }
    }

    #[test]
    fn derivative_too_short_is_error() {
        let xi = DMatrix::<f64>::zeros(2, 8);
        assert!(matches!(differentiate(&xi, 0.1), Err(Error::Data(_))));
    }

    #[test]
    fn rotation_field_recovered() {
        // closed-form solutions of xi_dot = A xi with A = [[0,1],[-1,0]];
        // several amplitudes so the cubic features are independent on the data
        let dt = 0.01;
        let n_per = 700;
        let radii = [1.0, 0.7, 0.4];
        let mut mids = Vec::new();
        let mut dots = Vec::new();
        for &radius in &radii {
            let xi = DMatrix::from_fn(2, n_per, |r, j| {
                let t = j as f64 * dt;
                if r == 0 {
                    radius * (t.cos() + 0.3 * t.sin())
                } else {
                    radius * (-t.sin() + 0.3 * t.cos())
                }
            });
            let (mid, dot, _) = differentiate(&xi, dt).unwrap();
            mids.push(mid);
            dots.push(dot);
        }
        let total: usize = mids.iter().map(|m| m.ncols()).sum();
        let mut mid = DMatrix::zeros(2, total);
        let mut dot = DMatrix::zeros(2, total);
        let mut col = 0;
        for (m, d) in mids.iter().zip(dots.iter()) {
            mid.columns_mut(col, m.ncols()).copy_from(m);
            dot.columns_mut(col, d.ncols()).copy_from(d);
            col += m.ncols();
        }
        let (map, _res) = fit_reduced_dynamics(&mid, &dot, 3).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((map.linear_block() - a).norm() < 1e-6);
        assert!(map.order_block(2).norm() < 1e-6);
        assert!(map.order_block(3).norm() < 1e-6);
    }

    #[test]
    fn cubic_oscillator_coefficients_recovered() {
        // xi1' = xi2, xi2' = -xi1 - 0.1 xi2 - 0.4 xi1^3
        let omega2 = 1.0;
        let damping = 0.1;
        let beta = 0.4;
        let field = move |_t: f64, y: &DVector<f64>| {
            DVector::from_column_slice(&[
                y[1],
                -omega2 * y[0] - damping * y[1] - beta * y[0] * y[0] * y[0],
            ])
        };
        let dt = 0.02;
        let n = 3000;
        let opts = OdeOptions {
            rel_tol: 1e-11,
            ..Default::default()
        };
        let y0 = DVector::from_column_slice(&[1.2, 0.0]);
        let sol = integrate_sampled(field, &y0, 0.0, dt, n, &opts).unwrap();
        let xi = DMatrix::from_fn(2, n, |r, j| sol[j][r]);
        let (mid, dot, _) = differentiate(&xi, dt).unwrap();
        let (map, _) = fit_reduced_dynamics(&mid, &dot, 3).unwrap();

        let b = map.basis();
        let get = |row: usize, exps: &[u32]| map.coeffs()[(row, b.index_of(exps).unwrap())];
        assert!((get(0, &[0, 1]) - 1.0).abs() < 1e-3);
        assert!((get(1, &[1, 0]) + omega2).abs() < 1e-3);
        assert!((get(1, &[0, 1]) + damping).abs() < 1e-3 * damping.max(1.0));
        let cubic = get(1, &[3, 0]);
        assert!(
            (cubic + beta).abs() / beta < 1e-3,
            "cubic coefficient {cubic} vs {}",
            -beta
        );
    }

    #[test]
    fn zero_derivatives_give_zero_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xi = DMatrix::from_fn(2, 100, |_, _| rng.random::<f64>() - 0.5);
        let dot = DMatrix::zeros(2, 100);
        let (map, _) = fit_reduced_dynamics(&xi, &dot, 2).unwrap();
        assert!(map.coeffs().norm() < 1e-12);
    }

    #[test]
    fn modalize_keeps_sorted_real_diagonal_system() {
        let basis = enumerate_monomials(2, 1, 3).unwrap();
        let mut coeffs = DMatrix::zeros(2, basis.len());
        coeffs[(0, 0)] = -1.0;
        coeffs[(1, 1)] = -2.0;
        coeffs[(0, basis.index_of(&[3, 0]).unwrap())] = 0.5;
        coeffs[(1, basis.index_of(&[1, 2]).unwrap())] = -0.25;
        let r = PolyMap::new(basis, coeffs).unwrap();
        let model = modalize(&r, 0.0, &ModalOptions::default()).unwrap();
        assert_eq!(model.eigenvalues()[0], Complex64::new(-1.0, 0.0));
        assert_eq!(model.eigenvalues()[1], Complex64::new(-2.0, 0.0));
        let id = DMatrix::<Complex64>::identity(2, 2);
        assert!((model.eigvecs() - id).norm() < 1e-12);
        let rc = r.to_complex();
        assert!((model.modal().coeffs() - rc.coeffs()).norm() < 1e-12);
    }

    #[test]
    fn rotation_spectrum_pair_ordering() {
        let basis = enumerate_monomials(2, 1, 1).unwrap();
        let coeffs = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let r = PolyMap::new(basis, coeffs).unwrap();
        let model = modalize(&r, 0.0, &ModalOptions::default()).unwrap();
        let l = model.eigenvalues();
        assert!((l[0] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
        assert!((l[1] - Complex64::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn modal_conjugacy_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let basis = enumerate_monomials(2, 1, 3).unwrap();
        let mut coeffs = DMatrix::from_fn(2, basis.len(), |_, _| rng.random::<f64>() - 0.5);
        coeffs[(0, 0)] = -0.05;
        coeffs[(0, 1)] = 1.0;
        coeffs[(1, 0)] = -1.0;
        coeffs[(1, 1)] = -0.05;
        let r = PolyMap::new(basis, coeffs).unwrap();
        let model = modalize(&r, 0.0, &ModalOptions::default()).unwrap();

        for _ in 0..100 {
            let xi = DMatrix::from_fn(2, 1, |_, _| (rng.random::<f64>() - 0.5) * 0.6);
            let zeta = model.to_modal(&xi);
            let g_val = model.modal().eval(&zeta).unwrap();
            let lhs = model.eigvecs() * g_val;
            let rhs = r.eval(&xi).unwrap().map(|x| Complex64::new(x, 0.0));
            let scale = rhs.norm().max(1e-6);
            assert!((lhs - rhs).norm() / scale < 1e-10);
        }
    }

    #[test]
    fn spectrum_invariant_under_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // synthetic data from a linear field
        let a = DMatrix::from_row_slice(2, 2, &[-0.1, 2.0, -2.0, -0.1]);
        let dt = 0.01;
        let n = 1500;
        let field = {
            let a = a.clone();
            move |_t: f64, y: &DVector<f64>| &a * y
        };
        let y0 = DVector::from_column_slice(&[1.0, 0.2]);
        let sol = integrate_sampled(
            field,
            &y0,
            0.0,
            dt,
            n,
            &OdeOptions {
                rel_tol: 1e-11,
                ..Default::default()
            },
        )
        .unwrap();
        let xi = DMatrix::from_fn(2, n, |r, j| sol[j][r]);

        let t = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() + 0.5);
        let xi_t = &t * &xi;

        let fit_eigs = |xi: &DMatrix<f64>| {
            let (mid, dot, _) = differentiate(xi, dt).unwrap();
            let (map, _) = fit_reduced_dynamics(&mid, &dot, 2).unwrap();
            let model = modalize(&map, 0.0, &ModalOptions::default()).unwrap();
            model.eigenvalues().to_vec()
        };
        let e1 = fit_eigs(&xi);
        let e2 = fit_eigs(&xi_t);
        for (a, b) in e1.iter().zip(e2.iter()) {
            assert!((a - b).norm() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn modal_trajectories_map_back_real() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let basis = enumerate_monomials(2, 1, 3).unwrap();
        let mut coeffs = DMatrix::from_fn(2, basis.len(), |_, _| 0.3 * (rng.random::<f64>() - 0.5));
        coeffs[(0, 0)] = -0.1;
        coeffs[(0, 1)] = 1.5;
        coeffs[(1, 0)] = -1.5;
        coeffs[(1, 1)] = -0.1;
        let r = PolyMap::new(basis, coeffs).unwrap();
        let model = modalize(&r, 0.0, &ModalOptions::default()).unwrap();

        let xi = DMatrix::from_fn(2, 50, |_, _| (rng.random::<f64>() - 0.5) * 0.4);
        let zeta = model.to_modal(&xi);
        let back = model.from_modal(&zeta);
        let max_im = back.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        let scale = back.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(max_im / scale < 1e-9);
    }

    #[test]
    fn near_defective_matrix_is_rejected() {
        // Jordan block: the eigenvector matrix is singular
        let basis = enumerate_monomials(2, 1, 1).unwrap();
        let coeffs = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        let r = PolyMap::new(basis, coeffs).unwrap();
        match modalize(&r, 0.0, &ModalOptions::default()) {
            Err(Error::Conditioning(msg)) => assert!(msg.contains("condition"), "{msg}"),
            other => panic!("expected conditioning error, got {other:?}"),
        }
    }
}
