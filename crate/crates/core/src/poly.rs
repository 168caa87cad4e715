//! Multivariate monomial algebra and polynomial maps.
//!
//! Everything downstream (manifold parametrization, reduced dynamics, normal
//! forms) is a coefficient matrix over a [`MonomialBasis`]: one column per
//! monomial, one row per output component. The basis ordering is graded
//! lexicographic with variable 1 dominant, so for d = 2, orders 1..3 the
//! monomials read x1, x2, x1^2, x1 x2, x2^2, x1^3, x1^2 x2, x1 x2^2, x2^3.

use crate::error::{Error, Result};
use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use std::collections::HashMap;

/// Scalar types the polynomial machinery works over.
pub trait Coeff: ComplexField<RealField = f64> + Copy {}
impl Coeff for f64 {}
impl Coeff for Complex64 {}

/// Ordered set of d-variate monomial exponents with total degree in `order_lo..=order_hi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    dim: usize,
    order_lo: u32,
    order_hi: u32,
    exponents: Vec<Vec<u32>>,
}

/// Appends, in descending lexicographic order, all length-`dim` exponent
/// vectors of total degree `degree` to `out`.
fn push_degree(prefix: &mut Vec<u32>, dim_left: usize, degree: u32, out: &mut Vec<Vec<u32>>) {
    if dim_left == 1 {
        prefix.push(degree);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=degree).rev() {
        prefix.push(e);
        push_degree(prefix, dim_left - 1, degree - e, out);
        prefix.pop();
    }
}

/// Enumerates the d-variate monomials of orders `l` through `r`.
pub fn enumerate_monomials(d: usize, l: u32, r: u32) -> Result<MonomialBasis> {
    if d == 0 {
        return Err(Error::Config("monomial basis needs dim >= 1".into()));
    }
    if l < 1 || l > r {
        return Err(Error::Config(format!(
            "invalid monomial order range {l}:{r} (need 1 <= lo <= hi)"
        )));
    }
    let mut exponents = Vec::new();
    let mut prefix = Vec::with_capacity(d);
    for degree in l..=r {
        push_degree(&mut prefix, d, degree, &mut exponents);
    }
    Ok(MonomialBasis {
        dim: d,
        order_lo: l,
        order_hi: r,
        exponents,
    })
}

impl MonomialBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn order_lo(&self) -> u32 {
        self.order_lo
    }
    pub fn order_hi(&self) -> u32 {
        self.order_hi
    }
    pub fn len(&self) -> usize {
        self.exponents.len()
    }
    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }
    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }
    pub fn exponent(&self, i: usize) -> &[u32] {
        &self.exponents[i]
    }

    pub fn degree(&self, i: usize) -> u32 {
        self.exponents[i].iter().sum()
    }

    /// Position of an exponent vector in this basis, if present.
    pub fn index_of(&self, exps: &[u32]) -> Option<usize> {
        self.exponents.iter().position(|e| e == exps)
    }

    /// Human-readable monomial, e.g. `x1^2 x2`.
    pub fn monomial_string(&self, i: usize, var: &str) -> String {
        let mut parts = Vec::new();
        for (j, &e) in self.exponents[i].iter().enumerate() {
            match e {
                0 => {}
                1 => parts.push(format!("{var}{}", j + 1)),
                _ => parts.push(format!("{var}{}^{e}", j + 1)),
            }
        }
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join(" ")
        }
    }
}

/// Number of d-variate monomials of total degree exactly `i` (binomial(i+d-1, d-1)).
pub fn monomial_count(d: usize, i: u32) -> usize {
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for j in 1..d as u128 {
        num *= i as u128 + j;
        den *= j;
    }
    (num / den) as usize
}

/// Evaluates every basis monomial at every column of `points`.
///
/// Output has one row per monomial and one column per point.
pub fn eval_monomials<T: Coeff>(basis: &MonomialBasis, points: &DMatrix<T>) -> Result<DMatrix<T>> {
    if points.nrows() != basis.dim {
        return Err(Error::Shape(format!(
            "points have {} rows, basis dim is {}",
            points.nrows(),
            basis.dim
        )));
    }
    let n = points.ncols();
    let max_exp = basis
        .exponents
        .iter()
        .flat_map(|e| e.iter().copied())
        .max()
        .unwrap_or(0) as usize;
    let mut out = DMatrix::<T>::zeros(basis.len(), n);
    // per-point power table: powers[v][e] = x_v^e
    let mut powers = vec![vec![T::one(); max_exp + 1]; basis.dim];
    for j in 0..n {
        for v in 0..basis.dim {
            let x = points[(v, j)];
            let row = &mut powers[v];
            for e in 1..=max_exp {
                row[e] = row[e - 1] * x;
            }
        }
        for (i, exps) in basis.exponents.iter().enumerate() {
            let mut val = T::one();
            for (v, &e) in exps.iter().enumerate() {
                if e > 0 {
                    val *= powers[v][e as usize];
                }
            }
            out[(i, j)] = val;
        }
    }
    Ok(out)
}

/// Polynomial map: `y = C * x^(lo:hi)` with coefficient matrix `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMap<T: Coeff> {
    basis: MonomialBasis,
    coeffs: DMatrix<T>,
}

impl<T: Coeff> PolyMap<T> {
    pub fn new(basis: MonomialBasis, coeffs: DMatrix<T>) -> Result<Self> {
        if coeffs.ncols() != basis.len() {
            return Err(Error::Shape(format!(
                "coefficient matrix has {} columns, basis has {} monomials",
                coeffs.ncols(),
                basis.len()
            )));
        }
        Ok(PolyMap { basis, coeffs })
    }

    /// The identity map on `d` variables (orders 1..1).
    pub fn identity(d: usize) -> Self {
        let basis = enumerate_monomials(d, 1, 1).expect("valid range");
        PolyMap {
            basis,
            coeffs: DMatrix::identity(d, d),
        }
    }

    /// Zero map with the given basis and output dimension.
    pub fn zero(out_dim: usize, basis: MonomialBasis) -> Self {
        let coeffs = DMatrix::zeros(out_dim, basis.len());
        PolyMap { basis, coeffs }
    }

    /// A purely linear map `x -> a x` (orders 1..1).
    pub fn linear(a: DMatrix<T>) -> Self {
        let basis = enumerate_monomials(a.ncols(), 1, 1).expect("valid range");
        PolyMap { basis, coeffs: a }
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }
    pub fn coeffs(&self) -> &DMatrix<T> {
        &self.coeffs
    }
    pub fn coeffs_mut(&mut self) -> &mut DMatrix<T> {
        &mut self.coeffs
    }
    /// Input dimension d.
    pub fn input_dim(&self) -> usize {
        self.basis.dim
    }
    /// Output dimension (rows of the coefficient matrix).
    pub fn output_dim(&self) -> usize {
        self.coeffs.nrows()
    }

    /// Evaluates the map at each column of `points`.
    pub fn eval(&self, points: &DMatrix<T>) -> Result<DMatrix<T>> {
        let feats = eval_monomials(&self.basis, points)?;
        Ok(&self.coeffs * feats)
    }

    /// Evaluates the map at a single point.
    pub fn eval_vec(&self, point: &DVector<T>) -> Result<DVector<T>> {
        let pts = DMatrix::from_column_slice(point.len(), 1, point.as_slice());
        Ok(self.eval(&pts)?.column(0).into_owned())
    }

    /// Coefficient sub-matrix of all monomials with total degree `order`.
    pub fn order_block(&self, order: u32) -> DMatrix<T> {
        let cols: Vec<usize> = (0..self.basis.len())
            .filter(|&i| self.basis.degree(i) == order)
            .collect();
        let mut out = DMatrix::zeros(self.output_dim(), cols.len());
        for (j, &c) in cols.iter().enumerate() {
            out.set_column(j, &self.coeffs.column(c));
        }
        out
    }

    /// Linear part as a square matrix (requires order_lo = 1).
    pub fn linear_block(&self) -> DMatrix<T> {
        self.order_block(1)
    }

    /// Exact analytic Jacobian at `point`.
    pub fn jacobian_at(&self, point: &DVector<T>) -> Result<DMatrix<T>> {
        let d = self.basis.dim;
        if point.len() != d {
            return Err(Error::Shape(format!(
                "point has {} entries, basis dim is {d}",
                point.len()
            )));
        }
        let max_exp = self
            .basis
            .exponents
            .iter()
            .flat_map(|e| e.iter().copied())
            .max()
            .unwrap_or(0) as usize;
        let mut powers = vec![vec![T::one(); max_exp + 1]; d];
        for v in 0..d {
            for e in 1..=max_exp {
                powers[v][e] = powers[v][e - 1] * point[v];
            }
        }
        let mut jac = DMatrix::<T>::zeros(self.output_dim(), d);
        for (i, exps) in self.basis.exponents.iter().enumerate() {
            for v in 0..d {
                let e = exps[v];
                if e == 0 {
                    continue;
                }
                // d/dx_v x^k = k_v * x^(k - e_v)
                let mut val = T::from_real(e as f64);
                for (w, &ew) in exps.iter().enumerate() {
                    let p = if w == v { ew - 1 } else { ew };
                    if p > 0 {
                        val *= powers[w][p as usize];
                    }
                }
                for row in 0..self.output_dim() {
                    jac[(row, v)] += self.coeffs[(row, i)] * val;
                }
            }
        }
        Ok(jac)
    }

    /// Composition `self(inner(x))` truncated at `truncation_order`.
    pub fn compose(&self, inner: &PolyMap<T>, truncation_order: u32) -> Result<PolyMap<T>> {
        compose(self, inner, truncation_order)
    }

    /// Series inverse through order `trunc`: returns `s` with
    /// `self(s(x)) = x + O(|x|^(trunc+1))`. Requires a square map with an
    /// invertible linear block.
    pub fn inverse_series(&self, trunc: u32) -> Result<PolyMap<T>> {
        let d = self.input_dim();
        if self.output_dim() != d {
            return Err(Error::Shape("series inverse needs a square map".into()));
        }
        if self.basis.order_lo != 1 {
            return Err(Error::Config("series inverse needs order_lo = 1".into()));
        }
        let lin = self.linear_block();
        let lin_inv = lin.clone().try_inverse().ok_or_else(|| {
            Error::Conditioning("linear block is singular; no series inverse".into())
        })?;
        let basis = enumerate_monomials(d, 1, trunc)?;
        let mut s = PolyMap::zero(d, basis.clone());
        // first-order seed: L^-1
        for (i, exps) in basis.exponents().iter().enumerate() {
            if exps.iter().sum::<u32>() == 1 {
                let var = exps.iter().position(|&e| e == 1).unwrap();
                for row in 0..d {
                    s.coeffs_mut()[(row, i)] = lin_inv[(row, var)];
                }
            }
        }
        // order-q coefficients from the order-q defect of self(s) - id
        for q in 2..=trunc {
            let comp = compose(self, &s, q)?;
            let correction = &lin_inv * comp.coeffs();
            for (i, exps) in comp.basis().exponents().iter().enumerate() {
                if exps.iter().sum::<u32>() != q {
                    continue;
                }
                let target = basis.index_of(exps).expect("same enumeration");
                for row in 0..d {
                    s.coeffs_mut()[(row, target)] -= correction[(row, i)];
                }
            }
        }
        Ok(s)
    }
}

impl PolyMap<f64> {
    /// Promotes a real map to complex coefficients.
    pub fn to_complex(&self) -> PolyMap<Complex64> {
        let coeffs = self.coeffs.map(|x| Complex64::new(x, 0.0));
        PolyMap {
            basis: self.basis.clone(),
            coeffs,
        }
    }
}

impl PolyMap<Complex64> {
    /// Largest imaginary residue relative to the largest coefficient magnitude.
    pub fn max_imag_rel(&self) -> f64 {
        let max_mag = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if max_mag == 0.0 {
            return 0.0;
        }
        self.coeffs.iter().map(|c| c.im.abs()).fold(0.0, f64::max) / max_mag
    }
}

/// Options for [`fit_polynomial_with`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Relative singular-value cutoff for the pseudo-inverse.
    pub sv_cutoff: f64,
    /// Normalize each feature row by its max absolute value before fitting
    /// and unscale the coefficients afterwards. Off by default.
    pub scale_features: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            sv_cutoff: 1e-12,
            scale_features: false,
        }
    }
}

/// Diagnostics from a least-squares fit.
#[derive(Debug, Clone)]
pub struct FitInfo {
    /// Numerical rank of the feature matrix at the configured cutoff.
    pub rank: usize,
    pub n_features: usize,
    /// Frobenius residual of `targets - C * features` relative to `targets`.
    pub residual_rel: f64,
}

/// Least-squares coefficients `C` minimizing ||targets - C * features||_F,
/// via rank-revealing SVD pseudo-inverse. One column per sample.
pub fn fit_polynomial<T: Coeff>(targets: &DMatrix<T>, features: &DMatrix<T>) -> Result<DMatrix<T>> {
    fit_polynomial_with(targets, features, &FitOptions::default()).map(|(c, _)| c)
}

pub fn fit_polynomial_with<T: Coeff>(
    targets: &DMatrix<T>,
    features: &DMatrix<T>,
    opts: &FitOptions,
) -> Result<(DMatrix<T>, FitInfo)> {
    if targets.ncols() != features.ncols() {
        return Err(Error::Shape(format!(
            "targets have {} samples, features have {}",
            targets.ncols(),
            features.ncols()
        )));
    }
    if features.ncols() == 0 {
        return Err(Error::Data("cannot fit on zero samples".into()));
    }

    // Optional per-row feature scaling for conditioning.
    let mut scales = vec![1.0_f64; features.nrows()];
    let scaled;
    let feats = if opts.scale_features {
        let mut f = features.clone();
        for i in 0..f.nrows() {
            let m = f.row(i).iter().map(|x| x.abs()).fold(0.0, f64::max);
            if m > 0.0 {
                scales[i] = m;
                let inv = T::from_real(1.0 / m);
                for j in 0..f.ncols() {
                    f[(i, j)] *= inv;
                }
            }
        }
        scaled = f;
        &scaled
    } else {
        features
    };

    let svd = feats
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD of feature matrix did not converge".into()))?;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let tol = opts.sv_cutoff * smax;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < feats.nrows() {
        log::warn!(
            "rank-deficient feature matrix (rank {rank} of {}): returning minimum-norm fit",
            feats.nrows()
        );
    }
    if rank == 0 {
        return Err(Error::Rank("feature matrix is numerically zero".into()));
    }

    // C = targets * V * S^+ * U^H, with small singular values dropped.
    let yv = targets * v_t.adjoint(); // n_out x k
    let mut yvs = yv;
    for (i, &s) in sv.iter().enumerate() {
        let f = if s > tol { 1.0 / s } else { 0.0 };
        let f = T::from_real(f);
        for r in 0..yvs.nrows() {
            yvs[(r, i)] *= f;
        }
    }
    let mut coeffs = yvs * u.adjoint();

    if opts.scale_features {
        for i in 0..coeffs.ncols() {
            let inv = T::from_real(1.0 / scales[i]);
            for r in 0..coeffs.nrows() {
                coeffs[(r, i)] *= inv;
            }
        }
    }

    let t_norm = targets.norm();
    let residual_rel = if t_norm > 0.0 {
        (targets - &coeffs * features).norm() / t_norm
    } else {
        0.0
    };
    Ok((
        coeffs,
        FitInfo {
            rank,
            n_features: features.nrows(),
            residual_rel,
        },
    ))
}

/// Coefficients of `outer(inner(x))` with all monomials above
/// `truncation_order` discarded; exact at or below the truncation order.
pub fn compose<T: Coeff>(
    outer: &PolyMap<T>,
    inner: &PolyMap<T>,
    truncation_order: u32,
) -> Result<PolyMap<T>> {
    if outer.input_dim() != inner.output_dim() {
        return Err(Error::Shape(format!(
            "outer input dim {} != inner output dim {}",
            outer.input_dim(),
            inner.output_dim()
        )));
    }
    if inner.basis.order_lo < 1 {
        return Err(Error::Config("inner map must have order_lo >= 1".into()));
    }
    let d = inner.input_dim();
    let dense = dense::DenseBasis::new(d, truncation_order);

    // Inner components as dense truncated polynomials.
    let inner_dense: Vec<dense::DensePoly<T>> = (0..inner.output_dim())
        .map(|row| dense.map_row(inner, row))
        .collect();

    // Memoized powers inner_j^e.
    let max_exp: Vec<u32> = (0..outer.input_dim())
        .map(|v| {
            outer
                .basis
                .exponents
                .iter()
                .map(|k| k[v])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut powers: Vec<Vec<dense::DensePoly<T>>> = Vec::with_capacity(inner_dense.len());
    for (j, p) in inner_dense.iter().enumerate() {
        let mut pw = vec![dense.one()];
        for e in 1..=max_exp[j] {
            let next = dense.mul(&pw[(e - 1) as usize], p);
            pw.push(next);
        }
        powers.push(pw);
    }

    let mut rows: Vec<dense::DensePoly<T>> =
        (0..outer.output_dim()).map(|_| dense.zero()).collect();
    for (mono, k) in outer.basis.exponents.iter().enumerate() {
        // term = prod_j inner_j^{k_j}
        let mut term = dense.one();
        for (j, &e) in k.iter().enumerate() {
            if e > 0 {
                term = dense.mul(&term, &powers[j][e as usize]);
            }
        }
        for row in 0..outer.output_dim() {
            let c = outer.coeffs[(row, mono)];
            if c != T::zero() {
                dense.axpy(&mut rows[row], c, &term);
            }
        }
    }

    let basis = enumerate_monomials(d, 1, truncation_order)?;
    let mut coeffs = DMatrix::<T>::zeros(outer.output_dim(), basis.len());
    for (row, poly) in rows.iter().enumerate() {
        for (i, exps) in basis.exponents.iter().enumerate() {
            coeffs[(row, i)] = dense.get(poly, exps);
        }
    }
    PolyMap::new(basis, coeffs)
}

/// Dense truncated polynomial arithmetic over all monomials of orders
/// 0..=max_order; used by composition and the normal form recursion.
pub(crate) mod dense {
    use super::*;

    pub struct DenseBasis {
        pub dim: usize,
        pub exponents: Vec<Vec<u32>>,
        index: HashMap<Vec<u32>, usize>,
        /// prod_table[a * len + b] = index of monomial a*b, or usize::MAX above truncation.
        prod_table: Vec<usize>,
    }

    pub type DensePoly<T> = Vec<T>;

    impl DenseBasis {
        pub fn new(dim: usize, max_order: u32) -> Self {
            let mut exponents = Vec::new();
            let mut prefix = Vec::with_capacity(dim);
            for degree in 0..=max_order {
                super::push_degree(&mut prefix, dim, degree, &mut exponents);
            }
            let index: HashMap<Vec<u32>, usize> = exponents
                .iter()
                .enumerate()
                .map(|(i, e)| (e.clone(), i))
                .collect();
            let degrees: Vec<u32> = exponents.iter().map(|e| e.iter().sum()).collect();
            let n = exponents.len();
            let mut prod_table = vec![usize::MAX; n * n];
            let mut scratch = vec![0u32; dim];
            for a in 0..n {
                for b in a..n {
                    if degrees[a] + degrees[b] > max_order {
                        continue;
                    }
                    for v in 0..dim {
                        scratch[v] = exponents[a][v] + exponents[b][v];
                    }
                    let idx = index[&scratch];
                    prod_table[a * n + b] = idx;
                    prod_table[b * n + a] = idx;
                }
            }
            DenseBasis {
                dim,
                exponents,
                index,
                prod_table,
            }
        }

        pub fn len(&self) -> usize {
            self.exponents.len()
        }

        pub fn zero<T: Coeff>(&self) -> DensePoly<T> {
            vec![T::zero(); self.len()]
        }

        pub fn one<T: Coeff>(&self) -> DensePoly<T> {
            let mut p = self.zero();
            p[0] = T::one();
            p
        }

        pub fn index_of(&self, exps: &[u32]) -> Option<usize> {
            self.index.get(exps).copied()
        }

        pub fn get<T: Coeff>(&self, p: &DensePoly<T>, exps: &[u32]) -> T {
            match self.index_of(exps) {
                Some(i) => p[i],
                None => T::zero(),
            }
        }

        /// Copies one output row of a polynomial map into dense form,
        /// dropping monomials above the truncation order.
        pub fn map_row<T: Coeff>(&self, map: &PolyMap<T>, row: usize) -> DensePoly<T> {
            let mut p = self.zero();
            for (i, exps) in map.basis().exponents().iter().enumerate() {
                if let Some(idx) = self.index_of(exps) {
                    p[idx] = map.coeffs()[(row, i)];
                }
            }
            p
        }

        /// Truncated product.
        pub fn mul<T: Coeff>(&self, a: &DensePoly<T>, b: &DensePoly<T>) -> DensePoly<T> {
            let n = self.len();
            let mut out = self.zero();
            for ia in 0..n {
                let ca = a[ia];
                if ca == T::zero() {
                    continue;
                }
                let row = &self.prod_table[ia * n..(ia + 1) * n];
                for ib in 0..n {
                    let cb = b[ib];
                    if cb == T::zero() {
                        continue;
                    }
                    let idx = row[ib];
                    if idx != usize::MAX {
                        out[idx] += ca * cb;
                    }
                }
            }
            out
        }

        /// `acc += c * p`
        pub fn axpy<T: Coeff>(&self, acc: &mut DensePoly<T>, c: T, p: &DensePoly<T>) {
            for (a, &x) in acc.iter_mut().zip(p.iter()) {
                *a += c * x;
            }
        }

        /// Partial derivative with respect to variable `v`.
        pub fn diff<T: Coeff>(&self, p: &DensePoly<T>, v: usize) -> DensePoly<T> {
            let mut out = self.zero();
            let mut scratch = vec![0u32; self.dim];
            for (i, exps) in self.exponents.iter().enumerate() {
                let e = exps[v];
                if e == 0 || p[i] == T::zero() {
                    continue;
                }
                scratch.copy_from_slice(exps);
                scratch[v] = e - 1;
                let idx = self.index[&scratch];
                out[idx] += p[i] * T::from_real(e as f64);
            }
            out
        }
    }
}
