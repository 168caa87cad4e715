//! Normal forms of the modal reduced dynamics: the explicit cubic solution
//! for one conjugate pair, a recursive solver for any order and dimension
//! with near-resonance detection, transformation inverses, and the polar
//! representation used for backbone and forced-response curves.

use crate::error::{Error, Result};
use crate::poly::{
    compose, dense::DenseBasis, enumerate_monomials, fit_polynomial_with, FitOptions, PolyMap,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// How near-resonances are detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResonanceCriterion {
    /// Compare only imaginary parts: |<k, Im lambda> - Im lambda_j| against
    /// the tolerance. Damping is excluded so lightly damped pairs can
    /// resonate exactly.
    ImaginaryOnly,
    /// Compare the full complex detuning |<k, lambda> - lambda_j|.
    FullComplex,
}

#[derive(Debug, Clone, Copy)]
pub struct ResonanceOptions {
    /// Relative tolerance: resonant when the detuning is below
    /// `tol_res * |lambda_j|`.
    pub tol_res: f64,
    pub criterion: ResonanceCriterion,
}

impl Default for ResonanceOptions {
    fn default() -> Self {
        ResonanceOptions {
            tol_res: 0.05,
            criterion: ResonanceCriterion::ImaginaryOnly,
        }
    }
}

fn detuning(k: &[u32], lambda: &[Complex64], j: usize, criterion: ResonanceCriterion) -> f64 {
    match criterion {
        ResonanceCriterion::ImaginaryOnly => {
            let s: f64 = k
                .iter()
                .zip(lambda.iter())
                .map(|(&e, l)| e as f64 * l.im)
                .sum();
            (s - lambda[j].im).abs()
        }
        ResonanceCriterion::FullComplex => {
            let s: Complex64 = k
                .iter()
                .zip(lambda.iter())
                .map(|(&e, l)| l * e as f64)
                .sum();
            (s - lambda[j]).norm()
        }
    }
}

fn inner_product(k: &[u32], lambda: &[Complex64]) -> Complex64 {
    k.iter()
        .zip(lambda.iter())
        .map(|(&e, l)| l * e as f64)
        .sum()
}

/// Sparse normal form of the modal dynamics together with the near-identity
/// transformation that conjugates it to the fitted dynamics.
#[derive(Debug, Clone)]
pub struct NormalFormModel {
    lambda: Vec<Complex64>,
    /// N: sparse dynamics coefficients, linear block = diag(lambda).
    dynamics: PolyMap<Complex64>,
    /// T: transformation zeta = T z^(1:n), identity linear block.
    transform: PolyMap<Complex64>,
    /// Retained (row, multi-index) pairs of order >= 2.
    resonances: Vec<(usize, Vec<u32>)>,
    /// Monomials whose detuning fell between tol and 10*tol.
    gray_zone: Vec<(usize, Vec<u32>)>,
    order: u32,
    options: ResonanceOptions,
    /// Regression-fitted inverse map, if computed.
    inverse_map: Option<PolyMap<Complex64>>,
}

impl NormalFormModel {
    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.lambda
    }
    /// The sparse normal-form coefficient map N.
    pub fn dynamics(&self) -> &PolyMap<Complex64> {
        &self.dynamics
    }
    /// The near-identity transformation T.
    pub fn transform(&self) -> &PolyMap<Complex64> {
        &self.transform
    }
    pub fn resonances(&self) -> &[(usize, Vec<u32>)] {
        &self.resonances
    }
    pub fn gray_zone(&self) -> &[(usize, Vec<u32>)] {
        &self.gray_zone
    }
    pub fn order(&self) -> u32 {
        self.order
    }
    pub fn options(&self) -> ResonanceOptions {
        self.options
    }
    pub fn dim(&self) -> usize {
        self.lambda.len()
    }
    pub fn inverse_map(&self) -> Option<&PolyMap<Complex64>> {
        self.inverse_map.as_ref()
    }

    pub fn from_parts(
        lambda: Vec<Complex64>,
        dynamics: PolyMap<Complex64>,
        transform: PolyMap<Complex64>,
        resonances: Vec<(usize, Vec<u32>)>,
        options: ResonanceOptions,
        inverse_map: Option<PolyMap<Complex64>>,
    ) -> Self {
        let order = dynamics.basis().order_hi();
        NormalFormModel {
            lambda,
            dynamics,
            transform,
            resonances,
            gray_zone: Vec::new(),
            order,
            options,
            inverse_map,
        }
    }

    /// Fits the regression inverse z ~ H zeta^(1:n) on training modal
    /// coordinates; required before using [`InverseStrategy::Regression`].
    pub fn fit_regression_inverse(&mut self, training_zeta: &DMatrix<Complex64>) -> Result<f64> {
        if training_zeta.ncols() == 0 {
            return Err(Error::Config(
                "regression inverse needs training data".into(),
            ));
        }
        let z = newton_invert(&self.transform, training_zeta, 1e-12, 50)?;
        let basis = enumerate_monomials(self.dim(), 1, self.order)?;
        let feats = crate::poly::eval_monomials(&basis, training_zeta)?;
        let (coeffs, info) = fit_polynomial_with(&z, &feats, &FitOptions::default())?;
        self.inverse_map = Some(PolyMap::new(basis, coeffs)?);
        Ok(info.residual_rel)
    }
}

/// Explicit cubic normal form for one conjugate pair (d = 2, n = 3).
///
/// The transformation and the single retained coefficient are closed-form
/// expressions in the modal coefficients G_3..G_9 (graded-lex positions of
/// the order-2 and order-3 monomials in the top row of G).
pub fn cubic_normal_form_2d(
    g: &PolyMap<Complex64>,
    lambda: Complex64,
    opts: &ResonanceOptions,
) -> Result<NormalFormModel> {
    if g.input_dim() != 2 || g.output_dim() != 2 {
        return Err(Error::Shape(
            "cubic normal form needs a 2D modal map".into(),
        ));
    }
    if lambda.norm() == 0.0 {
        return Err(Error::Config("eigenvalue must be nonzero".into()));
    }
    // All non-resonant cubic detunings are multiples of |Im lambda|; if the
    // smallest is within the resonance tolerance the sparsity pattern assumed
    // here is wrong.
    if lambda.im.abs() <= opts.tol_res * lambda.norm() {
        return Err(Error::Resonance(format!(
            "eigenvalue {lambda} has near-resonant cubic denominators; \
             use the general recursive solver"
        )));
    }
    let lc = lambda.conj();

    let basis = enumerate_monomials(2, 1, 3)?;
    let coeff_at = |exps: &[u32]| -> Complex64 {
        g.basis()
            .index_of(exps)
            .map_or(Complex64::new(0.0, 0.0), |i| g.coeffs()[(0, i)])
    };
    // graded-lex positions 3..9 (1-based) of the top row
    let g3 = coeff_at(&[2, 0]);
    let g4 = coeff_at(&[1, 1]);
    let g5 = coeff_at(&[0, 2]);
    let g6 = coeff_at(&[3, 0]);
    let g7 = coeff_at(&[2, 1]);
    let g8 = coeff_at(&[1, 2]);
    let g9 = coeff_at(&[0, 3]);

    let t3 = g3 / lambda;
    let t4 = g4 / lc;
    let t5 = g5 / (2.0 * lc - lambda);
    let t6 = (2.0 * g3 * t3 + g4 * t5.conj() + g6) / (2.0 * lambda);
    let t8 = (2.0 * g3 * t5 + g4 * t3.conj() + g4 * t4 + 2.0 * g5 * t4.conj() + g8) / (2.0 * lc);
    let t9 = (g4 * t5 + 2.0 * g5 * t3.conj() + g9) / (3.0 * lc - lambda);
    let gamma = 2.0 * g3 * t4 + g4 * t4.conj() + g4 * t3 + 2.0 * g5 * t5.conj() + g7;

    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let t_row0 = [one, zero, t3, t4, t5, t6, zero, t8, t9];
    let mut t_coeffs = DMatrix::from_element(2, 9, zero);
    let mut n_coeffs = DMatrix::from_element(2, 9, zero);
    for (i, exps) in basis.exponents().iter().enumerate() {
        t_coeffs[(0, i)] = t_row0[i];
        // conjugate row: coefficient at (a, b) mirrors row 0 at (b, a)
        let mirrored = [exps[1], exps[0]];
        let j = basis.index_of(&mirrored).expect("mirror exists");
        t_coeffs[(1, i)] = t_row0[j].conj();
    }
    n_coeffs[(0, 0)] = lambda;
    n_coeffs[(1, 1)] = lc;
    let i_res = basis.index_of(&[2, 1]).unwrap();
    let i_res_c = basis.index_of(&[1, 2]).unwrap();
    n_coeffs[(0, i_res)] = gamma;
    n_coeffs[(1, i_res_c)] = gamma.conj();

    Ok(NormalFormModel {
        lambda: vec![lambda, lc],
        dynamics: PolyMap::new(basis.clone(), n_coeffs)?,
        transform: PolyMap::new(basis, t_coeffs)?,
        resonances: vec![(0, vec![2, 1]), (1, vec![1, 2])],
        gray_zone: Vec::new(),
        order: 3,
        options: *opts,
        inverse_map: None,
    })
}

/// Coefficients of the conjugacy defect `grad(T z) N z - G((T z)^(1:r))`
/// truncated at `trunc`. Zero through the solved order for a valid model.
pub fn conjugacy_residual(
    g: &PolyMap<Complex64>,
    transform: &PolyMap<Complex64>,
    dynamics: &PolyMap<Complex64>,
    trunc: u32,
) -> Result<PolyMap<Complex64>> {
    let d = transform.input_dim();
    let dense = DenseBasis::new(d, trunc);
    let t_rows: Vec<_> = (0..d).map(|r| dense.map_row(transform, r)).collect();
    let n_rows: Vec<_> = (0..d).map(|r| dense.map_row(dynamics, r)).collect();

    // grad(t) * n, row by row
    let mut lhs_rows = Vec::with_capacity(d);
    for t_row in &t_rows {
        let mut acc = dense.zero::<Complex64>();
        for (v, n_row) in n_rows.iter().enumerate() {
            let dt = dense.diff(t_row, v);
            let prod = dense.mul(&dt, n_row);
            dense.axpy(&mut acc, Complex64::new(1.0, 0.0), &prod);
        }
        lhs_rows.push(acc);
    }

    let rhs = compose(g, transform, trunc)?;
    let basis = enumerate_monomials(d, 1, trunc)?;
    let mut coeffs = DMatrix::from_element(d, basis.len(), Complex64::new(0.0, 0.0));
    for (i, exps) in basis.exponents().iter().enumerate() {
        let rhs_idx = rhs.basis().index_of(exps).expect("same enumeration");
        for row in 0..d {
            coeffs[(row, i)] = dense.get(&lhs_rows[row], exps) - rhs.coeffs()[(row, rhs_idx)];
        }
    }
    PolyMap::new(basis, coeffs)
}

/// Recursive normal form of the modal dynamics `G` to order `n`.
///
/// Solves the conjugacy equation order by order: each monomial is either
/// near-resonant (kept in N, transformation coefficient zero) or solved for
/// the transformation coefficient by dividing by the complex detuning. The
/// conjugacy residual through order n is verified before returning.
pub fn general_normal_form(
    g: &PolyMap<Complex64>,
    lambda: &[Complex64],
    n: u32,
    opts: &ResonanceOptions,
) -> Result<NormalFormModel> {
    let d = g.output_dim();
    if g.input_dim() != d {
        return Err(Error::Shape("modal dynamics must map d -> d".into()));
    }
    if lambda.len() != d {
        return Err(Error::Shape(format!(
            "{} eigenvalues for a {d}-dimensional map",
            lambda.len()
        )));
    }
    if n < 1 {
        return Err(Error::Config("normal-form order must be >= 1".into()));
    }
    // order-1 nondegeneracy
    for (i, li) in lambda.iter().enumerate() {
        for (j, lj) in lambda.iter().enumerate() {
            if i != j && (li - lj).norm() <= 1e-12 * li.norm().max(1.0) {
                return Err(Error::Config(format!(
                    "eigenvalues {i} and {j} coincide; the linear part is degenerate"
                )));
            }
        }
    }
    let g_scale = g.coeffs().iter().map(|c| c.norm()).fold(1.0, f64::max);
    let glin = g.linear_block();
    for r in 0..d {
        for c in 0..d {
            let want = if r == c {
                lambda[r]
            } else {
                Complex64::new(0.0, 0.0)
            };
            if (glin[(r, c)] - want).norm() > 1e-8 * g_scale {
                return Err(Error::Config(
                    "modal dynamics must have a diagonal linear block equal to the eigenvalues"
                        .into(),
                ));
            }
        }
    }

    let basis = enumerate_monomials(d, 1, n)?;
    let zero = Complex64::new(0.0, 0.0);
    let mut t_coeffs = DMatrix::from_element(d, basis.len(), zero);
    let mut n_coeffs = DMatrix::from_element(d, basis.len(), zero);
    for (i, exps) in basis.exponents().iter().enumerate() {
        if exps.iter().sum::<u32>() == 1 {
            let var = exps.iter().position(|&e| e == 1).unwrap();
            t_coeffs[(var, i)] = Complex64::new(1.0, 0.0);
            n_coeffs[(var, i)] = lambda[var];
        }
    }
    let mut transform = PolyMap::new(basis.clone(), t_coeffs)?;
    let mut dynamics = PolyMap::new(basis.clone(), n_coeffs)?;
    let mut resonances = Vec::new();
    let mut gray_zone = Vec::new();

    for q in 2..=n {
        let defect = conjugacy_residual(g, &transform, &dynamics, q)?;
        for (i, exps) in defect.basis().exponents().iter().enumerate() {
            if exps.iter().sum::<u32>() != q {
                continue;
            }
            let target = basis.index_of(exps).expect("same enumeration");
            for row in 0..d {
                let b = -defect.coeffs()[(row, i)];
                let delta = detuning(exps, lambda, row, opts.criterion);
                let lj = lambda[row].norm();
                if delta <= opts.tol_res * lj {
                    dynamics.coeffs_mut()[(row, target)] = b;
                    resonances.push((row, exps.clone()));
                } else {
                    if delta <= 10.0 * opts.tol_res * lj {
                        log::warn!(
                            "monomial {} in row {} is nearly resonant \
                             (detuning {delta:.3e} vs tolerance {:.3e}); \
                             the transformation coefficient is ill-conditioned",
                            basis.monomial_string(target, "z"),
                            row + 1,
                            opts.tol_res * lj
                        );
                        gray_zone.push((row, exps.clone()));
                    }
                    let denom = inner_product(exps, lambda) - lambda[row];
                    transform.coeffs_mut()[(row, target)] = b / denom;
                }
            }
        }
    }

    // verify conjugacy through order n
    let defect = conjugacy_residual(g, &transform, &dynamics, n)?;
    let max_defect = defect.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max_defect > 1e-10 * g_scale {
        return Err(Error::Numerical(format!(
            "normal-form conjugacy residual {max_defect:.3e} exceeds 1e-10 relative; \
             the recursion is internally inconsistent"
        )));
    }

    Ok(NormalFormModel {
        lambda: lambda.to_vec(),
        dynamics,
        transform,
        resonances,
        gray_zone,
        order: n,
        options: *opts,
        inverse_map: None,
    })
}

/// Strategy for inverting the near-identity transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseStrategy {
    /// Per-point Newton iteration on t(z) = zeta; the accurate default.
    Newton,
    /// Explicit order-3 series reversion.
    Series,
    /// The regression-fitted polynomial inverse (requires
    /// [`NormalFormModel::fit_regression_inverse`]).
    Regression,
}

fn newton_invert(
    transform: &PolyMap<Complex64>,
    zeta: &DMatrix<Complex64>,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<Complex64>> {
    let d = transform.input_dim();
    let mut out = DMatrix::from_element(d, zeta.ncols(), Complex64::new(0.0, 0.0));
    for col in 0..zeta.ncols() {
        let target: DVector<Complex64> = zeta.column(col).into_owned();
        let mut z = target.clone();
        let mut converged = false;
        for _ in 0..max_iter {
            let f = transform.eval_vec(&z)? - &target;
            if f.norm() <= tol {
                converged = true;
                break;
            }
            let jac = transform.jacobian_at(&z)?;
            let step = jac.lu().solve(&f).ok_or_else(|| {
                Error::Numerical(format!("singular transformation Jacobian at point {col}"))
            })?;
            z -= step;
        }
        if !converged {
            let f = transform.eval_vec(&z)? - &target;
            if f.norm() > tol {
                return Err(Error::Numerical(format!(
                    "Newton inversion did not converge for point {col} \
                     (residual {:.3e})",
                    f.norm()
                )));
            }
        }
        out.set_column(col, &z);
    }
    Ok(out)
}

/// Maps normal-form targets zeta to z with t(z) = zeta using the requested
/// strategy. Newton guarantees residuals below 1e-10 per point.
pub fn inverse_transform(
    model: &NormalFormModel,
    zeta: &DMatrix<Complex64>,
    strategy: InverseStrategy,
) -> Result<DMatrix<Complex64>> {
    match strategy {
        InverseStrategy::Newton => newton_invert(&model.transform, zeta, 1e-10, 50),
        InverseStrategy::Series => {
            let order = model.order.min(3);
            let inv = model.transform.inverse_series(order)?;
            inv.eval(zeta)
        }
        InverseStrategy::Regression => {
            let map = model.inverse_map.as_ref().ok_or_else(|| {
                Error::Config("regression inverse requested but no training data was fitted".into())
            })?;
            map.eval(zeta)
        }
    }
}

/// One term of the polar dynamics: contributes
/// `Re(coeff * exp(i phase . theta)) * prod rho^exp` to `rho_l'` and the
/// imaginary part to `rho_l theta_l'`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarTerm {
    pub coeff: Complex64,
    pub rho_exp: Vec<u32>,
    /// Integer combination of the pair phases; all zeros for
    /// amplitude-only terms.
    pub phase: Vec<i32>,
}

/// Polar dynamics of one conjugate pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarPair {
    pub lambda: Complex64,
    pub terms: Vec<PolarTerm>,
}

/// Normal form rewritten in polar coordinates z_l = rho_l exp(i theta_l).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarForm {
    pub pairs: Vec<PolarPair>,
}

/// Converts the sparse normal form to polar coordinates. Requires all
/// eigenvalues to come in adjacent conjugate pairs.
pub fn to_polar(model: &NormalFormModel) -> Result<PolarForm> {
    let d = model.dim();
    if d % 2 != 0 {
        return Err(Error::Config(
            "polar form needs eigenvalues in conjugate pairs (even dimension)".into(),
        ));
    }
    let n_pairs = d / 2;
    for l in 0..n_pairs {
        let a = model.lambda[2 * l];
        let b = model.lambda[2 * l + 1];
        if (a - b.conj()).norm() > 1e-8 * a.norm().max(1.0) {
            return Err(Error::Config(format!(
                "eigenvalues {} and {} are not a conjugate pair",
                2 * l,
                2 * l + 1
            )));
        }
    }

    let basis = model.dynamics.basis();
    let mut pairs = Vec::with_capacity(n_pairs);
    for l in 0..n_pairs {
        let row = 2 * l;
        let mut terms = Vec::new();
        for (i, exps) in basis.exponents().iter().enumerate() {
            let coeff = model.dynamics.coeffs()[(row, i)];
            if coeff == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut rho_exp = vec![0u32; n_pairs];
            let mut phase = vec![0i32; n_pairs];
            for m in 0..n_pairs {
                let a = exps[2 * m];
                let b = exps[2 * m + 1];
                rho_exp[m] = a + b;
                phase[m] = a as i32 - b as i32;
            }
            phase[l] -= 1; // divide by exp(i theta_l)
            let is_resonant_term = phase.iter().any(|&p| p != 0);
            if is_resonant_term {
                let declared = model.resonances.iter().any(|(r, k)| *r == row && k == exps);
                if exps.iter().sum::<u32>() >= 2 && !declared {
                    return Err(Error::Numerical(format!(
                        "normal-form monomial {} in row {} is phase-dependent but \
                         not in the declared resonance set",
                        basis.monomial_string(i, "z"),
                        row + 1
                    )));
                }
            }
            terms.push(PolarTerm {
                coeff,
                rho_exp,
                phase,
            });
        }
        pairs.push(PolarPair {
            lambda: model.lambda[row],
            terms,
        });
    }
    Ok(PolarForm { pairs })
}

impl PolarForm {
    /// Builds the polar form of a single pair directly from amplitude
    /// polynomial coefficients: `rho' = sum c_k rho^(2k+1)`,
    /// `rho theta' = sum w_k rho^(2k+1)` with `coeffs[k] = c_k + i w_k`
    /// (k = 0 is the eigenvalue).
    pub fn from_pair_coefficients(coeffs: &[Complex64]) -> PolarForm {
        let terms = coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| PolarTerm {
                coeff: c,
                rho_exp: vec![2 * k as u32 + 1],
                phase: vec![0],
            })
            .collect();
        PolarForm {
            pairs: vec![PolarPair {
                lambda: coeffs[0],
                terms,
            }],
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// True when any term depends on a phase combination.
    pub fn is_resonant(&self) -> bool {
        self.pairs
            .iter()
            .any(|p| p.terms.iter().any(|t| t.phase.iter().any(|&x| x != 0)))
    }

    fn single_pair(&self) -> Result<&PolarPair> {
        if self.pairs.len() != 1 || self.is_resonant() {
            return Err(Error::Config(
                "amplitude-frequency curves are defined for a single \
                 non-resonant pair"
                    .into(),
            ));
        }
        Ok(&self.pairs[0])
    }

    /// Instantaneous damping c(rho) = rho'/rho of a single non-resonant pair.
    pub fn damping(&self, rho: f64) -> Result<f64> {
        let pair = self.single_pair()?;
        Ok(pair
            .terms
            .iter()
            .map(|t| t.coeff.re * rho.powi(t.rho_exp[0] as i32 - 1))
            .sum())
    }

    /// Instantaneous frequency omega(rho) of a single non-resonant pair.
    pub fn frequency(&self, rho: f64) -> Result<f64> {
        let pair = self.single_pair()?;
        Ok(pair
            .terms
            .iter()
            .map(|t| t.coeff.im * rho.powi(t.rho_exp[0] as i32 - 1))
            .sum())
    }

    /// d/drho of the damping polynomial.
    pub fn damping_prime(&self, rho: f64) -> Result<f64> {
        let pair = self.single_pair()?;
        Ok(pair
            .terms
            .iter()
            .map(|t| {
                let e = t.rho_exp[0] as i32 - 1;
                if e == 0 {
                    0.0
                } else {
                    t.coeff.re * e as f64 * rho.powi(e - 1)
                }
            })
            .sum())
    }

    /// d/drho of the frequency polynomial.
    pub fn frequency_prime(&self, rho: f64) -> Result<f64> {
        let pair = self.single_pair()?;
        Ok(pair
            .terms
            .iter()
            .map(|t| {
                let e = t.rho_exp[0] as i32 - 1;
                if e == 0 {
                    0.0
                } else {
                    t.coeff.im * e as f64 * rho.powi(e - 1)
                }
            })
            .sum())
    }

    /// Right-hand side of the polar ODE: returns (rho_l', theta_l') for all
    /// pairs at the given amplitudes and phases.
    pub fn polar_rhs(&self, rho: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.pairs.len();
        let mut rho_dot = vec![0.0; n];
        let mut theta_dot = vec![0.0; n];
        for (l, pair) in self.pairs.iter().enumerate() {
            for term in &pair.terms {
                let mut amp = 1.0;
                for (m, &e) in term.rho_exp.iter().enumerate() {
                    amp *= rho[m].powi(e as i32);
                }
                let ph: f64 = term
                    .phase
                    .iter()
                    .zip(theta.iter())
                    .map(|(&c, &th)| c as f64 * th)
                    .sum();
                let rot = Complex64::new(0.0, ph).exp();
                let v = term.coeff * rot * amp;
                rho_dot[l] += v.re;
                // v.im accumulates rho_l * theta_l'
                theta_dot[l] += v.im;
            }
            if rho[l].abs() > 0.0 {
                theta_dot[l] /= rho[l];
            } else {
                theta_dot[l] = pair.lambda.im;
            }
        }
        (rho_dot, theta_dot)
    }

    /// Distinct resonance phase combinations, rendered like
    /// `2 theta1 - theta2`. Empty for non-resonant models.
    pub fn resonance_relations(&self) -> Vec<String> {
        let mut keys: Vec<Vec<i32>> = Vec::new();
        for pair in &self.pairs {
            for term in &pair.terms {
                if term.phase.iter().all(|&p| p == 0) {
                    continue;
                }
                let (key, _) = canonical_phase(&term.phase);
                if !keys.contains(&key) {
                    keys.push(key);
                }
            }
        }
        keys.iter().map(|k| phase_string(k)).collect()
    }

    /// Formats the polar equations in the style
    /// `rho1' = -0.062 rho1 - 0.019 rho1^3 + (...) ...` with resonance phases
    /// named psi, psi2, ...
    pub fn format_equations(&self, sig_digits: usize) -> Vec<String> {
        let mut psi_defs: Vec<Vec<i32>> = Vec::new();
        let canon = canonical_phase;
        let mut lines = Vec::new();
        let single = self.pairs.len() == 1;
        for (l, pair) in self.pairs.iter().enumerate() {
            let idx = if single {
                String::new()
            } else {
                format!("{}", l + 1)
            };
            let rho_name = format!("rho{idx}");
            let mut rho_line = format!("{rho_name}' = ");
            let mut th_line = format!("{rho_name} theta{idx}' = ");
            let mut rho_parts: Vec<String> = Vec::new();
            let mut th_parts: Vec<String> = Vec::new();
            for term in &pair.terms {
                let amp = amp_string(&term.rho_exp, single);
                if term.phase.iter().all(|&p| p == 0) {
                    if term.coeff.re != 0.0 {
                        rho_parts.push(format!("{} {amp}", format_sig(term.coeff.re, sig_digits)));
                    }
                    if term.coeff.im != 0.0 {
                        th_parts.push(format!("{} {amp}", format_sig(term.coeff.im, sig_digits)));
                    }
                } else {
                    let (key, sign) = canon(&term.phase);
                    let psi_idx = match psi_defs.iter().position(|k| k == &key) {
                        Some(i) => i,
                        None => {
                            psi_defs.push(key.clone());
                            psi_defs.len() - 1
                        }
                    };
                    let psi = if psi_idx == 0 {
                        "psi".to_string()
                    } else {
                        format!("psi{}", psi_idx + 1)
                    };
                    // Re(c e^{i s psi}) = Re c cos psi - s Im c sin psi
                    let (a_r, b_r) = (term.coeff.re, -sign * term.coeff.im);
                    let (a_i, b_i) = (term.coeff.im, sign * term.coeff.re);
                    let trig = |a: f64, b: f64| {
                        join_terms(&[
                            format!("{} cos {psi}", format_sig(a, sig_digits)),
                            format!("{} sin {psi}", format_sig(b, sig_digits)),
                        ])
                    };
                    rho_parts.push(format!("({}) {amp}", trig(a_r, b_r)));
                    th_parts.push(format!("({}) {amp}", trig(a_i, b_i)));
                }
            }
            rho_line.push_str(&join_terms(&rho_parts));
            th_line.push_str(&join_terms(&th_parts));
            lines.push(rho_line);
            lines.push(th_line);
        }
        for (i, def) in psi_defs.iter().enumerate() {
            let name = if i == 0 {
                "psi".to_string()
            } else {
                format!("psi{}", i + 1)
            };
            lines.push(format!("{name} = {}", phase_string(def)));
        }
        lines
    }
}

/// Sign-normalized phase vector (first nonzero coefficient positive) and the
/// sign that was applied.
fn canonical_phase(phase: &[i32]) -> (Vec<i32>, f64) {
    let first = phase.iter().find(|&&p| p != 0).copied().unwrap_or(0);
    if first < 0 {
        (phase.iter().map(|p| -p).collect(), -1.0)
    } else {
        (phase.to_vec(), 1.0)
    }
}

fn phase_string(def: &[i32]) -> String {
    let mut parts = Vec::new();
    for (m, &c) in def.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let theta = format!("theta{}", m + 1);
        let part = match c {
            1 => theta,
            -1 => format!("-{theta}"),
            _ => format!("{c} {theta}"),
        };
        parts.push(part);
    }
    join_terms(&parts)
}

fn amp_string(rho_exp: &[u32], single: bool) -> String {
    let mut parts = Vec::new();
    for (m, &e) in rho_exp.iter().enumerate() {
        if e == 0 {
            continue;
        }
        let name = if single {
            "rho".to_string()
        } else {
            format!("rho{}", m + 1)
        };
        match e {
            1 => parts.push(name),
            _ => parts.push(format!("{name}^{e}")),
        }
    }
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join(" ")
    }
}

fn join_terms(parts: &[String]) -> String {
    if parts.is_empty() {
        return "0".into();
    }
    let mut out = String::new();
    for (i, p) in parts.iter().enumerate() {
        if i == 0 {
            out.push_str(p);
        } else if let Some(rest) = p.strip_prefix('-') {
            out.push_str(" - ");
            out.push_str(rest);
        } else {
            out.push_str(" + ");
            out.push_str(p);
        }
    }
    out
}

/// Fixed-point decimal with `digits` significant digits; falls back to
/// scientific notation outside a readable range.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (digits as i32 - 1 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.*e}", digits.saturating_sub(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate_sampled, OdeOptions};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Random modal map with the conjugate row structure of a real system.
    fn random_conjugate_g(
        d: usize,
        r: u32,
        lambda: &[Complex64],
        scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> PolyMap<Complex64> {
        let basis = enumerate_monomials(d, 1, r).unwrap();
        let mut coeffs = DMatrix::from_element(d, basis.len(), c(0.0, 0.0));
        for (i, exps) in basis.exponents().iter().enumerate() {
            let deg: u32 = exps.iter().sum();
            if deg == 1 {
                let var = exps.iter().position(|&e| e == 1).unwrap();
                coeffs[(var, i)] = lambda[var];
                continue;
            }
            for pair in 0..d / 2 {
                let val = c(
                    scale * (rng.random::<f64>() - 0.5),
                    scale * (rng.random::<f64>() - 0.5),
                );
                coeffs[(2 * pair, i)] = val;
                // conjugate row: swap each pair's exponents
                let mut mirrored = exps.clone();
                for m in 0..d / 2 {
                    mirrored.swap(2 * m, 2 * m + 1);
                }
                let j = basis.index_of(&mirrored).unwrap();
                coeffs[(2 * pair + 1, j)] = val.conj();
            }
        }
        PolyMap::new(basis, coeffs).unwrap()
    }

    #[test]
    fn cubic_degenerate_case() {
        let lambda = c(-0.1, 2.0);
        let basis = enumerate_monomials(2, 1, 3).unwrap();
        let mut coeffs = DMatrix::from_element(2, basis.len(), c(0.0, 0.0));
        coeffs[(0, 0)] = lambda;
        coeffs[(1, 1)] = lambda.conj();
        let g7 = c(0.3, -0.7);
        coeffs[(0, basis.index_of(&[2, 1]).unwrap())] = g7;
        coeffs[(1, basis.index_of(&[1, 2]).unwrap())] = g7.conj();
        let g = PolyMap::new(basis.clone(), coeffs).unwrap();
        let model = cubic_normal_form_2d(&g, lambda, &ResonanceOptions::default()).unwrap();
        // with G3=G4=G5=0: T has no quadratic part and gamma = G7
        assert!(
            (model.dynamics().coeffs()[(0, basis.index_of(&[2, 1]).unwrap())] - g7).norm() < 1e-15
        );
        for exps in [[2u32, 0], [1, 1], [0, 2]] {
            let i = basis.index_of(&exps).unwrap();
            assert_eq!(model.transform().coeffs()[(0, i)], c(0.0, 0.0));
        }
    }

    #[test]
    fn cubic_direct_substitution_cases() {
        let lambda = c(0.0, 2.0);
        let basis = enumerate_monomials(2, 1, 3).unwrap();
        let mut coeffs = DMatrix::from_element(2, basis.len(), c(0.0, 0.0));
        coeffs[(0, 0)] = lambda;
        coeffs[(1, 1)] = lambda.conj();
        coeffs[(0, basis.index_of(&[2, 0]).unwrap())] = c(1.0, 0.0);
        coeffs[(0, basis.index_of(&[0, 2]).unwrap())] = c(1.0, 0.0);
        let g = PolyMap::new(basis.clone(), coeffs).unwrap();
        let model = cubic_normal_form_2d(&g, lambda, &ResonanceOptions::default()).unwrap();
        let t3 = model.transform().coeffs()[(0, basis.index_of(&[2, 0]).unwrap())];
        assert!((t3 - c(0.0, -0.5)).norm() < 1e-15, "T3 = {t3}");
        let t5 = model.transform().coeffs()[(0, basis.index_of(&[0, 2]).unwrap())];
        assert!((t5 - c(0.0, 1.0 / 6.0)).norm() < 1e-15, "T5 = {t5}");
    }

    #[test]
    fn cubic_matches_general_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..20 {
            let lambda = c(
                -0.05 - 0.4 * rng.random::<f64>(),
                0.8 + 2.0 * rng.random::<f64>(),
            );
            let lam = [lambda, lambda.conj()];
            let g = random_conjugate_g(2, 3, &lam, 1.0, &mut rng);
            let opts = ResonanceOptions::default();
            let cubic = cubic_normal_form_2d(&g, lambda, &opts).unwrap();
            let general = general_normal_form(&g, &lam, 3, &opts).unwrap();
            let dt = (cubic.transform().coeffs() - general.transform().coeffs())
                .iter()
                .map(|x| x.norm())
                .fold(0.0, f64::max);
            let dn = (cubic.dynamics().coeffs() - general.dynamics().coeffs())
                .iter()
                .map(|x| x.norm())
                .fold(0.0, f64::max);
            assert!(
                dt < 1e-12 && dn < 1e-12,
                "trial {trial}: dT={dt:.2e} dN={dn:.2e}"
            );
        }
    }

    #[test]
    fn cubic_rejects_small_frequency() {
        let lambda = c(-1.0, 0.01);
        let basis = enumerate_monomials(2, 1, 3).unwrap();
        let mut coeffs = DMatrix::from_element(2, basis.len(), c(0.0, 0.0));
        coeffs[(0, 0)] = lambda;
        coeffs[(1, 1)] = lambda.conj();
        let g = PolyMap::new(basis, coeffs).unwrap();
        assert!(matches!(
            cubic_normal_form_2d(&g, lambda, &ResonanceOptions::default()),
            Err(Error::Resonance(_))
        ));
    }

    #[test]
    fn linear_input_gives_identity_transform() {
        let lam = [c(-0.1, 1.0), c(-0.1, -1.0)];
        let basis = enumerate_monomials(2, 1, 3).unwrap();
        let mut coeffs = DMatrix::from_element(2, basis.len(), c(0.0, 0.0));
        coeffs[(0, 0)] = lam[0];
        coeffs[(1, 1)] = lam[1];
        let g = PolyMap::new(basis, coeffs).unwrap();
        let model = general_normal_form(&g, &lam, 3, &ResonanceOptions::default()).unwrap();
        assert_eq!(model.resonances().len(), 2); // z^2 zbar and conjugate kept structurally
        let id = PolyMap::<Complex64>::identity(2);
        assert!((model.transform().linear_block() - id.coeffs()).norm() < 1e-15);
        // nonlinear parts all zero
        assert!(model.transform().order_block(2).norm() == 0.0);
        assert!(model.transform().order_block(3).norm() == 0.0);
        assert!(model.dynamics().order_block(2).norm() == 0.0);
        assert!(model.dynamics().order_block(3).norm() == 0.0);
    }

    #[test]
    fn sparsity_matches_reference_pattern_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lambda = c(-0.08, 1.7);
        let lam = [lambda, lambda.conj()];
        let g = random_conjugate_g(2, 3, &lam, 0.8, &mut rng);
        let model = general_normal_form(&g, &lam, 3, &ResonanceOptions::default()).unwrap();
        let basis = model.dynamics().basis().clone();
        for (i, exps) in basis.exponents().iter().enumerate() {
            for row in 0..2 {
                let v = model.dynamics().coeffs()[(row, i)];
                let keep = (row == 0 && (exps == &vec![1, 0] || exps == &vec![2, 1]))
                    || (row == 1 && (exps == &vec![0, 1] || exps == &vec![1, 2]));
                if keep {
                    continue;
                }
                assert_eq!(v, c(0.0, 0.0), "row {row} monomial {exps:?}");
            }
        }
        // conjugate symmetry of the retained coefficient
        let g1 = model.dynamics().coeffs()[(0, basis.index_of(&[2, 1]).unwrap())];
        let g2 = model.dynamics().coeffs()[(1, basis.index_of(&[1, 2]).unwrap())];
        assert!((g1 - g2.conj()).norm() < 1e-12);
    }

    #[test]
    fn conjugacy_residual_vanishes_across_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(d, n) in &[(2usize, 3u32), (2, 5), (4, 3), (4, 5)] {
            let lam: Vec<Complex64> = if d == 2 {
                let l = c(-0.05, 1.3);
                vec![l, l.conj()]
            } else {
                let l1 = c(-0.05, 1.0);
                let l2 = c(-0.21, std::f64::consts::E);
                vec![l1, l1.conj(), l2, l2.conj()]
            };
            let g = random_conjugate_g(d, n, &lam, 0.5, &mut rng);
            let model = general_normal_form(&g, &lam, n, &ResonanceOptions::default()).unwrap();
            let defect = conjugacy_residual(&g, model.transform(), model.dynamics(), n).unwrap();
            let max = defect.coeffs().iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(max < 1e-10, "d={d} n={n}: residual {max:.3e}");
        }
    }

    #[test]
    fn detects_one_to_two_resonance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let l1 = c(-0.44, 768.9);
        let l2 = c(-3.1, 1529.0);
        let lam = vec![l1, l1.conj(), l2, l2.conj()];
        let g = random_conjugate_g(4, 3, &lam, 1.0, &mut rng);
        let model = general_normal_form(&g, &lam, 3, &ResonanceOptions::default()).unwrap();

        let mut expected: Vec<(usize, Vec<u32>)> = vec![
            // order 2 mixed-mode terms
            (0, vec![0, 1, 1, 0]), // z1bar z2
            (1, vec![1, 0, 0, 1]), // conjugate row
            (2, vec![2, 0, 0, 0]), // z1^2
            (3, vec![0, 2, 0, 0]),
            // order 3 self terms
            (0, vec![2, 1, 0, 0]),
            (0, vec![1, 0, 1, 1]),
            (1, vec![1, 2, 0, 0]),
            (1, vec![0, 1, 1, 1]),
            (2, vec![1, 1, 1, 0]),
            (2, vec![0, 0, 2, 1]),
            (3, vec![1, 1, 0, 1]),
            (3, vec![0, 0, 1, 2]),
        ];
        let mut got = model.resonances().to_vec();
        expected.sort();
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn gray_zone_monomials_are_flagged_but_solved() {
        // omega ratio 2.3: the mixed monomial z1bar z2 detunes by 0.3,
        // between tol (0.05) and 10 tol relative to |lambda1| ~ 1
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let l1 = c(-0.05, 1.0);
        let l2 = c(-0.2, 2.3);
        let lam = vec![l1, l1.conj(), l2, l2.conj()];
        let g = random_conjugate_g(4, 2, &lam, 0.5, &mut rng);
        let model = general_normal_form(&g, &lam, 2, &ResonanceOptions::default()).unwrap();
        assert!(
            model
                .gray_zone()
                .iter()
                .any(|(row, k)| *row == 0 && k == &vec![0, 1, 1, 0]),
            "gray zone: {:?}",
            model.gray_zone()
        );
        // still solved, not retained
        let basis = model.dynamics().basis();
        let i = basis.index_of(&[0, 1, 1, 0]).unwrap();
        assert_eq!(model.dynamics().coeffs()[(0, i)], c(0.0, 0.0));
        assert!(model.transform().coeffs()[(0, i)].norm() > 0.0);
    }

    #[test]
    fn resonant_polar_formatting_names_the_phase() {
        // 1:2 resonant pair shaped like the reference four-equation form
        let l1 = c(-0.44, 768.9);
        let l2 = c(-3.1, 1529.0);
        let lam = vec![l1, l1.conj(), l2, l2.conj()];
        let basis = enumerate_monomials(4, 1, 3).unwrap();
        let mut n_coeffs = DMatrix::from_element(4, basis.len(), c(0.0, 0.0));
        for (i, l) in lam.iter().enumerate() {
            let mut e = vec![0u32; 4];
            e[i] = 1;
            n_coeffs[(i, basis.index_of(&e).unwrap())] = *l;
        }
        let mixed1 = c(0.2683, -0.2639);
        let mixed2 = c(1.340, 0.1161);
        n_coeffs[(0, basis.index_of(&[0, 1, 1, 0]).unwrap())] = mixed1;
        n_coeffs[(1, basis.index_of(&[1, 0, 0, 1]).unwrap())] = mixed1.conj();
        n_coeffs[(2, basis.index_of(&[2, 0, 0, 0]).unwrap())] = mixed2;
        n_coeffs[(3, basis.index_of(&[0, 2, 0, 0]).unwrap())] = mixed2.conj();
        let model = NormalFormModel::from_parts(
            lam,
            PolyMap::new(basis, n_coeffs).unwrap(),
            PolyMap::<Complex64>::identity(4),
            vec![
                (0, vec![0, 1, 1, 0]),
                (1, vec![1, 0, 0, 1]),
                (2, vec![2, 0, 0, 0]),
                (3, vec![0, 2, 0, 0]),
            ],
            ResonanceOptions::default(),
            None,
        );
        let polar = to_polar(&model).unwrap();
        assert!(polar.is_resonant());
        assert_eq!(polar.resonance_relations(), vec!["2 theta1 - theta2"]);
        let lines = polar.format_equations(4);
        let text = lines.join("\n");
        assert!(text.contains("psi = 2 theta1 - theta2"), "{text}");
        // rho1' carries (Re cos + Im sin) of the mixed term with psi = -(phase)
        assert!(
            text.contains("(0.2683 cos psi - 0.2639 sin psi) rho1 rho2"),
            "{text}"
        );
        // rho2' carries the +psi phase
        assert!(
            text.contains("(1.340 cos psi - 0.1161 sin psi) rho1^2"),
            "{text}"
        );
    }

    #[test]
    fn newton_and_series_and_regression_inverses() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lambda = c(-0.1, 1.9);
        let lam = [lambda, lambda.conj()];
        let g = random_conjugate_g(2, 3, &lam, 0.5, &mut rng);
        let mut model = general_normal_form(&g, &lam, 3, &ResonanceOptions::default()).unwrap();

        // identity transform: all strategies return the input
        let lin_basis = enumerate_monomials(2, 1, 1).unwrap();
        let id_model = NormalFormModel::from_parts(
            lam.to_vec(),
            PolyMap::new(
                lin_basis.clone(),
                DMatrix::from_diagonal(&DVector::from_column_slice(&lam)),
            )
            .unwrap(),
            PolyMap::<Complex64>::identity(2),
            vec![],
            ResonanceOptions::default(),
            None,
        );
        let pts = DMatrix::from_fn(2, 7, |r, j| {
            let v = c(
                0.05 * (j as f64 + 1.0) * (rng.random::<f64>() - 0.5),
                0.05 * (rng.random::<f64>() - 0.5),
            );
            if r == 0 {
                v
            } else {
                v.conj()
            }
        });
        for strat in [InverseStrategy::Newton, InverseStrategy::Series] {
            let z = inverse_transform(&id_model, &pts, strat).unwrap();
            assert!((&z - &pts).norm() < 1e-14);
        }

        // forward-map known z, recover them
        let z_true = DMatrix::from_fn(2, 100, |r, j| {
            let radius = 0.02 + 0.08 * (j as f64 / 99.0);
            let angle = 6.2 * rng.random::<f64>();
            let v = Complex64::from_polar(radius, angle);
            if r == 0 {
                v
            } else {
                v.conj()
            }
        });
        let zeta = model.transform().eval(&z_true).unwrap();

        let z_newton = inverse_transform(&model, &zeta, InverseStrategy::Newton).unwrap();
        let back = model.transform().eval(&z_newton).unwrap();
        assert!((&back - &zeta).norm() < 1e-10 * zeta.ncols() as f64);
        assert!((&z_newton - &z_true).norm() < 1e-9);

        // regression inverse requires training data first
        assert!(matches!(
            inverse_transform(&model, &zeta, InverseStrategy::Regression),
            Err(Error::Config(_))
        ));
        model.fit_regression_inverse(&zeta).unwrap();
        let z_reg = inverse_transform(&model, &zeta, InverseStrategy::Regression).unwrap();
        let back = model.transform().eval(&z_reg).unwrap();
        let worst = (0..zeta.ncols())
            .map(|j| (back.column(j) - zeta.column(j)).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-5, "regression inverse residual {worst:.2e}");
    }

    #[test]
    fn scalar_series_reversion() {
        // t(z) = z + a z^3 -> inverse zeta - a zeta^3 with residual O(zeta^5)
        let a = c(0.3, -0.2);
        let basis = enumerate_monomials(2, 1, 3).unwrap();
        let mut coeffs = DMatrix::from_element(2, basis.len(), c(0.0, 0.0));
        coeffs[(0, 0)] = c(1.0, 0.0);
        coeffs[(1, 1)] = c(1.0, 0.0);
        coeffs[(0, basis.index_of(&[3, 0]).unwrap())] = a;
        coeffs[(1, basis.index_of(&[0, 3]).unwrap())] = a.conj();
        let transform = PolyMap::new(basis.clone(), coeffs).unwrap();
        let lam = [c(-0.1, 1.0), c(-0.1, -1.0)];
        let model = NormalFormModel::from_parts(
            lam.to_vec(),
            PolyMap::zero(2, basis.clone()),
            transform.clone(),
            vec![],
            ResonanceOptions::default(),
            None,
        );
        let inv = model.transform().inverse_series(3).unwrap();
        let i3 = basis.index_of(&[3, 0]).unwrap();
        assert!((inv.coeffs()[(0, i3)] + a).norm() < 1e-14);
        // residual scales as zeta^5
        for &r in &[0.1_f64, 0.05] {
            let pts = DMatrix::from_element(2, 1, c(r, 0.0));
            let z = inv.eval(&pts).unwrap();
            let resid = (transform.eval(&z).unwrap() - &pts).norm();
            // leading defect of the order-3 reversion is 3 a^2 zeta^5 per row
            assert!(
                resid < 5.0 * a.norm() * a.norm() * r.powi(5),
                "r={r}: {resid:.2e}"
            );
        }
    }

    #[test]
    fn polar_form_of_reference_coefficients() {
        let lambda = c(-0.062, 7.81);
        let gamma = c(-0.019, -0.628);
        let polar = PolarForm::from_pair_coefficients(&[lambda, gamma]);
        assert!((polar.damping(1.0).unwrap() - (-0.062 - 0.019)).abs() < 1e-15);
        assert!((polar.frequency(1.0).unwrap() - (7.81 - 0.628)).abs() < 1e-15);
        assert!((polar.damping(0.0).unwrap() - lambda.re).abs() < 1e-15);
        assert!((polar.frequency(0.0).unwrap() - lambda.im).abs() < 1e-15);
    }

    #[test]
    fn polar_from_model_and_quintic_term() {
        // purely linear
        let lam = [c(-0.1, 1.4), c(-0.1, -1.4)];
        let basis = enumerate_monomials(2, 1, 5).unwrap();
        let mut n_coeffs = DMatrix::from_element(2, basis.len(), c(0.0, 0.0));
        n_coeffs[(0, 0)] = lam[0];
        n_coeffs[(1, 1)] = lam[1];
        // quintic self-resonant z^3 zbar^2
        let delta = c(0.4, -0.9);
        n_coeffs[(0, basis.index_of(&[3, 2]).unwrap())] = delta;
        n_coeffs[(1, basis.index_of(&[2, 3]).unwrap())] = delta.conj();
        let model = NormalFormModel::from_parts(
            lam.to_vec(),
            PolyMap::new(basis.clone(), n_coeffs).unwrap(),
            PolyMap::<Complex64>::identity(2),
            vec![(0, vec![3, 2]), (1, vec![2, 3])],
            ResonanceOptions::default(),
            None,
        );
        let polar = to_polar(&model).unwrap();
        assert!(!polar.is_resonant());
        let rho = 0.7_f64;
        let c_exp = lam[0].re + delta.re * rho.powi(4);
        let w_exp = lam[0].im + delta.im * rho.powi(4);
        assert!((polar.damping(rho).unwrap() - c_exp).abs() < 1e-14);
        assert!((polar.frequency(rho).unwrap() - w_exp).abs() < 1e-14);
    }

    #[test]
    fn polar_and_complex_integration_agree() {
        let lambda = c(-0.03, 1.1);
        let gamma = c(-0.08, -0.25);
        let basis = enumerate_monomials(2, 1, 3).unwrap();
        let mut n_coeffs = DMatrix::from_element(2, basis.len(), c(0.0, 0.0));
        n_coeffs[(0, 0)] = lambda;
        n_coeffs[(1, 1)] = lambda.conj();
        n_coeffs[(0, basis.index_of(&[2, 1]).unwrap())] = gamma;
        n_coeffs[(1, basis.index_of(&[1, 2]).unwrap())] = gamma.conj();
        let nf = PolyMap::new(basis.clone(), n_coeffs).unwrap();
        let model = NormalFormModel::from_parts(
            vec![lambda, lambda.conj()],
            nf.clone(),
            PolyMap::<Complex64>::identity(2),
            vec![(0, vec![2, 1]), (1, vec![1, 2])],
            ResonanceOptions::default(),
            None,
        );
        let polar = to_polar(&model).unwrap();

        let rho0 = 0.8;
        let theta0 = 0.3;
        let horizon = 10.0 * 2.0 * std::f64::consts::PI / lambda.im;
        let n_steps = 400;
        let dt = horizon / (n_steps - 1) as f64;
        let opts = OdeOptions {
            rel_tol: 1e-11,
            ..Default::default()
        };

        // complex route
        let z0 = DVector::from_column_slice(&[
            Complex64::from_polar(rho0, theta0),
            Complex64::from_polar(rho0, -theta0),
        ]);
        let field = {
            let nf = nf.clone();
            move |_t: f64, z: &DVector<Complex64>| nf.eval_vec(z).unwrap()
        };
        let sol_c = integrate_sampled(field, &z0, 0.0, dt, n_steps, &opts).unwrap();

        // polar route
        let y0 = DVector::from_column_slice(&[rho0, theta0]);
        let polar_field = {
            let polar = polar.clone();
            move |_t: f64, y: &DVector<f64>| {
                let (rd, td) = polar.polar_rhs(&[y[0]], &[y[1]]);
                DVector::from_column_slice(&[rd[0], td[0]])
            }
        };
        let sol_p = integrate_sampled(polar_field, &y0, 0.0, dt, n_steps, &opts).unwrap();

        for (zc, zp) in sol_c.iter().zip(sol_p.iter()) {
            let z = zc[0];
            let (rho, theta) = (zp[0], zp[1]);
            assert!((z.norm() - rho).abs() < 1e-6);
            let target = Complex64::from_polar(rho, theta);
            assert!((z - target).norm() < 1e-6);
        }
    }

    #[test]
    fn realness_preserved_from_conjugate_initial_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lambda = c(-0.05, 1.0);
        let lam = [lambda, lambda.conj()];
        let g = random_conjugate_g(2, 3, &lam, 0.6, &mut rng);
        let model = general_normal_form(&g, &lam, 3, &ResonanceOptions::default()).unwrap();
        let nf = model.dynamics().clone();
        let z0 = DVector::from_column_slice(&[c(0.4, 0.2), c(0.4, -0.2)]);
        let field = move |_t: f64, z: &DVector<Complex64>| nf.eval_vec(z).unwrap();
        let sol = integrate_sampled(field, &z0, 0.0, 0.05, 200, &OdeOptions::default()).unwrap();
        for z in &sol {
            // reconstructed real observable: z1 + z2 should be real
            let obs = z[0] + z[1];
            assert!(obs.im.abs() < 1e-9 * obs.norm().max(1e-12));
        }
    }

    #[test]
    fn format_matches_reference_style() {
        let polar = PolarForm::from_pair_coefficients(&[c(-0.062, 7.81), c(-0.019, -0.628)]);
        let lines = polar.format_equations(4);
        assert_eq!(lines[0], "rho' = -0.06200 rho - 0.01900 rho^3");
        assert_eq!(lines[1], "rho theta' = 7.810 rho - 0.6280 rho^3");
    }
}
