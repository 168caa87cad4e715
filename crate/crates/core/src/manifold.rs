//! Manifold fitting: tangent space by truncated SVD, reduced coordinates by
//! projection, parametrization by polynomial regression.

use crate::error::{Error, Result};
use crate::poly::{enumerate_monomials, eval_monomials, fit_polynomial_with, FitOptions, PolyMap};
use nalgebra::DMatrix;

/// Diagnostics from the tangent-space fit.
#[derive(Debug, Clone)]
pub struct TangentDiagnostics {
    /// All singular values of the snapshot matrix, descending.
    pub singular_values: Vec<f64>,
    /// Fraction of squared singular values captured by the leading d.
    pub energy_captured: f64,
    /// Per-column divisors applied on top of U_d S_d^-1 (the max absolute
    /// value of the corresponding right-singular-vector column), so each
    /// reduced coordinate has unit maximum on the training data.
    pub scale_factors: Vec<f64>,
}

/// Tangent-space approximation of the slow manifold from snapshot data.
///
/// Returns the projection matrix V (one column per reduced coordinate) with
/// the deterministic sign convention that the largest-magnitude entry of each
/// left singular vector is positive.
pub fn fit_tangent_space(
    data: &DMatrix<f64>,
    d: usize,
) -> Result<(DMatrix<f64>, TangentDiagnostics)> {
    if d == 0 {
        return Err(Error::Config("manifold dimension d must be >= 1".into()));
    }
    if d > data.nrows().min(data.ncols()) {
        return Err(Error::Config(format!(
            "d = {d} exceeds the snapshot matrix rank bound {}",
            data.nrows().min(data.ncols())
        )));
    }
    if data.iter().all(|&x| x == 0.0) {
        return Err(Error::Data("snapshot matrix is identically zero".into()));
    }
    let svd = data
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD of snapshot matrix did not converge".into()))?;
    let u = svd.u.as_ref().expect("u computed");
    let v_t = svd.v_t.as_ref().expect("v_t computed");
    let sv = &svd.singular_values;

    for i in 0..d {
        if sv[i] <= 1e-14 * sv[0] {
            return Err(Error::Rank(format!(
                "singular value {} of the leading {d} is numerically zero ({:.3e}); \
                 the data does not support a {d}-dimensional tangent space",
                i + 1,
                sv[i]
            )));
        }
    }

    let total: f64 = sv.iter().map(|s| s * s).sum();
    let captured: f64 = sv.iter().take(d).map(|s| s * s).sum();

    let mut tangent = DMatrix::zeros(data.nrows(), d);
    let mut scales = Vec::with_capacity(d);
    for i in 0..d {
        let ui = u.column(i);
        // sign convention: largest-magnitude entry positive
        let (_, max_val) = ui
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .expect("nonempty column");
        let sign = if *max_val < 0.0 { -1.0 } else { 1.0 };
        let c = v_t.row(i).iter().map(|x| x.abs()).fold(0.0, f64::max);
        scales.push(c);
        let factor = sign / (sv[i] * c);
        for r in 0..data.nrows() {
            tangent[(r, i)] = u[(r, i)] * factor;
        }
    }

    Ok((
        tangent,
        TangentDiagnostics {
            singular_values: sv.iter().cloned().collect(),
            energy_captured: captured / total,
            scale_factors: scales,
        },
    ))
}

/// Reduced coordinates by plain projection onto the tangent matrix: V^T Y.
pub fn reduce(data: &DMatrix<f64>, tangent: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if data.nrows() != tangent.nrows() {
        return Err(Error::Shape(format!(
            "snapshot rows {} != tangent rows {}",
            data.nrows(),
            tangent.nrows()
        )));
    }
    Ok(tangent.transpose() * data)
}

/// Manifold parametrization by joint polynomial regression over orders 1..m,
/// including the linear block. Returns the map and the relative training
/// reconstruction error.
pub fn fit_parametrization(
    data: &DMatrix<f64>,
    reduced: &DMatrix<f64>,
    m: u32,
) -> Result<(PolyMap<f64>, f64)> {
    if reduced.ncols() != data.ncols() {
        return Err(Error::Shape(format!(
            "reduced coordinates have {} columns, data has {}",
            reduced.ncols(),
            data.ncols()
        )));
    }
    let basis = enumerate_monomials(reduced.nrows(), 1, m)?;
    if data.ncols() < basis.len() {
        return Err(Error::Data(format!(
            "{} samples cannot determine {} monomial coefficients; lower the manifold order m",
            data.ncols(),
            basis.len()
        )));
    }
    let features = eval_monomials(&basis, reduced)?;
    let (coeffs, info) = fit_polynomial_with(data, &features, &FitOptions::default())?;
    let map = PolyMap::new(basis, coeffs)?;
    Ok((map, info.residual_rel))
}

/// Largest principal angle (radians) between the column spaces of two
/// matrices with equal row counts.
pub fn principal_angle_max(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let prod = qa.transpose() * qb;
    let sv = prod.svd(false, false).singular_values;
    let smin = sv
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .clamp(-1.0, 1.0);
    smin.acos()
}

fn orthonormal_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("u computed");
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-12 * svd.singular_values[0])
        .count();
    u.columns(0, rank).into_owned()
}

/// Result of the fold-over heuristic: neighbors in reduced coordinates whose
/// observable-space distance is far above the typical neighbor distance.
#[derive(Debug, Clone, Copy)]
pub struct FoldingReport {
    pub checked: usize,
    pub violations: usize,
}

/// Nearest-neighbor consistency check that the fitted chart does not fold
/// over its tangent space. Subsamples deterministically; a violation is a
/// point whose reduced-space nearest neighbor sits more than 10x farther
/// away in observable space than the point's true observable-space nearest
/// neighbor.
pub fn folding_check(reduced: &DMatrix<f64>, data: &DMatrix<f64>) -> FoldingReport {
    let n = reduced.ncols();
    let max_points = 400;
    let stride = (n / max_points).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let m = idx.len();
    if m < 3 {
        return FoldingReport {
            checked: 0,
            violations: 0,
        };
    }
    let mut violations = 0;
    for (a, &i) in idx.iter().enumerate() {
        let mut best_xi = f64::INFINITY;
        let mut best_xi_j = i;
        let mut best_y = f64::INFINITY;
        for (b, &j) in idx.iter().enumerate() {
            if a == b {
                continue;
            }
            let dxi = (reduced.column(i) - reduced.column(j)).norm();
            if dxi < best_xi {
                best_xi = dxi;
                best_xi_j = j;
            }
            let dy = (data.column(i) - data.column(j)).norm();
            if dy < best_y {
                best_y = dy;
            }
        }
        if best_y <= 0.0 {
            continue;
        }
        let dy_via_xi = (data.column(i) - data.column(best_xi_j)).norm();
        if dy_via_xi > 10.0 * best_y {
            violations += 1;
        }
    }
    if violations > 0 {
        log::warn!(
            "manifold chart may fold over its tangent space: {violations} of {m} \
             reduced-space neighbors are observable-space outliers"
        );
    }
    FoldingReport {
        checked: m,
        violations,
    }
}

/// Fitted manifold model: tangent projection V, parametrization M, and fit
/// diagnostics.
#[derive(Debug, Clone)]
pub struct SsmModel {
    tangent: DMatrix<f64>,
    param: PolyMap<f64>,
    d: usize,
    m: u32,
    p: usize,
    diagnostics: TangentDiagnostics,
    recon_error: f64,
    /// Largest principal angle between the order-1 block of M and the
    /// leading left singular subspace.
    tangent_alignment: f64,
    folding: FoldingReport,
}

impl SsmModel {
    /// Fits tangent space, reduced coordinates, and parametrization in one go.
    pub fn fit(data: &DMatrix<f64>, d: usize, m: u32) -> Result<SsmModel> {
        let (tangent, diagnostics) = fit_tangent_space(data, d)?;
        let reduced = reduce(data, &tangent)?;
        let (param, recon_error) = fit_parametrization(data, &reduced, m)?;

        let m1 = param.linear_block();
        let mut u_d = DMatrix::zeros(data.nrows(), d);
        // recover U_d from the stored normalization for the alignment diagnostic
        for i in 0..d {
            let col =
                tangent.column(i) * (diagnostics.singular_values[i] * diagnostics.scale_factors[i]);
            u_d.set_column(i, &col);
        }
        let tangent_alignment = principal_angle_max(&m1, &u_d);
        if tangent_alignment > 0.2 {
            log::warn!(
                "linear block of the parametrization deviates from the SVD subspace \
                 by a principal angle of {tangent_alignment:.3} rad"
            );
        }
        let folding = folding_check(&reduced, data);

        Ok(SsmModel {
            tangent,
            param,
            d,
            m,
            p: data.nrows(),
            diagnostics,
            recon_error,
            tangent_alignment,
            folding,
        })
    }

    /// Assembles a model from stored parts (deserialization path).
    pub fn from_parts(
        tangent: DMatrix<f64>,
        param: PolyMap<f64>,
        diagnostics: TangentDiagnostics,
        recon_error: f64,
        tangent_alignment: f64,
    ) -> Result<SsmModel> {
        let d = tangent.ncols();
        let p = tangent.nrows();
        if param.input_dim() != d || param.output_dim() != p {
            return Err(Error::Shape(
                "parametrization dimensions do not match the tangent matrix".into(),
            ));
        }
        let m = param.basis().order_hi();
        Ok(SsmModel {
            tangent,
            param,
            d,
            m,
            p,
            diagnostics,
            recon_error,
            tangent_alignment,
            folding: FoldingReport {
                checked: 0,
                violations: 0,
            },
        })
    }

    pub fn tangent(&self) -> &DMatrix<f64> {
        &self.tangent
    }
    pub fn param(&self) -> &PolyMap<f64> {
        &self.param
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn order(&self) -> u32 {
        self.m
    }
    pub fn obs_dim(&self) -> usize {
        self.p
    }
    pub fn diagnostics(&self) -> &TangentDiagnostics {
        &self.diagnostics
    }
    pub fn recon_error(&self) -> f64 {
        self.recon_error
    }
    pub fn tangent_alignment(&self) -> f64 {
        self.tangent_alignment
    }
    pub fn folding(&self) -> FoldingReport {
        self.folding
    }

    /// Projects observable snapshots to reduced coordinates.
    pub fn reduce(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        reduce(data, &self.tangent)
    }

    /// Maps reduced coordinates back to the observable space.
    pub fn lift(&self, reduced: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.param.eval(reduced)
    }
}
