//! Classical baselines: least squares, LMMSE, orthogonal matching pursuit
//! over an angular dictionary, and LS on a known support.

use crate::error::{Error, Result};
use crate::linalg::{least_squares, matmul, matmul_hermitian_left, solve_hermitian, ComplexMatrix, C64};

/// Relative margin under which two OMP correlations count as tied.
const TIE_TOLERANCE: f64 = 1e-10;

/// `argmin ‖y − Xĥ‖₂` for a tall, full-column-rank `X`.
pub fn ls_estimate(y: &ComplexMatrix, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    if x.rows() < x.cols() {
        return Err(Error::shape(
            "ls_estimate",
            format!("X is {:?}; LS needs at least as many observations as unknowns", x.dims()),
        ));
    }
    least_squares(x, y)
}

/// Minimum-norm solution `X^H (X X^H)^{-1} y` of an underdetermined system
/// with full row rank.
pub fn min_norm_estimate(y: &ComplexMatrix, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    let gram = matmul(x, &x.hermitian())?;
    let z = solve_hermitian(&gram, y)?;
    matmul_hermitian_left(x, &z)
}

/// `ĥ = R X^H (X R X^H + σ²I)^{-1} y`.
pub fn lmmse_estimate(
    y: &ComplexMatrix,
    x: &ComplexMatrix,
    r_hh: &ComplexMatrix,
    sigma2: f64,
) -> Result<ComplexMatrix> {
    if !(sigma2 >= 0.0) {
        return Err(Error::config(format!("noise variance must be nonnegative, got {sigma2}")));
    }
    if !r_hh.is_square() || r_hh.rows() != x.cols() {
        return Err(Error::shape(
            "lmmse_estimate",
            format!("R_hh is {:?} for X of {:?}", r_hh.dims(), x.dims()),
        ));
    }
    let rxh = matmul(r_hh, &x.hermitian())?;
    let inner = matmul(x, &rxh)?.add_diagonal(sigma2)?;
    let z = solve_hermitian(&inner, y)?;
    matmul(&rxh, &z)
}

/// Linear LMMSE filter `R X^H (X R X^H + σ²I)^{-1}`, for applying one
/// estimator to many observations.
pub fn lmmse_filter(x: &ComplexMatrix, r_hh: &ComplexMatrix, sigma2: f64) -> Result<ComplexMatrix> {
    let rxh = matmul(r_hh, &x.hermitian())?;
    let inner = matmul(x, &rxh)?.add_diagonal(sigma2)?;
    // W = R X^H A^{-1}  ⇔  A W^H = X R  (A Hermitian)
    let wh = solve_hermitian(&inner, &rxh.hermitian())?;
    Ok(wh.hermitian())
}

/// `(1/N) Σ hᵢ hᵢ^H` over column vectors.
pub fn sample_covariance<'a>(samples: impl IntoIterator<Item = &'a ComplexMatrix>) -> Result<ComplexMatrix> {
    let mut acc: Option<ComplexMatrix> = None;
    let mut count = 0usize;
    for h in samples {
        if h.cols() != 1 {
            return Err(Error::shape("sample_covariance", "samples must be column vectors"));
        }
        let n = h.rows();
        let r = acc.get_or_insert_with(|| ComplexMatrix::zeros(n, n));
        if r.rows() != n {
            return Err(Error::shape("sample_covariance", "samples differ in length"));
        }
        let v = h.as_slice();
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] += v[i] * v[j].conj();
            }
        }
        count += 1;
    }
    let r = acc.ok_or_else(|| Error::config("covariance of an empty sample set"))?;
    Ok(r.scale_real(1.0 / count as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRecoveryResult {
    /// Column indices in the order they were selected.
    pub support: Vec<usize>,
    pub gains: Vec<C64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Residual norm after each iteration, starting with `‖ỹ‖`.
    pub residual_history: Vec<f64>,
}

impl SparseRecoveryResult {
    /// Dense length-`n` coefficient vector.
    pub fn to_dense(&self, n: usize) -> Result<ComplexMatrix> {
        let mut g = ComplexMatrix::zeros(n, 1);
        for (&i, &v) in self.support.iter().zip(&self.gains) {
            if i >= n {
                return Err(Error::shape("SparseRecoveryResult::to_dense", format!("index {i} ≥ {n}")));
            }
            g[(i, 0)] = v;
        }
        Ok(g)
    }
}

/// Orthogonal matching pursuit.
///
/// Each iteration adds the unselected column maximizing `|Φᵢ^H r|²`
/// (lowest index among ties), refits all gains by LS and updates the
/// residual. Stops at `k_max` columns or once `‖r‖ ≤ tol·‖ỹ‖`.
pub fn omp(y: &ComplexMatrix, phi: &ComplexMatrix, k_max: usize, residual_tol: f64) -> Result<SparseRecoveryResult> {
    if y.dims() != (phi.rows(), 1) {
        return Err(Error::shape("omp", format!("y is {:?}, Φ is {:?}", y.dims(), phi.dims())));
    }
    if k_max > phi.rows() {
        return Err(Error::config(format!("k_max {k_max} exceeds {} observations", phi.rows())));
    }
    let y_norm = y.frobenius_norm();
    let mut result = SparseRecoveryResult {
        support: Vec::new(),
        gains: Vec::new(),
        residual_norm: y_norm,
        iterations: 0,
        residual_history: vec![y_norm],
    };
    if y_norm == 0.0 {
        return Ok(result);
    }
    let n = phi.cols();
    let mut selected = vec![false; n];
    let mut residual = y.clone();
    while result.support.len() < k_max && result.residual_norm > residual_tol * y_norm {
        let corr = matmul_hermitian_left(phi, &residual)?;
        let scores: Vec<f64> = corr.as_slice().iter().map(|z| z.norm_sqr()).collect();
        let best = scores
            .iter()
            .zip(&selected)
            .filter(|(_, &s)| !s)
            .map(|(&c, _)| c)
            .fold(f64::NEG_INFINITY, f64::max);
        if !(best > 0.0) {
            break;
        }
        let pick = (0..n)
            .find(|&i| !selected[i] && scores[i] >= best * (1.0 - TIE_TOLERANCE))
            .expect("the maximum is attained");
        selected[pick] = true;
        result.support.push(pick);

        let sub = phi.select_columns(&result.support)?;
        let g = least_squares(&sub, y)?;
        residual = y.sub(&matmul(&sub, &g)?)?;
        result.gains = g.into_vec();
        result.residual_norm = residual.frobenius_norm();
        result.residual_history.push(result.residual_norm);
        result.iterations += 1;
    }
    Ok(result)
}

/// LS restricted to `support`, zero elsewhere.
pub fn oracle_ls(y: &ComplexMatrix, p: &ComplexMatrix, support: &[usize]) -> Result<ComplexMatrix> {
    let mut h = ComplexMatrix::zeros(p.cols(), 1);
    if support.is_empty() {
        return Ok(h);
    }
    if support.len() > p.rows() {
        return Err(Error::singular(
            "oracle_ls",
            format!("{} unknowns from {} observations", support.len(), p.rows()),
        ));
    }
    let g = least_squares(&p.select_columns(support)?, y)?;
    for (&i, &v) in support.iter().zip(g.as_slice()) {
        h[(i, 0)] = v;
    }
    Ok(h)
}

/// `A_R Δ̂ A_T^H` with `Δ̂[r, t] = ĝ` at flat index `r + G_r·t`.
pub fn reconstruct_channel_from_grid(
    result: &SparseRecoveryResult,
    a_r: &ComplexMatrix,
    a_t: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let (g_r, g_t) = (a_r.cols(), a_t.cols());
    let mut delta = ComplexMatrix::zeros(g_r, g_t);
    for (&i, &v) in result.support.iter().zip(&result.gains) {
        if i >= g_r * g_t {
            return Err(Error::shape(
                "reconstruct_channel_from_grid",
                format!("support index {i} outside a {g_r}x{g_t} grid"),
            ));
        }
        delta[(i % g_r, i / g_r)] += v;
    }
    matmul(&matmul(a_r, &delta)?, &a_t.hermitian())
}
