//! Dense eigen-solvers and the saddle-point matrix identities.
//!
//! At an index-1 saddle `σ` write `H = ∇²U(σ)` with eigenvalues
//! `-λ₁ < 0 < λ₂ ≤ … ≤ λ_d` and eigenvectors `e₁, …, e_d`, and `L = Dℓ(σ)`.
//! Because `HL` is skew-symmetric, `H + L` has exactly one eigenvalue with
//! negative real part. It is real, written `-μ`, and `μ ≥ λ₁`. The same `-μ`
//! is an eigenvalue of `H - Lᵀ = H(H + L)H⁻¹`, whose unit eigenvector `v`
//! (oriented so `v·e₁ > 0`) is the direction of the saddle test function.

pub mod random;

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, max_abs, skew_defect, symmetry_defect};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("numerically degenerate instance: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// Largest matrix size accepted by [`real_eigenvalues`].
pub const MAX_QR_DIM: usize = 64;
/// Above this size the matrix is balanced before the QR iteration.
pub const BALANCE_ABOVE: usize = 16;
/// Complex eigenvalues with `|Im| ≤ SNAP_REL·‖M‖` are treated as real.
pub const SNAP_REL: f64 = 1e-9;
/// `|v·e₁|` below this rejects the instance instead of picking a sign.
pub const ORIENTATION_TOL: f64 = 1e-12;

fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
fn canonical_sign(mut v: DVector<f64>) -> DVector<f64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Eigen-decomposition of a symmetric matrix.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns, each with its largest entry positive.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(SpectralError::Contract(format!("sym_eig needs a non-empty square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    if !linalg::all_finite(m.as_slice()) {
        return Err(SpectralError::Contract("matrix has non-finite entries".into()));
    }
    let defect = symmetry_defect(m);
    if defect > 1e-10 * max_abs(m).max(1.0) {
        return Err(SpectralError::Contract(format!("matrix is not symmetric (defect {defect:.3e})")));
    }
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &canonical_sign(eig.eigenvectors.column(i).into_owned()));
    }
    Ok((values, vectors))
}

/// All eigenvalues of a general real square matrix.
///
/// Hessenberg reduction followed by Francis double-shift QR, with
/// Parlett–Reinsch balancing when `d > 16`. Fails if the iteration has not
/// converged after `100·d` sweeps.
pub fn real_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if !m.is_square() || n == 0 || n > MAX_QR_DIM {
        return Err(SpectralError::Contract(format!(
            "real_eigenvalues needs a square matrix of size 1..={MAX_QR_DIM}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !linalg::all_finite(m.as_slice()) {
        return Err(SpectralError::Contract("matrix has non-finite entries".into()));
    }
    let mut a = m.clone();
    if n > BALANCE_ABOVE {
        nalgebra::linalg::balancing::balance_parlett_reinsch(&mut a);
    }
    let schur = Schur::try_new(a, f64::EPSILON, 100 * n)
        .ok_or_else(|| SpectralError::NumericFailure(format!("QR iteration did not converge after {} sweeps", 100 * n)))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Snaps near-real eigenvalues and counts those with negative real part.
fn snap(eigs: &mut [Complex64], scale: f64) {
    for z in eigs.iter_mut() {
        if z.im.abs() <= SNAP_REL * scale {
            z.im = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeEig {
    pub mu: f64,
    pub v: DVector<f64>,
}

/// Checks that `HL` is skew-symmetric relative to `max(1, ‖H‖‖L‖)`.
pub fn check_hl_skew(h: &DMatrix<f64>, l: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let defect = skew_defect(&(h * l));
    let scale = (max_abs(h) * max_abs(l)).max(1.0);
    if defect > tol * scale {
        return Err(SpectralError::Precondition(format!("HL is not skew-symmetric (defect {defect:.3e})")));
    }
    Ok(defect)
}

/// The unique negative eigenvalue `-μ` of `H + L` and the unit eigenvector
/// `v` of `H - Lᵀ` for `-μ`.
///
/// `e1` fixes the sign of `v` (`v·e₁ > 0`); pass the unstable Hessian
/// direction. When `L` is exactly zero the result is `μ = λ₁`, `v = e₁` with
/// no arithmetic, so reversible computations stay bit-identical.
pub fn unique_negative_eig(h: &DMatrix<f64>, l: &DMatrix<f64>, e1: &DVector<f64>) -> Result<NegativeEig> {
    let n = h.nrows();
    if l.shape() != h.shape() || e1.len() != n {
        return Err(SpectralError::Contract("H, L and e1 must have matching sizes".into()));
    }
    let (w, _) = sym_eig(h)?;
    let negatives = w.iter().filter(|x| **x < 0.0).count();
    if negatives != 1 || w.iter().any(|x| *x == 0.0) {
        return Err(SpectralError::Precondition(format!("H must be non-singular with exactly one negative eigenvalue, spectrum {:?}", w.as_slice())));
    }
    if l.iter().all(|x| *x == 0.0) {
        let norm = e1.norm();
        return Ok(NegativeEig { mu: -w[0], v: e1 / norm });
    }
    check_hl_skew(h, l, 1e-8)?;

    let m = h + l;
    let mut eigs = real_eigenvalues(&m)?;
    snap(&mut eigs, frobenius(&m));
    let neg: Vec<Complex64> = eigs.iter().copied().filter(|z| z.re < 0.0).collect();
    if neg.len() != 1 || neg[0].im != 0.0 {
        return Err(SpectralError::Precondition(format!(
            "H + L must have exactly one eigenvalue with negative real part, found {neg:?}"
        )));
    }
    let mut mu = -neg[0].re;

    // Eigenvector of H - Lᵀ: start from the smallest singular direction of
    // H - Lᵀ + μI and polish (v, μ) with Newton on the bordered system.
    let b = h - l.transpose();
    let shifted = &b + DMatrix::identity(n, n) * mu;
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| SpectralError::NumericFailure("SVD failed".into()))?;
    let k = svd.singular_values.imin();
    let mut v: DVector<f64> = vt.row(k).transpose();
    v /= v.norm();
    for _ in 0..4 {
        let mut jac = DMatrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n)).copy_from(&(&b + DMatrix::identity(n, n) * mu));
        jac.view_mut((0, n), (n, 1)).copy_from(&v);
        jac.view_mut((n, 0), (1, n)).copy_from(&(v.transpose() * 2.0));
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(&b * &v + &v * mu));
        rhs[n] = v.dot(&v) - 1.0;
        let Some(step) = jac.lu().solve(&rhs) else { break };
        v -= step.rows(0, n);
        mu -= step[n];
        if step.amax() < 1e-15 * (1.0 + mu.abs()) {
            break;
        }
    }
    v /= v.norm();

    let proj = v.dot(e1) / e1.norm();
    if proj.abs() < ORIENTATION_TOL {
        return Err(SpectralError::Degenerate(format!("v·e1 = {proj:.3e} is numerically zero")));
    }
    if proj < 0.0 {
        v.neg_mut();
    }
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(SpectralError::NumericFailure(format!("refined mu = {mu} is not positive")));
    }
    Ok(NegativeEig { mu, v })
}

/// Spectral data at an index-1 saddle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleSpectrum {
    /// `(-λ₁, λ₂, …, λ_d)` in ascending order.
    #[serde(with = "linalg::vector")]
    pub hessian_eigs: DVector<f64>,
    /// Columns `e₁, …, e_d`; `e₁` is oriented toward the home valley when known.
    #[serde(with = "linalg::rows")]
    pub hessian_vecs: DMatrix<f64>,
    pub mu: f64,
    #[serde(with = "linalg::vector")]
    pub v: DVector<f64>,
    pub det_hessian: f64,
    #[serde(with = "linalg::rows")]
    pub hessian: DMatrix<f64>,
    #[serde(with = "linalg::rows")]
    pub ell_jac: DMatrix<f64>,
}

impl SaddleSpectrum {
    /// Builds the spectrum from `H` and `L`.
    ///
    /// `toward` orients `e₁` so that `e₁·toward > 0`; without it the canonical
    /// sign of [`sym_eig`] is kept.
    pub fn new(h: &DMatrix<f64>, l: &DMatrix<f64>, toward: Option<&DVector<f64>>) -> Result<Self> {
        let (w, mut vecs) = sym_eig(h)?;
        if let Some(t) = toward {
            let p = vecs.column(0).dot(t);
            if p == 0.0 {
                return Err(SpectralError::Degenerate("orientation vector is orthogonal to e1".into()));
            }
            if p < 0.0 {
                vecs.column_mut(0).neg_mut();
            }
        }
        let e1 = vecs.column(0).into_owned();
        let NegativeEig { mu, v } = unique_negative_eig(h, l, &e1)?;
        // Product of symmetric eigenvalues keeps the sign diagnostic exact.
        let det_hessian = w.iter().product();
        Ok(Self { hessian_eigs: w, hessian_vecs: vecs, mu, v, det_hessian, hessian: h.clone(), ell_jac: l.clone() })
    }

    pub fn dim(&self) -> usize {
        self.hessian_eigs.len()
    }

    pub fn lambda1(&self) -> f64 {
        -self.hessian_eigs[0]
    }

    pub fn e1(&self) -> DVector<f64> {
        self.hessian_vecs.column(0).into_owned()
    }

    /// `λ_k` for `k ≥ 2`.
    pub fn stable_eigs(&self) -> &[f64] {
        &self.hessian_eigs.as_slice()[1..]
    }

    /// `v` in the eigenbasis: `(v·e₁, …, v·e_d)`.
    pub fn v_coords(&self) -> DVector<f64> {
        self.hessian_vecs.transpose() * &self.v
    }

    /// `H⁻¹x` through the eigen-decomposition.
    pub fn h_inv(&self, x: &DVector<f64>) -> DVector<f64> {
        let c = self.hessian_vecs.transpose() * x;
        let scaled = c.component_div(&self.hessian_eigs);
        &self.hessian_vecs * scaled
    }

    /// `√(-det H)`.
    pub fn sqrt_neg_det(&self) -> f64 {
        (-self.det_hessian).sqrt()
    }

    /// Checks every structural invariant of the saddle spectrum.
    pub fn validate(&self) -> Result<()> {
        let negatives = self.hessian_eigs.iter().filter(|x| **x < 0.0).count();
        if negatives != 1 {
            return Err(SpectralError::NumericFailure(format!("{negatives} negative Hessian eigenvalues")));
        }
        let b = &self.hessian - self.ell_jac.transpose();
        let res = (&b * &self.v + &self.v * self.mu).norm();
        if res > 1e-8 * self.mu.abs() {
            return Err(SpectralError::NumericFailure(format!("eigen-residual {res:.3e}")));
        }
        let v1 = self.v.dot(&self.e1());
        if !(v1 > 0.0) {
            return Err(SpectralError::NumericFailure(format!("v·e1 = {v1:.3e} is not positive")));
        }
        let q = self.v.dot(&self.h_inv(&self.v));
        let target = -1.0 / self.mu;
        if ((q - target) / target).abs() > 1e-8 {
            return Err(SpectralError::NumericFailure(format!("v·H⁻¹v = {q}, expected {target}")));
        }
        if self.mu < self.lambda1() - 1e-10 * self.lambda1().max(1.0) {
            return Err(SpectralError::NumericFailure(format!("mu = {} < lambda1 = {}", self.mu, self.lambda1())));
        }
        Ok(())
    }

    /// Both sides of `(v + LH⁻¹v)·e₁ = μv₁/λ₁`.
    pub fn flux_identity(&self) -> (f64, f64) {
        let e1 = self.e1();
        let lhs = (&self.v + &self.ell_jac * self.h_inv(&self.v)).dot(&e1);
        let rhs = self.mu * self.v.dot(&e1) / self.lambda1();
        (lhs, rhs)
    }

    /// Both sides of `det(H̃ + μṽṽᵀ) = μ(v₁²/λ₁)∏_{k≥2}λ_k`, where the tilde
    /// drops the `e₁` coordinate in the eigenbasis.
    pub fn reduced_dets(&self) -> (f64, f64) {
        let d = self.dim();
        let c = self.v_coords();
        let tail = c.rows(1, d - 1);
        let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(self.stable_eigs()));
        m += tail * tail.transpose() * self.mu;
        let lhs = m.determinant();
        let rhs = self.mu * c[0] * c[0] / self.lambda1() * self.stable_eigs().iter().product::<f64>();
        (lhs, rhs)
    }
}

/// Determinants of the two rank-one updates of `H` along `v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankOneDets {
    /// `det(H + 2μvvᵀ)`, equal to `-det H`.
    pub det_plus2: f64,
    /// `det(H + μvvᵀ)`, zero.
    pub det_plus1: f64,
    /// Unit vector along `H⁻¹v`, spanning the null space of `H + μvvᵀ`.
    #[serde(with = "linalg::vector")]
    pub null_vec: DVector<f64>,
}

pub fn rank_one_dets(h: &DMatrix<f64>, mu: f64, v: &DVector<f64>) -> Result<RankOneDets> {
    let vv = v * v.transpose();
    let det_h = h.clone().determinant();
    let det_plus2 = (h + &vv * (2.0 * mu)).determinant();
    let plus1 = h + &vv * mu;
    let det_plus1 = plus1.clone().determinant();
    let hv = h
        .clone()
        .lu()
        .solve(v)
        .ok_or_else(|| SpectralError::NumericFailure("H is singular".into()))?;
    let null_vec = &hv / hv.norm();
    if ((det_plus2 + det_h) / det_h).abs() > 1e-8 {
        return Err(SpectralError::NumericFailure(format!("det(H+2μvv) = {det_plus2}, expected {}", -det_h)));
    }
    let res = (&plus1 * &null_vec).norm();
    if res > 1e-8 * max_abs(h).max(mu).max(1.0) {
        return Err(SpectralError::NumericFailure(format!("|(H+μvv)H⁻¹v| = {res:.3e}")));
    }
    Ok(RankOneDets { det_plus2, det_plus1, null_vec })
}

/// Relative difference of the two sides of the reduced-determinant identity.
pub fn reduced_det_check(spec: &SaddleSpectrum) -> f64 {
    let (lhs, rhs) = spec.reduced_dets();
    ((lhs - rhs) / rhs).abs()
}
