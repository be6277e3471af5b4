//! Random matrix instances and checks for the saddle matrix lemmas.
//!
//! Saddle instances are built as `L = H⁻¹S` with `S` skew, so `HL = S` is
//! skew-symmetric up to rounding by construction.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{rank_one_dets, real_eigenvalues, reduced_det_check, snap, SaddleSpectrum};

/// Haar-ish random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q;
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn eigen_magnitudes<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(0.5..4.0)).collect()
}

fn from_spectrum(q: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let m = q * DMatrix::from_diagonal(&DVector::from_column_slice(w)) * q.transpose();
    // Exact symmetry, so downstream symmetry checks see no rounding skew.
    (&m + m.transpose()) * 0.5
}

/// Symmetric positive definite, eigenvalues in `[0.5, 4)`.
pub fn spd<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let q = orthogonal(d, rng);
    from_spectrum(&q, &eigen_magnitudes(d, rng))
}

/// Symmetric with exactly one negative eigenvalue, magnitudes in `[0.5, 4)`.
pub fn index_one<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let q = orthogonal(d, rng);
    let mut w = eigen_magnitudes(d, rng);
    w[0] = -w[0];
    from_spectrum(&q, &w)
}

/// Skew-symmetric with standard normal entries above the diagonal, times a
/// random amplitude in `[0, 2)`.
pub fn skew<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let amp: f64 = rng.random_range(0.0..2.0);
    let mut s = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let x: f64 = rng.sample(StandardNormal);
            s[(i, j)] = amp * x;
            s[(j, i)] = -amp * x;
        }
    }
    s
}

fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("generated matrices are non-singular")
}

/// `(H, L)` with `H` index-1 and `L = H⁻¹S`.
pub fn saddle_instance<R: Rng + ?Sized>(d: usize, rng: &mut R) -> (DMatrix<f64>, DMatrix<f64>) {
    let h = index_one(d, rng);
    let s = skew(d, rng);
    let l = inverse(&h) * s;
    (h, l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lemma {
    /// `A` SPD, `AB` skew: every eigenvalue of `A + B` has positive real part.
    PositiveSpectrum,
    /// `Aˢ` positive definite, `B` symmetric index-1: `AB` has one negative eigenvalue and `det AB < 0`.
    ProductInertia,
    /// `A` symmetric index-1, `AB` skew: `A + B` invertible with one negative eigenvalue.
    SumInertia,
    /// `H + L` has a unique negative eigenvalue `-μ` with a matching eigenvector of `H - Lᵀ`.
    UniqueNegative,
    /// `μ ≥ λ₁`.
    MuDominates,
    /// `v·H⁻¹v = -1/μ`.
    QuadraticForm,
    /// `det(H + 2μvvᵀ) = -det H` and `H + μvvᵀ` is singular along `H⁻¹v`.
    RankOne,
    /// `det(H̃ + μṽṽᵀ) = μ(v₁²/λ₁)∏λ_k`.
    ReducedDeterminant,
    /// `(v + LH⁻¹v)·e₁ = μv₁/λ₁`.
    FluxIdentity,
}

impl Lemma {
    pub const ALL: [Lemma; 9] = [
        Lemma::PositiveSpectrum,
        Lemma::ProductInertia,
        Lemma::SumInertia,
        Lemma::UniqueNegative,
        Lemma::MuDominates,
        Lemma::QuadraticForm,
        Lemma::RankOne,
        Lemma::ReducedDeterminant,
        Lemma::FluxIdentity,
    ];
}

impl fmt::Display for Lemma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Lemma::PositiveSpectrum => "positive-spectrum",
            Lemma::ProductInertia => "product-inertia",
            Lemma::SumInertia => "sum-inertia",
            Lemma::UniqueNegative => "unique-negative",
            Lemma::MuDominates => "mu-dominates",
            Lemma::QuadraticForm => "quadratic-form",
            Lemma::RankOne => "rank-one",
            Lemma::ReducedDeterminant => "reduced-determinant",
            Lemma::FluxIdentity => "flux-identity",
        };
        f.write_str(s)
    }
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Negative-real-part eigenvalues of `m` after snapping near-real values.
fn negative_part(m: &DMatrix<f64>) -> Result<Vec<num_complex::Complex64>, String> {
    let mut e = real_eigenvalues(m).map_err(|e| e.to_string())?;
    snap(&mut e, frob(m));
    let prod = e.iter().fold(num_complex::Complex64::new(1.0, 0.0), |acc, z| acc * z);
    let det = m.clone().determinant();
    if ((prod.re - det) / det).abs() > 1e-6 || prod.im.abs() > 1e-6 * det.abs() {
        return Err(format!("eigenvalue product {prod} does not match det {det}"));
    }
    Ok(e.into_iter().filter(|z| z.re < 0.0).collect())
}

fn one_real_negative(m: &DMatrix<f64>) -> Result<(), String> {
    let neg = negative_part(m)?;
    if neg.len() != 1 || neg[0].im != 0.0 {
        return Err(format!("expected one real negative eigenvalue, got {neg:?}"));
    }
    Ok(())
}

fn spectrum<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<SaddleSpectrum, String> {
    let (h, l) = saddle_instance(d, rng);
    SaddleSpectrum::new(&h, &l, None).map_err(|e| e.to_string())
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Draws one random instance of dimension `d` and checks `lemma` on it.
pub fn check<R: Rng + ?Sized>(lemma: Lemma, d: usize, rng: &mut R) -> Result<(), String> {
    match lemma {
        Lemma::PositiveSpectrum => {
            let a = spd(d, rng);
            let b = inverse(&a) * skew(d, rng);
            let neg = negative_part(&(&a + &b))?;
            if !neg.is_empty() {
                return Err(format!("A+B has eigenvalues with non-positive real part: {neg:?}"));
            }
            Ok(())
        }
        Lemma::ProductInertia => {
            let a = spd(d, rng) + skew(d, rng);
            let b = index_one(d, rng);
            let ab = &a * &b;
            one_real_negative(&ab)?;
            let det = ab.determinant();
            if !(det < 0.0) {
                return Err(format!("det(AB) = {det} is not negative"));
            }
            Ok(())
        }
        Lemma::SumInertia => {
            let (h, l) = saddle_instance(d, rng);
            let m = &h + &l;
            one_real_negative(&m)?;
            if m.determinant() == 0.0 {
                return Err("H+L is singular".into());
            }
            Ok(())
        }
        Lemma::UniqueNegative => spectrum(d, rng)?.validate().map_err(|e| e.to_string()),
        Lemma::MuDominates => {
            let s = spectrum(d, rng)?;
            if s.mu < s.lambda1() - 1e-10 * s.lambda1().max(1.0) {
                return Err(format!("mu = {} < lambda1 = {}", s.mu, s.lambda1()));
            }
            Ok(())
        }
        Lemma::QuadraticForm => {
            let s = spectrum(d, rng)?;
            let q = s.v.dot(&s.h_inv(&s.v));
            if rel(q, -1.0 / s.mu) > 1e-8 {
                return Err(format!("v·H⁻¹v = {q}, expected {}", -1.0 / s.mu));
            }
            Ok(())
        }
        Lemma::RankOne => {
            let s = spectrum(d, rng)?;
            rank_one_dets(&s.hessian, s.mu, &s.v).map(|_| ()).map_err(|e| e.to_string())
        }
        Lemma::ReducedDeterminant => {
            let s = spectrum(d, rng)?;
            let r = reduced_det_check(&s);
            if r > 1e-10 {
                return Err(format!("reduced determinant relative difference {r:.3e}"));
            }
            Ok(())
        }
        Lemma::FluxIdentity => {
            let s = spectrum(d, rng)?;
            let (lhs, rhs) = s.flux_identity();
            if rel(lhs, rhs) > 1e-8 {
                return Err(format!("(v + LH⁻¹v)·e1 = {lhs}, expected {rhs}"));
            }
            Ok(())
        }
    }
}
