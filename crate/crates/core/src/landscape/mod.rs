//! Potentials `U`, skew generators `J` and the derived non-reversible field
//! `ℓ(x) = J(U(x))∇U(x)`.
//!
//! Potentials must be `C³`. Polynomial inputs satisfy this automatically;
//! user implementations of [`Potential`] are trusted to do the same, and the
//! confining growth of `U` at infinity is assumed rather than checked.

pub mod catalog;
pub mod config;
mod polynomial;
mod skew;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{all_finite, skew_defect, Bounds};

pub use config::{LandscapeConfig, PotentialConfig, SkewConfig};
pub use polynomial::{Monomial, Polynomial};
pub use skew::SkewGenerator;

/// A smooth potential with analytic first and second derivatives.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        g
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandscapeError {
    #[error("non-finite potential or gradient at x = {x:?}")]
    NonFinite { x: Vec<f64> },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid landscape config: {0}")]
    Config(String),
    #[error("unknown builtin landscape `{0}` (known: {known})", known = catalog::NAMES.join(", "))]
    UnknownBuiltin(String),
}

/// An immutable landscape: potential plus skew generator.
///
/// Cloning is cheap (the potential is shared) and every evaluation is pure, so
/// a spec can be handed to any number of worker threads.
#[derive(Clone)]
pub struct LandscapeSpec {
    name: String,
    potential: Arc<dyn Potential>,
    skew: SkewGenerator,
}

impl fmt::Debug for LandscapeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LandscapeSpec")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("skew", &self.skew)
            .finish()
    }
}

/// Tolerances of the structural certificates.
pub const SKEW_TOL: f64 = 1e-12;
pub const GRADIENT_FD_TOL: f64 = 1e-6;
pub const HESSIAN_FD_TOL: f64 = 1e-5;
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct InvariantReport {
    pub probes: usize,
    pub max_skew_defect: f64,
    pub max_gradient_error: f64,
    pub max_hessian_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrthogonalityReport {
    pub probes: usize,
    /// `max |∇U·ℓ|` over the probes.
    pub max_dot: f64,
    /// `max |tr Dℓ|` over the probes.
    pub max_divergence: f64,
    /// Probe attaining the worst normalized violation.
    pub worst_probe: Vec<f64>,
    pub pass: bool,
}

fn fd_step(xk: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + xk.abs())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LandscapeSpec {
    pub fn new(
        name: impl Into<String>,
        potential: Arc<dyn Potential>,
        skew: SkewGenerator,
    ) -> Result<Self, LandscapeError> {
        let d = potential.dim();
        if d == 0 {
            return Err(LandscapeError::Config("dimension must be positive".into()));
        }
        if skew.dim() != d {
            return Err(LandscapeError::Dimension { expected: d, found: skew.dim() });
        }
        Ok(Self { name: name.into(), potential, skew })
    }

    /// A catalog potential with the given skew generator.
    pub fn builtin(name: &str, skew: SkewGenerator) -> Result<Self, LandscapeError> {
        let entry = catalog::get(name).ok_or_else(|| LandscapeError::UnknownBuiltin(name.into()))?;
        Self::new(name, Arc::new(entry.potential), skew)
    }

    /// Same potential, different generator.
    pub fn with_skew(&self, skew: SkewGenerator) -> Result<Self, LandscapeError> {
        Self::new(self.name.clone(), self.potential.clone(), skew)
    }

    /// Same potential with `J ≡ 0`.
    pub fn reversible(&self) -> Self {
        Self { name: self.name.clone(), potential: self.potential.clone(), skew: SkewGenerator::Zero { dim: self.dim() } }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn skew(&self) -> &SkewGenerator {
        &self.skew
    }

    pub fn potential(&self) -> &Arc<dyn Potential> {
        &self.potential
    }

    pub fn is_reversible(&self) -> bool {
        self.skew.is_zero()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.potential.value(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.potential.gradient(x)
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        self.potential.hessian(x)
    }

    fn check_point(&self, x: &[f64]) -> Result<(), LandscapeError> {
        if x.len() != self.dim() {
            return Err(LandscapeError::Dimension { expected: self.dim(), found: x.len() });
        }
        if !all_finite(x) {
            return Err(LandscapeError::NonFinite { x: x.to_vec() });
        }
        Ok(())
    }

    /// `ℓ(x) = J(U(x))∇U(x)`.
    pub fn ell(&self, x: &[f64]) -> Result<Vec<f64>, LandscapeError> {
        self.check_point(x)?;
        let u = self.value(x);
        let g = self.gradient(x);
        if !u.is_finite() || !all_finite(&g) {
            return Err(LandscapeError::NonFinite { x: x.to_vec() });
        }
        let mut out = vec![0.0; self.dim()];
        self.skew.apply_into(u, &g, &mut out);
        Ok(out)
    }

    /// `Dℓ(x) = J′(U)(∇U ⊗ ∇U) + J(U)∇²U`.
    pub fn ell_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, LandscapeError> {
        self.check_point(x)?;
        let d = self.dim();
        if self.skew.is_zero() {
            return Ok(DMatrix::zeros(d, d));
        }
        let u = self.value(x);
        let g = self.gradient(x);
        if !u.is_finite() || !all_finite(&g) {
            return Err(LandscapeError::NonFinite { x: x.to_vec() });
        }
        let h = self.hessian(x);
        let mut jac = self.skew.matrix(u) * h;
        if self.skew.depends_on_level() {
            let jp = self.skew.derivative(u);
            let jg: Vec<f64> = (0..d).map(|i| (0..d).map(|k| jp[(i, k)] * g[k]).sum()).collect();
            for i in 0..d {
                for j in 0..d {
                    jac[(i, j)] += jg[i] * g[j];
                }
            }
        }
        Ok(jac)
    }

    /// Writes the drift `−(∇U + sign·ℓ)` into `out` and returns `U(x)`.
    ///
    /// `sign = 1` is the forward process, `sign = -1` the adjoint. `scratch`
    /// must have length `d`. This is the hot path of the integrator, so no
    /// validation happens here.
    #[inline]
    pub fn drift_into(&self, x: &[f64], sign: f64, out: &mut [f64], scratch: &mut [f64]) {
        self.potential.gradient_into(x, out);
        if !self.skew.is_zero() {
            let u = if self.skew.depends_on_level() { self.potential.value(x) } else { 0.0 };
            self.skew.apply_into(u, out, scratch);
            for (o, l) in out.iter_mut().zip(scratch.iter()) {
                *o += sign * l;
            }
        }
        for o in out.iter_mut() {
            *o = -*o;
        }
    }

    /// Skew-symmetry of `J` and finite-difference agreement of `∇U`, `∇²U`.
    pub fn check_invariants(&self, probes: &[Vec<f64>]) -> InvariantReport {
        let d = self.dim();
        let mut skew_def = 0.0_f64;
        let mut grad_err = 0.0_f64;
        let mut hess_err = 0.0_f64;
        let mut xp = vec![0.0; d];
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        for x in probes {
            let u = self.value(x);
            skew_def = skew_def.max(skew_defect(&self.skew.matrix(u)));
            let g = self.gradient(x);
            let hess = self.hessian(x);
            let gscale = norm(&g).max(1.0);
            let hscale = crate::linalg::max_abs(&hess).max(1.0);
            for k in 0..d {
                let h = fd_step(x[k]);
                xp.copy_from_slice(x);
                xp[k] = x[k] + h;
                let up = self.value(&xp);
                self.potential.gradient_into(&xp, &mut gp);
                xp[k] = x[k] - h;
                let um = self.value(&xp);
                self.potential.gradient_into(&xp, &mut gm);
                let fd = (up - um) / (2.0 * h);
                grad_err = grad_err.max((fd - g[k]).abs() / gscale);
                for i in 0..d {
                    let fd = (gp[i] - gm[i]) / (2.0 * h);
                    hess_err = hess_err.max((fd - hess[(i, k)]).abs() / hscale);
                }
            }
        }
        InvariantReport {
            probes: probes.len(),
            max_skew_defect: skew_def,
            max_gradient_error: grad_err,
            max_hessian_error: hess_err,
            pass: skew_def <= SKEW_TOL && grad_err <= GRADIENT_FD_TOL && hess_err <= HESSIAN_FD_TOL,
        }
    }

    /// Checks `∇U·ℓ = 0` and `∇·ℓ = 0` at every probe.
    ///
    /// A probe passes when both quantities are at most `1e-10·(1 + |∇U|²)`.
    /// Probes where evaluation fails count as failures.
    pub fn certify_orthogonality(&self, probes: &[Vec<f64>]) -> OrthogonalityReport {
        let mut max_dot = 0.0_f64;
        let mut max_div = 0.0_f64;
        let mut worst = (f64::NEG_INFINITY, Vec::new());
        let mut pass = !probes.is_empty();
        for x in probes {
            let (ell, jac) = match (self.ell(x), self.ell_jacobian(x)) {
                (Ok(l), Ok(j)) => (l, j),
                _ => {
                    pass = false;
                    continue;
                }
            };
            let g = self.gradient(x);
            let scale = 1.0 + dot(&g, &g);
            let dp = dot(&g, &ell).abs();
            let div = jac.trace().abs();
            max_dot = max_dot.max(dp);
            max_div = max_div.max(div);
            let violation = dp.max(div) / scale;
            if violation > ORTHOGONALITY_TOL {
                pass = false;
            }
            if violation > worst.0 {
                worst = (violation, x.clone());
            }
        }
        OrthogonalityReport { probes: probes.len(), max_dot, max_divergence: max_div, worst_probe: worst.1, pass }
    }
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// `n` Halton points in `bounds` (deterministic, skipping the origin-mapped index 0).
///
/// # Panics
/// If the box has more than 16 dimensions.
pub fn halton_probes(bounds: &Bounds, n: usize) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    assert!(d <= PRIMES.len(), "halton_probes supports up to {} dimensions", PRIMES.len());
    (1..=n)
        .map(|i| {
            let u: Vec<f64> = PRIMES[..d].iter().map(|&p| radical_inverse(i, p)).collect();
            bounds.from_unit(&u)
        })
        .collect()
}

/// Default probe count for certificates.
pub const DEFAULT_PROBES: usize = 256;

#[cfg(test)]
mod tests {
    use super::*;

    fn dw(a: f64) -> LandscapeSpec {
        LandscapeSpec::builtin("doublewell2d", SkewGenerator::planar(a)).unwrap()
    }

    #[test]
    fn ell_by_hand() {
        let spec = dw(1.0);
        assert_eq!(spec.gradient(&[0.5, 0.0]), vec![-0.375, 0.0]);
        assert_eq!(spec.ell(&[0.5, 0.0]).unwrap(), vec![0.0, 0.375]);
        assert_eq!(spec.ell(&[1.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let rev = spec.reversible();
        for x in halton_probes(&Bounds::cube(2, 2.0), 32) {
            assert_eq!(rev.ell(&x).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn ell_rejects_non_finite() {
        let spec = dw(1.0);
        assert!(matches!(spec.ell(&[f64::NAN, 0.0]), Err(LandscapeError::NonFinite { .. })));
        assert!(matches!(spec.ell(&[0.0]), Err(LandscapeError::Dimension { .. })));
        // finite input, overflowing U
        assert!(matches!(spec.ell(&[1e100, 0.0]), Err(LandscapeError::NonFinite { .. })));
    }

    #[test]
    fn jacobian_at_saddle() {
        let a = 0.7;
        let jac = dw(a).ell_jacobian(&[0.0, 0.0]).unwrap();
        assert_eq!(jac, DMatrix::from_row_slice(2, 2, &[0.0, a, a, 0.0]));
        assert_eq!(dw(0.0).ell_jacobian(&[0.3, 0.2]).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn jacobian_matches_fd_for_level_dependent_generator() {
        let base = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let spec = dw(0.0)
            .with_skew(SkewGenerator::ScalarPoly { base, coeffs: vec![0.5, -1.0, 0.3] })
            .unwrap();
        for x in halton_probes(&Bounds::cube(2, 1.5), 20) {
            let jac = spec.ell_jacobian(&x).unwrap();
            for k in 0..2 {
                let h = 1e-6;
                let mut xp = x.clone();
                xp[k] += h;
                let mut xm = x.clone();
                xm[k] -= h;
                let lp = spec.ell(&xp).unwrap();
                let lm = spec.ell(&xm).unwrap();
                for i in 0..2 {
                    let fd = (lp[i] - lm[i]) / (2.0 * h);
                    assert!((fd - jac[(i, k)]).abs() < 1e-5 * (1.0 + fd.abs()), "{x:?} {i} {k}");
                }
            }
        }
    }

    #[test]
    fn drift_signs() {
        let spec = dw(1.0);
        let mut out = [0.0; 2];
        let mut s = [0.0; 2];
        spec.drift_into(&[0.5, 0.0], 1.0, &mut out, &mut s);
        assert_eq!(out, [0.375, -0.375]);
        spec.drift_into(&[0.5, 0.0], -1.0, &mut out, &mut s);
        assert_eq!(out, [0.375, 0.375]);
    }

    #[test]
    fn catalog_passes_invariants() {
        for name in catalog::NAMES {
            let entry = catalog::get(name).unwrap();
            let d = entry.default_box.dim();
            let skew = if d == 2 { SkewGenerator::planar(1.0) } else { SkewGenerator::Zero { dim: d } };
            let spec = LandscapeSpec::builtin(name, skew).unwrap();
            let probes = halton_probes(&entry.default_box, DEFAULT_PROBES);
            let rep = spec.check_invariants(&probes);
            assert!(rep.pass, "{name}: {rep:?}");
            assert!(spec.certify_orthogonality(&probes).pass, "{name}");
        }
    }

    #[test]
    fn orthogonality_certificates() {
        let probes = halton_probes(&Bounds::cube(2, 2.0), DEFAULT_PROBES);
        let rep = dw(1.0).certify_orthogonality(&probes);
        assert!(rep.pass);
        assert!(rep.max_dot < 1e-12 && rep.max_divergence < 1e-12);
        assert!(dw(0.0).certify_orthogonality(&probes).pass);

        let corrupted = dw(0.0)
            .with_skew(SkewGenerator::Constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])))
            .unwrap();
        // ∇U = (-0.375, 0.5) at (0.5, 0.5), ℓ = (0.5, 0): ∇U·ℓ = -0.1875
        let at = corrupted.certify_orthogonality(&[vec![0.5, 0.5]]);
        assert!(!at.pass);
        assert!((at.max_dot - 0.1875).abs() < 1e-15);
        assert!(!corrupted.certify_orthogonality(&probes).pass);
        assert!(!corrupted.check_invariants(&probes).pass);
        assert!(!dw(1.0).certify_orthogonality(&[]).pass);
    }

    #[test]
    fn halton_is_deterministic_and_inside() {
        let b = Bounds::new(vec![-3.0, -2.0], vec![3.0, 2.0]);
        let p = halton_probes(&b, 256);
        assert_eq!(p, halton_probes(&b, 256));
        assert!(p.iter().all(|x| b.contains(x)));
        assert_eq!(p[0], vec![0.0, -2.0 + 4.0 / 3.0]);
    }
}
