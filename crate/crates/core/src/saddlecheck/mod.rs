//! The saddle-local test function `p_ε^σ` and deterministic quadrature checks
//! of the boundary-flux asymptotics it drives.
//!
//! Around a gate saddle `σ` with `δ = (ε log 1/ε)^{1/2}` the box `C` has
//! half-widths `Jδ/√λ₁` along `e₁` and `2Jδ/√λ_j` along `e_j`, and
//! `B = C ∩ {U < H + J²δ²}`. The face `∂₊B` sits at `α₁ = +Jδ/√λ₁`, on the
//! side of the home valley. With `μ̃ = e^{-U/ε}` (no normalisation) the flux
//!
//! ```text
//! I₁ = ε ∫_{∂₊B} ∇p·e₁ dμ̃      I₂ = ∫_{∂₊B} (1-p)(ℓ·e₁) dμ̃
//! ```
//!
//! satisfies `I₁ - I₂ ≈ α̃_ε ω^σ` with `α̃_ε = e^{-H/ε}(2πε)^{d/2}`. Every
//! integral reported here carries the factor `e^{H/ε}` (it underflows for
//! small `ε`); ratios are unaffected.

mod quadrature;

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::kramers::{ek_constant, KramersError};
use crate::landscape::{LandscapeError, LandscapeSpec};
use crate::spectral::SaddleSpectrum;
use crate::topology::CriticalPoint;

pub use crate::spectral::reduced_det_check;
pub use quadrature::{integrate, integrate_abs, Estimate, MAX_PANELS};

/// Default box multiplier `J`.
pub const DEFAULT_J_BOX: f64 = 4.0;
/// Relative accuracy of every quadrature.
pub const QUAD_REL_TOL: f64 = 1e-8;
/// Default `ε` ladder for the face check.
pub const DEFAULT_LADDER: [f64; 3] = [1e-3, 3e-4, 1e-4];
const ROOT_SAMPLES: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SaddleCheckError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("quadrature did not reach relative accuracy {tol:e} within {panels} panels ({what})")]
    NumericFailure { what: String, tol: f64, panels: usize },
    #[error(transparent)]
    Kramers(#[from] KramersError),
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// `p_ε^σ(x) = Φ((x-σ)·v √(μ/ε))`.
pub fn test_function(x: &[f64], center: &[f64], spectrum: &SaddleSpectrum, epsilon: f64) -> f64 {
    std_normal_cdf(projection(x, center, &spectrum.v) * (spectrum.mu / epsilon).sqrt())
}

fn projection(x: &[f64], center: &[f64], v: &DVector<f64>) -> f64 {
    x.iter().zip(center).zip(v.iter()).map(|((a, c), v)| (a - c) * v).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleBox {
    pub center: Vec<f64>,
    pub epsilon: f64,
    pub delta: f64,
    pub j_box: f64,
    /// Columns `e₁, …, e_d`.
    #[serde(with = "crate::linalg::rows")]
    pub axes: DMatrix<f64>,
    /// `λ₁, λ₂, …, λ_d`, all positive.
    pub lambdas: Vec<f64>,
    pub half_widths: Vec<f64>,
    /// `U(σ)`.
    pub level: f64,
    /// `H + J²δ²`.
    pub level_cap: f64,
}

impl SaddleBox {
    pub fn new(center: &[f64], level: f64, spectrum: &SaddleSpectrum, epsilon: f64, j_box: f64) -> Result<Self, SaddleCheckError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(SaddleCheckError::Precondition(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        if !(j_box > 0.0 && j_box.is_finite()) {
            return Err(SaddleCheckError::Precondition(format!("J must be positive, got {j_box}")));
        }
        let delta = (epsilon * (1.0 / epsilon).ln()).sqrt();
        let lambdas: Vec<f64> = spectrum.hessian_eigs.iter().map(|l| l.abs()).collect();
        let half_widths = lambdas
            .iter()
            .enumerate()
            .map(|(i, l)| if i == 0 { 1.0 } else { 2.0 } * j_box * delta / l.sqrt())
            .collect();
        Ok(Self {
            center: center.to_vec(),
            epsilon,
            delta,
            j_box,
            axes: spectrum.hessian_vecs.clone(),
            lambdas,
            half_widths,
            level,
            level_cap: level + j_box * j_box * delta * delta,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `σ + Σ αᵢ eᵢ`.
    pub fn point(&self, alpha: &[f64]) -> Vec<f64> {
        let mut x = self.center.clone();
        for (i, a) in alpha.iter().enumerate() {
            for (k, xk) in x.iter_mut().enumerate() {
                *xk += a * self.axes[(k, i)];
            }
        }
        x
    }

    /// Box coordinates `αᵢ = (x-σ)·eᵢ`.
    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| (0..self.dim()).map(|k| (x[k] - self.center[k]) * self.axes[(k, i)]).sum()).collect()
    }
}

/// Sub-intervals of `[lo, hi]` where `g < 0`, from sign changes on a sample
/// grid refined by bisection.
fn negative_intervals(g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let root = |mut a: f64, mut b: f64| {
        let ga = g(a) < 0.0;
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if (g(m) < 0.0) == ga {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let xs: Vec<f64> = (0..=ROOT_SAMPLES).map(|i| lo + (hi - lo) * i as f64 / ROOT_SAMPLES as f64).collect();
    let mut out = Vec::new();
    let mut start = (g(lo) < 0.0).then_some(lo);
    for w in xs.windows(2) {
        let (a, b) = (g(w[0]) < 0.0, g(w[1]) < 0.0);
        if a != b {
            let r = root(w[0], w[1]);
            if b {
                start = Some(r);
            } else if let Some(s) = start.take() {
                out.push((s, r));
            }
        }
    }
    if let Some(s) = start {
        out.push((s, hi));
    }
    out
}

fn quad(what: &str, f: impl FnMut(f64) -> f64, a: f64, b: f64) -> Result<f64, SaddleCheckError> {
    quad_abs(what, f, a, b, 0.0)
}

fn quad_abs(what: &str, f: impl FnMut(f64) -> f64, a: f64, b: f64, abs: f64) -> Result<f64, SaddleCheckError> {
    integrate_abs(f, a, b, QUAD_REL_TOL, abs).map(|e| e.value).ok_or_else(|| SaddleCheckError::NumericFailure {
        what: what.to_string(),
        tol: QUAD_REL_TOL,
        panels: MAX_PANELS,
    })
}

fn require_planar_saddle(spec: &LandscapeSpec, saddle: &CriticalPoint) -> Result<(), SaddleCheckError> {
    if spec.dim() != 2 {
        return Err(SaddleCheckError::Precondition(format!("face quadrature needs d = 2, got d = {}", spec.dim())));
    }
    if saddle.index() != 1 {
        return Err(SaddleCheckError::Precondition("not an index-1 saddle".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceRow {
    pub epsilon: f64,
    pub delta: f64,
    pub i1: f64,
    pub i2: f64,
    pub difference: f64,
    /// `α̃_ε ω^σ`.
    pub alpha_omega: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceTable {
    pub center: Vec<f64>,
    pub j_box: f64,
    pub omega: f64,
    pub mu: f64,
    pub v_dot_e1: f64,
    pub rows: Vec<FaceRow>,
}

impl FaceTable {
    /// `epsilon,i1,i2,difference,alpha_omega,ratio` rows (integrals scaled by `e^{H/ε}`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,i1,i2,difference,alpha_omega,ratio\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{},{}\n", r.epsilon, r.i1, r.i2, r.difference, r.alpha_omega, r.ratio));
        }
        out
    }

    /// True when `|ratio - 1|` never increases along the ladder.
    pub fn approaches_one(&self) -> bool {
        self.rows.windows(2).all(|w| (w[1].ratio - 1.0).abs() <= (w[0].ratio - 1.0).abs())
    }
}

/// `(I₁ - I₂)/(α̃_ε ω^σ)` along a decreasing `ε` ladder on the face `∂₊B`.
pub fn boundary_asymptotics(
    spec: &LandscapeSpec,
    saddle: &CriticalPoint,
    toward_home: Option<&[f64]>,
    ladder: &[f64],
    j_box: f64,
) -> Result<FaceTable, SaddleCheckError> {
    require_planar_saddle(spec, saddle)?;
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SaddleCheckError::Precondition("epsilon ladder must be non-empty and strictly decreasing".into()));
    }
    let ek = ek_constant(saddle, spec, toward_home)?;
    let sp = &ek.spectrum;
    let mut rows = Vec::with_capacity(ladder.len());
    for &eps in ladder {
        let bx = SaddleBox::new(&saddle.location, saddle.value, sp, eps, j_box)?;
        let e1: Vec<f64> = sp.e1().iter().copied().collect();
        let (w1, w2) = (bx.half_widths[0], bx.half_widths[1]);
        let face = |a2: f64| bx.point(&[w1, a2]);
        let spans = negative_intervals(|a2| spec.value(&face(a2)) - bx.level_cap, -w2, w2);
        let gauss = (sp.mu / (2.0 * PI * eps)).sqrt();
        let v1 = sp.v.dot(&sp.e1());

        let mut i1 = 0.0;
        let mut i2 = 0.0;
        for &(a, b) in &spans {
            i1 += quad(
                "I1",
                |a2| {
                    let x = face(a2);
                    let t = projection(&x, &bx.center, &sp.v);
                    let expo = -(0.5 * sp.mu * t * t + spec.value(&x) - bx.level) / eps;
                    eps * v1 * gauss * expo.exp()
                },
                a,
                b,
            )?;
            if !spec.is_reversible() {
                let mut bad = None;
                i2 += quad(
                    "I2",
                    |a2| {
                        let x = face(a2);
                        let t = projection(&x, &bx.center, &sp.v);
                        let tail = 0.5 * libm::erfc(t * (sp.mu / eps).sqrt() / SQRT_2);
                        let ell = match spec.ell(&x) {
                            Ok(l) => l,
                            Err(e) => {
                                bad = Some(e);
                                return f64::NAN;
                            }
                        };
                        let le1: f64 = ell.iter().zip(&e1).map(|(a, b)| a * b).sum();
                        tail * le1 * (-(spec.value(&x) - bx.level) / eps).exp()
                    },
                    a,
                    b,
                )
                .map_err(|e| bad.clone().map(SaddleCheckError::from).unwrap_or(e))?;
            }
        }
        let alpha_omega = 2.0 * PI * eps * ek.omega;
        rows.push(FaceRow {
            epsilon: eps,
            delta: bx.delta,
            i1,
            i2,
            difference: i1 - i2,
            alpha_omega,
            ratio: (i1 - i2) / alpha_omega,
        });
    }
    Ok(FaceTable { center: saddle.location.clone(), j_box, omega: ek.omega, mu: sp.mu, v_dot_e1: sp.v.dot(&sp.e1()), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub epsilon: f64,
    /// `∫_B |L*_ε p| dμ̃ / α̃_ε`.
    pub ratio: f64,
}

/// Integrated linearised-generator residual of `p_ε^σ` over `B`, relative to `α̃_ε`.
///
/// `L*_ε p = -(∇U - ℓ)·∇p + εΔp` with `∇p = g(t)v` and `Δp = -(μt/ε)g(t)`,
/// `g` the Gaussian density of the profile and `t = (x-σ)·v`.
pub fn generator_residual(
    spec: &LandscapeSpec,
    saddle: &CriticalPoint,
    toward_home: Option<&[f64]>,
    ladder: &[f64],
    j_box: f64,
) -> Result<Vec<ResidualRow>, SaddleCheckError> {
    require_planar_saddle(spec, saddle)?;
    let ek = ek_constant(saddle, spec, toward_home)?;
    let sp = &ek.spectrum;
    let v: Vec<f64> = sp.v.iter().copied().collect();
    ladder
        .iter()
        .map(|&eps| {
            let bx = SaddleBox::new(&saddle.location, saddle.value, sp, eps, j_box)?;
            let (w1, w2) = (bx.half_widths[0], bx.half_widths[1]);
            let gauss = (sp.mu / (2.0 * PI * eps)).sqrt();
            // Near α₁ = 0 the residual is rounding noise; cap each line's
            // absolute error so the total stays below 1e-10·α̃_ε.
            let line_abs = 1e-10 * 2.0 * PI * eps / (2.0 * w1);
            let integrand = |x: &[f64]| -> f64 {
                let t = projection(x, &bx.center, &sp.v);
                let grad = spec.gradient(x);
                let ell = spec.ell(x).unwrap_or_else(|_| vec![f64::NAN; x.len()]);
                let drift_v: f64 = (0..x.len()).map(|k| (grad[k] - ell[k]) * v[k]).sum();
                let expo = -(0.5 * sp.mu * t * t + spec.value(x) - bx.level) / eps;
                gauss * (drift_v + sp.mu * t).abs() * expo.exp()
            };
            let mut failure = None;
            let outer = quad(
                "generator residual (outer)",
                |a1| {
                    let line = |a2: f64| bx.point(&[a1, a2]);
                    let spans = negative_intervals(|a2| spec.value(&line(a2)) - bx.level_cap, -w2, w2);
                    let mut s = 0.0;
                    for (a, b) in spans {
                        match quad_abs("generator residual (inner)", |a2| integrand(&line(a2)), a, b, line_abs) {
                            Ok(val) => s += val,
                            Err(e) => {
                                failure = Some(e);
                                return f64::NAN;
                            }
                        }
                    }
                    s
                },
                -w1,
                w1,
            )
            .map_err(|e| failure.clone().unwrap_or(e))?;
            Ok(ResidualRow { epsilon: eps, ratio: outer / (2.0 * PI * eps) })
        })
        .collect()
}

/// Smallest `(U - H)/(J²δ²)` over samples of the side faces `∂₀C` (d = 2).
pub fn side_face_excess(spec: &LandscapeSpec, bx: &SaddleBox, samples: usize) -> f64 {
    let (w1, w2) = (bx.half_widths[0], bx.half_widths[1]);
    let scale = bx.j_box * bx.j_box * bx.delta * bx.delta;
    let mut worst = f64::INFINITY;
    for i in 0..=samples {
        let a1 = -w1 + 2.0 * w1 * i as f64 / samples as f64;
        for a2 in [-w2, w2] {
            worst = worst.min((spec.value(&bx.point(&[a1, a2])) - bx.level) / scale);
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceCover {
    pub a: f64,
    pub samples: usize,
    /// Face points with `(x-σ)·v < aJδ` and `U < H + aJ²δ²`.
    pub violations: usize,
}

/// Samples `∂₊C` and counts points outside both `{(x-σ)·v ≥ aJδ}` and
/// `{U ≥ H + aJ²δ²}` (d = 2).
pub fn face_cover(spec: &LandscapeSpec, bx: &SaddleBox, spectrum: &SaddleSpectrum, a: f64, samples: usize) -> FaceCover {
    let (w1, w2) = (bx.half_widths[0], bx.half_widths[1]);
    let jd = bx.j_box * bx.delta;
    let violations = (0..=samples)
        .filter(|&i| {
            let x = bx.point(&[w1, -w2 + 2.0 * w2 * i as f64 / samples as f64]);
            projection(&x, &bx.center, &spectrum.v) < a * jd && spec.value(&x) < bx.level + a * jd * jd
        })
        .count();
    FaceCover { a, samples: samples + 1, violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::SkewGenerator;
    use crate::topology::find_critical_points;
    use crate::linalg::Bounds;

    fn saddle(a: f64) -> (LandscapeSpec, CriticalPoint) {
        let spec = LandscapeSpec::builtin("doublewell2d", SkewGenerator::planar(a)).unwrap();
        let c = find_critical_points(&spec, &Bounds::cube(2, 2.0), 8).unwrap();
        let s = c.into_iter().find(|p| p.index() == 1).unwrap();
        (spec, s)
    }

    const HOME: [f64; 2] = [-1.0, 0.0];

    #[test]
    fn test_function_values() {
        let (spec, s) = saddle(1.0);
        let ek = ek_constant(&s, &spec, Some(&HOME)).unwrap();
        let sp = &ek.spectrum;
        let eps = 1e-3;
        assert_eq!(test_function(&s.location, &s.location, sp, eps), 0.5);
        let far: Vec<f64> = sp.v.iter().map(|v| v * 10.0 * (eps / sp.mu).sqrt()).collect();
        assert!(1.0 - test_function(&far, &s.location, sp, eps) < 1e-20);

        let x: Vec<f64> = sp.e1().iter().map(|e| 0.05 * e).collect();
        let v1 = sp.v.dot(&sp.e1());
        let expected = std_normal_cdf(0.05 * v1 * (sp.mu / eps).sqrt());
        assert!((test_function(&x, &s.location, sp, eps) - expected).abs() < 1e-15);
        // Integral definition, by quadrature of the Gaussian kernel.
        let t = 0.05 * v1;
        let c = (2.0 * PI * eps / sp.mu).sqrt();
        let tail = integrate(|s| (-sp.mu * s * s / (2.0 * eps)).exp(), t, 1.0, 1e-14).unwrap().value / c;
        assert!((1.0 - tail - expected).abs() < 1e-12);
    }

    #[test]
    fn reversible_profile_uses_e1() {
        let (spec, s) = saddle(0.0);
        let ek = ek_constant(&s, &spec, Some(&HOME)).unwrap();
        let sp = &ek.spectrum;
        assert_eq!(sp.v.as_slice(), sp.e1().as_slice());
        for x in [[0.01, 0.3], [-0.02, -0.1]] {
            let want = std_normal_cdf(-x[0] * (1.0 / 1e-3f64).sqrt());
            assert!((test_function(&x, &s.location, sp, 1e-3) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn box_geometry() {
        let (spec, s) = saddle(1.0);
        let ek = ek_constant(&s, &spec, Some(&HOME)).unwrap();
        let bx = SaddleBox::new(&s.location, s.value, &ek.spectrum, 1e-3, 4.0).unwrap();
        let w1 = bx.half_widths[0];
        assert!((w1 - 4.0 * bx.delta).abs() < 1e-14);
        let p = bx.point(&[w1, 0.37 * bx.half_widths[1]]);
        assert!((bx.coords(&p)[0] - w1).abs() < 1e-14);
        // e₁ points at the home minimum.
        assert!(p[0] < 0.0);
        for eps in [1e-3, 3e-4, 1e-4] {
            let bx = SaddleBox::new(&s.location, s.value, &ek.spectrum, eps, 4.0).unwrap();
            assert!(side_face_excess(&spec, &bx, 400) >= 1.25);
        }
        let cover = face_cover(&spec, &bx, &ek.spectrum, 0.05, 400);
        assert_eq!(cover.violations, 0);
        assert!(ek.spectrum.v.dot(&ek.spectrum.e1()) > 0.0);
    }

    #[test]
    fn face_ratio_matches_reversible_closed_form() {
        // For a = 0 the face integrals factor: ratio = exp(-(Jδ)⁴/(4ε)) · erf-truncation.
        let (spec, s) = saddle(0.0);
        let t = boundary_asymptotics(&spec, &s, Some(&HOME), &DEFAULT_LADDER, 4.0).unwrap();
        for r in &t.rows {
            assert_eq!(r.i2, 0.0);
            let jd = 4.0 * r.delta;
            let q = jd.powi(4) / (4.0 * r.epsilon);
            let ymax2 = 3.0 * jd * jd - 0.5 * jd.powi(4);
            let trunc = libm::erf((ymax2 / (2.0 * r.epsilon)).sqrt());
            assert!((r.ratio - (-q).exp() * trunc).abs() < 1e-7, "{r:?}");
        }
        assert!(t.approaches_one());
    }

    #[test]
    fn nonreversible_face_ratio_improves() {
        let (spec, s) = saddle(1.0);
        let t = boundary_asymptotics(&spec, &s, Some(&HOME), &DEFAULT_LADDER, 4.0).unwrap();
        assert!(t.approaches_one(), "{t:?}");
        assert!(t.rows.iter().all(|r| r.i2 != 0.0 && r.ratio > 0.0 && r.ratio < 1.0));
        assert!(t.to_csv().starts_with("epsilon,i1,i2,difference,alpha_omega,ratio\n0.001,"));
    }

    #[test]
    fn generator_residual_matches_closed_form() {
        // a = 0: |L*p| = |α₁|³ g, so the ratio is (1 - e^{-q})/π up to truncation in α₂.
        let (spec, s) = saddle(0.0);
        let rows = generator_residual(&spec, &s, Some(&HOME), &DEFAULT_LADDER, 4.0).unwrap();
        for r in &rows {
            let delta = (r.epsilon * (1.0 / r.epsilon).ln()).sqrt();
            let q = (4.0 * delta).powi(4) / (4.0 * r.epsilon);
            assert!((r.ratio - (1.0 - (-q).exp()) / PI).abs() < 1e-6, "{r:?}");
        }
        assert!(rows.windows(2).all(|w| w[1].ratio < w[0].ratio));
        let rows = generator_residual(&spec.with_skew(SkewGenerator::planar(1.0)).unwrap(), &s, Some(&HOME), &DEFAULT_LADDER, 4.0)
            .unwrap();
        assert!(rows.windows(2).all(|w| w[1].ratio < w[0].ratio), "{rows:?}");
    }

    #[test]
    fn preconditions() {
        let (spec, s) = saddle(1.0);
        assert!(matches!(
            boundary_asymptotics(&spec, &s, None, &[1e-4, 1e-3], 4.0),
            Err(SaddleCheckError::Precondition(_))
        ));
        let one = LandscapeSpec::builtin("doublewell1d", SkewGenerator::Zero { dim: 1 }).unwrap();
        let c = find_critical_points(&one, &Bounds::cube(1, 2.0), 8).unwrap();
        let s1 = c.into_iter().find(|p| p.index() == 1).unwrap();
        assert!(matches!(
            boundary_asymptotics(&one, &s1, None, &DEFAULT_LADDER, 4.0),
            Err(SaddleCheckError::Precondition(_))
        ));
    }

    #[test]
    fn intervals_from_sign_changes() {
        let iv = negative_intervals(|x| x * x - 0.25, -1.0, 1.0);
        assert_eq!(iv.len(), 1);
        assert!((iv[0].0 + 0.5).abs() < 1e-12 && (iv[0].1 - 0.5).abs() < 1e-12);
        let iv = negative_intervals(|x| 0.25 - x * x, -1.0, 1.0);
        assert_eq!(iv.len(), 2);
        assert_eq!(iv[0].0, -1.0);
        assert_eq!(iv[1].1, 1.0);
    }
}
