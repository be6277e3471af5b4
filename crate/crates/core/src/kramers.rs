//! Eyring–Kramers constants and predicted mean transition times.
//!
//! For a gate saddle `σ` with Hessian eigenvalue `-λ₁` and `-μ` the negative
//! eigenvalue of `H + L`,
//!
//! ```text
//! ω^σ     = μ  / (2π √(-det H^σ))        ω^σ_rev = λ₁ / (2π √(-det H^σ))
//! ω₀      = Σ_{σ ∈ Σ₀} ω^σ               ν₀      = Σ_{m ∈ M₀★} 1/√(det H^m)
//! E[τ]   ≈ ν₀/ω₀ · exp((H - h₀)/ε)
//! ```
//!
//! The reversible time uses `ω₀,rev` in place of `ω₀`; their ratio is the
//! speedup, independent of `ε`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::landscape::LandscapeSpec;
use crate::spectral::{check_hl_skew, SaddleSpectrum, SpectralError};
use crate::topology::{CriticalKind, CriticalPoint, TopologyError, ValleyStructure};

/// Default `ε` ladder for reports.
pub const DEFAULT_EPSILONS: [f64; 4] = [0.15, 0.12, 0.10, 0.08];
/// Relative agreement required between the general and double-well formulas.
pub const CLOSED_FORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KramersError {
    #[error("{location:?} is not an index-1 saddle")]
    NotASaddle { location: Vec<f64> },
    #[error("model inconsistency at saddle {location:?}: {detail} (ℓ is not orthogonal to ∇U there)")]
    ModelInconsistency { location: Vec<f64>, detail: String },
    #[error("noise levels must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("double-well closed form {closed} disagrees with the general formula {general}")]
    ClosedFormMismatch { general: f64, closed: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EkConstant {
    pub location: Vec<f64>,
    pub lambda1: f64,
    pub mu: f64,
    pub omega: f64,
    pub omega_rev: f64,
    pub spectrum: SaddleSpectrum,
}

/// `ω^σ` and `ω^σ_rev` at an index-1 saddle.
///
/// `H` and `L` are re-evaluated from `spec` at the saddle location.
/// `toward_home` orients `e₁` (and hence `v`); it does not affect `ω`.
pub fn ek_constant(
    saddle: &CriticalPoint,
    spec: &LandscapeSpec,
    toward_home: Option<&[f64]>,
) -> Result<EkConstant, KramersError> {
    if saddle.kind != CriticalKind::Saddle {
        return Err(KramersError::NotASaddle { location: saddle.location.clone() });
    }
    let h = spec.hessian(&saddle.location);
    let l = spec
        .ell_jacobian(&saddle.location)
        .map_err(|e| KramersError::ModelInconsistency { location: saddle.location.clone(), detail: e.to_string() })?;
    check_hl_skew(&h, &l, 1e-8).map_err(|e| KramersError::ModelInconsistency {
        location: saddle.location.clone(),
        detail: e.to_string(),
    })?;
    let toward = toward_home.map(nalgebra::DVector::from_column_slice);
    let spectrum = SaddleSpectrum::new(&h, &l, toward.as_ref())?;
    let root = spectrum.sqrt_neg_det();
    Ok(EkConstant {
        location: saddle.location.clone(),
        lambda1: spectrum.lambda1(),
        mu: spectrum.mu,
        omega: spectrum.mu / (2.0 * PI * root),
        omega_rev: spectrum.lambda1() / (2.0 * PI * root),
        spectrum,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleRecord {
    pub location: Vec<f64>,
    pub lambda1: f64,
    pub mu: f64,
    pub det_hessian: f64,
    pub omega: f64,
    pub omega_rev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanTime {
    pub epsilon: f64,
    pub predicted: f64,
    pub predicted_rev: f64,
    /// Heuristic relative error `√ε·log(1/ε)` (order only, constant 1).
    pub error_band_heuristic: f64,
    /// Double-well form, present when the home valley has a single minimum
    /// and a single gate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EkPrediction {
    pub level: f64,
    pub h0: f64,
    pub exponent: f64,
    pub saddles: Vec<SaddleRecord>,
    pub omega0: f64,
    pub omega0_rev: f64,
    pub nu0: f64,
    pub speedup: f64,
    pub times: Vec<MeanTime>,
}

impl EkPrediction {
    /// `ν₀/ω₀ · exp((H - h₀)/ε)`.
    pub fn mean_time(&self, epsilon: f64) -> f64 {
        self.nu0 / self.omega0 * (self.exponent / epsilon).exp()
    }

    /// `ν₀/ω₀,rev · exp((H - h₀)/ε)`.
    pub fn mean_time_rev(&self, epsilon: f64) -> f64 {
        self.nu0 / self.omega0_rev * (self.exponent / epsilon).exp()
    }

    /// `epsilon,predicted,predicted_rev,speedup` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,predicted,predicted_rev,speedup\n");
        for t in &self.times {
            let _ = writeln!(out, "{},{},{},{}", t.epsilon, t.predicted, t.predicted_rev, self.speedup);
        }
        out
    }
}

pub fn error_band(epsilon: f64) -> f64 {
    epsilon.sqrt() * (1.0 / epsilon).ln()
}

/// Assembles the prediction for a valley structure at each `ε`.
pub fn predict(vs: &ValleyStructure, spec: &LandscapeSpec, epsilons: &[f64]) -> Result<EkPrediction, KramersError> {
    if let Some(&bad) = epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(KramersError::InvalidEpsilon(bad));
    }
    if vs.gates.is_empty() {
        return Err(TopologyError::GateNotFound { level: vs.level }.into());
    }
    let constants = vs
        .gates
        .iter()
        .map(|g| ek_constant(&g.saddle, spec, Some(&g.toward_home)))
        .collect::<Result<Vec<_>, _>>()?;
    let saddles: Vec<SaddleRecord> = constants
        .iter()
        .map(|c| SaddleRecord {
            location: c.location.clone(),
            lambda1: c.lambda1,
            mu: c.mu,
            det_hessian: c.spectrum.det_hessian,
            omega: c.omega,
            omega_rev: c.omega_rev,
        })
        .collect();
    let omega0: f64 = saddles.iter().map(|s| s.omega).sum();
    let omega0_rev: f64 = saddles.iter().map(|s| s.omega_rev).sum();
    let nu0: f64 = vs.deepest.iter().map(|m| 1.0 / m.det_hessian().sqrt()).sum();
    let exponent = vs.level - vs.h0;

    let double_well = vs.minima_home.len() == 1 && constants.len() == 1;
    let mut pred = EkPrediction {
        level: vs.level,
        h0: vs.h0,
        exponent,
        saddles,
        omega0,
        omega0_rev,
        nu0,
        speedup: omega0 / omega0_rev,
        times: Vec::new(),
    };
    for &eps in epsilons {
        let predicted = pred.mean_time(eps);
        let closed_form = if double_well {
            let c = &constants[0];
            let m = &vs.minima_home[0];
            let closed = 2.0 * PI / c.mu
                * (-c.spectrum.det_hessian / m.det_hessian()).sqrt()
                * ((vs.level - m.value) / eps).exp();
            if ((closed - predicted) / predicted).abs() > CLOSED_FORM_TOL {
                return Err(KramersError::ClosedFormMismatch { general: predicted, closed });
            }
            Some(closed)
        } else {
            None
        };
        pred.times.push(MeanTime {
            epsilon: eps,
            predicted,
            predicted_rev: pred.mean_time_rev(eps),
            error_band_heuristic: error_band(eps),
            closed_form,
        });
    }
    Ok(pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{catalog, SkewGenerator};
    use crate::topology::{build_valley_structure, find_critical_points};
    use approx::assert_relative_eq;

    fn valley(name: &str, skew: SkewGenerator, start: &[f64]) -> (LandscapeSpec, ValleyStructure) {
        let b = catalog::get(name).unwrap().default_box;
        let spec = LandscapeSpec::builtin(name, skew).unwrap();
        let crits = find_critical_points(&spec, &b, 20).unwrap();
        let m0 = crits.iter().find(|c| c.distance(start) < 1e-6).unwrap().clone();
        let saddle = crits.iter().find(|c| c.kind == CriticalKind::Saddle).unwrap().value;
        let vs = build_valley_structure(&spec, &crits, &m0, saddle, &b, crate::topology::default_cells_per_axis(b.dim()))
            .unwrap();
        (spec, vs)
    }

    #[test]
    fn ek_constants_on_doublewell() {
        let (spec, vs) = valley("doublewell2d", SkewGenerator::planar(1.0), &[-1.0, 0.0]);
        let c = ek_constant(&vs.gates[0].saddle, &spec, None).unwrap();
        assert_relative_eq!(c.mu, 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(c.omega, 2f64.sqrt() / (2.0 * PI), max_relative = 1e-14);
        assert_relative_eq!(c.omega_rev, 1.0 / (2.0 * PI), max_relative = 1e-14);

        let rev = ek_constant(&vs.gates[0].saddle, &spec.reversible(), None).unwrap();
        assert_eq!(rev.omega, rev.omega_rev);
        assert_relative_eq!(rev.omega, 1.0 / (2.0 * PI), max_relative = 1e-14);

        let (spec1, vs1) = valley("doublewell1d", SkewGenerator::Zero { dim: 1 }, &[-1.0]);
        let c1 = ek_constant(&vs1.gates[0].saddle, &spec1, None).unwrap();
        assert_relative_eq!(c1.omega, 1.0 / (2.0 * PI), max_relative = 1e-14);
        assert_eq!(c1.omega, c1.omega_rev);
    }

    #[test]
    fn ek_constant_rejects_minimum_and_bad_skew() {
        let (spec, vs) = valley("doublewell2d", SkewGenerator::planar(1.0), &[-1.0, 0.0]);
        assert!(matches!(ek_constant(&vs.start, &spec, None), Err(KramersError::NotASaddle { .. })));
        let bad = spec
            .with_skew(SkewGenerator::Constant(nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])))
            .unwrap();
        assert!(matches!(
            ek_constant(&vs.gates[0].saddle, &bad, None),
            Err(KramersError::ModelInconsistency { .. })
        ));
    }

    #[test]
    fn doublewell_predictions() {
        let (spec, vs) = valley("doublewell2d", SkewGenerator::planar(1.0), &[-1.0, 0.0]);
        let p = predict(&vs, &spec, &[0.1]).unwrap();
        assert_relative_eq!(p.nu0, 1.0 / 2f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(p.times[0].predicted, PI * 2.5f64.exp(), max_relative = 1e-12);
        assert_relative_eq!(p.times[0].predicted_rev, PI * 2f64.sqrt() * 2.5f64.exp(), max_relative = 1e-12);
        assert!((p.times[0].predicted - 38.27).abs() < 0.01);
        assert!((p.times[0].predicted_rev - 54.13).abs() < 0.01);
        assert_relative_eq!(p.speedup, 2f64.sqrt(), max_relative = 1e-14);
        assert!(p.times[0].closed_form.is_some());

        let p = predict(&vs, &spec, &DEFAULT_EPSILONS).unwrap();
        for t in &p.times {
            assert_relative_eq!(t.predicted_rev / t.predicted, 2f64.sqrt(), max_relative = 1e-12);
        }
        assert!(p.to_csv().starts_with("epsilon,predicted,predicted_rev,speedup\n0.15,"));
        assert!(matches!(predict(&vs, &spec, &[0.0]), Err(KramersError::InvalidEpsilon(_))));
    }

    #[test]
    fn reversible_paths_agree_bitwise() {
        let (spec, vs) = valley("doublewell2d", SkewGenerator::Zero { dim: 2 }, &[-1.0, 0.0]);
        let p = predict(&vs, &spec, &DEFAULT_EPSILONS).unwrap();
        assert_eq!(p.omega0, p.omega0_rev);
        assert_eq!(p.speedup, 1.0);
        for t in &p.times {
            assert_eq!(t.predicted, t.predicted_rev);
        }
    }

    #[test]
    fn larger_skew_speeds_up() {
        let mut last = 0.0;
        for a in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let (spec, vs) = valley("doublewell2d", SkewGenerator::planar(a), &[-1.0, 0.0]);
            let p = predict(&vs, &spec, &[0.1]).unwrap();
            assert!(p.omega0 > last);
            assert!(p.speedup >= 1.0);
            last = p.omega0;
        }
    }
}
