//! JSON landscape documents.
//!
//! ```json
//! {
//!   "name": "doublewell2d-a1",
//!   "dim": 2,
//!   "potential": {"kind": "builtin", "name": "doublewell2d"},
//!   "skew": {"kind": "constant", "entries": [[0, 1], [-1, 0]]},
//!   "box": {"lo": [-2, -2], "hi": [2, 2]}
//! }
//! ```
//!
//! Polynomial potentials list `[coefficient, exponent-vector]` terms:
//! `{"kind": "polynomial", "terms": [[0.25, [4, 0]], [-0.5, [2, 0]], [0.5, [0, 2]]]}`.
//! Skew generators are `{"kind": "zero"}`, `{"kind": "constant", "entries": …}` or
//! `{"kind": "scalar_poly", "entries": …, "coeffs": [c0, c1, …]}` for
//! `J(u) = (c0 + c1 u + …)·entries`. A missing `skew` means `J ≡ 0`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{catalog, LandscapeError, LandscapeSpec, Monomial, Polynomial, SkewGenerator};
use crate::linalg::{from_rows, to_rows, Bounds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialConfig {
    Builtin { name: String },
    Polynomial { terms: Vec<Monomial> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SkewConfig {
    Zero,
    Constant { entries: Vec<Vec<f64>> },
    ScalarPoly { entries: Vec<Vec<f64>>, coeffs: Vec<f64> },
}

impl SkewConfig {
    pub fn from_generator(skew: &SkewGenerator) -> Self {
        match skew {
            SkewGenerator::Zero { .. } => Self::Zero,
            SkewGenerator::Constant(m) => Self::Constant { entries: to_rows(m) },
            SkewGenerator::ScalarPoly { base, coeffs } => {
                Self::ScalarPoly { entries: to_rows(base), coeffs: coeffs.clone() }
            }
        }
    }

    fn build(&self, dim: usize) -> Result<SkewGenerator, LandscapeError> {
        let square = |entries: &[Vec<f64>]| {
            let m = from_rows(entries)
                .ok_or_else(|| LandscapeError::Config("skew entries must be a rectangular matrix".into()))?;
            if m.nrows() != dim || m.ncols() != dim {
                return Err(LandscapeError::Dimension { expected: dim, found: m.nrows().max(m.ncols()) });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(LandscapeError::Config("skew entries must be finite".into()));
            }
            Ok(m)
        };
        Ok(match self {
            Self::Zero => SkewGenerator::Zero { dim },
            Self::Constant { entries } => SkewGenerator::Constant(square(entries)?),
            Self::ScalarPoly { entries, coeffs } => {
                if coeffs.is_empty() {
                    return Err(LandscapeError::Config("scalar_poly needs at least one coefficient".into()));
                }
                SkewGenerator::ScalarPoly { base: square(entries)?, coeffs: coeffs.clone() }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeConfig {
    pub name: String,
    pub dim: usize,
    pub potential: PotentialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew: Option<SkewConfig>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
}

impl LandscapeConfig {
    pub fn from_json(text: &str) -> Result<Self, LandscapeError> {
        serde_json::from_str(text).map_err(|e| LandscapeError::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<LandscapeSpec, LandscapeError> {
        if self.dim == 0 {
            return Err(LandscapeError::Config("field `dim` must be positive".into()));
        }
        let potential = match &self.potential {
            PotentialConfig::Builtin { name } => {
                let entry = catalog::get(name).ok_or_else(|| LandscapeError::UnknownBuiltin(name.clone()))?;
                entry.potential
            }
            PotentialConfig::Polynomial { terms } => Polynomial::new(self.dim, terms.iter().cloned())?,
        };
        if super::Potential::dim(&potential) != self.dim {
            return Err(LandscapeError::Dimension { expected: self.dim, found: super::Potential::dim(&potential) });
        }
        let skew = self.skew.as_ref().unwrap_or(&SkewConfig::Zero).build(self.dim)?;
        LandscapeSpec::new(self.name.clone(), Arc::new(potential), skew)
    }

    /// Search box: explicit `box`, else the catalog default, else `[-3, 3]^d`.
    pub fn search_box(&self) -> Bounds {
        if let Some(b) = &self.bounds {
            return b.clone();
        }
        if let PotentialConfig::Builtin { name } = &self.potential {
            if let Some(entry) = catalog::get(name) {
                return entry.default_box;
            }
        }
        Bounds::cube(self.dim, 3.0)
    }
}
