//! Critical points of `U` and the valley structure of the sublevel set
//! `{U < H}` seen from a starting minimum `m₀`.
//!
//! `H₀` is the component of `{U < H}` containing `m₀` and `H₁` the rest (it
//! may be disconnected). The gate saddles `Σ₀` sit on the common boundary of
//! `H₀` and `H₁`; `M₀`/`M₁` are the minima in each part, `h₀ = min_{H₀} U`
//! and `M₀★` the minima of `M₀` attaining it.

mod critical;
mod valley;

use thiserror::Error;

use crate::landscape::LandscapeError;
use crate::spectral::SpectralError;

pub use critical::{find_critical_points, CriticalKind, CriticalPoint, GRADIENT_TOL, MORSE_TOL};
pub use valley::{
    auto_gate_level, build_on_grid, build_valley_structure, default_cells_per_axis, level_tolerance, Gate,
    GridMeta, MinimumLabel, SublevelGrid, ValleyStructure, MAX_VALLEY_DIM, TIE_SHIFT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("degenerate critical point at {location:?}: |det ∇²U| = {det:.3e} (Morse condition violated)")]
    Degenerate { location: Vec<f64>, det: f64 },
    #[error("inconsistent level: {0}")]
    InconsistentLevel(String),
    #[error(
        "no gate saddle joins the start valley to the rest of {{U < {level}}}; at this level the \
         transition time is much larger than exp((H - h0)/eps), choose a higher level or use auto gate selection"
    )]
    GateNotFound { level: f64 },
    #[error("targets {targets:?} are never separated from the start valley by a gate saddle")]
    UnreachableTarget { targets: Vec<Vec<f64>> },
    #[error("valley construction supports d <= {max}, got d = {0}", max = MAX_VALLEY_DIM)]
    DimensionTooLarge(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
}
