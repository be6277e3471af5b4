use serde::{Deserialize, Serialize};

use super::CliError;
use crate::kramers::DEFAULT_EPSILONS;
use crate::landscape::LandscapeConfig;
use crate::linalg::Bounds;
use crate::saddlecheck::{DEFAULT_J_BOX, DEFAULT_LADDER};

/// A run configuration. Every optional field is filled by [`RunConfig::resolve_defaults`]
/// before the config is hashed, so the hash names the full set of inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub landscape: LandscapeConfig,
    /// Starting minimum (snapped to the nearest located minimum).
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    /// Level `H`; when absent it is chosen from `targets` or as the lowest gate.
    #[serde(default)]
    pub level: Option<f64>,
    #[serde(default)]
    pub targets: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub gibbs: GibbsConfig,
    #[serde(default)]
    pub saddle_check: SaddleCheckConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub seeds_per_axis: usize,
    /// Flood-fill cells per axis; `None` picks a size for the dimension.
    pub cells_per_axis: Option<usize>,
    pub probes: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { seeds_per_axis: 20, cells_per_axis: None, probes: crate::landscape::DEFAULT_PROBES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// `None` means `min(1e-3, 0.1/λ_max)`.
    pub dt: Option<f64>,
    pub n_traj: usize,
    /// `None` means `t_max_factor` times the predicted mean time.
    pub t_max: Option<f64>,
    pub t_max_factor: f64,
    /// `None` means `ε`.
    pub ball_radius: Option<f64>,
    /// `None` means three times the extent of the critical points and the search box.
    pub guard_radius: Option<f64>,
    pub adjoint: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { dt: None, n_traj: 1000, t_max: None, t_max_factor: 50.0, ball_radius: None, guard_radius: None, adjoint: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsConfig {
    pub epsilon: f64,
    pub burn_in: f64,
    pub duration: f64,
    pub bins: usize,
    /// Histogram box; `None` uses the landscape search box.
    #[serde(rename = "box")]
    pub bounds: Option<Bounds>,
    /// Also run with `J ≡ 0` and report the distance between the two histograms.
    pub compare_reversible: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { epsilon: 0.4, burn_in: 100.0, duration: 2e4, bins: 50, bounds: None, compare_reversible: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaddleCheckConfig {
    pub ladder: Vec<f64>,
    pub j_box: f64,
    /// `a` used in the face-cover check.
    pub cover_a: f64,
}

impl Default for SaddleCheckConfig {
    fn default() -> Self {
        Self { ladder: DEFAULT_LADDER.to_vec(), j_box: DEFAULT_J_BOX, cover_a: 0.05 }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn resolve_defaults(mut self) -> Result<Self, CliError> {
        if self.landscape.bounds.is_none() {
            self.landscape.bounds = Some(self.landscape.search_box());
        }
        let eps = self.epsilons.get_or_insert_with(|| DEFAULT_EPSILONS.to_vec());
        if eps.is_empty() {
            return Err(CliError::Config("config: `epsilons` must not be empty".into()));
        }
        if let Some(bad) = eps.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(CliError::Config(format!("config: epsilons must be positive, got {bad}")));
        }
        if self.search.seeds_per_axis < 4 {
            return Err(CliError::Config("config: search.seeds_per_axis must be at least 4".into()));
        }
        if self.simulation.n_traj == 0 {
            return Err(CliError::Config("config: simulation.n_traj must be at least 1".into()));
        }
        if !(self.simulation.t_max_factor > 0.0) {
            return Err(CliError::Config("config: simulation.t_max_factor must be positive".into()));
        }
        if self.saddle_check.ladder.is_empty() {
            return Err(CliError::Config("config: saddle_check.ladder must not be empty".into()));
        }
        Ok(self)
    }

    pub fn epsilons(&self) -> &[f64] {
        self.epsilons.as_deref().unwrap_or(&DEFAULT_EPSILONS)
    }
}
