//! Euler–Maruyama ensembles for `dx = -(∇U + ℓ)dt + √(2ε) dW` and its adjoint
//! `dx* = -(∇U - ℓ)dt + √(2ε) dW`.
//!
//! Trajectory `i` draws from its own ChaCha8 stream seeded with
//! [`trajectory_seed`]`(master_seed, i)`, so results do not depend on how rayon
//! schedules the work. Normals come from the `rand_distr` ziggurat sampler.
//! Hitting is tested at grid times `k·dt` only, which biases hitting times
//! upward by `O(√dt)`.

mod gibbs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::LandscapeSpec;
use crate::linalg::Bounds;
use crate::topology::CriticalPoint;

pub use gibbs::{gibbs_histogram, tv_distance, GibbsHistogram};

/// Generator and normal sampler, echoed into every result.
pub const RNG_DESCRIPTION: &str = "ChaCha8Rng per trajectory, seed = splitmix64(master_seed, index); StandardNormal (ziggurat)";
/// Fraction of censored trajectories above which an estimate is rejected.
pub const MAX_CENSORED_FRACTION: f64 = 0.2;
const Z95: f64 = 1.959963984540054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("trajectory {trajectory} left the guard region after {steps} steps (at {position:?})")]
    GuardViolation { trajectory: usize, steps: u64, position: Vec<f64> },
    #[error("start point {start:?} lies inside a target ball")]
    StartInTarget { start: Vec<f64> },
    #[error(
        "{censored} of {n} trajectories reached t_max = {t_max} without hitting a target; \
         the estimate would be biased, increase t_max"
    )]
    Unreliable { censored: usize, n: usize, t_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub epsilon: f64,
    pub dt: f64,
    pub n_traj: usize,
    pub master_seed: u64,
    /// Target-ball radius; `None` means `ε`.
    #[serde(default)]
    pub ball_radius: Option<f64>,
    pub t_max: f64,
    /// `|x| > guard_radius` aborts a trajectory. Non-finite states always do.
    #[serde(default)]
    pub guard_radius: Option<f64>,
    #[serde(default)]
    pub adjoint: bool,
}

impl SimConfig {
    pub fn new(epsilon: f64, dt: f64, n_traj: usize, master_seed: u64) -> Self {
        Self { epsilon, dt, n_traj, master_seed, ball_radius: None, t_max: 1e4, guard_radius: None, adjoint: false }
    }

    pub fn radius(&self) -> f64 {
        self.ball_radius.unwrap_or(self.epsilon)
    }

    pub fn max_steps(&self) -> u64 {
        (self.t_max / self.dt).ceil() as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.n_traj == 0 {
            return bad("n_traj must be at least 1".into());
        }
        if !(self.t_max.is_finite() && self.t_max >= 10.0 * self.dt) {
            return bad(format!("t_max = {} must be at least 10*dt", self.t_max));
        }
        if let Some(g) = self.guard_radius {
            if !(g > 0.0) {
                return bad(format!("guard_radius must be positive, got {g}"));
            }
        }
        Ok(())
    }

    fn validate_for_hitting(&self) -> Result<(), SimError> {
        self.validate()?;
        let r = self.radius();
        if !(r.is_finite() && r > 0.0) {
            return Err(SimError::Config(format!("ball_radius must be positive, got {r}")));
        }
        Ok(())
    }
}

/// `min(1e-3, 0.1/λ_max)` over the Hessian eigenvalues at `crits`.
pub fn default_dt(crits: &[CriticalPoint]) -> f64 {
    let lmax = crits.iter().flat_map(|c| c.eigenvalues.iter().copied()).fold(0.0, f64::max);
    if lmax > 0.0 {
        (0.1 / lmax).min(1e-3)
    } else {
        1e-3
    }
}

/// Three times the largest norm among the critical points and the corners of
/// `search`, and at least 3.
///
/// The search box is included because critical points often share coordinates
/// (all on one axis, say), leaving no room across that axis at moderate `ε`.
pub fn default_guard_radius(crits: &[CriticalPoint], search: &Bounds) -> f64 {
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let corner: Vec<f64> = search.lo.iter().zip(&search.hi).map(|(l, h)| l.abs().max(h.abs())).collect();
    let ext = crits.iter().map(|c| norm(&c.location)).fold(norm(&corner).max(1.0), f64::max);
    3.0 * ext
}

/// Element `index + 1` of the splitmix64 sequence started at `master`.
pub fn trajectory_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        let d2: f64 = self.center.iter().zip(x).map(|(c, v)| (c - v) * (c - v)).sum();
        d2 < self.radius * self.radius
    }
}

/// Reusable state for one trajectory.
struct Integrator<'a> {
    spec: &'a LandscapeSpec,
    sign: f64,
    dt: f64,
    noise: f64,
    guard2: f64,
    drift: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Integrator<'a> {
    fn new(spec: &'a LandscapeSpec, cfg: &SimConfig) -> Self {
        let d = spec.dim();
        Self {
            spec,
            sign: if cfg.adjoint { -1.0 } else { 1.0 },
            dt: cfg.dt,
            noise: (2.0 * cfg.epsilon * cfg.dt).sqrt(),
            guard2: cfg.guard_radius.map_or(f64::INFINITY, |g| g * g),
            drift: vec![0.0; d],
            scratch: vec![0.0; d],
        }
    }

    /// Returns false on a guard violation.
    #[inline]
    fn advance(&mut self, x: &mut [f64], gauss: impl Fn(usize) -> f64) -> bool {
        self.spec.drift_into(x, self.sign, &mut self.drift, &mut self.scratch);
        let mut r2 = 0.0;
        for (k, xk) in x.iter_mut().enumerate() {
            *xk += self.drift[k] * self.dt + self.noise * gauss(k);
            r2 += *xk * *xk;
        }
        r2 <= self.guard2
    }

    fn advance_rng(&mut self, x: &mut [f64], g: &mut [f64], rng: &mut ChaCha8Rng) -> bool {
        for gk in g.iter_mut() {
            *gk = rng.sample(StandardNormal);
        }
        self.advance(x, |k| g[k])
    }
}

/// One Euler–Maruyama step `x - (∇U + s·ℓ)dt + √(2ε·dt)·gauss`.
pub fn step(x: &[f64], spec: &LandscapeSpec, cfg: &SimConfig, gauss: &[f64]) -> Result<Vec<f64>, SimError> {
    let d = spec.dim();
    if x.len() != d || gauss.len() != d {
        return Err(SimError::Config(format!("expected {d}-dimensional state and noise")));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(SimError::Config(format!("non-finite state {x:?}")));
    }
    let mut it = Integrator::new(spec, cfg);
    let mut out = x.to_vec();
    if !it.advance(&mut out, |k| gauss[k]) {
        return Err(SimError::GuardViolation { trajectory: 0, steps: 1, position: out });
    }
    Ok(out)
}

/// Deterministic flow (`ε = 0`) for `steps` steps.
pub fn flow(x: &[f64], spec: &LandscapeSpec, dt: f64, steps: u64) -> Vec<f64> {
    let mut cfg = SimConfig::new(0.0, dt, 1, 0);
    cfg.guard_radius = None;
    let mut it = Integrator::new(spec, &cfg);
    let mut out = x.to_vec();
    for _ in 0..steps {
        it.advance(&mut out, |_| 0.0);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Entered `targets[target]` at time `time = steps·dt`.
    Hit { time: f64, steps: u64, target: usize },
    Censored,
}

impl Outcome {
    pub fn time(&self) -> Option<f64> {
        match self {
            Outcome::Hit { time, .. } => Some(*time),
            Outcome::Censored => None,
        }
    }
}

fn run_trajectory(
    start: &[f64],
    targets: &[Ball],
    spec: &LandscapeSpec,
    cfg: &SimConfig,
    seed: u64,
    trajectory: usize,
) -> Result<Outcome, SimError> {
    let mut it = Integrator::new(spec, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = start.to_vec();
    let mut g = vec![0.0; start.len()];
    let max_steps = cfg.max_steps();
    for k in 1..=max_steps {
        if !it.advance_rng(&mut x, &mut g, &mut rng) {
            return Err(SimError::GuardViolation { trajectory, steps: k, position: x });
        }
        if let Some(target) = targets.iter().position(|b| b.contains(&x)) {
            return Ok(Outcome::Hit { time: k as f64 * cfg.dt, steps: k, target });
        }
    }
    Ok(Outcome::Censored)
}

fn check_start(start: &[f64], targets: &[Ball], spec: &LandscapeSpec) -> Result<(), SimError> {
    if start.len() != spec.dim() || targets.iter().any(|b| b.center.len() != spec.dim()) {
        return Err(SimError::Config("start or target has the wrong dimension".into()));
    }
    if targets.is_empty() {
        return Err(SimError::Config("no target balls".into()));
    }
    if !start.iter().all(|v| v.is_finite()) {
        return Err(SimError::Config(format!("non-finite start {start:?}")));
    }
    if targets.iter().any(|b| b.contains(start)) {
        return Err(SimError::StartInTarget { start: start.to_vec() });
    }
    Ok(())
}

/// First grid time at which a trajectory from `start` enters any target ball.
pub fn hitting_time(
    start: &[f64],
    targets: &[Ball],
    spec: &LandscapeSpec,
    cfg: &SimConfig,
    seed: u64,
) -> Result<Outcome, SimError> {
    cfg.validate_for_hitting()?;
    check_start(start, targets, spec)?;
    run_trajectory(start, targets, spec, cfg, seed, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub seed: u64,
    pub hitting_time: Option<f64>,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub trajectories: Vec<TrajectoryRecord>,
    /// Mean over uncensored trajectories.
    pub mean: f64,
    /// Sample standard deviation over `√n`; zero when fewer than two hits.
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub n_hit: usize,
    pub n_censored: usize,
    pub min: f64,
    pub max: f64,
    pub config: SimConfig,
    pub targets: Vec<Ball>,
    pub rng: String,
}

impl EnsembleResult {
    pub fn hitting_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.trajectories.iter().filter_map(|t| t.hitting_time)
    }

    pub fn ci_half_width(&self) -> f64 {
        0.5 * (self.ci95.1 - self.ci95.0)
    }

    /// `index,seed,hitting_time,censored` rows; censored rows leave the time empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,seed,hitting_time,censored\n");
        for t in &self.trajectories {
            let time = t.hitting_time.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", t.index, t.seed, time, t.censored));
        }
        out
    }
}

fn run_outcomes(
    start: &[f64],
    targets: &[Ball],
    spec: &LandscapeSpec,
    cfg: &SimConfig,
) -> Result<Vec<(u64, Outcome)>, SimError> {
    cfg.validate_for_hitting()?;
    check_start(start, targets, spec)?;
    (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| {
            let seed = trajectory_seed(cfg.master_seed, i as u64);
            run_trajectory(start, targets, spec, cfg, seed, i).map(|o| (seed, o))
        })
        .collect()
}

/// `cfg.n_traj` independent hitting times from `start` into the union of `targets`.
pub fn run_ensemble(
    start: &[f64],
    targets: &[Ball],
    spec: &LandscapeSpec,
    cfg: &SimConfig,
) -> Result<EnsembleResult, SimError> {
    let outcomes = run_outcomes(start, targets, spec, cfg)?;
    let trajectories: Vec<TrajectoryRecord> = outcomes
        .iter()
        .enumerate()
        .map(|(index, (seed, o))| TrajectoryRecord {
            index,
            seed: *seed,
            hitting_time: o.time(),
            censored: o.time().is_none(),
        })
        .collect();
    let n = trajectories.len();
    let n_censored = trajectories.iter().filter(|t| t.censored).count();
    if n_censored as f64 > MAX_CENSORED_FRACTION * n as f64 || n_censored == n {
        return Err(SimError::Unreliable { censored: n_censored, n, t_max: cfg.t_max });
    }
    let times: Vec<f64> = trajectories.iter().filter_map(|t| t.hitting_time).collect();
    let n_hit = times.len();
    let mean = times.iter().sum::<f64>() / n_hit as f64;
    let stderr = if n_hit > 1 {
        let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n_hit - 1) as f64;
        (var / n_hit as f64).sqrt()
    } else {
        0.0
    };
    Ok(EnsembleResult {
        mean,
        stderr,
        ci95: (mean - Z95 * stderr, mean + Z95 * stderr),
        n_hit,
        n_censored,
        min: times.iter().copied().fold(f64::INFINITY, f64::min),
        max: times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        trajectories,
        config: cfg.clone(),
        targets: targets.to_vec(),
        rng: RNG_DESCRIPTION.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumEstimate {
    pub x: Vec<f64>,
    /// Estimate of `P_x[τ_A < τ_B]`.
    pub p_a: f64,
    /// Estimate of `P_x[τ_B < τ_A]` from the same trajectories.
    pub p_b: f64,
    /// Wilson score interval for `p_a`.
    pub ci95: (f64, f64),
    pub n_a: usize,
    pub n_b: usize,
    pub n_censored: usize,
}

fn wilson(k: usize, n: usize) -> (f64, f64) {
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Fraction of trajectories from `x` that reach a ball of `a` before one of `b`.
pub fn equilibrium_potential(
    x: &[f64],
    a: &[Ball],
    b: &[Ball],
    spec: &LandscapeSpec,
    cfg: &SimConfig,
) -> Result<EquilibriumEstimate, SimError> {
    if a.is_empty() || b.is_empty() {
        return Err(SimError::Config("both ball sets must be non-empty".into()));
    }
    for ba in a {
        for bb in b {
            let d: f64 = ba.center.iter().zip(&bb.center).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            if d < ba.radius + bb.radius {
                return Err(SimError::Config("ball sets A and B overlap".into()));
            }
        }
    }
    let targets: Vec<Ball> = a.iter().chain(b).cloned().collect();
    let outcomes = run_outcomes(x, &targets, spec, cfg)?;
    let (mut n_a, mut n_b, mut n_censored) = (0, 0, 0);
    for (_, o) in &outcomes {
        match o {
            Outcome::Hit { target, .. } if *target < a.len() => n_a += 1,
            Outcome::Hit { .. } => n_b += 1,
            Outcome::Censored => n_censored += 1,
        }
    }
    let n = outcomes.len();
    if n_censored as f64 > MAX_CENSORED_FRACTION * n as f64 || n_censored == n {
        return Err(SimError::Unreliable { censored: n_censored, n, t_max: cfg.t_max });
    }
    let decided = n_a + n_b;
    Ok(EquilibriumEstimate {
        x: x.to_vec(),
        p_a: n_a as f64 / decided as f64,
        p_b: n_b as f64 / decided as f64,
        ci95: wilson(n_a, decided),
        n_a,
        n_b,
        n_censored,
    })
}
