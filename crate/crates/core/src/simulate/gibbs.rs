use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{trajectory_seed, Integrator, SimConfig, SimError};
use crate::landscape::LandscapeSpec;
use crate::linalg::Bounds;

// 5-point Gauss–Legendre on [-1, 1].
const GL_NODES: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsHistogram {
    pub bounds: Bounds,
    pub bins_per_axis: usize,
    /// Occupation fractions among steps that landed inside `bounds`.
    pub empirical: Vec<f64>,
    /// `Z⁻¹ ∫_bin e^{-U/ε}` with `Z` the integral over `bounds`.
    pub reference: Vec<f64>,
    pub tv_distance: f64,
    /// Fraction of recorded steps outside `bounds`.
    pub outside_fraction: f64,
    pub steps: u64,
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn bin_index(x: &[f64], bounds: &Bounds, n: usize) -> Option<usize> {
    let mut flat = 0;
    for k in (0..x.len()).rev() {
        let u = (x[k] - bounds.lo[k]) / (bounds.hi[k] - bounds.lo[k]);
        if !(0.0..1.0).contains(&u) {
            return None;
        }
        flat = flat * n + ((u * n as f64) as usize).min(n - 1);
    }
    Some(flat)
}

/// Per-bin Gibbs masses by tensor Gauss–Legendre quadrature, normalised over `bounds`.
fn reference_density(spec: &LandscapeSpec, epsilon: f64, bounds: &Bounds, n: usize) -> Vec<f64> {
    let d = bounds.dim();
    let bins = n.pow(d as u32);
    let per_bin = GL_NODES.len().pow(d as u32);
    let h: Vec<f64> = (0..d).map(|k| (bounds.hi[k] - bounds.lo[k]) / n as f64).collect();
    let mut values = Vec::with_capacity(bins * per_bin);
    let mut weights = Vec::with_capacity(bins * per_bin);
    let mut x = vec![0.0; d];
    for b in 0..bins {
        for q in 0..per_bin {
            let (mut bf, mut qf, mut w) = (b, q, 1.0);
            for k in 0..d {
                let (i, j) = (bf % n, qf % GL_NODES.len());
                bf /= n;
                qf /= GL_NODES.len();
                x[k] = bounds.lo[k] + h[k] * (i as f64 + 0.5 + 0.5 * GL_NODES[j]);
                w *= 0.5 * h[k] * GL_WEIGHTS[j];
            }
            values.push(spec.value(&x));
            weights.push(w);
        }
    }
    let umin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mass: Vec<f64> = values
        .chunks(per_bin)
        .zip(weights.chunks(per_bin))
        .map(|(u, w)| u.iter().zip(w).map(|(u, w)| w * (-(u - umin) / epsilon).exp()).sum())
        .collect();
    let z: f64 = mass.iter().sum();
    mass.into_iter().map(|m| m / z).collect()
}

/// Occupation histogram of one long trajectory from `start` against the
/// Gibbs density `Z⁻¹ e^{-U/ε}` on a `bins_per_axis^d` grid over `bounds`.
///
/// The trajectory uses stream 0 of `cfg.master_seed`; `cfg.n_traj` is ignored.
pub fn gibbs_histogram(
    spec: &LandscapeSpec,
    cfg: &SimConfig,
    start: &[f64],
    burn_in: f64,
    duration: f64,
    bounds: &Bounds,
    bins_per_axis: usize,
) -> Result<GibbsHistogram, SimError> {
    cfg.validate()?;
    if !(cfg.epsilon > 0.0) {
        return Err(SimError::Config("the Gibbs density needs epsilon > 0".into()));
    }
    if !(burn_in >= 0.0 && duration.is_finite() && duration >= 10.0 * burn_in && duration >= 10.0 * cfg.dt) {
        return Err(SimError::Config(format!(
            "duration ({duration}) must be at least 10x burn_in ({burn_in}) and 10x dt"
        )));
    }
    if bounds.dim() != spec.dim() || start.len() != spec.dim() || !bounds.is_valid() {
        return Err(SimError::Config("histogram box or start has the wrong dimension".into()));
    }
    if bins_per_axis == 0 || bounds.dim() > 3 {
        return Err(SimError::Config("histograms need bins_per_axis >= 1 and d <= 3".into()));
    }
    let bins = bins_per_axis.pow(bounds.dim() as u32);
    let mut counts = vec![0u64; bins];
    let mut outside = 0u64;

    let mut it = Integrator::new(spec, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(cfg.master_seed, 0));
    let mut x = start.to_vec();
    let mut g = vec![0.0; x.len()];
    let burn = (burn_in / cfg.dt).round() as u64;
    let steps = (duration / cfg.dt).round() as u64;
    for k in 0..burn + steps {
        if !it.advance_rng(&mut x, &mut g, &mut rng) {
            return Err(SimError::GuardViolation { trajectory: 0, steps: k + 1, position: x });
        }
        if k >= burn {
            match bin_index(&x, bounds, bins_per_axis) {
                Some(b) => counts[b] += 1,
                None => outside += 1,
            }
        }
    }
    let inside = (steps - outside) as f64;
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / inside).collect();
    let reference = reference_density(spec, cfg.epsilon, bounds, bins_per_axis);
    Ok(GibbsHistogram {
        tv_distance: tv_distance(&empirical, &reference),
        bounds: bounds.clone(),
        bins_per_axis,
        empirical,
        reference,
        outside_fraction: outside as f64 / steps as f64,
        steps,
    })
}
