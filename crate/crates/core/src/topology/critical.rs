use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::TopologyError;
use crate::landscape::LandscapeSpec;
use crate::linalg::{self, Bounds};
use crate::spectral::sym_eig;

/// `|det ∇²U|` below this marks a degenerate (non-Morse) critical point.
pub const MORSE_TOL: f64 = 1e-8;
/// Required gradient norm at a located critical point.
pub const GRADIENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Minimum,
    #[serde(rename = "saddle_index_1")]
    Saddle,
    /// Index `k ≥ 2`.
    #[serde(rename = "other_index_k")]
    Other(usize),
}

impl CriticalKind {
    pub fn from_index(k: usize) -> Self {
        match k {
            0 => Self::Minimum,
            1 => Self::Saddle,
            k => Self::Other(k),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::Minimum => 0,
            Self::Saddle => 1,
            Self::Other(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub kind: CriticalKind,
    pub value: f64,
    /// Hessian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    #[serde(with = "linalg::rows")]
    pub hessian: DMatrix<f64>,
    #[serde(with = "linalg::rows")]
    pub ell_jac: DMatrix<f64>,
}

impl CriticalPoint {
    /// Classifies `x` as a critical point of `spec`.
    pub fn at(spec: &LandscapeSpec, x: Vec<f64>) -> Result<Self, TopologyError> {
        let hessian = spec.hessian(&x);
        let (w, _) = sym_eig(&hessian)?;
        let det: f64 = w.iter().product();
        if det.abs() < MORSE_TOL {
            return Err(TopologyError::Degenerate { location: x, det });
        }
        let index = w.iter().filter(|l| **l < 0.0).count();
        let ell_jac = spec.ell_jacobian(&x)?;
        Ok(Self {
            value: spec.value(&x),
            kind: CriticalKind::from_index(index),
            eigenvalues: w.as_slice().to_vec(),
            location: x,
            hessian,
            ell_jac,
        })
    }

    pub fn index(&self) -> usize {
        self.kind.index()
    }

    pub fn det_hessian(&self) -> f64 {
        self.eigenvalues.iter().product()
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        self.location.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

fn grid_seeds(bounds: &Bounds, n: usize) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut flat| {
            let u: Vec<f64> = (0..d)
                .map(|_| {
                    let i = flat % n;
                    flat /= n;
                    (i as f64 + 0.5) / n as f64
                })
                .collect();
            bounds.from_unit(&u)
        })
        .collect()
}

/// Newton iteration on `∇U = 0`; `None` when it diverges or stalls.
fn newton(spec: &LandscapeSpec, mut x: Vec<f64>, bounds: &Bounds) -> Option<Vec<f64>> {
    let d = x.len();
    let max_step = 0.1 * bounds.diameter();
    let slack: Vec<f64> = bounds.lo.iter().zip(&bounds.hi).map(|(l, h)| 0.1 * (h - l)).collect();
    let mut g = vec![0.0; d];
    for _ in 0..100 {
        spec.potential().gradient_into(&x, &mut g);
        if !linalg::all_finite(&g) {
            return None;
        }
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= 1e-13 {
            return Some(x);
        }
        let h = spec.hessian(&x);
        let mut step = h.lu().solve(&DVector::from_column_slice(&g))?;
        let sn = step.norm();
        if !sn.is_finite() {
            return None;
        }
        if sn > max_step {
            step *= max_step / sn;
        }
        for k in 0..d {
            x[k] -= step[k];
            if x[k] < bounds.lo[k] - slack[k] || x[k] > bounds.hi[k] + slack[k] {
                return None;
            }
        }
        let scale = 1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if sn <= 1e-14 * scale {
            spec.potential().gradient_into(&x, &mut g);
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            return (gnorm <= GRADIENT_TOL).then_some(x);
        }
    }
    spec.potential().gradient_into(&x, &mut g);
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    (gnorm <= GRADIENT_TOL).then_some(x)
}

/// Locates the critical points of `U` inside `bounds`.
///
/// Newton runs from the centres of a `seeds_per_axis^d` grid (in parallel);
/// seeds that diverge are dropped. Converged points closer than
/// `1e-6·diameter` are merged, keeping the first in seed order. The result is
/// sorted by Morse index, then value, then coordinates.
pub fn find_critical_points(
    spec: &LandscapeSpec,
    bounds: &Bounds,
    seeds_per_axis: usize,
) -> Result<Vec<CriticalPoint>, TopologyError> {
    if !bounds.is_valid() || bounds.dim() != spec.dim() {
        return Err(TopologyError::InvalidInput("search box is invalid or has the wrong dimension".into()));
    }
    if seeds_per_axis < 4 {
        return Err(TopologyError::InvalidInput(format!("seeds_per_axis must be at least 4, got {seeds_per_axis}")));
    }
    let seeds = grid_seeds(bounds, seeds_per_axis);
    let converged: Vec<Option<Vec<f64>>> = seeds.into_par_iter().map(|s| newton(spec, s, bounds)).collect();

    let radius = 1e-6 * bounds.diameter();
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for x in converged.into_iter().flatten() {
        if !bounds.contains(&x) {
            continue;
        }
        let dup = unique
            .iter()
            .any(|u| u.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= radius);
        if !dup {
            unique.push(x);
        }
    }
    let mut crits = unique
        .into_iter()
        .map(|x| CriticalPoint::at(spec, x))
        .collect::<Result<Vec<_>, _>>()?;
    crits.sort_by(|a, b| {
        a.index()
            .cmp(&b.index())
            .then(a.value.total_cmp(&b.value))
            .then_with(|| {
                a.location
                    .iter()
                    .zip(&b.location)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    Ok(crits)
}
