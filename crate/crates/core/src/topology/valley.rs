use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use super::{CriticalKind, CriticalPoint, TopologyError};
use crate::landscape::LandscapeSpec;
use crate::linalg::Bounds;
use crate::spectral::sym_eig;

/// Largest dimension handled by the grid flood fill.
pub const MAX_VALLEY_DIM: usize = 3;
/// Amount added to `H` when a non-saddle critical value ties with it.
pub const TIE_SHIFT: f64 = 1e-9;

pub fn default_cells_per_axis(dim: usize) -> usize {
    match dim {
        1 => 4000,
        2 => 400,
        _ => 96,
    }
}

/// Level tolerance used to decide `U(σ) = H`.
pub fn level_tolerance(level: f64) -> f64 {
    1e-7 * (1.0 + level.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMeta {
    pub bounds: Bounds,
    pub cells_per_axis: usize,
    pub spacing: Vec<f64>,
    pub level_tolerance: f64,
}

/// `U` sampled at the cell centres of a uniform grid, reusable across levels.
#[derive(Debug, Clone)]
pub struct SublevelGrid {
    bounds: Bounds,
    n: usize,
    spacing: Vec<f64>,
    values: Vec<f64>,
}

struct UnionFind(Vec<u32>);

impl UnionFind {
    fn find(&mut self, mut i: u32) -> u32 {
        while self.0[i as usize] != i {
            let p = self.0[i as usize];
            self.0[i as usize] = self.0[p as usize];
            i = p;
        }
        i
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi as usize] = lo;
        }
    }
}

impl SublevelGrid {
    pub fn new(spec: &LandscapeSpec, bounds: &Bounds, cells_per_axis: usize) -> Result<Self, TopologyError> {
        let d = spec.dim();
        if d > MAX_VALLEY_DIM {
            return Err(TopologyError::DimensionTooLarge(d));
        }
        if !bounds.is_valid() || bounds.dim() != d {
            return Err(TopologyError::InvalidInput("grid box is invalid or has the wrong dimension".into()));
        }
        if cells_per_axis < 4 {
            return Err(TopologyError::InvalidInput("need at least 4 cells per axis".into()));
        }
        let n = cells_per_axis;
        let spacing: Vec<f64> = bounds.lo.iter().zip(&bounds.hi).map(|(l, h)| (h - l) / n as f64).collect();
        let mut grid = Self { bounds: bounds.clone(), n, spacing, values: Vec::new() };
        let total = n.pow(d as u32);
        grid.values = (0..total).into_par_iter().map(|i| spec.value(&grid.center(i))).collect();
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        (0..self.dim())
            .map(|_| {
                let i = flat % self.n;
                flat /= self.n;
                i
            })
            .collect()
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().rev().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.bounds.lo[k] + (i as f64 + 0.5) * self.spacing[k])
            .collect()
    }

    fn cell_of(&self, x: &[f64]) -> Option<Vec<usize>> {
        if !self.bounds.contains(x) {
            return None;
        }
        Some(
            x.iter()
                .enumerate()
                .map(|(k, v)| (((v - self.bounds.lo[k]) / self.spacing[k]) as usize).min(self.n - 1))
                .collect(),
        )
    }

    /// Component labels of `{U < level}` with the saddle necks in `cuts`
    /// removed; `None` for cells outside the set. Labels are numbered in order
    /// of their lowest cell index.
    pub fn label(&self, level: f64, cuts: &[NeckCut]) -> Vec<Option<u32>> {
        let d = self.dim();
        let total = self.values.len();
        let mut inside: Vec<bool> = self.values.iter().map(|u| *u < level).collect();
        for cut in cuts {
            self.apply_cut(cut, &mut inside);
        }
        let mut uf = UnionFind((0..total as u32).collect());
        let strides: Vec<usize> = (0..d).map(|k| self.n.pow(k as u32)).collect();
        for flat in 0..total {
            if !inside[flat] {
                continue;
            }
            let idx = self.multi_index(flat);
            for k in 0..d {
                if idx[k] + 1 < self.n && inside[flat + strides[k]] {
                    uf.union(flat as u32, (flat + strides[k]) as u32);
                }
            }
        }
        let mut compact = vec![u32::MAX; total];
        let mut next = 0;
        let mut labels = vec![None; total];
        for flat in 0..total {
            if inside[flat] {
                let r = uf.find(flat as u32) as usize;
                if compact[r] == u32::MAX {
                    compact[r] = next;
                    next += 1;
                }
                labels[flat] = Some(compact[r]);
            }
        }
        labels
    }

    /// Component of the cell containing `x`, falling back to the nearest
    /// labelled cell among its immediate neighbours.
    fn component_at(&self, labels: &[Option<u32>], x: &[f64]) -> Option<u32> {
        let idx = self.cell_of(x)?;
        let flat = self.flat_index(&idx);
        if let Some(c) = labels[flat] {
            return Some(c);
        }
        let d = self.dim();
        let mut best: Option<(f64, u32)> = None;
        for offset in 0..3usize.pow(d as u32) {
            let mut o = offset;
            let mut nb = Vec::with_capacity(d);
            for &i in &idx {
                let delta = (o % 3) as isize - 1;
                o /= 3;
                let j = i as isize + delta;
                if j < 0 || j >= self.n as isize {
                    break;
                }
                nb.push(j as usize);
            }
            if nb.len() != d {
                continue;
            }
            let f = self.flat_index(&nb);
            if let Some(c) = labels[f] {
                let dist: f64 = self.center(f).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.is_none_or(|(bd, _)| dist < bd) {
                    best = Some((dist, c));
                }
            }
        }
        best.map(|(_, c)| c)
    }

    fn apply_cut(&self, cut: &NeckCut, inside: &mut [bool]) {
        let d = self.dim();
        let lo: Vec<usize> = (0..d)
            .map(|k| (((cut.center[k] - cut.radius - self.bounds.lo[k]) / self.spacing[k]).floor().max(0.0)) as usize)
            .collect();
        let hi: Vec<usize> = (0..d)
            .map(|k| {
                let i = ((cut.center[k] + cut.radius - self.bounds.lo[k]) / self.spacing[k]).ceil();
                (i.max(0.0) as usize).min(self.n - 1)
            })
            .collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return;
        }
        let extent: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| h - l + 1).collect();
        let count: usize = extent.iter().product();
        let mut idx = vec![0usize; d];
        for mut flat in 0..count {
            for k in 0..d {
                idx[k] = lo[k] + flat % extent[k];
                flat /= extent[k];
            }
            let f = self.flat_index(&idx);
            if !inside[f] {
                continue;
            }
            let c = self.center(f);
            let rel: Vec<f64> = c.iter().zip(&cut.center).map(|(a, b)| a - b).collect();
            let along: f64 = rel.iter().zip(&cut.normal).map(|(a, b)| a * b).sum();
            let dist = rel.iter().map(|a| a * a).sum::<f64>().sqrt();
            if along.abs() <= cut.half_width && dist <= cut.radius {
                inside[f] = false;
            }
        }
    }

    /// The slab removed around a level-`H` saddle.
    ///
    /// At `H = U(σ)` the two sides of the neck touch only at `σ`, but cell
    /// centres on either side are below `H` and would be joined by the fill.
    /// Any face-adjacent path crossing the hyperplane through `σ` normal to
    /// `e₁` visits a cell centre within `h√d/2` of it, so removing that slab
    /// near `σ` separates the sides. Far from `σ` the quadratic model keeps
    /// the slab above `H`, which bounds the radius.
    pub fn neck_cut(&self, saddle: &CriticalPoint, e1: &[f64]) -> NeckCut {
        let d = self.dim();
        let h = self.spacing.iter().cloned().fold(0.0, f64::max);
        let half_width = h * (d as f64).sqrt() / 2.0;
        let lambda1 = -saddle.eigenvalues[0];
        let lambda_min = saddle.eigenvalues.get(1).copied().unwrap_or(lambda1);
        let radius = half_width * (2.0 * (lambda1 / lambda_min).sqrt() + 2.0) + 2.0 * h;
        NeckCut { center: saddle.location.clone(), normal: e1.to_vec(), half_width, radius }
    }

    fn meta(&self, level: f64) -> GridMeta {
        GridMeta {
            bounds: self.bounds.clone(),
            cells_per_axis: self.n,
            spacing: self.spacing.clone(),
            level_tolerance: level_tolerance(level),
        }
    }
}

/// Cells with centre `x`, `|(x-σ)·e₁| ≤ half_width` and `|x-σ| ≤ radius`
/// are removed from the sublevel set.
#[derive(Debug, Clone, PartialEq)]
pub struct NeckCut {
    pub center: Vec<f64>,
    pub normal: Vec<f64>,
    pub half_width: f64,
    pub radius: f64,
}

/// A gate saddle `σ ∈ Σ₀` with its unstable direction oriented toward `H₀`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub saddle: CriticalPoint,
    /// Unit Hessian eigenvector `e₁` pointing into the home valley.
    pub toward_home: Vec<f64>,
    /// Grid label of the `H₁` component on the far side of the gate.
    pub far_component: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimumLabel {
    pub location: Vec<f64>,
    pub value: f64,
    /// `None` when `U(m) ≥ H`.
    pub component: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValleyStructure {
    /// Level used for the construction (after any tie shift).
    pub level: f64,
    pub requested_level: f64,
    pub start: CriticalPoint,
    pub home_component: u32,
    pub component_count: u32,
    /// `Σ₀`.
    pub gates: Vec<Gate>,
    /// Every index-1 saddle at level `H`, gate or not.
    pub level_saddles: Vec<Vec<f64>>,
    /// `M₀`.
    pub minima_home: Vec<CriticalPoint>,
    /// `M₁`.
    pub minima_far: Vec<CriticalPoint>,
    /// `M₀★`.
    pub deepest: Vec<CriticalPoint>,
    pub h0: f64,
    pub minima_labels: Vec<MinimumLabel>,
    pub grid: GridMeta,
    pub warnings: Vec<String>,
}

impl ValleyStructure {
    pub fn exponent(&self) -> f64 {
        self.level - self.h0
    }
}

/// Builds the valley structure at level `level` on a fresh grid.
pub fn build_valley_structure(
    spec: &LandscapeSpec,
    crits: &[CriticalPoint],
    m0: &CriticalPoint,
    level: f64,
    bounds: &Bounds,
    cells_per_axis: usize,
) -> Result<ValleyStructure, TopologyError> {
    let grid = SublevelGrid::new(spec, bounds, cells_per_axis)?;
    build_on_grid(&grid, crits, m0, level)
}

/// As [`build_valley_structure`], reusing sampled values.
pub fn build_on_grid(
    grid: &SublevelGrid,
    crits: &[CriticalPoint],
    m0: &CriticalPoint,
    requested_level: f64,
) -> Result<ValleyStructure, TopologyError> {
    if m0.kind != CriticalKind::Minimum {
        return Err(TopologyError::InvalidInput(format!("start point {:?} is not a minimum", m0.location)));
    }
    if !(m0.value < requested_level) {
        return Err(TopologyError::InconsistentLevel(format!(
            "level {requested_level} does not exceed U(m0) = {}",
            m0.value
        )));
    }
    let mut warnings = Vec::new();
    let mut level = requested_level;
    let tol = level_tolerance(level);
    if let Some(c) = crits.iter().find(|c| c.kind != CriticalKind::Saddle && (c.value - level).abs() <= tol) {
        level += TIE_SHIFT;
        let msg = format!(
            "critical value {} at {:?} ties with the level; shifted H to {level}",
            c.value, c.location
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    let mut level_saddles = Vec::new();
    let mut cuts = Vec::new();
    for s in crits.iter().filter(|c| c.kind == CriticalKind::Saddle && (c.value - level).abs() <= tol) {
        let (_, vecs) = sym_eig(&s.hessian)?;
        let e1: Vec<f64> = vecs.column(0).iter().copied().collect();
        cuts.push(grid.neck_cut(s, &e1));
        level_saddles.push((s, e1));
    }

    let labels = grid.label(level, &cuts);
    let mut component_count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let home = grid.component_at(&labels, &m0.location).ok_or_else(|| {
        TopologyError::InconsistentLevel(format!("start point {:?} lies in no component of {{U < {level}}}", m0.location))
    })?;

    let mut minima_labels = Vec::new();
    let mut minima_home = Vec::new();
    let mut minima_far = Vec::new();
    for c in crits.iter().filter(|c| c.kind == CriticalKind::Minimum) {
        let component = if c.value < level {
            // A well too shallow for the grid to see is its own component.
            let comp = grid.component_at(&labels, &c.location).unwrap_or_else(|| {
                component_count += 1;
                component_count - 1
            });
            if comp == home {
                minima_home.push(c.clone());
            } else {
                minima_far.push(c.clone());
            }
            Some(comp)
        } else {
            None
        };
        minima_labels.push(MinimumLabel { location: c.location.clone(), value: c.value, component });
    }
    if !minima_home.iter().any(|m| m.location == m0.location) {
        minima_home.push(m0.clone());
    }

    let r = 2.0 * grid.spacing().iter().cloned().fold(0.0, f64::max);
    let mut gates = Vec::new();
    for (s, e1) in &level_saddles {
        let probe = |sign: f64| -> Vec<f64> { s.location.iter().zip(e1).map(|(x, e)| x + sign * r * e).collect() };
        let plus = grid.component_at(&labels, &probe(1.0));
        let minus = grid.component_at(&labels, &probe(-1.0));
        let (toward_home, far) = match (plus, minus) {
            (Some(p), Some(m)) if p == home && m != home => (e1.clone(), m),
            (Some(p), Some(m)) if m == home && p != home => (e1.iter().map(|v| -v).collect(), p),
            _ => continue,
        };
        gates.push(Gate { saddle: (*s).clone(), toward_home, far_component: far });
    }
    if gates.is_empty() {
        return Err(TopologyError::GateNotFound { level });
    }
    let level_saddles = level_saddles.into_iter().map(|(s, _)| s.location.clone()).collect();

    let h0 = minima_home.iter().map(|m| m.value).fold(f64::INFINITY, f64::min);
    let deep_tol = 1e-9 * (1.0 + h0.abs());
    let deepest = minima_home.iter().filter(|m| m.value - h0 <= deep_tol).cloned().collect();

    Ok(ValleyStructure {
        level,
        requested_level,
        start: m0.clone(),
        home_component: home,
        component_count,
        gates,
        level_saddles,
        minima_home,
        minima_far,
        deepest,
        h0,
        minima_labels,
        grid: grid.meta(level),
        warnings,
    })
}

/// Smallest saddle value at which every target minimum lies beyond a gate of
/// the start point's valley.
pub fn auto_gate_level(
    grid: &SublevelGrid,
    crits: &[CriticalPoint],
    m0: &CriticalPoint,
    targets: &[Vec<f64>],
) -> Result<f64, TopologyError> {
    if targets.is_empty() {
        return Err(TopologyError::InvalidInput("auto gate level needs at least one target".into()));
    }
    let radius = 1e-6 * grid.bounds.diameter();
    let mut levels: Vec<f64> = crits
        .iter()
        .filter(|c| c.kind == CriticalKind::Saddle && c.value > m0.value)
        .map(|c| c.value)
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() <= level_tolerance(*b));
    for h in levels {
        let Ok(vs) = build_on_grid(grid, crits, m0, h) else { continue };
        let reached = targets
            .iter()
            .all(|t| vs.minima_far.iter().any(|m| m.distance(t) <= radius));
        if reached {
            return Ok(h);
        }
    }
    Err(TopologyError::UnreachableTarget { targets: targets.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{catalog, SkewGenerator};
    use crate::topology::find_critical_points;

    fn setup(name: &str) -> (LandscapeSpec, Vec<CriticalPoint>, Bounds) {
        let b = catalog::get(name).unwrap().default_box;
        let skew = if b.dim() == 2 { SkewGenerator::planar(1.0) } else { SkewGenerator::Zero { dim: 1 } };
        let spec = LandscapeSpec::builtin(name, skew).unwrap();
        let crits = find_critical_points(&spec, &b, 20).unwrap();
        (spec, crits, b)
    }

    fn near(c: &CriticalPoint, x: &[f64]) -> bool {
        c.distance(x) < 1e-6
    }

    #[test]
    fn doublewell2d_valley() {
        let (spec, crits, b) = setup("doublewell2d");
        let m0 = crits.iter().find(|c| near(c, &[-1.0, 0.0])).unwrap();
        let vs = build_valley_structure(&spec, &crits, m0, 0.25, &b, 400).unwrap();
        assert_eq!(vs.level, 0.25);
        assert_eq!(vs.gates.len(), 1);
        assert!(near(&vs.gates[0].saddle, &[0.0, 0.0]));
        assert_eq!(vs.gates[0].toward_home, vec![-1.0, 0.0]);
        assert_eq!(vs.minima_far.len(), 1);
        assert!(near(&vs.minima_far[0], &[1.0, 0.0]));
        assert!(vs.h0.abs() < 1e-15);
        assert_eq!(vs.deepest.len(), 1);
        assert!(near(&vs.deepest[0], &[-1.0, 0.0]));
        assert_eq!(vs.component_count, 2);
    }

    #[test]
    fn doublewell1d_valley() {
        let (spec, crits, b) = setup("doublewell1d");
        let m0 = crits.iter().find(|c| near(c, &[1.0])).unwrap();
        let vs = build_valley_structure(&spec, &crits, m0, 0.25, &b, 4000).unwrap();
        assert_eq!(vs.gates.len(), 1);
        assert_eq!(vs.gates[0].toward_home, vec![1.0]);
        assert!(near(&vs.minima_far[0], &[-1.0]));
    }

    #[test]
    fn level_errors() {
        let (spec, crits, b) = setup("doublewell2d");
        let m0 = crits.iter().find(|c| near(c, &[-1.0, 0.0])).unwrap();
        assert!(matches!(
            build_valley_structure(&spec, &crits, m0, -0.1, &b, 100),
            Err(TopologyError::InconsistentLevel(_))
        ));
        // no saddle at this level
        assert!(matches!(
            build_valley_structure(&spec, &crits, m0, 0.1, &b, 100),
            Err(TopologyError::GateNotFound { .. })
        ));
        let saddle = crits.iter().find(|c| c.kind == CriticalKind::Saddle).unwrap();
        assert!(matches!(
            build_valley_structure(&spec, &crits, saddle, 0.3, &b, 100),
            Err(TopologyError::InvalidInput(_))
        ));
    }

    #[test]
    fn triplewell_levels() {
        let (spec, crits, b) = setup("triplewell2d");
        let grid = SublevelGrid::new(&spec, &b, 400).unwrap();
        let m_a = crits[0].clone();
        let (m_b, m_c) = (crits[1].location.clone(), crits[2].location.clone());
        let (s1, s2) = (crits[3].value, crits[4].value);

        let low = build_on_grid(&grid, &crits, &m_a, s1).unwrap();
        assert_eq!(low.minima_far.len(), 1);
        assert!(near(&low.minima_far[0], &m_b));
        assert_eq!(low.gates.len(), 1);

        let high = build_on_grid(&grid, &crits, &m_a, s2).unwrap();
        assert_eq!(high.minima_far.len(), 1);
        assert!(near(&high.minima_far[0], &m_c));
        assert_eq!(high.minima_home.len(), 2);
        assert_eq!(high.deepest.len(), 1);
        assert!(near(&high.deepest[0], &m_a.location));

        assert_eq!(auto_gate_level(&grid, &crits, &m_a, std::slice::from_ref(&m_b)).unwrap(), s1);
        assert_eq!(auto_gate_level(&grid, &crits, &m_a, std::slice::from_ref(&m_c)).unwrap(), s2);
        assert!(matches!(
            auto_gate_level(&grid, &crits, &m_a, std::slice::from_ref(&m_a.location)),
            Err(TopologyError::UnreachableTarget { .. })
        ));
    }

    #[test]
    fn refinement_is_stable() {
        let (spec, crits, b) = setup("triplewell2d");
        let m0 = crits[0].clone();
        for h in [crits[3].value, crits[4].value] {
            let coarse = build_valley_structure(&spec, &crits, &m0, h, &b, 200).unwrap();
            let fine = build_valley_structure(&spec, &crits, &m0, h, &b, 400).unwrap();
            let locs = |v: &ValleyStructure| v.gates.iter().map(|g| g.saddle.location.clone()).collect::<Vec<_>>();
            assert_eq!(locs(&coarse), locs(&fine));
            assert_eq!(coarse.minima_far, fine.minima_far);
            assert_eq!(coarse.minima_home, fine.minima_home);
        }
    }

    #[test]
    fn tie_with_minimum_shifts_level() {
        let (spec, crits, b) = setup("triplewell2d");
        let m_a = crits[0].clone();
        let s2 = crits[4].value;
        // The far well's value is a legal level only through the tie shift.
        let m_c_value = crits[2].value;
        let r = build_valley_structure(&spec, &crits, &m_a, m_c_value, &b, 200);
        match r {
            Err(TopologyError::GateNotFound { level }) => assert_eq!(level, m_c_value + TIE_SHIFT),
            other => panic!("unexpected {other:?}"),
        }
        assert!(s2 > m_c_value);
    }

    #[test]
    fn rejects_high_dimension() {
        use crate::landscape::Polynomial;
        use std::sync::Arc;
        let spec = LandscapeSpec::new("q4", Arc::new(Polynomial::quadratic(4)), SkewGenerator::Zero { dim: 4 }).unwrap();
        assert!(matches!(
            SublevelGrid::new(&spec, &Bounds::cube(4, 1.0), 10),
            Err(TopologyError::DimensionTooLarge(4))
        ));
    }
}
