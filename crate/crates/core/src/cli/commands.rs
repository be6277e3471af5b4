use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use super::{CliError, Command, RunConfig};
use crate::kramers::{ek_constant, predict, EkPrediction};
use crate::landscape::{halton_probes, LandscapeError, LandscapeSpec};
use crate::linalg::Bounds;
use crate::saddlecheck::{
    boundary_asymptotics, face_cover, generator_residual, reduced_det_check, side_face_excess, SaddleBox,
};
use crate::simulate::{
    default_dt, default_guard_radius, gibbs_histogram, run_ensemble, tv_distance, Ball, EnsembleResult, SimConfig,
};
use crate::topology::{
    auto_gate_level, build_on_grid, default_cells_per_axis, find_critical_points, CriticalKind, CriticalPoint,
    SublevelGrid, ValleyStructure, MAX_VALLEY_DIM,
};

/// Report, CSV tables and summary lines of one command.
#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub report: Value,
    pub csv: Vec<(String, String)>,
    pub seeds: Vec<u64>,
    pub summary: Vec<String>,
}

/// A failure, with the partial output when there is something worth writing.
pub type Failure = (Option<Box<CommandOutput>>, CliError);

fn model(e: impl std::fmt::Display) -> CliError {
    CliError::Model(e.to_string())
}

fn bare(e: CliError) -> Failure {
    (None, e)
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

struct Context {
    spec: LandscapeSpec,
    bounds: Bounds,
    crits: Vec<CriticalPoint>,
    certificates: Value,
    certified: Result<(), CliError>,
}

fn context(cfg: &RunConfig) -> Result<Context, CliError> {
    let spec = cfg.landscape.build().map_err(|e| match e {
        LandscapeError::NonFinite { .. } => model(e),
        other => CliError::Config(format!("config: landscape: {other}")),
    })?;
    let bounds = cfg.landscape.search_box();
    if bounds.dim() != spec.dim() || !bounds.is_valid() {
        return Err(CliError::Config("config: landscape box is invalid or has the wrong dimension".into()));
    }
    let probes = halton_probes(&bounds, cfg.search.probes);
    let invariants = spec.check_invariants(&probes);
    let ortho = spec.certify_orthogonality(&probes);
    let certified = if !invariants.pass || !ortho.pass {
        Err(CliError::Model(format!(
            "orthogonality certificate failed: max skew defect of J = {:.3e}, max |∇U·ℓ| = {:.3e}, \
             max |div ℓ| = {:.3e} (worst probe {:?})",
            invariants.max_skew_defect, ortho.max_dot, ortho.max_divergence, ortho.worst_probe
        )))
    } else {
        Ok(())
    };
    let certificates = json!({ "invariants": invariants, "orthogonality": ortho });
    let crits = if certified.is_ok() {
        find_critical_points(&spec, &bounds, cfg.search.seeds_per_axis).map_err(model)?
    } else {
        Vec::new()
    };
    Ok(Context { spec, bounds, crits, certificates, certified })
}

fn snap(ctx: &Context, x: &[f64], what: &str) -> Result<CriticalPoint, CliError> {
    if x.len() != ctx.spec.dim() {
        return Err(CliError::Config(format!("config: {what} has dimension {}, expected {}", x.len(), ctx.spec.dim())));
    }
    let best = ctx
        .crits
        .iter()
        .filter(|c| c.kind == CriticalKind::Minimum)
        .min_by(|a, b| a.distance(x).total_cmp(&b.distance(x)));
    match best {
        Some(m) if m.distance(x) <= 0.1 * ctx.bounds.diameter() => Ok(m.clone()),
        _ => Err(CliError::Config(format!("config: {what} {x:?} is not near any located minimum"))),
    }
}

fn start_minimum(ctx: &Context, cfg: &RunConfig) -> Result<CriticalPoint, CliError> {
    match &cfg.start {
        Some(x) => snap(ctx, x, "start"),
        None => ctx
            .crits
            .iter()
            .find(|c| c.kind == CriticalKind::Minimum)
            .cloned()
            .ok_or_else(|| CliError::Model("no minimum found in the search box".into())),
    }
}

fn valley(ctx: &Context, cfg: &RunConfig) -> Result<ValleyStructure, CliError> {
    let d = ctx.spec.dim();
    if d > MAX_VALLEY_DIM {
        return Err(model(crate::topology::TopologyError::DimensionTooLarge(d)));
    }
    let m0 = start_minimum(ctx, cfg)?;
    let cells = cfg.search.cells_per_axis.unwrap_or_else(|| default_cells_per_axis(d));
    let grid = SublevelGrid::new(&ctx.spec, &ctx.bounds, cells).map_err(model)?;
    if let Some(level) = cfg.level {
        return build_on_grid(&grid, &ctx.crits, &m0, level).map_err(model);
    }
    if let Some(targets) = &cfg.targets {
        let snapped = targets
            .iter()
            .map(|t| snap(ctx, t, "target").map(|m| m.location))
            .collect::<Result<Vec<_>, _>>()?;
        let level = auto_gate_level(&grid, &ctx.crits, &m0, &snapped).map_err(model)?;
        return build_on_grid(&grid, &ctx.crits, &m0, level).map_err(model);
    }
    // Lowest saddle level that opens a gate out of the start valley.
    let mut last = None;
    let mut levels: Vec<f64> =
        ctx.crits.iter().filter(|c| c.kind == CriticalKind::Saddle && c.value > m0.value).map(|c| c.value).collect();
    levels.sort_by(f64::total_cmp);
    for h in levels {
        match build_on_grid(&grid, &ctx.crits, &m0, h) {
            Ok(vs) if !vs.gates.is_empty() && !vs.minima_far.is_empty() => return Ok(vs),
            Ok(_) => {}
            Err(e) => last = Some(e),
        }
    }
    Err(model(last.map_or_else(|| "no saddle above the start minimum opens a gate".to_string(), |e| e.to_string())))
}

fn critical_csv(crits: &[CriticalPoint]) -> String {
    let d = crits.first().map_or(0, |c| c.location.len());
    let mut out = String::from("index,kind,value");
    for k in 0..d {
        let _ = write!(out, ",x{k}");
    }
    for k in 0..d {
        let _ = write!(out, ",eig{k}");
    }
    out.push('\n');
    for (i, c) in crits.iter().enumerate() {
        let kind = match c.kind {
            CriticalKind::Minimum => "minimum".to_string(),
            CriticalKind::Saddle => "saddle_index_1".to_string(),
            CriticalKind::Other(k) => format!("index_{k}"),
        };
        let _ = write!(out, "{i},{kind},{}", c.value);
        for v in c.location.iter().chain(&c.eigenvalues) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn valley_summary(vs: &ValleyStructure) -> Value {
    json!({
        "level": vs.level,
        "requested_level": vs.requested_level,
        "h0": vs.h0,
        "exponent": vs.exponent(),
        "start": vs.start.location,
        "gates": vs.gates.iter().map(|g| &g.saddle.location).collect::<Vec<_>>(),
        "minima_home": vs.minima_home.iter().map(|m| &m.location).collect::<Vec<_>>(),
        "minima_far": vs.minima_far.iter().map(|m| &m.location).collect::<Vec<_>>(),
        "warnings": vs.warnings,
    })
}

fn analyze(ctx: &Context, cfg: &RunConfig) -> Result<CommandOutput, Failure> {
    let mut out = CommandOutput {
        report: json!({
            "landscape": ctx.spec.name(),
            "dim": ctx.spec.dim(),
            "box": ctx.bounds,
            "certificates": ctx.certificates,
        }),
        ..Default::default()
    };
    if let Err(e) = &ctx.certified {
        return Err((Some(Box::new(out)), CliError::Model(e.to_string())));
    }
    out.report["critical_points"] = to_value(&ctx.crits);
    out.csv.push(("critical_points.csv".into(), critical_csv(&ctx.crits)));
    out.summary.push(format!("{} critical points", ctx.crits.len()));
    match valley(ctx, cfg) {
        Ok(vs) => {
            let gates: Vec<Value> = vs
                .gates
                .iter()
                .map(|g| match ek_constant(&g.saddle, &ctx.spec, Some(&g.toward_home)) {
                    Ok(c) => json!({ "location": c.location, "lambda1": c.lambda1, "mu": c.mu,
                                     "omega": c.omega, "omega_rev": c.omega_rev }),
                    Err(e) => json!({ "location": g.saddle.location, "error": e.to_string() }),
                })
                .collect();
            out.summary.push(format!("level H = {}, {} gate(s)", vs.level, vs.gates.len()));
            out.report["valley"] = to_value(&vs);
            out.report["gate_constants"] = Value::Array(gates);
            Ok(out)
        }
        Err(e) => {
            out.report["valley_error"] = Value::String(e.to_string());
            Err((Some(Box::new(out)), e))
        }
    }
}

fn prediction(ctx: &Context, cfg: &RunConfig) -> Result<(ValleyStructure, EkPrediction), CliError> {
    ctx.certified.as_ref().map_err(|e| CliError::Model(e.to_string()))?;
    let vs = valley(ctx, cfg)?;
    let p = predict(&vs, &ctx.spec, cfg.epsilons()).map_err(model)?;
    Ok((vs, p))
}

fn cmd_predict(ctx: &Context, cfg: &RunConfig) -> Result<CommandOutput, Failure> {
    let (vs, p) = prediction(ctx, cfg).map_err(bare)?;
    Ok(CommandOutput {
        summary: p.times.iter().map(|t| format!("eps = {}: E[tau] = {:.6} (reversible {:.6})", t.epsilon, t.predicted, t.predicted_rev)).collect(),
        csv: vec![("prediction.csv".into(), p.to_csv())],
        report: json!({ "valley": valley_summary(&vs), "prediction": p }),
        seeds: Vec::new(),
    })
}

fn sim_config(ctx: &Context, cfg: &RunConfig, epsilon: f64, predicted: f64, seed: u64) -> SimConfig {
    let s = &cfg.simulation;
    let mut c = SimConfig::new(epsilon, s.dt.unwrap_or_else(|| default_dt(&ctx.crits)), s.n_traj, seed);
    c.t_max = s.t_max.unwrap_or(s.t_max_factor * predicted);
    c.ball_radius = s.ball_radius;
    c.guard_radius = Some(s.guard_radius.unwrap_or_else(|| default_guard_radius(&ctx.crits, &ctx.bounds)));
    c.adjoint = s.adjoint;
    c
}

fn ensembles(ctx: &Context, cfg: &RunConfig, seed: u64) -> Result<(ValleyStructure, EkPrediction, Vec<EnsembleResult>), CliError> {
    let (vs, p) = prediction(ctx, cfg)?;
    let mut results = Vec::new();
    for t in &p.times {
        let sc = sim_config(ctx, cfg, t.epsilon, t.predicted, seed);
        let targets: Vec<Ball> = vs.minima_far.iter().map(|m| Ball::new(m.location.clone(), sc.radius())).collect();
        results.push(run_ensemble(&vs.start.location, &targets, &ctx.spec, &sc).map_err(model)?);
    }
    Ok((vs, p, results))
}

fn summary_value(e: &EnsembleResult) -> Value {
    let mut v = to_value(e);
    if let Value::Object(m) = &mut v {
        m.remove("trajectories");
    }
    v
}

fn cmd_simulate(ctx: &Context, cfg: &RunConfig, seed: u64) -> Result<CommandOutput, Failure> {
    let (vs, _, results) = ensembles(ctx, cfg, seed).map_err(bare)?;
    Ok(CommandOutput {
        summary: results.iter().map(|r| format!("eps = {}: mean = {:.6} ± {:.6}", r.config.epsilon, r.mean, r.stderr)).collect(),
        csv: results.iter().map(|r| (format!("trajectories_eps{}.csv", r.config.epsilon), r.to_csv())).collect(),
        report: json!({ "valley": valley_summary(&vs), "ensembles": results }),
        seeds: vec![seed],
    })
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonRow {
    epsilon: f64,
    predicted: f64,
    predicted_rev: f64,
    empirical_mean: f64,
    ci_lo: f64,
    ci_hi: f64,
    ratio: f64,
    pass: bool,
}

fn cmd_compare(ctx: &Context, cfg: &RunConfig, seed: u64, tolerance: f64) -> Result<CommandOutput, Failure> {
    let (vs, p, results) = ensembles(ctx, cfg, seed).map_err(bare)?;
    let rows: Vec<ComparisonRow> = p
        .times
        .iter()
        .zip(&results)
        .map(|(t, r)| {
            let ratio = r.mean / t.predicted;
            ComparisonRow {
                epsilon: t.epsilon,
                predicted: t.predicted,
                predicted_rev: t.predicted_rev,
                empirical_mean: r.mean,
                ci_lo: r.ci95.0,
                ci_hi: r.ci95.1,
                ratio,
                pass: (ratio - 1.0).abs() <= tolerance,
            }
        })
        .collect();
    let mut by_eps: Vec<&ComparisonRow> = rows.iter().collect();
    by_eps.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let trend = by_eps.windows(2).all(|w| (w[1].ratio - 1.0).abs() <= (w[0].ratio - 1.0).abs());
    let pass = rows.iter().all(|r| r.pass);
    let mut csv = String::from("epsilon,predicted,predicted_rev,empirical_mean,ci_lo,ci_hi,ratio\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{},{},{}", r.epsilon, r.predicted, r.predicted_rev, r.empirical_mean, r.ci_lo, r.ci_hi, r.ratio);
    }
    let mut summary: Vec<String> = rows
        .iter()
        .map(|r| format!("eps = {}: empirical/predicted = {:.4} {}", r.epsilon, r.ratio, if r.pass { "ok" } else { "out of tolerance" }))
        .collect();
    summary.push(if pass { "PASS".into() } else { "FAIL".into() });
    Ok(CommandOutput {
        report: json!({
            "valley": valley_summary(&vs),
            "prediction": p,
            "ensembles": results.iter().map(summary_value).collect::<Vec<_>>(),
            "rows": rows,
            "tolerance": tolerance,
            "trend_non_increasing": trend,
            "verdict": if pass { "PASS" } else { "FAIL" },
        }),
        csv: std::iter::once(("comparison.csv".to_string(), csv))
            .chain(results.iter().map(|r| (format!("trajectories_eps{}.csv", r.config.epsilon), r.to_csv())))
            .collect(),
        seeds: vec![seed],
        summary,
    })
}

fn cmd_gibbs(ctx: &Context, cfg: &RunConfig, seed: u64) -> Result<CommandOutput, Failure> {
    ctx.certified.as_ref().map_err(|e| bare(CliError::Model(e.to_string())))?;
    let g = &cfg.gibbs;
    let start = start_minimum(ctx, cfg).map_err(bare)?;
    let bounds = g.bounds.clone().unwrap_or_else(|| ctx.bounds.clone());
    let mut sc = SimConfig::new(g.epsilon, cfg.simulation.dt.unwrap_or_else(|| default_dt(&ctx.crits)), 1, seed);
    sc.t_max = g.burn_in + g.duration;
    sc.guard_radius = Some(cfg.simulation.guard_radius.unwrap_or_else(|| default_guard_radius(&ctx.crits, &ctx.bounds)));
    let run = |spec: &LandscapeSpec| {
        gibbs_histogram(spec, &sc, &start.location, g.burn_in, g.duration, &bounds, g.bins).map_err(|e| bare(model(e)))
    };
    let h = run(&ctx.spec)?;
    let rev = if g.compare_reversible && !ctx.spec.is_reversible() { Some(run(&ctx.spec.reversible())?) } else { None };
    let between = rev.as_ref().map(|r| tv_distance(&h.empirical, &r.empirical));

    let d = bounds.dim();
    let mut csv = String::from("bin");
    for k in 0..d {
        let _ = write!(csv, ",c{k}");
    }
    csv.push_str(",empirical,reference");
    if rev.is_some() {
        csv.push_str(",empirical_reversible");
    }
    csv.push('\n');
    for b in 0..h.empirical.len() {
        let _ = write!(csv, "{b}");
        let mut flat = b;
        for k in 0..d {
            let i = flat % g.bins;
            flat /= g.bins;
            let w = (bounds.hi[k] - bounds.lo[k]) / g.bins as f64;
            let _ = write!(csv, ",{}", bounds.lo[k] + w * (i as f64 + 0.5));
        }
        let _ = write!(csv, ",{},{}", h.empirical[b], h.reference[b]);
        if let Some(r) = &rev {
            let _ = write!(csv, ",{}", r.empirical[b]);
        }
        csv.push('\n');
    }
    let mut summary = vec![format!("TV(empirical, Gibbs) = {:.5}", h.tv_distance)];
    if let (Some(r), Some(b)) = (&rev, between) {
        summary.push(format!("TV(reversible, Gibbs) = {:.5}, TV(non-reversible, reversible) = {:.5}", r.tv_distance, b));
    }
    Ok(CommandOutput {
        report: json!({
            "epsilon": g.epsilon,
            "start": start.location,
            "box": bounds,
            "bins_per_axis": g.bins,
            "steps": h.steps,
            "tv_distance": h.tv_distance,
            "outside_fraction": h.outside_fraction,
            "reversible": rev.as_ref().map(|r| json!({ "tv_distance": r.tv_distance, "outside_fraction": r.outside_fraction })),
            "tv_between": between,
        }),
        csv: vec![("histogram.csv".into(), csv)],
        seeds: vec![seed],
        summary,
    })
}

fn cmd_saddle_check(ctx: &Context, cfg: &RunConfig) -> Result<CommandOutput, Failure> {
    ctx.certified.as_ref().map_err(|e| bare(CliError::Model(e.to_string())))?;
    let vs = valley(ctx, cfg).map_err(bare)?;
    let sc = &cfg.saddle_check;
    let mut gates = Vec::new();
    let mut csv = Vec::new();
    let mut summary = Vec::new();
    for (i, g) in vs.gates.iter().enumerate() {
        let home = Some(g.toward_home.as_slice());
        let face = boundary_asymptotics(&ctx.spec, &g.saddle, home, &sc.ladder, sc.j_box).map_err(|e| bare(model(e)))?;
        let residual = generator_residual(&ctx.spec, &g.saddle, home, &sc.ladder, sc.j_box).map_err(|e| bare(model(e)))?;
        let ek = ek_constant(&g.saddle, &ctx.spec, home).map_err(|e| bare(model(e)))?;
        let last = *sc.ladder.last().unwrap_or(&1e-4);
        let bx = SaddleBox::new(&g.saddle.location, g.saddle.value, &ek.spectrum, last, sc.j_box).map_err(|e| bare(model(e)))?;
        let cover = face_cover(&ctx.spec, &bx, &ek.spectrum, sc.cover_a, 1000);
        let excess = side_face_excess(&ctx.spec, &bx, 1000);
        let rdc = reduced_det_check(&ek.spectrum);
        summary.push(format!(
            "gate {:?}: final ratio {:.6}, approaches 1: {}",
            g.saddle.location,
            face.rows.last().map_or(f64::NAN, |r| r.ratio),
            face.approaches_one()
        ));
        let mut rcsv = String::from("epsilon,residual_ratio\n");
        for r in &residual {
            let _ = writeln!(rcsv, "{},{}", r.epsilon, r.ratio);
        }
        csv.push((format!("face_{i}.csv"), face.to_csv()));
        csv.push((format!("residual_{i}.csv"), rcsv));
        gates.push(json!({
            "face": face,
            "approaches_one": face.approaches_one(),
            "generator_residual": residual,
            "reduced_det_rel_diff": rdc,
            "face_cover": cover,
            "side_face_min_excess": excess,
        }));
    }
    Ok(CommandOutput {
        report: json!({ "valley": valley_summary(&vs), "j_box": sc.j_box, "ladder": sc.ladder, "gates": gates,
                        "note": "integrals are scaled by exp(H/eps)" }),
        csv,
        seeds: Vec::new(),
        summary,
    })
}

/// Runs one command on a resolved config.
pub fn run_command(cmd: Command, cfg: &RunConfig, seed: u64, tolerance: f64) -> Result<CommandOutput, Failure> {
    let ctx = context(cfg).map_err(bare)?;
    match cmd {
        Command::Analyze => analyze(&ctx, cfg),
        Command::Predict => cmd_predict(&ctx, cfg),
        Command::Simulate => cmd_simulate(&ctx, cfg, seed),
        Command::Compare => cmd_compare(&ctx, cfg, seed, tolerance),
        Command::Gibbs => cmd_gibbs(&ctx, cfg, seed),
        Command::SaddleCheck => cmd_saddle_check(&ctx, cfg),
    }
}
