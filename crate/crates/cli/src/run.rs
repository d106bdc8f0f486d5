//! One function per experiment, each producing a JSON result and an
//! optional CSV table.

use std::sync::Arc;

use critlab::blowup::{
    concentration_diagnostics, extremal_equation_fit, quadratic_schedule, sphere_counterexample_family,
    FamilyMember,
};
use critlab::functional::{
    classify_with, solve_subcritical, solve_subcritical_with, ContinuationSchedule, MinimizeOptions, Triple,
    CLASSIFY_BAND_REL, RESOLVED_CELLS,
};
use critlab::green::{build_green, default_delta, default_window, fit_mass, mass, verify_bounds};
use critlab::manifold::critical_exponent;
use critlab::search::{
    b0_proxy_potential, bisect_t0_with, htestfn_direction, laplacian_blowup_probe, BisectOptions, PathKind, PathSpec,
};
use critlab::testfn::{aubin_quotient, criterion_gap, dim3_weakly_critical_test, AubinParams};
use critlab::{Field, ManifoldModel};
use serde_json::{json, Value};

use crate::config::{ConfigError, ExperimentConfig};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Solver(critlab::Error),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<critlab::Error> for RunError {
    fn from(e: critlab::Error) -> Self {
        RunError::Solver(e)
    }
}

type RunResult<T> = Result<T, RunError>;

/// Header plus rows, already formatted.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

pub struct Outcome {
    pub result: Value,
    pub tolerances: Value,
    pub table: Option<Table>,
}

fn bad<T>(msg: impl Into<String>) -> RunResult<T> {
    Err(RunError::Config(ConfigError(msg.into())))
}

fn triple(cfg: &ExperimentConfig, m: &Arc<ManifoldModel>) -> RunResult<Triple> {
    let h = cfg.field("h", m, None)?;
    let f = cfg.field("f", m, Some("const(1)"))?;
    Triple::new(h, f).map_err(|e| RunError::Config(ConfigError(format!("invalid triple: {e}"))))
}

fn schedule(cfg: &ExperimentConfig, n: usize) -> RunResult<ContinuationSchedule> {
    let mut s = ContinuationSchedule::default_for(n);
    s.tol = cfg.positive("tol", s.tol)?;
    Ok(s)
}

fn band(cfg: &ExperimentConfig) -> RunResult<f64> {
    Ok(cfg.positive("band", CLASSIFY_BAND_REL)?)
}

pub fn run(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    match cfg.experiment.as_str() {
        "solve" => solve(cfg),
        "classify" => classify(cfg),
        "bisect" => bisect(cfg),
        "green" => green(cfg),
        "mass" => mass_cmd(cfg),
        "blowup" => blowup(cfg),
        "counterexample" => counterexample(cfg),
        "testfn" => testfn(cfg),
        "probe" => probe(cfg),
        other => bad(format!("unknown experiment '{other}'")),
    }
}

fn solve(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let m = cfg.manifold()?;
    let t = triple(cfg, &m)?;
    let crit = t.critical_exponent();
    let q = cfg.get("q", 0.5 * (2.0 + crit))?;
    if !(q > 2.0 && q < crit) {
        return bad(format!("q must lie in (2, {crit})"));
    }
    let tol = cfg.positive("tol", 1e-8)?;
    let rep = solve_subcritical(&t, q, tol)?;
    let mut table = Table::new(&["node", "r", "u"]);
    for (i, u) in rep.u.values().iter().enumerate() {
        table.push(vec![i.to_string(), fmt(m.node_coords(i).r), fmt(*u)]);
    }
    Ok(Outcome {
        result: json!({
            "q": q,
            "lambda": rep.lambda,
            "residual": rep.residual,
            "iterations": rep.iterations,
            "u_min": rep.u.min(),
            "u_max": rep.u.max(),
            "argmax": m.node_point(rep.u.argmax()),
            "ceiling": t.ceiling().value,
        }),
        tolerances: json!({ "solver_tol": tol }),
        table: Some(table),
    })
}

fn classify(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let m = cfg.manifold()?;
    let t = triple(cfg, &m)?;
    let sched = schedule(cfg, m.dim())?;
    let band_rel = band(cfg)?;
    let rep = classify_with(&t, &sched, band_rel)?;
    let mut rows: Vec<(f64, f64, bool)> = rep.sequence.iter().map(|&(q, l)| (q, l, true)).collect();
    rows.extend(rep.dropped.iter().map(|&(q, l)| (q, l, false)));
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut table = Table::new(&["q", "lambda", "resolved"]);
    for (q, l, ok) in &rows {
        table.push(vec![fmt(*q), fmt(*l), ok.to_string()]);
    }
    Ok(Outcome {
        result: json!({
            "lambda": rep.lambda,
            "ceiling": rep.ceiling,
            "band": rep.band,
            "classification": rep.classification.label(),
            "gap": rep.classification.gap(),
            "sequence": rep.sequence,
            "dropped": rep.dropped,
        }),
        tolerances: json!({ "schedule": sched, "band_rel": band_rel, "resolved_cells": RESOLVED_CELLS }),
        table: Some(table),
    })
}

fn path_kind(s: &str) -> RunResult<PathKind> {
    Ok(match s {
        "h_minus_t_eta" => PathKind::HMinusTEta,
        "h_test_fn" => PathKind::HTestFn,
        "f_linear_to_one" => PathKind::FLinearToOne,
        "f_linear_to_sup" => PathKind::FLinearToSup,
        other => return bad(format!("unknown path '{other}'")),
    })
}

fn aubin_params(cfg: &ExperimentConfig, m: &ManifoldModel, k: f64) -> RunResult<AubinParams> {
    let p = cfg.point("x0", m)?;
    let delta = cfg.positive("delta", 0.5 * m.injectivity_radius())?;
    Ok(AubinParams { k, p, delta })
}

fn bisect(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let m = cfg.manifold()?;
    let kind = path_kind(cfg.str("path").unwrap_or("h_minus_t_eta"))?;
    let base = if kind == PathKind::HTestFn && cfg.str("h").is_none() {
        let h = Field::constant(&m, b0_proxy_potential(&m, 0.0)?);
        let f = cfg.field("f", &m, Some("const(1)"))?;
        Triple::new(h, f).map_err(|e| RunError::Config(ConfigError(format!("invalid triple: {e}"))))?
    } else {
        triple(cfg, &m)?
    };
    let direction = match (kind, cfg.str("eta")) {
        (_, Some(_)) => cfg.field("eta", &m, None)?,
        (PathKind::HTestFn, None) => {
            let k = cfg.list("k", &[10.0])?[0];
            htestfn_direction(&m, &aubin_params(cfg, &m, k)?)?
        }
        (PathKind::HMinusTEta, None) => return bad("path h_minus_t_eta needs eta"),
        _ => base.f.clone(),
    };
    let t_range = (cfg.get("t_min", 0.0)?, cfg.get("t_max", 1.0)?);
    let alpha = cfg.get("alpha", 0.0)?;
    let path = PathSpec::new(kind, base, direction, t_range, alpha)
        .map_err(|e| RunError::Config(ConfigError(format!("invalid path: {e}"))))?;
    let mut opts = BisectOptions::new(cfg.positive("tol_t", 1e-3)?);
    opts.band_rel = band(cfg)?;
    opts.scan_points = cfg.get("scan", 0)?;
    opts.schedule = Some(schedule(cfg, m.dim())?);
    let rep = bisect_t0_with(&path, &opts)?;
    let mut table = Table::new(&["t", "lambda", "ceiling", "classification", "gap", "coercivity_margin"]);
    for s in &rep.samples {
        table.push(vec![
            fmt(s.t),
            fmt(s.lambda),
            fmt(s.ceiling),
            s.classification.label().into(),
            fmt(s.classification.gap()),
            s.coercivity_margin.map(fmt).unwrap_or_default(),
        ]);
    }
    Ok(Outcome {
        result: json!({
            "t0": rep.t0,
            "bracket": [rep.bracket.0, rep.bracket.1],
            "outcome": rep.outcome,
            "monotone": rep.monotone,
            "evaluations": rep.samples.len(),
            "samples": rep.samples,
            "witness_lambda": rep.witness.as_ref().map(|w| w.lambda),
        }),
        tolerances: json!({
            "tol_t": opts.tol_t,
            "band_rel": opts.band_rel,
            "lambda_resolution_rel": opts.lambda_resolution_rel,
            "schedule": opts.schedule,
        }),
        table: Some(table),
    })
}

fn green(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let m = cfg.manifold()?;
    let h = cfg.field("h", &m, None)?;
    let pole = cfg.point("pole", &m)?;
    let delta = cfg.positive("delta", default_delta(&m))?;
    let tol = cfg.positive("tol", 1e-12)?;
    let gf = build_green(&m, &h, &pole, delta, tol)?;
    let bounds = verify_bounds(&gf, delta)?;
    let mass = if m.dim() == 3 { Some(fit_mass(&gf, default_window(&m, delta))?) } else { None };
    let mut table = Table::new(&["d", "G"]);
    let g = gf.values();
    let mut order: Vec<usize> = (0..g.len()).filter(|&i| gf.distances()[i] > 0.0).collect();
    order.sort_by(|&a, &b| gf.distances()[a].partial_cmp(&gf.distances()[b]).unwrap());
    for i in order {
        table.push(vec![fmt(gf.distances()[i]), fmt(g[i])]);
    }
    Ok(Outcome {
        result: json!({
            "pole": gf.pole,
            "delta": delta,
            "weak_identity_error": gf.weak_identity_error,
            "bounds": bounds,
            "mass": mass,
        }),
        tolerances: json!({ "linear_tol": tol }),
        table: Some(table),
    })
}

fn mass_cmd(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let m = cfg.manifold()?;
    let h = cfg.field("h", &m, None)?;
    let pole = cfg.point("pole", &m)?;
    let est = mass(&m, &h, &pole, None)?;
    Ok(Outcome {
        result: json!({
            "pole": pole,
            "mass": est.mass,
            "stderr": est.stderr,
            "slope": est.slope,
            "window": [est.window.0, est.window.1],
            "points": est.points,
        }),
        tolerances: json!({ "linear_tol": 1e-12 }),
        table: None,
    })
}

fn concentration_table(family: &[FamilyMember], rep: &critlab::blowup::ConcentrationReport) -> Table {
    let mut header: Vec<String> =
        ["t", "mu_t", "m_t", "weak_sup", "strong_sup", "second_ratio"].iter().map(|s| s.to_string()).collect();
    header.extend(rep.radii.iter().map(|r| format!("ball_mass_{r}")));
    if rep.l2_ratio.is_some() {
        header.extend(rep.deltas.iter().map(|d| format!("l2_ratio_{d}")));
    }
    let mut table = Table { header, rows: Vec::new() };
    for (j, mem) in family.iter().enumerate() {
        let mut row = vec![
            fmt(mem.t),
            fmt(mem.mu_t),
            fmt(mem.m_t()),
            fmt(rep.weak_sup[j]),
            fmt(rep.strong_sup[j]),
            fmt(rep.second_ratio[j]),
        ];
        row.extend(rep.ball_mass[j].iter().map(|v| fmt(*v)));
        if let Some(l2) = &rep.l2_ratio {
            row.extend(l2[j].iter().map(|v| fmt(*v)));
        }
        table.push(row);
    }
    table
}

fn blowup(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let m = cfg.manifold()?;
    let t = triple(cfg, &m)?;
    let sched = schedule(cfg, m.dim())?;
    let crit = t.critical_exponent();
    let opts = MinimizeOptions { tol: sched.tol, max_iter: sched.max_iter, ..Default::default() };
    let mut family = Vec::new();
    let mut prev: Option<Field> = None;
    for &q in &sched.q_values {
        let rep = solve_subcritical_with(&t, q, &opts, prev.as_ref())?;
        prev = Some(rep.u.clone());
        family.push(FamilyMember::from_report(&rep, crit - q, Some(t.f.clone()))?);
    }
    let x0 = match cfg.str("x0") {
        Some(_) => cfg.point("x0", &m)?,
        None => family.last().expect("nonempty schedule").x_t.clone(),
    };
    let radii = cfg.list("radii", &[1.0, 2.0, 4.0, 8.0])?;
    let deltas = cfg.list("deltas", &[0.3])?;
    let rep = concentration_diagnostics(&family, &x0, &radii, &deltas)?;
    let table = concentration_table(&family, &rep);
    let lambdas: Vec<f64> = family.iter().map(|f| f.lambda_t).collect();
    Ok(Outcome {
        result: json!({ "q": sched.q_values, "lambda": lambdas, "concentration": rep }),
        tolerances: json!({ "schedule": sched }),
        table: Some(table),
    })
}

fn counterexample(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let n = cfg.dim()?;
    if n < 3 {
        return bad("counterexample needs dim ≥ 3");
    }
    match cfg.str("schedule").unwrap_or("quadratic") {
        "quadratic" => {}
        other => return bad(format!("unknown schedule '{other}' (only quadratic)")),
    }
    let members: usize = cfg.get("members", 8)?;
    if members == 0 {
        return bad("members must be positive");
    }
    let x0 = critlab::Point::Radial(0.0);
    let family = sphere_counterexample_family(n, &x0, &quadratic_schedule(members))?;
    let radii = cfg.list("radii", &[1.0, 2.0, 4.0, 8.0])?;
    let deltas = cfg.list("deltas", &[0.3])?;
    let rep = concentration_diagnostics(&family, &x0, &radii, &deltas)?;
    let fits: Vec<_> = family.iter().map(extremal_equation_fit).collect::<Result<_, _>>()?;
    let table = concentration_table(&family, &rep);
    Ok(Outcome {
        result: json!({ "dim": n, "members": members, "equation_fit": fits, "concentration": rep }),
        tolerances: json!({}),
        table: Some(table),
    })
}

fn testfn(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let m = cfg.manifold()?;
    let t = triple(cfg, &m)?;
    let x0 = match cfg.str("x0") {
        Some(_) => cfg.point("x0", &m)?,
        None => m.node_point(t.maxima_nodes[0]),
    };
    if m.dim() == 3 {
        let eps = cfg.list("eps", &[0.02, 0.04, 0.06, 0.08, 0.1])?;
        let rep = dim3_weakly_critical_test(&t, &x0, &eps)?;
        let mut table = Table::new(&["eps", "deficit"]);
        for (e, d) in rep.eps.iter().zip(&rep.deficits) {
            table.push(vec![fmt(*e), fmt(*d)]);
        }
        return Ok(Outcome { result: json!({ "mass_sign": rep }), tolerances: json!({}), table: Some(table) });
    }
    let crit = critical_exponent(m.dim());
    let gap = criterion_gap(&t, &x0)?;
    let ks = cfg.list("k", &[1.0, 10.0, 100.0, 1000.0])?;
    let mut table = Table::new(&["k", "quotient", "ceiling"]);
    let ceiling = t.ceiling().value;
    let mut quotients = Vec::new();
    for k in ks {
        let mut p = aubin_params(cfg, &m, k)?;
        p.p = x0.clone();
        let v = aubin_quotient(&t, &p, crit)?;
        table.push(vec![fmt(k), fmt(v), fmt(ceiling)]);
        quotients.push(json!({ "k": k, "quotient": v }));
    }
    Ok(Outcome {
        result: json!({ "criterion": gap, "quotients": quotients, "ceiling": ceiling }),
        tolerances: json!({}),
        table: Some(table),
    })
}

fn probe(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let m = cfg.manifold()?;
    let t = triple(cfg, &m)?;
    let x0 = cfg.point("x0", &m)?;
    let t_list = cfg.list("t_list", &[0.4, 0.2, 0.1])?;
    let with_class = cfg.get("classify", false)?;
    let rep = laplacian_blowup_probe(&t, &t_list, &x0, with_class)?;
    let mut table = Table::new(&["t", "lapf_over_f", "criterion_rhs", "h_x0", "gap", "classification"]);
    for r in &rep.rows {
        table.push(vec![
            fmt(r.t),
            fmt(r.lapf_over_f),
            fmt(r.criterion_rhs),
            fmt(r.h_x0),
            fmt(r.gap),
            r.classification.map(|c| c.label().to_string()).unwrap_or_default(),
        ]);
    }
    Ok(Outcome {
        result: serde_json::to_value(&rep).expect("serializable report"),
        tolerances: json!({ "band_rel": CLASSIFY_BAND_REL }),
        table: Some(table),
    })
}
