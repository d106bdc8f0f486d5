//! Energies, the constrained infimum λ, subcritical solvers with
//! continuation to the critical exponent, and classification against the
//! Aubin ceiling.

use std::sync::Arc;

use serde::Serialize;

use crate::elliptic::{self, COERCIVE_THRESHOLD};
use crate::error::{Error, Result};
use crate::manifold::{
    self, critical_exponent, sobolev_k2, Disc, Field, ManifoldModel, Point,
};

/// Relative threshold for a node to count as a maximum of f.
pub const MAXIMA_REL_TOL: f64 = 1e-6;
/// Default classification band as a fraction of the ceiling.
pub const CLASSIFY_BAND_REL: f64 = 0.02;

/// Problem data (h, f, g). When `conformal` holds a positive u the metric is
/// g' = u^{4/(n-2)} g and `h` is the potential expressed in g'.
#[derive(Clone, Debug)]
pub struct Triple {
    pub h: Field,
    pub f: Field,
    pub manifold: Arc<ManifoldModel>,
    pub sup_f: f64,
    /// Grid nodes where f is within `MAXIMA_REL_TOL` of its supremum.
    pub maxima_nodes: Vec<usize>,
    pub conformal: Option<Field>,
}

impl Triple {
    pub fn new(h: Field, f: Field) -> Result<Self> {
        let m = h.manifold().clone();
        if !f.lives_on(&m) {
            return Err(Error::GridMismatch);
        }
        let sup_f = f.max();
        if !(sup_f > 0.0) {
            return Err(Error::Precondition("sup f must be positive".into()));
        }
        if f.min() < 0.0 {
            let margin = elliptic::coercivity_margin(&m, &h)?;
            if margin <= COERCIVE_THRESHOLD {
                return Err(Error::NotCoercive { margin: Some(margin) });
            }
        }
        let cut = sup_f * (1.0 - MAXIMA_REL_TOL);
        let maxima_nodes = (0..m.node_count()).filter(|&i| f.values()[i] >= cut).collect();
        Ok(Triple { h, f, manifold: m, sup_f, maxima_nodes, conformal: None })
    }

    /// Triple on the conformal metric u^{4/(n-2)} g, with `h` given in that metric.
    pub fn with_conformal_factor(h: Field, f: Field, u: Field) -> Result<Self> {
        if !u.lives_on(h.manifold()) {
            return Err(Error::GridMismatch);
        }
        if !(u.min() > 0.0) {
            return Err(Error::NotPositive);
        }
        let mut t = Triple::new(h, f)?;
        t.conformal = Some(u);
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn critical_exponent(&self) -> f64 {
        critical_exponent(self.dim())
    }

    pub fn ceiling(&self) -> Ceiling {
        Ceiling::new(self.dim(), self.sup_f)
    }

    pub fn maxima(&self) -> Vec<Point> {
        self.maxima_nodes.iter().map(|&i| self.manifold.node_point(i)).collect()
    }

    pub fn f_changes_sign(&self) -> bool {
        self.f.min() < 0.0
    }

    /// Quadrature weights of dv in the triple's metric.
    pub fn volume_weights(&self) -> Vec<f64> {
        let w = self.manifold.node_weights();
        match &self.conformal {
            None => w.to_vec(),
            Some(u) => {
                let p = self.critical_exponent();
                w.iter().zip(u.values()).map(|(a, b)| a * b.powf(p)).collect()
            }
        }
    }

    /// Potential H of the base metric with (Δ_g + H)(uφ) = u^{2*-1}(Δ_{g'} + h)φ.
    pub(crate) fn base_potential(&self) -> Vec<f64> {
        match &self.conformal {
            None => self.h.values().to_vec(),
            Some(u) => {
                let p = self.critical_exponent();
                let lap = manifold::laplacian_values(&self.manifold, u.values());
                self.h
                    .values()
                    .iter()
                    .zip(u.values())
                    .zip(&lap)
                    .map(|((h, u), l)| h * u.powf(p - 2.0) - l / u)
                    .collect()
            }
        }
    }

    fn factor(&self) -> Option<&[f64]> {
        self.conformal.as_ref().map(|u| u.values())
    }
}

/// Aubin's ceiling 1/(K(n,2)² (sup f)^{(n-2)/n}).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Ceiling {
    pub n: usize,
    pub k2: f64,
    pub value: f64,
}

impl Ceiling {
    pub fn new(n: usize, sup_f: f64) -> Self {
        let k2 = sobolev_k2(n);
        let nf = n as f64;
        Ceiling { n, k2, value: 1.0 / (k2 * sup_f.powf((nf - 2.0) / nf)) }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeReport {
    pub u: Field,
    pub q: f64,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub trace: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub linear_tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { tol: 1e-8, max_iter: 20000, damping: 0.5, linear_tol: 1e-12 }
    }
}

fn check_field(t: &Triple, w: &Field) -> Result<()> {
    if w.lives_on(&t.manifold) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Dirichlet energy of w in the triple's metric.
fn gradient_energy(t: &Triple, w: &[f64]) -> f64 {
    let m = &t.manifold;
    match t.factor() {
        None => manifold::dirichlet_energy(m, w),
        // |∇w|²_{g'} dv_{g'} = u² |∇w|²_g dv_g.
        Some(u) => match &m.disc {
            Disc::Radial(g) => g.weighted_dirichlet(u, w),
            Disc::Spectral(s) => {
                let gs = s.grad_sq(w);
                gs.iter().zip(u).map(|(a, b)| a * b * b).sum::<f64>() * s.cell_volume()
            }
        },
    }
}

fn energy_values(t: &Triple, w: &[f64]) -> f64 {
    let wts = t.volume_weights();
    let pot: f64 = w.iter().zip(t.h.values()).zip(&wts).map(|((a, h), v)| v * h * a * a).sum();
    gradient_energy(t, w) + pot
}

/// I(w) = ∫|∇w|² + ∫h w² in the triple's metric.
pub fn energy_i(t: &Triple, w: &Field) -> Result<f64> {
    check_field(t, w)?;
    Ok(energy_values(t, w.values()))
}

fn constraint_values(t: &Triple, w: &[f64], q: f64) -> f64 {
    let wts = t.volume_weights();
    w.iter().zip(t.f.values()).zip(&wts).map(|((a, f), v)| v * f * a.abs().powf(q)).sum()
}

/// J_q(w) = I(w) / (∫ f |w|^q)^{2/q}.
pub fn quotient_j(t: &Triple, w: &Field, q: f64) -> Result<f64> {
    check_field(t, w)?;
    let den = constraint_values(t, w.values(), q);
    if !(den > 0.0) {
        return Err(Error::DenominatorNonpositive(den));
    }
    Ok(energy_values(t, w.values()) / den.powf(2.0 / q))
}

/// The constrained problem written in the base metric for w = uφ:
/// minimize I_H(w) subject to ∫ f̃ |w|^q dv_g = 1 with f̃ = f u^{2*-q}.
struct Reduced<'a> {
    m: &'a ManifoldModel,
    pot: Vec<f64>,
    weight: Vec<f64>,
    factor: Option<&'a [f64]>,
    crit: f64,
    q: f64,
}

impl<'a> Reduced<'a> {
    fn new(t: &'a Triple, q: f64) -> Self {
        let crit = t.critical_exponent();
        let weight = match t.factor() {
            None => t.f.values().to_vec(),
            Some(u) => t.f.values().iter().zip(u).map(|(f, u)| f * u.powf(crit - q)).collect(),
        };
        Reduced { m: &t.manifold, pot: t.base_potential(), weight, factor: t.factor(), crit, q }
    }

    fn constraint(&self, w: &[f64]) -> f64 {
        w.iter()
            .zip(&self.weight)
            .zip(self.m.node_weights())
            .map(|((a, f), v)| v * f * a.abs().powf(self.q))
            .sum()
    }

    fn normalize(&self, w: &[f64]) -> Result<Vec<f64>> {
        let c = self.constraint(w);
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::DenominatorNonpositive(c));
        }
        let s = c.powf(-1.0 / self.q);
        Ok(w.iter().map(|x| x * s).collect())
    }

    fn energy(&self, w: &[f64]) -> f64 {
        manifold::dirichlet_energy(self.m, w)
            + w.iter().zip(&self.pot).zip(self.m.node_weights()).map(|((a, h), v)| v * h * a * a).sum::<f64>()
    }

    fn source(&self, w: &[f64], positive_part: bool) -> Vec<f64> {
        w.iter()
            .zip(&self.weight)
            .map(|(a, f)| {
                let f = if positive_part { f.max(0.0) } else { *f };
                f * a.abs().powf(self.q - 2.0) * a
            })
            .collect()
    }

    /// Relative L² residual of the Euler equation, measured in the triple's metric.
    fn residual(&self, w: &[f64], lambda: f64) -> f64 {
        let lw = elliptic::apply_values(self.m, &self.pot, w);
        let src = self.source(w, false);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..w.len() {
            let (mut r, mut s) = (lw[i] - lambda * src[i], lambda * src[i]);
            let mut vol = self.m.node_weights()[i];
            if let Some(u) = self.factor {
                let scale = u[i].powf(1.0 - self.crit);
                r *= scale;
                s *= scale;
                vol *= u[i].powf(self.crit);
            }
            num += vol * r * r;
            den += vol * s * s;
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }

    fn to_metric(&self, w: &[f64]) -> Vec<f64> {
        match self.factor {
            None => w.to_vec(),
            Some(u) => w.iter().zip(u).map(|(a, b)| a / b).collect(),
        }
    }

    fn from_metric(&self, phi: &[f64]) -> Vec<f64> {
        match self.factor {
            None => phi.to_vec(),
            Some(u) => phi.iter().zip(u).map(|(a, b)| a * b).collect(),
        }
    }
}

const CLIP_FLOOR: f64 = 1e-14;
const CLIP_FRACTION: f64 = 1e-3;

/// Clips a new iterate at a tiny positive floor, failing when the clipped
/// part carries more than 0.1% of the L¹ mass.
fn clip_positive(m: &ManifoldModel, v: &mut [f64]) -> Result<()> {
    let w = m.node_weights();
    let total: f64 = v.iter().zip(w).map(|(a, b)| a.abs() * b).sum();
    let neg: f64 = v.iter().zip(w).filter(|(a, _)| **a < 0.0).map(|(a, b)| -a * b).sum();
    let fraction = if total > 0.0 { neg / total } else { 1.0 };
    if fraction > CLIP_FRACTION {
        return Err(Error::NonpositiveIterate { clipped_fraction: fraction });
    }
    let floor = CLIP_FLOOR * v.iter().cloned().fold(0.0, f64::max);
    for x in v.iter_mut() {
        if *x < floor {
            *x = floor;
        }
    }
    Ok(())
}

/// Positive minimizer of I on {∫ f u^q = 1} for 2 < q < 2*.
pub fn solve_subcritical(t: &Triple, q: f64, tol: f64) -> Result<MinimizeReport> {
    let opts = MinimizeOptions { tol, ..Default::default() };
    solve_subcritical_with(t, q, &opts, None)
}

pub fn solve_subcritical_with(
    t: &Triple,
    q: f64,
    opts: &MinimizeOptions,
    init: Option<&Field>,
) -> Result<MinimizeReport> {
    let crit = t.critical_exponent();
    if !(q > 2.0 && q < crit) {
        return Err(Error::Precondition(format!("exponent {q} outside (2, {crit})")));
    }
    let red = Reduced::new(t, q);
    // A constant potential is its own margin; the iteration may never call
    // the linear solver when the start is already a fixed point.
    let (lo, hi) = red.pot.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    if lo == hi && lo <= elliptic::COERCIVE_THRESHOLD {
        return Err(Error::NotCoercive { margin: Some(lo) });
    }
    let start: Vec<f64> = match init {
        Some(f) => {
            check_field(t, f)?;
            red.from_metric(&f.values().iter().map(|x| x.abs().max(CLIP_FLOOR)).collect::<Vec<_>>())
        }
        None => red.from_metric(&vec![1.0; t.manifold.node_count()]),
    };
    let w0 = red.normalize(&start)?;
    let (w, lambda, residual, iterations, trace) = if t.f_changes_sign() {
        descent(&red, w0, opts)?
    } else {
        fixed_point(&red, w0, opts)?
    };
    let u = Field::new(&t.manifold, red.to_metric(&w))?;
    Ok(MinimizeReport { u, q, lambda, residual, iterations, trace })
}

type SolveOutcome = (Vec<f64>, f64, f64, usize, Vec<(usize, f64)>);

fn fixed_point(red: &Reduced, mut w: Vec<f64>, opts: &MinimizeOptions) -> Result<SolveOutcome> {
    let mut trace = Vec::new();
    let mut lambda = red.energy(&w);
    let mut residual = red.residual(&w, lambda);
    trace.push((0, lambda));
    let mut it = 0;
    while residual > opts.tol {
        if it >= opts.max_iter {
            return Err(Error::NoConvergence { tol: opts.tol, iterations: opts.max_iter });
        }
        it += 1;
        let src = red.source(&w, true);
        let mut v = elliptic::solve_values(red.m, &red.pot, &src, opts.linear_tol)?;
        clip_positive(red.m, &mut v)?;
        let v = red.normalize(&v)?;
        let mixed: Vec<f64> = w.iter().zip(&v).map(|(a, b)| (1.0 - opts.damping) * a + opts.damping * b).collect();
        w = red.normalize(&mixed)?;
        lambda = red.energy(&w);
        residual = red.residual(&w, lambda);
        trace.push((it, lambda));
    }
    Ok((w, lambda, residual, it, trace))
}

/// Projected descent along the Sobolev gradient of J with Armijo
/// backtracking; a full step coincides with one undamped fixed-point update.
fn descent(red: &Reduced, mut w: Vec<f64>, opts: &MinimizeOptions) -> Result<SolveOutcome> {
    let mut trace = Vec::new();
    let mut lambda = red.energy(&w);
    let mut residual = red.residual(&w, lambda);
    trace.push((0, lambda));
    let mut it = 0;
    while residual > opts.tol {
        if it >= opts.max_iter {
            return Err(Error::NoConvergence { tol: opts.tol, iterations: opts.max_iter });
        }
        it += 1;
        let src = red.source(&w, false);
        let v = elliptic::solve_values(red.m, &red.pot, &src, opts.linear_tol)?;
        // Sobolev gradient of J at the normalized w is 2g.
        let g: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - lambda * b).collect();
        let slope = 2.0 * red.energy(&g);
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&g).map(|(a, b)| (a - step * b).abs()).collect();
            if let Ok(tn) = red.normalize(&trial) {
                let jt = red.energy(&tn);
                if jt <= lambda - 1e-4 * step * slope {
                    w = tn;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::NoConvergence { tol: opts.tol, iterations: it });
            }
        }
        let mut pos = w.clone();
        clip_positive(red.m, &mut pos)?;
        w = red.normalize(&pos)?;
        lambda = red.energy(&w);
        residual = red.residual(&w, lambda);
        trace.push((it, lambda));
    }
    Ok((w, lambda, residual, it, trace))
}

/// Exponents approaching 2* and the tolerances of the continuation.
#[derive(Clone, Debug, Serialize)]
pub struct ContinuationSchedule {
    pub q_values: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Allowed excess of λ over the ceiling, relative to the ceiling.
    pub tol_ceiling_rel: f64,
}

impl ContinuationSchedule {
    /// q_j = 2* - (2* - 2.2) 2^{-j}, j = 0..=8.
    pub fn default_for(n: usize) -> Self {
        let c = critical_exponent(n);
        let q_values = (0..=8).map(|j| c - (c - 2.2) * 0.5f64.powi(j)).collect();
        ContinuationSchedule { q_values, tol: 1e-8, max_iter: 20000, tol_ceiling_rel: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct CriticalEstimate {
    pub lambda: f64,
    pub ceiling: f64,
    /// Raw (q_j, λ(q_j)) pairs, for refitting.
    pub sequence: Vec<(f64, f64)>,
    /// (q, λ) of exponents whose minimizer collapsed onto the grid; left out
    /// of the extrapolation.
    pub dropped: Vec<(f64, f64)>,
    pub report: MinimizeReport,
}

/// Polynomial extrapolation to d = 0 through the last (up to) three points
/// (d_j, λ_j), d = 2* - q.
pub fn extrapolate_to_critical(crit: f64, seq: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = seq.iter().rev().take(3).map(|&(q, l)| (crit - q, l)).collect();
    let mut acc = 0.0;
    for (i, &(di, li)) in pts.iter().enumerate() {
        let mut w = 1.0;
        for (j, &(dj, _)) in pts.iter().enumerate() {
            if i != j {
                w *= (0.0 - dj) / (di - dj);
            }
        }
        acc += w * li;
    }
    acc
}

/// Half-maximum radius, in grid cells, below which a minimizer is treated as
/// having collapsed onto the grid.
pub const RESOLVED_CELLS: f64 = 4.0;

fn base_profile(t: &Triple, u: &Field) -> Vec<f64> {
    match &t.conformal {
        None => u.values().to_vec(),
        Some(c) => u.values().iter().zip(c.values()).map(|(a, b)| a * b).collect(),
    }
}

pub fn lambda_critical(t: &Triple, schedule: &ContinuationSchedule) -> Result<CriticalEstimate> {
    if schedule.q_values.is_empty() {
        return Err(Error::Precondition("empty continuation schedule".into()));
    }
    let opts = MinimizeOptions { tol: schedule.tol, max_iter: schedule.max_iter, ..Default::default() };
    // The warm-started branch can be a local minimizer that stops being the
    // global one as q grows, so every exponent also gets cold starts.
    let mut cold: Vec<Option<Field>> = vec![None];
    if let Some(u) = &t.conformal {
        cold.push(Some(u.map(|v| 1.0 / v)));
    }
    let mut sequence = Vec::new();
    let mut dropped = Vec::new();
    let mut last: Option<MinimizeReport> = None;
    for &q in &schedule.q_values {
        let warm = last.as_ref().map(|r| r.u.clone());
        let mut best: Option<MinimizeReport> = None;
        let mut narrowest: Option<(f64, f64)> = None;
        let mut first_err = None;
        for init in warm.iter().map(Some).chain(cold.iter().map(|c| c.as_ref())) {
            match solve_subcritical_with(t, q, &opts, init) {
                Ok(rep) => {
                    let cells = t.manifold.peak_width_cells(&base_profile(t, &rep.u));
                    if cells < RESOLVED_CELLS {
                        if narrowest.map_or(true, |(l, _)| rep.lambda < l) {
                            narrowest = Some((rep.lambda, cells));
                        }
                    } else if best.as_ref().map_or(true, |b| rep.lambda < b.lambda) {
                        best = Some(rep);
                    }
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        match (best, narrowest, first_err) {
            (Some(b), _, _) => {
                sequence.push((q, b.lambda));
                last = Some(b);
            }
            (None, Some((l, _)), _) => dropped.push((q, l)),
            (None, None, Some(e)) => return Err(e),
            (None, None, None) => unreachable!("at least one start"),
        }
    }
    if sequence.len() < 3 {
        let lambda = sequence.last().map_or(f64::NAN, |p| p.1);
        return Err(Error::UnderResolved { resolved: sequence.len(), lambda });
    }
    let report = last.expect("resolved exponents exist");
    let lambda = extrapolate_to_critical(t.critical_exponent(), &sequence);
    let ceiling = t.ceiling().value;
    if lambda > ceiling * (1.0 + schedule.tol_ceiling_rel) {
        return Err(Error::CeilingViolation { lambda, ceiling, tol: schedule.tol_ceiling_rel * ceiling });
    }
    Ok(CriticalEstimate { lambda, ceiling, sequence, dropped, report })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Classification {
    Subcritical(f64),
    WeaklyCritical(f64),
    Indeterminate(f64),
}

impl Classification {
    pub fn gap(&self) -> f64 {
        match *self {
            Classification::Subcritical(g) | Classification::WeaklyCritical(g) | Classification::Indeterminate(g) => g,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Classification::Subcritical(_) => "Subcritical",
            Classification::WeaklyCritical(_) => "WeaklyCritical",
            Classification::Indeterminate(_) => "Indeterminate",
        }
    }

    pub fn from_gap(gap: f64, band: f64) -> Self {
        if gap > band {
            Classification::Subcritical(gap)
        } else if gap >= -band {
            Classification::WeaklyCritical(gap)
        } else {
            Classification::Indeterminate(gap)
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassifyReport {
    pub classification: Classification,
    pub lambda: f64,
    pub ceiling: f64,
    pub band: f64,
    pub sequence: Vec<(f64, f64)>,
    pub dropped: Vec<(f64, f64)>,
    pub report: Option<MinimizeReport>,
}

pub fn classify(t: &Triple) -> Result<Classification> {
    let n = t.dim();
    Ok(classify_with(t, &ContinuationSchedule::default_for(n), CLASSIFY_BAND_REL)?.classification)
}

/// Classification with an explicit schedule and band (relative to the ceiling).
pub fn classify_with(t: &Triple, schedule: &ContinuationSchedule, band_rel: f64) -> Result<ClassifyReport> {
    let ceiling = t.ceiling().value;
    let band = band_rel * ceiling;
    match lambda_critical(t, schedule) {
        Ok(est) => Ok(ClassifyReport {
            classification: Classification::from_gap(ceiling - est.lambda, band),
            lambda: est.lambda,
            ceiling,
            band,
            sequence: est.sequence,
            dropped: est.dropped,
            report: Some(est.report),
        }),
        Err(Error::CeilingViolation { lambda, .. } | Error::UnderResolved { lambda, .. }) => Ok(ClassifyReport {
            classification: Classification::Indeterminate(ceiling - lambda),
            lambda,
            ceiling,
            band,
            sequence: Vec::new(),
            dropped: Vec::new(),
            report: None,
        }),
        Err(e) => Err(e),
    }
}

/// A∫|∇w|² + B∫w² − (∫|w|^{2*})^{2/2*}.
pub fn sobolev_deficit(m: &ManifoldModel, w: &Field, a: f64, b: f64) -> Result<f64> {
    if !w.lives_on(m) {
        return Err(Error::GridMismatch);
    }
    let (grad, l2, crit) = sobolev_parts(m, w.values());
    Ok(a * grad + b * l2 - crit)
}

fn sobolev_parts(m: &ManifoldModel, w: &[f64]) -> (f64, f64, f64) {
    let p = critical_exponent(m.dim());
    let grad = manifold::dirichlet_energy(m, w);
    let l2 = manifold::integrate_values(m, &w.iter().map(|x| x * x).collect::<Vec<_>>());
    let lp = manifold::integrate_values(m, &w.iter().map(|x| x.abs().powf(p)).collect::<Vec<_>>());
    (grad, l2, lp.powf(2.0 / p))
}

/// Closed-form floor max((n-2)/(4(n-1)) K² max S, Vol^{-2/n}).
pub fn b0_floor(m: &ManifoldModel) -> f64 {
    let n = m.dim() as f64;
    let curv = (n - 2.0) / (4.0 * (n - 1.0)) * sobolev_k2(m.dim()) * m.scalar_curvature();
    curv.max(m.volume().powf(-2.0 / n))
}

/// Lower bound on the second best constant B₀: every w forces
/// B₀ ≥ ((∫|w|^{2*})^{2/2*} − K²∫|∇w|²)/∫w².
pub fn b0_lower_estimate(m: &ManifoldModel, family: &[Field]) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let k2 = sobolev_k2(m.dim());
    let mut best = b0_floor(m);
    for w in family {
        if !w.lives_on(m) {
            return Err(Error::GridMismatch);
        }
        let (grad, l2, crit) = sobolev_parts(m, w.values());
        if l2 > 0.0 {
            best = best.max((crit - k2 * grad) / l2);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::sphere_area;
    use std::f64::consts::PI;

    fn sphere_triple(n: usize, nodes: usize, h: f64) -> Triple {
        let s = ManifoldModel::sphere(n, nodes).unwrap();
        Triple::new(Field::constant(&s, h), Field::constant(&s, 1.0)).unwrap()
    }

    #[test]
    fn ceiling_constant() {
        let c = Ceiling::new(3, 1.0);
        let k2 = 4.0 / (3.0 * sphere_area(3).powf(2.0 / 3.0));
        assert!((c.k2 - k2).abs() < 1e-15);
        // K(3,2)^{-2} = 3 (π²/2 ... ) reduces to n(n-2)/4 ω_n^{2/n}.
        assert!((c.value - 0.75 * (2.0 * PI * PI).powf(2.0 / 3.0)).abs() < 1e-12);
        let c2 = Ceiling::new(4, 2.0);
        assert!((c2.value * 2f64.powf(0.5) - Ceiling::new(4, 1.0).value).abs() < 1e-12);
    }

    #[test]
    fn energy_of_constants_and_modes() {
        let t = sphere_triple(4, 256, 2.0);
        let w = Field::constant(&t.manifold, 3.0);
        assert!((energy_i(&t, &w).unwrap() - 2.0 * 9.0 * sphere_area(4)).abs() < 1e-8);
        let tor = ManifoldModel::torus(3, 2.0, 16).unwrap();
        let tt = Triple::new(Field::constant(&tor, 0.0), Field::constant(&tor, 1.0)).unwrap();
        let w = Field::from_fn(&tor, |c| (2.0 * PI * 2.0 * c.x[1] / 2.0).sin());
        let l2 = manifold::integrate(&tor, &w.map(|x| x * x)).unwrap();
        let k2 = (2.0 * PI * 2.0 / 2.0).powi(2);
        assert!((energy_i(&tt, &w).unwrap() - k2 * l2).abs() < 1e-9);
    }

    #[test]
    fn quotient_homogeneity() {
        let t = sphere_triple(3, 512, 0.75);
        let w = Field::from_fn(&t.manifold, |c| 1.0 + 0.3 * c.r.cos());
        let j = quotient_j(&t, &w, 5.0).unwrap();
        let j2 = quotient_j(&t, &w.map(|x| -2.5 * x), 5.0).unwrap();
        assert!((j - j2).abs() < 1e-12 * j);
        let t3 = Triple::new(t.h.clone(), t.f.map(|x| 3.0 * x)).unwrap();
        let j3 = quotient_j(&t3, &w, 5.0).unwrap();
        assert!((j3 - j * 3f64.powf(-2.0 / 5.0)).abs() < 1e-12 * j);
        let neg = Triple { f: t.f.map(|_| -1.0), ..t.clone() };
        assert!(matches!(quotient_j(&neg, &w, 5.0), Err(Error::DenominatorNonpositive(_))));
    }

    #[test]
    fn constants_solve_sphere_problem() {
        for n in [3usize, 4, 5] {
            let c = (n * (n - 2)) as f64 / 4.0;
            let t = sphere_triple(n, 1024, c);
            let q = 0.5 * (2.0 + critical_exponent(n));
            let rep = solve_subcritical(&t, q, 1e-9).unwrap();
            let vol = manifold::integrate(&t.manifold, &Field::constant(&t.manifold, 1.0)).unwrap();
            assert!((rep.lambda - c * vol.powf(1.0 - 2.0 / q)).abs() < 1e-9);
            let u0 = vol.powf(-1.0 / q);
            assert!(rep.u.values().iter().all(|v| (v - u0).abs() < 1e-9));
        }
    }

    #[test]
    fn monotone_in_potential() {
        let s = ManifoldModel::sphere(4, 512).unwrap();
        let f = Field::constant(&s, 1.0);
        let h1 = Field::from_fn(&s, |c| 2.0 - 0.5 * (-4.0 * c.r * c.r).exp());
        let h2 = Field::constant(&s, 2.0);
        let l1 = solve_subcritical(&Triple::new(h1, f.clone()).unwrap(), 3.0, 1e-8).unwrap().lambda;
        let l2 = solve_subcritical(&Triple::new(h2, f).unwrap(), 3.0, 1e-8).unwrap().lambda;
        assert!(l1 <= l2);
    }

    #[test]
    fn extrapolation_is_exact_for_quadratics() {
        let c: f64 = 6.0;
        let seq: Vec<(f64, f64)> = [5.0f64, 5.5, 5.75].iter().map(|&q| (q, 1.0 + 2.0 * (c - q) - 0.5 * (c - q).powi(2))).collect();
        assert!((extrapolate_to_critical(c, &seq) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sign_changing_descent_matches_euler_equation() {
        let s = ManifoldModel::sphere(3, 512).unwrap();
        let h = Field::constant(&s, 2.0);
        let f = Field::from_fn(&s, |c| c.r.cos() + 0.3);
        let t = Triple::new(h, f).unwrap();
        let rep = solve_subcritical(&t, 4.0, 1e-7).unwrap();
        assert!(rep.residual <= 1e-7);
        assert!(rep.u.min() > 0.0);
        let c = constraint_values(&t, rep.u.values(), 4.0);
        assert!((c - 1.0).abs() < 1e-8);
        for w in rep.trace.windows(2).skip(1) {
            assert!(w[1].1 <= w[0].1 + 1e-12);
        }
    }

    #[test]
    fn conformal_energy_identity_is_exact_on_radial_grids() {
        let s = ManifoldModel::sphere(4, 1024).unwrap();
        let h = Field::from_fn(&s, |c| 2.5 + 0.3 * c.r.cos());
        let f = Field::constant(&s, 1.0);
        let u = Field::from_fn(&s, |c| 1.0 + 0.4 * (2.0 * c.r).cos());
        let base = Triple::new(h.clone(), f.clone()).unwrap();
        let p = critical_exponent(4);
        let lap = manifold::laplacian(&s, &u).unwrap();
        let hp = Field::new(
            &s,
            (0..s.node_count())
                .map(|i| (lap.values()[i] + h.values()[i] * u.values()[i]) / u.values()[i].powf(p - 1.0))
                .collect(),
        )
        .unwrap();
        let conf = Triple::with_conformal_factor(hp, f, u.clone()).unwrap();
        let w = Field::from_fn(&s, |c| (-c.r * c.r).exp() + 0.2);
        let phi = w.zip_map(&u, |a, b| a / b).unwrap();
        let a = energy_i(&base, &w).unwrap();
        let b = energy_i(&conf, &phi).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs());
    }

    #[test]
    fn deficit_and_b0() {
        let t = ManifoldModel::torus(3, 1.5, 8).unwrap();
        let one = Field::constant(&t, 1.0);
        let vol = t.volume();
        let d = sobolev_deficit(&t, &one, sobolev_k2(3), vol.powf(-2.0 / 3.0)).unwrap();
        assert!(d.abs() < 1e-12);
        let d2 = sobolev_deficit(&t, &one, sobolev_k2(3), 2.0 * vol.powf(-2.0 / 3.0)).unwrap();
        assert!(d2 > d);
        let b = b0_lower_estimate(&t, &[one]).unwrap();
        assert!((b - vol.powf(-2.0 / 3.0)).abs() < 1e-12);
        assert!(matches!(b0_lower_estimate(&t, &[]), Err(Error::EmptyFamily)));
        let s = ManifoldModel::sphere(5, 256).unwrap();
        let b = b0_lower_estimate(&s, &[Field::constant(&s, 1.0)]).unwrap();
        assert!(b >= 5.0 * 3.0 * sobolev_k2(5) / 4.0 - 1e-12);
    }

    #[test]
    fn sphere_attains_the_ceiling() {
        for n in [3usize, 4, 5] {
            let t = sphere_triple(n, 4096, (n * (n - 2)) as f64 / 4.0);
            let rep = classify_with(&t, &ContinuationSchedule::default_for(n), CLASSIFY_BAND_REL).unwrap();
            let target = 1.0 / sobolev_k2(n);
            assert!((rep.lambda / target - 1.0).abs() < 0.02, "n = {n}: {} vs {target}", rep.lambda);
            assert!(matches!(rep.classification, Classification::WeaklyCritical(_)));
        }
    }

    #[test]
    fn small_potential_on_torus_is_subcritical() {
        let t4 = ManifoldModel::torus(4, 1.0, 8).unwrap();
        let t = Triple::new(Field::constant(&t4, 0.01), Field::constant(&t4, 1.0)).unwrap();
        let rep = classify_with(&t, &ContinuationSchedule::default_for(4), CLASSIFY_BAND_REL).unwrap();
        assert!(matches!(rep.classification, Classification::Subcritical(_)));
        assert!((rep.lambda - 0.01).abs() < 1e-6);
    }
}
