//! Paths of triples with bisection for the flip point t₀, the conformal
//! transform, the regularizing family of Chapter 6 and supporting bounds.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elliptic;
use crate::error::{Error, Result};
use crate::functional::{
    b0_lower_estimate, classify_with, Classification, ContinuationSchedule, MinimizeReport, Triple,
    CLASSIFY_BAND_REL,
};
use crate::manifold::{self, critical_exponent, sobolev_k2, Disc, Field, ManifoldModel, Point};
use crate::testfn::{aubin_psi, AubinParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    /// h_t = h − tη.
    HMinusTEta,
    /// h_t = h + α − tψ, with h the B₀K⁻² proxy.
    HTestFn,
    /// f_t = (1 − t) + t f.
    FLinearToOne,
    /// f_t = (1 − t) sup f + t f.
    FLinearToSup,
}

impl PathKind {
    pub fn moves_h(self) -> bool {
        matches!(self, PathKind::HMinusTEta | PathKind::HTestFn)
    }
}

#[derive(Clone, Debug)]
pub struct PathSpec {
    pub kind: PathKind,
    pub base: Triple,
    /// η or ψ for the h-paths, ignored by the f-paths (which use base.f).
    pub direction: Field,
    pub t_range: (f64, f64),
    pub alpha: f64,
}

impl PathSpec {
    pub fn new(kind: PathKind, base: Triple, direction: Field, t_range: (f64, f64), alpha: f64) -> Result<Self> {
        if !direction.lives_on(&base.manifold) {
            return Err(Error::GridMismatch);
        }
        if !(t_range.0 < t_range.1) {
            return Err(Error::Precondition("t range must be increasing".into()));
        }
        if kind.moves_h() && direction.min() < 0.0 {
            return Err(Error::Precondition("h-path directions must be nonnegative".into()));
        }
        Ok(PathSpec { kind, base, direction, t_range, alpha })
    }
}

/// The triple at parameter t along the path.
pub fn path_triple(path: &PathSpec, t: f64) -> Result<Triple> {
    let b = &path.base;
    let (h, f) = match path.kind {
        PathKind::HMinusTEta => (b.h.zip_map(&path.direction, |h, e| h - t * e)?, b.f.clone()),
        PathKind::HTestFn => (b.h.zip_map(&path.direction, |h, e| h + path.alpha - t * e)?, b.f.clone()),
        PathKind::FLinearToOne => (b.h.clone(), b.f.map(|f| (1.0 - t) + t * f)),
        PathKind::FLinearToSup => {
            let s = b.sup_f;
            (b.h.clone(), b.f.map(|f| (1.0 - t) * s + t * f))
        }
    };
    match &b.conformal {
        None => Triple::new(h, f),
        Some(u) => Triple::with_conformal_factor(h, f, u.clone()),
    }
}

/// Constant potential B₀K⁻² built from the certified lower estimate of B₀
/// plus a safety margin.
pub fn b0_proxy_potential(m: &Arc<ManifoldModel>, margin: f64) -> Result<f64> {
    let b0 = b0_lower_estimate(m, &[Field::constant(m, 1.0)])?;
    Ok((b0 + margin) / sobolev_k2(m.dim()))
}

/// ψ_k^{4/(n−2)}, the direction of the test-function path.
pub fn htestfn_direction(m: &Arc<ManifoldModel>, p: &AubinParams) -> Result<Field> {
    let e = 4.0 / (m.dim() as f64 - 2.0);
    Ok(aubin_psi(m, p)?.map(|v| v.abs().powf(e)))
}

#[derive(Clone, Debug, Serialize)]
pub struct PathSample {
    pub t: f64,
    pub lambda: f64,
    pub ceiling: f64,
    pub classification: Classification,
    /// Recorded on test-function paths, where coercivity is part of the contract.
    pub coercivity_margin: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BisectOutcome {
    /// The flip lies in a bracket narrower than tol_t.
    Bracketed,
    /// λ no longer changes across the bracket by more than the resolution,
    /// so the classification band decides the flip rather than λ.
    BandLimited,
}

#[derive(Clone, Debug)]
pub struct BisectOptions {
    pub tol_t: f64,
    pub schedule: Option<ContinuationSchedule>,
    pub band_rel: f64,
    /// λ resolution relative to the ceiling.
    pub lambda_resolution_rel: f64,
    /// Interior points evaluated concurrently before bisecting.
    pub scan_points: usize,
}

impl BisectOptions {
    pub fn new(tol_t: f64) -> Self {
        BisectOptions { tol_t, schedule: None, band_rel: CLASSIFY_BAND_REL, lambda_resolution_rel: 1e-7, scan_points: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct BisectReport {
    pub t0: f64,
    pub bracket: (f64, f64),
    pub outcome: BisectOutcome,
    /// Every evaluated point, sorted by t.
    pub samples: Vec<PathSample>,
    /// λ nonincreasing in t along h-paths (None on f-paths).
    pub monotone: Option<bool>,
    /// Minimizer at the last evaluated parameter.
    pub witness: Option<MinimizeReport>,
}

fn evaluate(
    path: &PathSpec,
    t: f64,
    schedule: &ContinuationSchedule,
    band_rel: f64,
) -> Result<(PathSample, Option<MinimizeReport>)> {
    let tr = path_triple(path, t)?;
    let coercivity_margin = if path.kind == PathKind::HTestFn {
        Some(elliptic::coercivity_margin(&tr.manifold, &tr.h)?)
    } else {
        None
    };
    let rep = classify_with(&tr, schedule, band_rel)?;
    let sample =
        PathSample { t, lambda: rep.lambda, ceiling: rep.ceiling, classification: rep.classification, coercivity_margin };
    Ok((sample, rep.report))
}

/// Classifies the path at several parameters concurrently.
pub fn scan_path(path: &PathSpec, ts: &[f64], schedule: Option<&ContinuationSchedule>) -> Result<Vec<PathSample>> {
    let sched = schedule.cloned().unwrap_or_else(|| ContinuationSchedule::default_for(path.base.dim()));
    ts.par_iter().map(|&t| evaluate(path, t, &sched, CLASSIFY_BAND_REL).map(|s| s.0)).collect()
}

fn is_sub(c: &Classification) -> bool {
    matches!(c, Classification::Subcritical(_))
}

pub fn bisect_t0(path: &PathSpec, tol_t: f64) -> Result<BisectReport> {
    bisect_t0_with(path, &BisectOptions::new(tol_t))
}

/// Bisection on "classify(t) is Subcritical" between the ends of t_range.
pub fn bisect_t0_with(path: &PathSpec, opts: &BisectOptions) -> Result<BisectReport> {
    if !(opts.tol_t > 0.0) {
        return Err(Error::Precondition("tol_t must be positive".into()));
    }
    let sched = opts.schedule.clone().unwrap_or_else(|| ContinuationSchedule::default_for(path.base.dim()));
    let (a, b) = path.t_range;
    let k = opts.scan_points;
    let grid: Vec<f64> = (0..k + 2).map(|j| a + (b - a) * j as f64 / (k + 1) as f64).collect();
    let first: Vec<(PathSample, Option<MinimizeReport>)> =
        grid.par_iter().map(|&t| evaluate(path, t, &sched, opts.band_rel)).collect::<Result<_>>()?;
    let mut samples: Vec<PathSample> = first.iter().map(|s| s.0.clone()).collect();
    let mut witness = first.last().and_then(|s| s.1.clone());
    let lo_sub = is_sub(&samples[0].classification);
    let hi_sub = is_sub(&samples[samples.len() - 1].classification);
    if lo_sub == hi_sub {
        return Err(Error::NoSignChange {
            lo: samples[0].classification.label().into(),
            hi: samples[samples.len() - 1].classification.label().into(),
        });
    }
    // Narrowest scanned bracket containing the first flip.
    let j = (1..samples.len()).find(|&j| is_sub(&samples[j].classification) != lo_sub).expect("flip exists");
    let (mut lo, mut hi) = (samples[j - 1].clone(), samples[j].clone());
    let res = opts.lambda_resolution_rel * lo.ceiling;
    let mut outcome = BisectOutcome::Bracketed;
    while hi.t - lo.t > opts.tol_t {
        if (hi.lambda - lo.lambda).abs() <= res {
            outcome = BisectOutcome::BandLimited;
            break;
        }
        let mid = 0.5 * (lo.t + hi.t);
        let (s, w) = evaluate(path, mid, &sched, opts.band_rel)?;
        witness = w.or(witness);
        samples.push(s.clone());
        if is_sub(&s.classification) == lo_sub {
            lo = s;
        } else {
            hi = s;
        }
    }
    samples.sort_by(|x, y| x.t.partial_cmp(&y.t).unwrap());
    let monotone = path.kind.moves_h().then(|| {
        let tol = 1e-6 * samples[0].ceiling;
        samples.windows(2).all(|w| w[1].lambda <= w[0].lambda + tol)
    });
    Ok(BisectReport { t0: 0.5 * (lo.t + hi.t), bracket: (lo.t, hi.t), outcome, samples, monotone, witness })
}

/// The triple (h', f, u^{4/(n−2)} g) with h' = (Δu + hu)/u^{(n+2)/(n−2)}, all
/// in the triple's current metric. The new metric is stored through its
/// total conformal factor on the base grid.
pub fn conformal_transform(t: &Triple, u: &Field) -> Result<Triple> {
    let m = &t.manifold;
    if !u.lives_on(m) {
        return Err(Error::GridMismatch);
    }
    if !(u.min() > 0.0) {
        return Err(Error::NotPositive);
    }
    let p = critical_exponent(t.dim());
    let (h_new, factor) = match &t.conformal {
        None => {
            let lu = elliptic::apply_operator(m, &t.h, u)?;
            (lu.zip_map(u, |l, v| l / v.powf(p - 1.0))?, u.clone())
        }
        Some(u0) => {
            // (Δ_{g'} + h)u = u0^{1−2*}(Δ_g + H)(u0 u), H the base potential.
            let total = u0.zip_map(u, |a, b| a * b)?;
            let pot = Field::new(m, t.base_potential())?;
            let l = elliptic::apply_operator(m, &pot, &total)?;
            let vals = (0..m.node_count())
                .map(|i| l.values()[i] * u0.values()[i].powf(1.0 - p) / u.values()[i].powf(p - 1.0))
                .collect();
            (Field::new(m, vals)?, total)
        }
    };
    Triple::with_conformal_factor(h_new, t.f.clone(), factor)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub min_sampled: f64,
    pub argmin: f64,
    pub stationary_x: f64,
    pub stationary_value: f64,
    pub bound: f64,
    pub holds: bool,
}

/// β(x) = x^{4s/(n−2)} − s x^{q−2} ≥ −s on x ≥ 0, checked on samples and at
/// the stationary point x* = (s(q−2)(n−2)/(4s))^{1/(A−B)}.
pub fn beta_is_lower_bound(n: usize, s: f64, q: f64, samples: &[f64]) -> Result<BoundReport> {
    if n < 3 {
        return Err(Error::UnsupportedDimension { dim: n, reason: "needs n ≥ 3".into() });
    }
    let crit = critical_exponent(n);
    if !(s >= 1.0) || !(q > 2.0 && q <= crit) {
        return Err(Error::Precondition("requires s ≥ 1 and 2 < q ≤ 2*".into()));
    }
    if samples.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::Precondition("samples must be nonnegative".into()));
    }
    let a = 4.0 * s / (n as f64 - 2.0);
    let b = q - 2.0;
    let beta = |x: f64| x.powf(a) - s * x.powf(b);
    let (mut min_sampled, mut argmin) = (f64::INFINITY, f64::NAN);
    for &x in samples {
        let v = beta(x);
        if v < min_sampled {
            min_sampled = v;
            argmin = x;
        }
    }
    let (stationary_x, stationary_value) = if a > b {
        let x = (s * b / a).powf(1.0 / (a - b));
        (x, -s * x.powf(b) * (1.0 - b / a))
    } else {
        // Equal exponents force s = 1 and β ≡ 0.
        (1.0, 0.0)
    };
    let bound = -s;
    let holds = min_sampled >= bound && stationary_value >= bound;
    Ok(BoundReport { min_sampled, argmin, stationary_x, stationary_value, bound, holds })
}

/// P_t(x) = (1 − (d(x0, x)/t)²)³ inside B(x0, t), zero outside.
#[derive(Clone, Debug, Serialize)]
pub struct RegularizingFamily {
    pub t: f64,
    pub center: Point,
}

impl RegularizingFamily {
    pub fn profile(&self, d: f64) -> f64 {
        let x = d / self.t;
        if x < 1.0 {
            (1.0 - x * x).powi(3)
        } else {
            0.0
        }
    }

    /// Exact ΔP_t at the centre, 6n/t² (the constant c₂ is 6n).
    pub fn center_laplacian(&self, n: usize) -> f64 {
        6.0 * n as f64 / (self.t * self.t)
    }

    pub fn field(&self, m: &Arc<ManifoldModel>) -> Result<Field> {
        let limit = m.injectivity_radius();
        if !(self.t > 0.0) || self.t >= limit {
            return Err(Error::RadiusTooLarge { radius: self.t, limit });
        }
        Field::radial_about(m, &self.center, |d| self.profile(d))
    }
}

pub fn regularizing_family(t: f64, x0: &Point, m: &Arc<ManifoldModel>) -> Result<Field> {
    RegularizingFamily { t, center: x0.clone() }.field(m)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeRow {
    pub t: f64,
    pub lapf_over_f: f64,
    /// (n−2)/(4(n−1))·S − (n−2)(n−4)/(8(n−1))·Δf_t/f_t at x0.
    pub criterion_rhs: f64,
    pub h_x0: f64,
    /// 4(n−1)/(n−2)·h − S + (n−4)/2·Δf_t/f_t at x0.
    pub gap: f64,
    pub classification: Option<Classification>,
    pub lambda: Option<f64>,
    pub ceiling: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub x0: Point,
    pub rows: Vec<ProbeRow>,
    /// Largest probed t at which the criterion right side is below h(x0).
    pub threshold: Option<f64>,
}

/// Replaces f by the regularizing family f_t about x0 and follows the
/// maximum-point criterion as t shrinks. Classification of each (h, f_t)
/// is optional because it is the expensive part.
pub fn laplacian_blowup_probe(base: &Triple, t_list: &[f64], x0: &Point, classify: bool) -> Result<ProbeReport> {
    let m = &base.manifold;
    let n = m.dim();
    if n < 5 {
        return Err(Error::UnsupportedDimension { dim: n, reason: "the probe needs n ≥ 5".into() });
    }
    if base.conformal.is_some() {
        return Err(Error::Precondition("the probe works in the base metric".into()));
    }
    let node = m.nearest_node(x0)?;
    let h_x0 = base.h.values()[node];
    if !(h_x0 > 0.0) {
        return Err(Error::Precondition("h(x0) must be positive".into()));
    }
    let nf = n as f64;
    let s = m.scalar_curvature();
    let sched = ContinuationSchedule::default_for(n);
    let rows: Vec<ProbeRow> = t_list
        .par_iter()
        .map(|&t| {
            let f_t = regularizing_family(t, x0, m)?;
            let lf = manifold::laplacian_at(m, &f_t, node)? / f_t.values()[node];
            let criterion_rhs =
                (nf - 2.0) / (4.0 * (nf - 1.0)) * s - (nf - 2.0) * (nf - 4.0) / (8.0 * (nf - 1.0)) * lf;
            let gap = 4.0 * (nf - 1.0) / (nf - 2.0) * h_x0 - s + (nf - 4.0) / 2.0 * lf;
            let tr = Triple::new(base.h.clone(), f_t)?;
            let (classification, lambda) = if classify {
                let rep = classify_with(&tr, &sched, CLASSIFY_BAND_REL)?;
                (Some(rep.classification), Some(rep.lambda))
            } else {
                (None, None)
            };
            Ok(ProbeRow {
                t,
                lapf_over_f: lf,
                criterion_rhs,
                h_x0,
                gap,
                classification,
                lambda,
                ceiling: tr.ceiling().value,
            })
        })
        .collect::<Result<_>>()?;
    let threshold = rows.iter().filter(|r| r.criterion_rhs < h_x0).map(|r| r.t).fold(None, |a: Option<f64>, t| {
        Some(a.map_or(t, |b| b.max(t)))
    });
    Ok(ProbeReport { x0: x0.clone(), rows, threshold })
}

/// Smallest eigenvalue of −Hess f at each maximum of f (positive when the
/// maximum is nondegenerate), from second differences on the grid.
pub fn hessian_floor_at_maxima(t: &Triple) -> Result<Vec<(Point, f64)>> {
    let m = &t.manifold;
    let f = t.f.values();
    t.maxima_nodes
        .iter()
        .map(|&i| {
            let floor = match &m.disc {
                Disc::Radial(g) => {
                    let h = g.step;
                    let last = f.len() - 1;
                    let d2 = if i == 0 {
                        2.0 * (f[1] - f[0]) / (h * h)
                    } else if i == last {
                        2.0 * (f[last - 1] - f[last]) / (h * h)
                    } else {
                        (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (h * h)
                    };
                    -d2
                }
                Disc::Spectral(sp) => {
                    let n = sp.shape.len();
                    let idx = sp.index(i);
                    let at = |shift: &[(usize, isize)]| {
                        let mut j = idx.clone();
                        for &(a, s) in shift {
                            let k = sp.shape[a] as isize;
                            j[a] = ((j[a] as isize + s).rem_euclid(k)) as usize;
                        }
                        f[sp.flatten(&j)]
                    };
                    let hs: Vec<f64> = sp.shape.iter().map(|&k| sp.side / k as f64).collect();
                    let mut hess = DMatrix::<f64>::zeros(n, n);
                    for a in 0..n {
                        hess[(a, a)] = (at(&[(a, 1)]) - 2.0 * f[i] + at(&[(a, -1)])) / (hs[a] * hs[a]);
                        for b in a + 1..n {
                            let v = (at(&[(a, 1), (b, 1)]) - at(&[(a, 1), (b, -1)]) - at(&[(a, -1), (b, 1)])
                                + at(&[(a, -1), (b, -1)]))
                                / (4.0 * hs[a] * hs[b]);
                            hess[(a, b)] = v;
                            hess[(b, a)] = v;
                        }
                    }
                    SymmetricEigen::new(-hess).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
                }
            };
            Ok((m.node_point(i), floor))
        })
        .collect()
}

/// Whether B(x, δ) avoids the maxima of f and f > 0 on it, as the
/// general-f construction requires. Reported, never relaxed.
pub fn bump_ball_feasible(t: &Triple, x: &Point, delta: f64) -> Result<bool> {
    let d = t.manifold.distances_from(x)?;
    let inside: Vec<usize> = (0..d.len()).filter(|&i| d[i] < delta).collect();
    Ok(!inside.is_empty()
        && inside.iter().all(|&i| t.f.values()[i] > 0.0 && !t.maxima_nodes.contains(&i)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{energy_i, lambda_critical};
    use std::f64::consts::PI;

    #[test]
    fn beta_bound_examples() {
        let r = beta_is_lower_bound(5, 3.0, 2.8, &[0.0]).unwrap();
        assert_eq!(r.min_sampled, 0.0);
        let crit = critical_exponent(4);
        let r = beta_is_lower_bound(4, 1.0, crit, &[1.0]).unwrap();
        assert!(r.min_sampled.abs() < 1e-15 && r.stationary_value == 0.0);
        let xs: Vec<f64> = (0..=10000).map(|j| j as f64 * 1e-3).collect();
        let r = beta_is_lower_bound(5, 3.0, 2.8, &xs).unwrap();
        assert!(r.holds && r.min_sampled >= -3.0);
        assert!((r.min_sampled - r.stationary_value).abs() < 1e-5);
        assert!(beta_is_lower_bound(5, 0.5, 2.8, &xs).is_err());
    }

    #[test]
    fn regularizing_profile() {
        let s = ManifoldModel::sphere(5, 4096).unwrap();
        let x0 = Point::Radial(0.0);
        let mut scaled = Vec::new();
        for t in [0.4, 0.2, 0.1] {
            let f = regularizing_family(t, &x0, &s).unwrap();
            assert_eq!(f.values()[0], 1.0);
            assert_eq!(f.max(), 1.0);
            assert!(f.min() >= 0.0);
            let step = s.spacing();
            let outside = s.distances_from(&x0).unwrap();
            assert!(f.values().iter().zip(&outside).all(|(v, d)| *d < t + step || *v == 0.0));
            assert!(f.values().iter().zip(&outside).all(|(v, d)| *d > t - step || *v > 0.0));
            scaled.push(manifold::laplacian_at(&s, &f, 0).unwrap() * t * t);
        }
        for v in &scaled {
            assert!((v / scaled[0] - 1.0).abs() < 0.05);
            assert!((v / 30.0 - 1.0).abs() < 0.01);
        }
        assert!(regularizing_family(4.0, &x0, &s).is_err());
    }

    #[test]
    fn transform_identity_and_round_trip() {
        let s = ManifoldModel::sphere(3, 512).unwrap();
        let h = Field::from_fn(&s, |c| 0.75 + 0.2 * c.r.cos());
        let t = Triple::new(h.clone(), Field::constant(&s, 1.0)).unwrap();
        let same = conformal_transform(&t, &Field::constant(&s, 1.0)).unwrap();
        assert!(same.h.values().iter().zip(h.values()).all(|(a, b)| (a - b).abs() < 1e-12));
        let u = Field::from_fn(&s, |c| (0.3 * c.r.cos()).exp());
        let there = conformal_transform(&t, &u).unwrap();
        let back = conformal_transform(&there, &u.map(|v| 1.0 / v)).unwrap();
        assert!(back.h.values().iter().zip(h.values()).all(|(a, b)| (a - b).abs() < 1e-8));
        assert!(back.conformal.as_ref().unwrap().values().iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(matches!(conformal_transform(&t, &u.map(|v| v - 1.0)), Err(Error::NotPositive)));
    }

    #[test]
    fn transform_preserves_energy_and_lambda() {
        let s = ManifoldModel::sphere(3, 1024).unwrap();
        let t = Triple::new(Field::constant(&s, 0.5), Field::from_fn(&s, |c| 1.0 + 0.2 * c.r.cos())).unwrap();
        let u = Field::from_fn(&s, |c| 1.0 + 0.4 * c.r.cos().powi(2));
        let tt = conformal_transform(&t, &u).unwrap();
        let w = Field::from_fn(&s, |c| 2.0 + c.r.sin());
        let i0 = energy_i(&t, &w).unwrap();
        let i1 = energy_i(&tt, &w.zip_map(&u, |a, b| a / b).unwrap()).unwrap();
        assert!((i0 - i1).abs() < 1e-9 * i0.abs(), "{i0} {i1}");
        let sched = ContinuationSchedule::default_for(3);
        let l0 = lambda_critical(&t, &sched).unwrap().lambda;
        let l1 = lambda_critical(&tt, &sched).unwrap().lambda;
        assert!((l0 - l1).abs() < CLASSIFY_BAND_REL * t.ceiling().value, "{l0} {l1}");
    }

    #[test]
    fn path_definitions() {
        let s = ManifoldModel::sphere(3, 128).unwrap();
        let f = Field::from_fn(&s, |c| 2.0 + c.r.cos());
        let base = Triple::new(Field::constant(&s, 1.0), f).unwrap();
        let eta = Field::from_fn(&s, |c| c.r);
        let p = PathSpec::new(PathKind::FLinearToSup, base.clone(), eta.clone(), (0.0, 1.0), 0.0).unwrap();
        let t0 = path_triple(&p, 0.0).unwrap();
        assert!(t0.f.is_constant(1e-14) && (t0.f.values()[0] - 3.0).abs() < 1e-14);
        let p = PathSpec::new(PathKind::HTestFn, base.clone(), eta.clone(), (0.0, 1.0), 0.5).unwrap();
        let t1 = path_triple(&p, 0.25).unwrap();
        assert!((t1.h.values()[10] - (1.5 - 0.25 * s.node_coords(10).r)).abs() < 1e-14);
        assert!(PathSpec::new(PathKind::HMinusTEta, base, eta.map(|v| -v), (0.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn no_flip_is_reported() {
        let s = ManifoldModel::sphere(3, 256).unwrap();
        let base = Triple::new(Field::constant(&s, 0.5), Field::constant(&s, 1.0)).unwrap();
        let eta = Field::constant(&s, 1.0);
        let p = PathSpec::new(PathKind::HMinusTEta, base, eta, (0.0, 0.1), 0.0).unwrap();
        match bisect_t0(&p, 1e-2) {
            Err(Error::NoSignChange { lo, hi }) => assert!(lo == "Subcritical" && hi == "Subcritical"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sphere_path_flips_near_zero() {
        let s = ManifoldModel::sphere(3, 1024).unwrap();
        let base = Triple::new(Field::constant(&s, 0.75), Field::constant(&s, 1.0)).unwrap();
        let eta = Field::from_fn(&s, |c| if c.r < 1.0 { (1.0 - c.r * c.r).powi(3) } else { 0.0 });
        let p = PathSpec::new(PathKind::HMinusTEta, base, eta, (0.0, 1.0), 0.0).unwrap();
        let rep = bisect_t0(&p, 1e-2).unwrap();
        assert_eq!(rep.monotone, Some(true));
        assert!(rep.bracket.1 - rep.bracket.0 <= 1e-2 || rep.outcome == BisectOutcome::BandLimited);
        let lo = rep.samples.iter().find(|s| s.t == rep.bracket.0).unwrap();
        let hi = rep.samples.iter().find(|s| s.t == rep.bracket.1).unwrap();
        assert_ne!(is_sub(&lo.classification), is_sub(&hi.classification));
        assert!(rep.samples.iter().all(|s| s.lambda <= s.ceiling * (1.0 + 1e-6)));
    }

    #[test]
    fn probe_gap_grows_as_t_shrinks() {
        let s = ManifoldModel::sphere(5, 4096).unwrap();
        let base = Triple::new(Field::constant(&s, 15.0 / 4.0), Field::constant(&s, 1.0)).unwrap();
        let rep = laplacian_blowup_probe(&base, &[1.6, 0.8, 0.4, 0.2, 0.1], &Point::Radial(0.0), false).unwrap();
        assert!(rep.rows.windows(2).all(|w| w[1].gap > w[0].gap));
        let curv = 3.0 / 16.0 * 20.0;
        let c: Vec<f64> = rep.rows[2..].iter().map(|r| (curv - r.criterion_rhs) * r.t * r.t).collect();
        assert!(c.iter().all(|v| (v / c[0] - 1.0).abs() < 0.1), "{c:?}");
        assert_eq!(rep.threshold, Some(1.6));
        let s4 = ManifoldModel::sphere(4, 64).unwrap();
        let b4 = Triple::new(Field::constant(&s4, 2.0), Field::constant(&s4, 1.0)).unwrap();
        assert!(laplacian_blowup_probe(&b4, &[0.5], &Point::Radial(0.0), false).is_err());
        let _ = PI;
    }

    #[test]
    fn hessian_and_feasibility() {
        let s = ManifoldModel::sphere(3, 512).unwrap();
        let t = Triple::new(Field::constant(&s, 1.0), Field::from_fn(&s, |c| 1.0 + c.r.cos())).unwrap();
        let floor = hessian_floor_at_maxima(&t).unwrap();
        assert!((floor[0].1 - 1.0).abs() < 1e-4);
        assert!(bump_ball_feasible(&t, &Point::Radial(2.0), 0.5).unwrap());
        assert!(!bump_ball_feasible(&t, &Point::Radial(0.2), 0.5).unwrap());
        let tor = ManifoldModel::torus(2, 2.0 * PI, 32).unwrap();
        let tf = Triple::new(
            Field::constant(&tor, 1.0),
            Field::from_fn(&tor, |c| c.x[0].cos() + 2.0 * c.x[1].cos()),
        )
        .unwrap();
        let fl = hessian_floor_at_maxima(&tf).unwrap();
        assert!((fl[0].1 - 1.0).abs() < 1e-2, "{fl:?}");
    }
}
