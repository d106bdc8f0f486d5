//! Green's function of Δ_g + h built from a cutoff singular part and a
//! regular part solved on the grid, with bounds checks and the
//! three-dimensional mass.

use serde::Serialize;

use crate::elliptic::{self, COERCIVE_THRESHOLD};
use crate::error::{Error, Result};
use crate::functional::{classify_with, Classification, ContinuationSchedule, Triple, CLASSIFY_BAND_REL};
use crate::jet::{euclidean_radial_laplacian, sphere_radial_laplacian, Jet};
use crate::manifold::{self, sphere_area, Disc, Field, ManifoldKind, ManifoldModel, Point};
use crate::quad::gauss_legendre;

/// Default cutoff radius as a fraction of the injectivity radius.
pub const DEFAULT_DELTA_FRACTION: f64 = 0.3;
/// Tolerance of the weak delta identity, relative to the C² norm of the test function.
pub const WEAK_IDENTITY_TOL: f64 = 5e-3;

/// Quintic smoothstep cutoff: 1 on [0, δ], 0 beyond 2δ, C² in between.
pub fn cutoff(r: f64, delta: f64) -> f64 {
    cutoff_jet(Jet::var(r), delta).v
}

pub fn cutoff_jet(r: Jet, delta: f64) -> Jet {
    if r.v <= delta {
        return Jet::cst(1.0);
    }
    if r.v >= 2.0 * delta {
        return Jet::cst(0.0);
    }
    let s = (r - delta) / delta;
    let s3 = s * s * s;
    -(s3 * (s * (s * 6.0 - 15.0) + 10.0)) + 1.0
}

/// 1/r − cot r, with a series where the difference cancels.
fn inv_minus_cot(r: f64) -> f64 {
    if r < 1e-2 {
        let r2 = r * r;
        r * (1.0 / 3.0 + r2 * (1.0 / 45.0 + r2 * (2.0 / 945.0 + r2 / 4725.0)))
    } else {
        1.0 / r - r.cos() / r.sin()
    }
}

/// The singular part η r^{2−n} and its Laplacian away from the pole.
struct Singular {
    n: usize,
    delta: f64,
    spherical: bool,
}

impl Singular {
    fn value(&self, r: f64) -> f64 {
        cutoff(r, self.delta) * r.powi(2 - self.n as i32)
    }

    fn deriv(&self, r: f64) -> f64 {
        (cutoff_jet(Jet::var(r), self.delta) * Jet::var(r).powf(2.0 - self.n as f64)).d
    }

    fn laplacian(&self, r: f64) -> f64 {
        let n = self.n as f64;
        if r <= self.delta {
            if self.spherical {
                -(n - 1.0) * (n - 2.0) * r.powf(1.0 - n) * inv_minus_cot(r)
            } else {
                0.0
            }
        } else if r >= 2.0 * self.delta {
            0.0
        } else {
            let j = cutoff_jet(Jet::var(r), self.delta) * Jet::var(r).powf(2.0 - n);
            if self.spherical {
                sphere_radial_laplacian(self.n, r, j)
            } else {
                euclidean_radial_laplacian(self.n, r, j)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct GreenFunction {
    pub pole: Point,
    pub pole_node: usize,
    pub h: Field,
    pub delta: f64,
    pub beta: Field,
    pub singular_prefactor: f64,
    pub mass: Option<f64>,
    /// Largest weak-identity error over the test basket, relative to ‖φ‖_{C²}.
    pub weak_identity_error: f64,
    singular_avg: Vec<f64>,
    distances: Vec<f64>,
}

impl GreenFunction {
    pub fn manifold(&self) -> &ManifoldModel {
        self.beta.manifold()
    }

    pub fn dim(&self) -> usize {
        self.manifold().dim()
    }

    /// Distance of every node from the pole.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// G at a node (infinite at the pole).
    pub fn value_at(&self, i: usize) -> f64 {
        let d = self.distances[i];
        if d == 0.0 {
            return f64::INFINITY;
        }
        let s = Singular { n: self.dim(), delta: self.delta, spherical: self.manifold().kind() == ManifoldKind::RoundSphere };
        self.singular_prefactor * (self.beta.values()[i] + s.value(d))
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.distances.len()).map(|i| self.value_at(i)).collect()
    }

    /// ∫ G (Δφ + hφ) dv, pairing the singular part through its cell averages.
    pub fn pair_with_operator(&self, phi: &Field) -> Result<f64> {
        let m = self.manifold();
        let lphi = elliptic::apply_operator(m, &self.h, phi)?;
        let w = m.node_weights();
        let total: f64 = (0..w.len())
            .map(|i| w[i] * (self.beta.values()[i] + self.singular_avg[i]) * lphi.values()[i])
            .sum();
        Ok(self.singular_prefactor * total)
    }

    /// |∇G| at every node except the pole (NaN there).
    pub fn gradient_norm(&self) -> Vec<f64> {
        let m = self.manifold();
        let s = Singular { n: self.dim(), delta: self.delta, spherical: m.kind() == ManifoldKind::RoundSphere };
        let b = self.beta.values();
        match &m.disc {
            Disc::Radial(g) => {
                let k = b.len();
                (0..k)
                    .map(|i| {
                        if i == 0 {
                            return f64::NAN;
                        }
                        let db = if i + 1 < k { (b[i + 1] - b[i - 1]) / (2.0 * g.step) } else { (b[i] - b[i - 1]) / g.step };
                        self.singular_prefactor * (db + s.deriv(g.r[i])).abs()
                    })
                    .collect()
            }
            Disc::Spectral(sp) => {
                let gb = sp.gradient(b);
                let c = sp.coordinates(self.pole_node);
                (0..b.len())
                    .map(|i| {
                        let d = self.distances[i];
                        if d == 0.0 {
                            return f64::NAN;
                        }
                        let off = manifold::torus_offset(&c, &sp.coordinates(i), sp.side);
                        let ds = s.deriv(d);
                        let v: f64 = (0..off.len()).map(|a| (gb[a][i] + ds * off[a] / d).powi(2)).sum();
                        self.singular_prefactor * v.sqrt()
                    })
                    .collect()
            }
        }
    }
}

fn pole_node(m: &ManifoldModel, pole: &Point) -> Result<usize> {
    if m.is_radial() {
        let at_origin = match pole {
            Point::Radial(r) => *r == 0.0,
            Point::Cartesian(x) => m.kind() == ManifoldKind::EuclideanBall && x.iter().all(|v| *v == 0.0),
        };
        if !at_origin {
            return Err(Error::Precondition("radial models place the pole at r = 0".into()));
        }
        Ok(0)
    } else {
        m.nearest_node(pole)
    }
}

/// Average of |x|^{2−n} over the cube [−a, a]^n, by splitting it into 2n
/// pyramids with apex at the centre.
fn cube_average_of_kernel(n: usize, a: f64) -> f64 {
    let rule = gauss_legendre(48);
    let dims = n - 1;
    let mut idx = vec![0usize; dims];
    let mut face = 0.0;
    loop {
        let (mut w, mut r2) = (1.0, 1.0);
        for &j in &idx {
            w *= rule[j].1;
            r2 += rule[j].0 * rule[j].0;
        }
        face += w * r2.powf((2.0 - n as f64) / 2.0);
        let mut k = 0;
        while k < dims {
            idx[k] += 1;
            if idx[k] < rule.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == dims {
            break;
        }
    }
    n as f64 * a * a * face / (2.0 * a).powi(n as i32)
}

/// Cell averages of the singular part S and of −ΔS on a radial grid.
fn radial_cell_averages(g: &crate::manifold::RadialGrid, s: &Singular) -> (Vec<f64>, Vec<f64>) {
    let rule = gauss_legendre(8);
    let rmax = *g.r.last().unwrap();
    let area = sphere_area(g.dim - 1);
    let dens = |r: f64| area * if g.spherical { r.sin() } else { r }.powi(g.dim as i32 - 1);
    let mut sv = vec![0.0; g.r.len()];
    let mut lv = vec![0.0; g.r.len()];
    for i in 0..g.r.len() {
        let a = (g.r[i] - 0.5 * g.step).max(0.0);
        let b = (g.r[i] + 0.5 * g.step).min(rmax);
        if a >= 2.0 * s.delta {
            continue;
        }
        let mut cuts = vec![a];
        for c in [s.delta, 2.0 * s.delta] {
            if c > a && c < b {
                cuts.push(c);
            }
        }
        cuts.push(b);
        let (mut acc_s, mut acc_l) = (0.0, 0.0);
        for w in cuts.windows(2) {
            let (c, hw) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            for &(x, wt) in &rule {
                let r = c + hw * x;
                let d = dens(r) * wt * hw;
                acc_s += d * s.value(r);
                acc_l -= d * s.laplacian(r);
            }
        }
        sv[i] = acc_s / g.vol[i];
        lv[i] = acc_l / g.vol[i];
    }
    (sv, lv)
}

pub fn default_delta(m: &ManifoldModel) -> f64 {
    DEFAULT_DELTA_FRACTION * m.injectivity_radius()
}

/// Builds G_h with pole `pole`: β solves (Δ + h)β = −Δ(ηr^{2−n}) − hηr^{2−n}
/// and G = (β + ηr^{2−n}) / ((n−2)ω_{n−1}).
pub fn build_green(m: &ManifoldModel, h: &Field, pole: &Point, delta: f64, tol: f64) -> Result<GreenFunction> {
    if !h.lives_on(m) {
        return Err(Error::GridMismatch);
    }
    let n = m.dim();
    if !(delta > 0.0) || 2.0 * delta >= m.injectivity_radius() {
        return Err(Error::RadiusTooLarge { radius: 2.0 * delta, limit: m.injectivity_radius() });
    }
    let margin = elliptic::coercivity_margin(m, h)?;
    if margin <= COERCIVE_THRESHOLD {
        return Err(Error::NotCoercive { margin: Some(margin) });
    }
    let pn = pole_node(m, pole)?;
    let pole = m.node_point(pn);
    let distances = m.distances_from(&pole)?;
    let sing = Singular { n, delta, spherical: m.kind() == ManifoldKind::RoundSphere };
    let (singular_avg, minus_lap) = match &m.disc {
        Disc::Radial(g) => radial_cell_averages(g, &sing),
        Disc::Spectral(sp) => {
            let mut sv: Vec<f64> = distances.iter().map(|&d| if d > 0.0 { sing.value(d) } else { 0.0 }).collect();
            sv[pn] = cube_average_of_kernel(n, 0.5 * sp.side / sp.shape[0] as f64);
            let lv = distances.iter().map(|&d| if d > 0.0 { -sing.laplacian(d) } else { 0.0 }).collect();
            (sv, lv)
        }
    };
    let gamma: Vec<f64> = (0..m.node_count()).map(|i| minus_lap[i] - h.values()[i] * singular_avg[i]).collect();
    let beta = elliptic::solve_values(m, h.values(), &gamma, tol)?;
    let beta = Field::new(h.manifold(), beta)?;
    let prefactor = 1.0 / ((n as f64 - 2.0) * sphere_area(n - 1));
    let mut gf = GreenFunction {
        pole,
        pole_node: pn,
        h: h.clone(),
        delta,
        beta,
        singular_prefactor: prefactor,
        mass: None,
        weak_identity_error: 0.0,
        singular_avg,
        distances,
    };
    gf.weak_identity_error = weak_identity_error(&gf)?;
    if n == 3 {
        gf.mass = fit_mass(&gf, default_window(m, delta)).ok().map(|e| e.mass);
    }
    Ok(gf)
}

/// Smooth test functions and their C² norms.
fn test_basket(m: &std::sync::Arc<ManifoldModel>, pole: &Point) -> Vec<(Field, f64)> {
    match m.kind() {
        ManifoldKind::RoundSphere => (1..=5)
            .map(|j| {
                let k = j as f64;
                (Field::from_fn(m, |c| (k * c.r).cos()), 1.0 + k + k * k)
            })
            .collect(),
        ManifoldKind::EuclideanBall => (1..=5)
            .map(|j| {
                let k = j as f64 * std::f64::consts::PI / m.size();
                (Field::from_fn(m, |c| (k * c.r).cos()), 1.0 + k + k * k)
            })
            .collect(),
        ManifoldKind::FlatTorus => {
            let base = match pole {
                Point::Cartesian(x) => x.clone(),
                _ => vec![0.0; m.dim()],
            };
            let modes: [(&[i32], f64); 5] =
                [(&[1, 0, 0, 0], 0.3), (&[0, 1, 1, 0], 1.1), (&[1, -1, 0, 1], 2.0), (&[2, 0, 1, 0], 0.7), (&[0, 1, 0, 2], 1.6)];
            modes
                .iter()
                .map(|(k, phase)| {
                    let w = 2.0 * std::f64::consts::PI / m.size();
                    let kk: Vec<f64> = (0..m.dim()).map(|a| k.get(a).copied().unwrap_or(0) as f64 * w).collect();
                    let norm = kk.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let field = Field::from_fn(m, |c| {
                        let arg: f64 = c.x.iter().zip(&base).zip(&kk).map(|((x, b), k)| k * (x - b)).sum();
                        (arg + phase).cos()
                    });
                    (field, 1.0 + norm + norm * norm)
                })
                .collect()
        }
    }
}

fn weak_identity_error(gf: &GreenFunction) -> Result<f64> {
    let m = gf.beta.manifold().clone();
    let mut worst: f64 = 0.0;
    for (phi, norm) in test_basket(&m, &gf.pole) {
        let lhs = gf.pair_with_operator(&phi)?;
        let err = (lhs - phi.values()[gf.pole_node]).abs() / norm;
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub rho: f64,
    /// Bounds c_low ≤ G d^{n−2} ≤ c_high over 0 < d < rho.
    pub c_low: f64,
    pub c_high: f64,
    /// Smallest d |∇G| / G over 0 < d < rho.
    pub gradient_ratio_floor: f64,
    /// |G d^{n−2} (n−2) ω_{n−1} − 1| five grid steps from the pole.
    pub limit_error: f64,
    pub positive: bool,
}

pub fn verify_bounds(gf: &GreenFunction, rho: f64) -> Result<BoundsReport> {
    let m = gf.manifold();
    let n = gf.dim() as f64;
    let g = gf.values();
    let grad = gf.gradient_norm();
    let (mut lo, mut hi, mut ratio) = (f64::INFINITY, 0.0f64, f64::INFINITY);
    for i in 0..g.len() {
        let d = gf.distances[i];
        if d > 0.0 && d < rho {
            let scaled = g[i] * d.powf(n - 2.0);
            lo = lo.min(scaled);
            hi = hi.max(scaled);
            if grad[i].is_finite() {
                ratio = ratio.min(d * grad[i] / g[i]);
            }
        }
    }
    if !lo.is_finite() {
        return Err(Error::Precondition("no grid node within rho of the pole".into()));
    }
    let target = 5.0 * m.spacing();
    let probe = (0..g.len())
        .filter(|&i| gf.distances[i] > 0.0)
        .min_by(|&a, &b| (gf.distances[a] - target).abs().partial_cmp(&(gf.distances[b] - target).abs()).unwrap())
        .expect("grid has more than one node");
    let d = gf.distances[probe];
    let limit_error = (g[probe] * d.powf(n - 2.0) / gf.singular_prefactor - 1.0).abs();
    let positive = g.iter().zip(&gf.distances).all(|(v, d)| *d == 0.0 || *v > 0.0);
    Ok(BoundsReport { rho, c_low: lo, c_high: hi, gradient_ratio_floor: ratio, limit_error, positive })
}

#[derive(Clone, Debug, Serialize)]
pub struct MassEstimate {
    pub mass: f64,
    pub stderr: f64,
    pub slope: f64,
    pub window: (f64, f64),
    pub points: usize,
}

pub fn default_window(m: &ManifoldModel, delta: f64) -> (f64, f64) {
    if m.is_radial() {
        (5.0 * m.spacing(), 0.1f64.min(delta))
    } else {
        (2.0 * m.spacing(), delta)
    }
}

/// Least-squares fit of G − 1/(ω₂ d) ≈ M + b d over the window.
pub fn fit_mass(gf: &GreenFunction, window: (f64, f64)) -> Result<MassEstimate> {
    if gf.dim() != 3 {
        return Err(Error::UnsupportedDimension { dim: gf.dim(), reason: "the mass is defined in dimension 3".into() });
    }
    let h = gf.manifold().spacing();
    if window.0 < 2.0 * h * (1.0 - 1e-9) || window.1 <= window.0 {
        return Err(Error::FitUnstable(format!("window {:?} too close to the grid scale {h:e}", window)));
    }
    let w2 = sphere_area(2);
    let pts: Vec<(f64, f64)> = (0..gf.distances.len())
        .filter(|&i| gf.distances[i] >= window.0 && gf.distances[i] <= window.1)
        .map(|i| (gf.distances[i], gf.value_at(i) - 1.0 / (w2 * gf.distances[i])))
        .collect();
    let k = pts.len();
    if k < 4 {
        return Err(Error::FitUnstable(format!("only {k} nodes in the window")));
    }
    let kf = k as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let det = kf * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return Err(Error::FitUnstable("degenerate window".into()));
    }
    let slope = (kf * sxy - sx * sy) / det;
    let mass = (sy - slope * sx) / kf;
    let rss: f64 = pts.iter().map(|p| (p.1 - mass - slope * p.0).powi(2)).sum();
    let sigma2 = rss / (kf - 2.0).max(1.0);
    let stderr = (sigma2 * sxx / det).sqrt();
    Ok(MassEstimate { mass, stderr, slope, window, points: k })
}

/// Mass M_h(x) in dimension 3 from a Green function with pole x.
pub fn mass(m: &ManifoldModel, h: &Field, x: &Point, fit_window: Option<(f64, f64)>) -> Result<MassEstimate> {
    if m.dim() != 3 {
        return Err(Error::UnsupportedDimension { dim: m.dim(), reason: "the mass is defined in dimension 3".into() });
    }
    let delta = default_delta(m);
    let gf = build_green(m, h, x, delta, 1e-12)?;
    fit_mass(&gf, fit_window.unwrap_or_else(|| default_window(m, delta)))
}

#[derive(Clone, Debug, Serialize)]
pub struct MassAtMaximum {
    pub point: Point,
    pub mass: f64,
    pub stderr: f64,
    /// Number of maxima this value stands for (all of them when h is constant).
    pub represents: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShiftEstimate {
    pub value: f64,
    pub bracket: (f64, f64),
    pub band: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriteriaReport {
    pub masses: Vec<MassAtMaximum>,
    pub tol: f64,
    pub all_nonpositive: bool,
    pub any_zero: bool,
    pub classification: Classification,
    /// A weakly critical triple with a positive mass at a maximum.
    pub contradiction: bool,
    pub shift: Option<ShiftEstimate>,
}

#[derive(Clone, Debug)]
pub struct CriteriaOptions {
    pub mass_tol: f64,
    pub shift_tol: f64,
    pub compute_shift: bool,
    pub schedule: Option<ContinuationSchedule>,
}

impl Default for CriteriaOptions {
    fn default() -> Self {
        CriteriaOptions { mass_tol: 1e-3, shift_tol: 1e-3, compute_shift: true, schedule: None }
    }
}

pub fn mass_criteria(t: &Triple) -> Result<CriteriaReport> {
    mass_criteria_with(t, &CriteriaOptions::default())
}

pub fn mass_criteria_with(t: &Triple, opts: &CriteriaOptions) -> Result<CriteriaReport> {
    let m = &t.manifold;
    if m.dim() != 3 {
        return Err(Error::UnsupportedDimension { dim: m.dim(), reason: "mass criteria are three-dimensional".into() });
    }
    let homogeneous = t.h.is_constant(0.0) && m.kind() != ManifoldKind::EuclideanBall;
    let mut masses = Vec::new();
    if homogeneous {
        let p = m.node_point(t.maxima_nodes[0]);
        let anchor = if m.is_radial() { Point::Radial(0.0) } else { p.clone() };
        let est = mass(m, &t.h, &anchor, None)?;
        masses.push(MassAtMaximum { point: p, mass: est.mass, stderr: est.stderr, represents: t.maxima_nodes.len() });
    } else {
        for &i in &t.maxima_nodes {
            let p = m.node_point(i);
            if m.is_radial() && i != 0 {
                return Err(Error::Precondition("masses away from the pole need a constant potential on radial models".into()));
            }
            let est = mass(m, &t.h, &p, None)?;
            masses.push(MassAtMaximum { point: p, mass: est.mass, stderr: est.stderr, represents: 1 });
        }
    }
    let tol = opts.mass_tol;
    let all_nonpositive = masses.iter().all(|e| e.mass <= tol);
    let any_zero = masses.iter().any(|e| e.mass.abs() <= tol);
    let schedule = opts.schedule.clone().unwrap_or_else(|| ContinuationSchedule::default_for(3));
    let classification = classify_with(t, &schedule, CLASSIFY_BAND_REL)?.classification;
    let contradiction = matches!(classification, Classification::WeaklyCritical(_)) && !all_nonpositive;
    let shift = if opts.compute_shift { Some(shift_to_weakly_critical(t, &schedule, opts.shift_tol)?) } else { None };
    Ok(CriteriaReport { masses, tol, all_nonpositive, any_zero, classification, contradiction, shift })
}

/// Bisection for B(h) = inf{B : h + B is weakly critical}, on the predicate
/// "h + B is not subcritical".
pub fn shift_to_weakly_critical(t: &Triple, schedule: &ContinuationSchedule, tol: f64) -> Result<ShiftEstimate> {
    let above = |b: f64| -> Result<bool> {
        let h = t.h.map(|v| v + b);
        let tb = Triple { h, ..t.clone() };
        let c = classify_with(&tb, schedule, CLASSIFY_BAND_REL)?.classification;
        Ok(!matches!(c, Classification::Subcritical(_)))
    };
    let (mut lo, mut hi);
    if above(0.0)? {
        hi = 0.0;
        let floor = -elliptic::coercivity_margin(&t.manifold, &t.h)?;
        let mut step = 0.05;
        lo = -step;
        loop {
            if lo <= floor {
                lo = 0.5 * (floor + hi);
            }
            if !above(lo)? {
                break;
            }
            hi = lo;
            step *= 2.0;
            lo = hi - step;
            if hi - floor < tol {
                return Ok(ShiftEstimate { value: hi, bracket: (floor, hi), band: CLASSIFY_BAND_REL });
            }
        }
    } else {
        lo = 0.0;
        let mut step = 0.05;
        hi = step;
        let mut tries = 0;
        while !above(hi)? {
            lo = hi;
            step *= 2.0;
            hi = lo + step;
            tries += 1;
            if tries > 30 {
                return Err(Error::NoConvergence { tol, iterations: tries });
            }
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if above(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ShiftEstimate { value: 0.5 * (lo + hi), bracket: (lo, hi), band: CLASSIFY_BAND_REL })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.1, 0.3), 1.0);
        assert_eq!(cutoff(0.7, 0.3), 0.0);
        assert!((cutoff(0.45, 0.3) - 0.5).abs() < 1e-12);
        let j = cutoff_jet(Jet::var(0.3 + 1e-9), 0.3);
        assert!(j.d.abs() < 1e-6 && j.dd.abs() < 1e-3);
    }

    #[test]
    fn kernel_average_matches_quadrature() {
        // Monte-Carlo-free check: the 3D cube average of 1/|x| on [-1,1]^3 is 1.1900...
        let v = cube_average_of_kernel(3, 1.0);
        assert!((v - 1.190_038_681_989_776).abs() < 1e-9, "{v}");
        // Scaling |x|^{2-n} average ~ a^{2-n}.
        let v2 = cube_average_of_kernel(4, 0.5);
        assert!((v2 - cube_average_of_kernel(4, 1.0) * 4.0).abs() < 1e-9);
    }

    #[test]
    fn conformal_sphere_kernel() {
        let s = ManifoldModel::sphere(3, 4096).unwrap();
        let h = Field::constant(&s, 0.75);
        let gf = build_green(&s, &h, &Point::Radial(0.0), default_delta(&s), 1e-12).unwrap();
        let w2 = 4.0 * PI;
        for i in 0..s.node_count() {
            let r = s.node_coords(i).r;
            if r >= 0.1 && r <= PI - 0.1 {
                let exact = 1.0 / (w2 * 2.0 * (0.5 * r).sin());
                assert!((gf.value_at(i) - exact).abs() < 1e-4, "r = {r}");
            }
        }
        assert!(gf.mass.unwrap().abs() < 1e-3);
        assert!(gf.weak_identity_error < WEAK_IDENTITY_TOL);
        let b = verify_bounds(&gf, 0.5).unwrap();
        assert!(b.limit_error < 1e-2 && b.c_low > 0.0 && b.gradient_ratio_floor > 0.0 && b.positive);
    }

    #[test]
    fn mass_sign_follows_potential() {
        let s = ManifoldModel::sphere(3, 4096).unwrap();
        let below = mass(&s, &Field::constant(&s, 0.65), &Point::Radial(0.0), None).unwrap();
        let above = mass(&s, &Field::constant(&s, 0.85), &Point::Radial(0.0), None).unwrap();
        assert!(below.mass > 0.0 && above.mass < 0.0, "{} {}", below.mass, above.mass);
    }

    #[test]
    fn torus_weak_identity() {
        let t = ManifoldModel::torus(3, 1.0, 32).unwrap();
        let h = Field::constant(&t, 1.0);
        let gf = build_green(&t, &h, &Point::Cartesian(vec![0.5, 0.5, 0.5]), default_delta(&t), 1e-12).unwrap();
        assert!(gf.weak_identity_error < WEAK_IDENTITY_TOL, "{}", gf.weak_identity_error);
    }

    #[test]
    fn non_coercive_potential_is_rejected() {
        let s = ManifoldModel::sphere(3, 256).unwrap();
        let r = build_green(&s, &Field::constant(&s, -1.0), &Point::Radial(0.0), 0.5, 1e-12);
        assert!(matches!(r, Err(Error::NotCoercive { .. })));
    }

    #[test]
    fn mass_ladder_is_monotone() {
        let s = ManifoldModel::sphere(3, 4096).unwrap();
        let ladder = [0.55, 0.65, 0.75, 0.85, 0.95];
        let masses: Vec<f64> =
            ladder.iter().map(|&c| mass(&s, &Field::constant(&s, c), &Point::Radial(0.0), None).unwrap().mass).collect();
        for w in masses.windows(2) {
            assert!(w[0] > w[1], "{masses:?}");
        }
    }

    #[test]
    fn shift_restores_conformal_constant() {
        let s = ManifoldModel::sphere(3, 4096).unwrap();
        let t = Triple::new(Field::constant(&s, 0.65), Field::constant(&s, 1.0)).unwrap();
        let rep = mass_criteria(&t).unwrap();
        let b = rep.shift.unwrap().value;
        assert!((b - 0.1).abs() <= 0.02, "{b}");
        assert!(rep.masses[0].mass > 0.0);
        assert!(matches!(rep.classification, Classification::Subcritical(_)));
        let t0 = Triple::new(Field::constant(&s, 0.75), Field::constant(&s, 1.0)).unwrap();
        let rep = mass_criteria(&t0).unwrap();
        assert!(rep.any_zero && rep.all_nonpositive && !rep.contradiction);
        assert!(rep.shift.unwrap().value.abs() <= 0.02);
    }
}
