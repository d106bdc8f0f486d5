//! Blow-up rescaling, the Euclidean bubble, concentration diagnostics for
//! families of solutions, Moser-type bound checks, the radial Pohozaev
//! identity and the sphere counterexample family.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::{b0_lower_estimate, MinimizeReport, Triple};
use crate::jet::{euclidean_radial_laplacian, sphere_radial_laplacian, Jet};
use crate::manifold::{
    self, critical_exponent, geodesic_distance, sobolev_k2, sphere_area, Disc, Field, ManifoldKind, ManifoldModel,
    Point, DEFAULT_RADIAL_NODES,
};
use crate::quad::{self, gauss_legendre};

/// Relative spread between chart rays above which a chart counts as non-radial.
pub const RADIAL_TOL: f64 = 1e-6;

/// ũ(x) = (1 + c|x|²/(n(n−2)))^{−(n−2)/2}, solving Δ_e ũ = c ũ^{(n+2)/(n−2)}.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Bubble {
    pub n: usize,
    pub amplitude_scale: f64,
}

impl Bubble {
    pub fn new(n: usize, amplitude_scale: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::UnsupportedDimension { dim: n, reason: "bubbles need n ≥ 3".into() });
        }
        if !(amplitude_scale > 0.0) || !amplitude_scale.is_finite() {
            return Err(Error::Precondition("amplitude scale must be positive".into()));
        }
        Ok(Bubble { n, amplitude_scale })
    }

    pub fn jet(&self, r: Jet) -> Jet {
        let n = self.n as f64;
        let a = self.amplitude_scale / (n * (n - 2.0));
        (r * r * a + 1.0).powf(-(n - 2.0) / 2.0)
    }

    pub fn value(&self, r: f64) -> f64 {
        self.jet(Jet::var(r)).v
    }

    pub fn laplacian(&self, r: f64) -> f64 {
        let j = self.jet(Jet::var(r));
        if r == 0.0 {
            -(self.n as f64) * j.dd
        } else {
            euclidean_radial_laplacian(self.n, r, j)
        }
    }

    /// Largest |Δũ − c ũ^{(n+2)/(n−2)}| over the given radii.
    pub fn residual(&self, radii: &[f64]) -> f64 {
        let p = critical_exponent(self.n) - 1.0;
        radii
            .iter()
            .map(|&r| (self.laplacian(r) - self.amplitude_scale * self.value(r).powf(p)).abs())
            .fold(0.0, f64::max)
    }

    /// Share of ∫_{R^n} ũ^{2*} carried by B(0, R); 1 − ε_R in the
    /// concentration statements. With r = tan θ/√a the integrand becomes
    /// (sin θ cos θ)^{n−1}.
    pub fn mass_fraction(&self, radius: f64) -> f64 {
        let n = self.n as f64;
        let a = self.amplitude_scale / (n * (n - 2.0));
        let g = |th: f64| (th.sin() * th.cos()).powf(n - 1.0);
        let upper = (a.sqrt() * radius).atan();
        quad::integrate(&g, 0.0, upper, 1e-15) / quad::integrate(&g, 0.0, 0.5 * std::f64::consts::PI, 1e-15)
    }

    /// Samples ũ(d(center, ·)) on a model.
    pub fn sample(&self, m: &Arc<ManifoldModel>, center: &Point) -> Result<Field> {
        Field::radial_about(m, center, |r| self.value(r))
    }
}

/// How a member's values are known.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum MemberProfile {
    /// Only through the grid samples.
    Sampled,
    /// scale·w^{(n−2)/2}(w² + 1 − cos ρ)^{−(n−2)/2} on the unit sphere, with
    /// ρ = d(x_t, ·) and w the width. The member's field then holds samples
    /// along the meridian through x_t.
    SphereExtremal { scale: f64, width: f64 },
}

#[derive(Clone, Debug)]
pub struct FamilyMember {
    pub u: Field,
    pub t: f64,
    pub x_t: Point,
    pub mu_t: f64,
    pub lambda_t: f64,
    pub q_t: f64,
    /// Weight of the mass integrals; `None` stands for f ≡ 1.
    pub f: Option<Field>,
    pub profile: MemberProfile,
}

impl FamilyMember {
    /// Wraps a positive solution: x_t is the grid argmax refined by a local
    /// quadratic fit and μ_t = u(x_t)^{−2/(n−2)}.
    pub fn from_report(report: &MinimizeReport, t: f64, f: Option<Field>) -> Result<Self> {
        let u = report.u.clone();
        if !(u.min() > 0.0) {
            return Err(Error::NotPositive);
        }
        if let Some(w) = &f {
            if !w.lives_on(u.manifold()) {
                return Err(Error::GridMismatch);
            }
        }
        let n = u.manifold().dim() as f64;
        let (x_t, peak) = locate_max(&u);
        Ok(FamilyMember {
            u,
            t,
            x_t,
            mu_t: peak.powf(-2.0 / (n - 2.0)),
            lambda_t: report.lambda,
            q_t: report.q,
            f,
            profile: MemberProfile::Sampled,
        })
    }

    pub fn dim(&self) -> usize {
        self.u.manifold().dim()
    }

    pub fn manifold(&self) -> &Arc<ManifoldModel> {
        self.u.manifold()
    }

    /// m_t = max u = μ_t^{−(n−2)/2}.
    pub fn m_t(&self) -> f64 {
        self.mu_t.powf(-(self.dim() as f64 - 2.0) / 2.0)
    }

    /// k_t = 1/μ_t.
    pub fn k_t(&self) -> f64 {
        1.0 / self.mu_t
    }

    /// Width parameter of analytic members (μ_t for sampled ones), the scale
    /// used to place quadrature breakpoints.
    fn width(&self) -> f64 {
        match self.profile {
            MemberProfile::SphereExtremal { width, .. } => width,
            MemberProfile::Sampled => self.mu_t,
        }
    }

    /// Profile jet at geodesic distance ρ from x_t, for analytic members.
    fn extremal_jet(&self, rho: Jet) -> Option<Jet> {
        match self.profile {
            MemberProfile::SphereExtremal { scale, width } => Some(extremal_jet(self.dim(), width, scale, rho)),
            MemberProfile::Sampled => None,
        }
    }
}

fn extremal_jet(n: usize, mu: f64, scale: f64, rho: Jet) -> Jet {
    let e = (n as f64 - 2.0) / 2.0;
    // μ² + 1 − cos ρ written without cancellation.
    let s = (rho * 0.5).sin();
    (s * s * 2.0 + mu * mu).powf(-e) * (scale * mu.powf(e))
}

/// Grid argmax refined by a parabola through the neighbouring nodes (one
/// per axis on the torus), with the value of u there.
fn locate_max(u: &Field) -> (Point, f64) {
    let m = u.manifold();
    let v = u.values();
    let i = u.argmax();
    match &m.disc {
        Disc::Radial(g) => {
            let last = v.len() - 1;
            if i == 0 || i == last {
                return (Point::Radial(g.r[i]), v[i]);
            }
            let (a, b, c) = (v[i - 1], v[i], v[i + 1]);
            let curv = a - 2.0 * b + c;
            if !(curv < 0.0) {
                return (Point::Radial(g.r[i]), b);
            }
            let off = (0.5 * (a - c) / curv).clamp(-0.5, 0.5);
            (Point::Radial(g.r[i] + off * g.step), b - 0.25 * (a - c) * off)
        }
        Disc::Spectral(sp) => {
            let idx = sp.index(i);
            let mut offset = vec![0.0; idx.len()];
            for a in 0..idx.len() {
                let line = sp.line(v, &idx, a);
                let k = line.len();
                let j = idx[a];
                let (l, c, r) = (line[(j + k - 1) % k], line[j], line[(j + 1) % k]);
                let curv = l - 2.0 * c + r;
                if curv < 0.0 {
                    offset[a] = (0.5 * (l - r) / curv).clamp(-0.5, 0.5) * sp.side / k as f64;
                }
            }
            let coords = sp.coordinates(i);
            let x: Vec<f64> = coords.iter().zip(&offset).map(|(c, o)| c + o).collect();
            let peak = if offset.iter().all(|o| *o == 0.0) { v[i] } else { sp.shifted(v, &offset)[i] };
            (Point::Cartesian(x), peak)
        }
    }
}

/// A radial profile on the Euclidean chart ball B(0, radius), with the
/// tangential factor of the rescaled metric (its radial component is 1).
#[derive(Clone, Debug, Serialize)]
pub struct ChartField {
    pub dim: usize,
    pub radius: f64,
    pub s: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    pub laplacian: Option<Vec<f64>>,
    pub tangential: Vec<f64>,
    pub m_t: f64,
    pub k_t: f64,
    /// Largest spread between the sampled chart rays, relative to max |ũ|.
    pub anisotropy: f64,
}

impl ChartField {
    /// Flat chart of an explicit radial profile; the Laplacian is exact.
    pub fn from_fn(dim: usize, radius: f64, resolution: usize, profile: impl Fn(Jet) -> Jet) -> Result<Self> {
        let s = chart_radii(radius, resolution)?;
        let jets: Vec<Jet> = s.iter().map(|&x| profile(Jet::var(x))).collect();
        let laplacian = s
            .iter()
            .zip(&jets)
            .map(|(&x, j)| if x == 0.0 { -(dim as f64) * j.dd } else { euclidean_radial_laplacian(dim, x, *j) })
            .collect();
        Ok(ChartField {
            dim,
            radius,
            values: jets.iter().map(|j| j.v).collect(),
            derivs: jets.iter().map(|j| j.d).collect(),
            laplacian: Some(laplacian),
            tangential: vec![1.0; s.len()],
            s,
            m_t: 1.0,
            k_t: 1.0,
            anisotropy: 0.0,
        })
    }

    pub fn step(&self) -> f64 {
        self.s[1] - self.s[0]
    }

    /// ∫_{B(0, upto)} ũ^α dṽ in the rescaled metric.
    pub fn power_integral(&self, alpha: f64, upto: f64) -> f64 {
        let n = self.dim as i32;
        let integrand: Vec<f64> = (0..self.s.len())
            .map(|j| self.values[j].abs().powf(alpha) * (self.tangential[j] * self.s[j]).powi(n - 1))
            .collect();
        sphere_area(self.dim - 1) * quad::integrate_uniform_samples(self.step(), &integrand, upto)
    }

    /// Euclidean Laplacian of the profile: the stored one, or differences of
    /// the first derivative.
    pub fn euclidean_laplacian(&self) -> Vec<f64> {
        if let Some(l) = &self.laplacian {
            return l.clone();
        }
        let k = self.s.len();
        let h = self.step();
        let d = &self.derivs;
        let n = self.dim as f64;
        (0..k)
            .map(|j| {
                let dd = if j == 0 {
                    (-3.0 * d[0] + 4.0 * d[1] - d[2]) / (2.0 * h)
                } else if j == k - 1 {
                    (3.0 * d[j] - 4.0 * d[j - 1] + d[j - 2]) / (2.0 * h)
                } else {
                    (d[j + 1] - d[j - 1]) / (2.0 * h)
                };
                if j == 0 {
                    -n * dd
                } else {
                    -dd - (n - 1.0) / self.s[j] * d[j]
                }
            })
            .collect()
    }
}

fn chart_radii(radius: f64, resolution: usize) -> Result<Vec<f64>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Precondition("chart radius must be positive".into()));
    }
    if resolution < 4 {
        return Err(Error::Precondition("chart resolution must be at least 4".into()));
    }
    let h = radius / (resolution - 1) as f64;
    Ok((0..resolution).map(|j| j as f64 * h).collect())
}

/// Distance from x_t to the cut locus (or the boundary of the ball).
fn chart_limit(m: &ManifoldModel, x_t: &Point) -> f64 {
    match m.kind() {
        ManifoldKind::EuclideanBall => {
            let c = match x_t {
                Point::Radial(r) => r.abs(),
                Point::Cartesian(x) => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            };
            m.size() - c
        }
        _ => m.injectivity_radius(),
    }
}

/// ũ_t(x) = m_t^{−1} u_t(exp_{x_t}(x/k_t)) sampled on rays of the chart ball
/// B(0, radius).
pub fn rescale(member: &FamilyMember, radius: f64, resolution: usize) -> Result<ChartField> {
    let s = chart_radii(radius, resolution)?;
    let m = member.manifold();
    let n = member.dim();
    let mu = member.mu_t;
    let limit = chart_limit(m, &member.x_t);
    if radius * mu >= limit {
        return Err(Error::RadiusTooLarge { radius, limit: limit / mu });
    }
    let mt = member.m_t();
    let flat = m.kind() != ManifoldKind::RoundSphere;
    let tangential: Vec<f64> =
        s.iter().map(|&x| if flat || x == 0.0 { 1.0 } else { (mu * x).sin() / (mu * x) }).collect();
    let mut chart = ChartField {
        dim: n,
        radius,
        s: s.clone(),
        values: Vec::new(),
        derivs: Vec::new(),
        laplacian: None,
        tangential,
        m_t: mt,
        k_t: 1.0 / mu,
        anisotropy: 0.0,
    };
    if let MemberProfile::SphereExtremal { .. } = member.profile {
        let jets: Vec<Jet> = s.iter().map(|&x| member.extremal_jet(Jet::var(mu * x)).expect("analytic")).collect();
        chart.values = jets.iter().map(|j| j.v / mt).collect();
        chart.derivs = jets.iter().map(|j| j.d * mu / mt).collect();
        return Ok(chart);
    }
    let u = member.u.values();
    match &m.disc {
        Disc::Radial(g) => {
            let at_pole = matches!(member.x_t, Point::Radial(r) if r == 0.0)
                || matches!(&member.x_t, Point::Cartesian(x) if x.iter().all(|v| *v == 0.0));
            if !at_pole {
                return Err(Error::Precondition("radial samples can only be rescaled about the pole".into()));
            }
            for &x in &s {
                let (v, d) = g.interpolate(u, mu * x);
                chart.values.push(v / mt);
                chart.derivs.push(d * mu / mt);
            }
        }
        Disc::Spectral(sp) => {
            let x_t = match &member.x_t {
                Point::Cartesian(x) => x.clone(),
                Point::Radial(_) => return Err(Error::Precondition("torus points are Cartesian".into())),
            };
            let node = m.nearest_node(&member.x_t)?;
            let base = sp.coordinates(node);
            let offset = manifold::torus_offset(&base, &x_t, sp.side);
            let shifted;
            let vals: &[f64] = if offset.iter().all(|o| *o == 0.0) {
                u
            } else {
                shifted = sp.shifted(u, &offset);
                &shifted
            };
            let idx = sp.index(node);
            let mut rays: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(2 * n);
            for a in 0..n {
                let coeffs = manifold::line_coefficients(&sp.line(vals, &idx, a));
                for sign in [1.0, -1.0] {
                    let (mut rv, mut rd) = (Vec::with_capacity(s.len()), Vec::with_capacity(s.len()));
                    for &x in &s {
                        let (v, d, _) = manifold::trig_eval(&coeffs, sp.side, base[a] + sign * mu * x);
                        rv.push(v / mt);
                        rd.push(sign * d * mu / mt);
                    }
                    rays.push((rv, rd));
                }
            }
            let k = rays.len() as f64;
            chart.values = (0..s.len()).map(|j| rays.iter().map(|r| r.0[j]).sum::<f64>() / k).collect();
            chart.derivs = (0..s.len()).map(|j| rays.iter().map(|r| r.1[j]).sum::<f64>() / k).collect();
            let scale = chart.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
            chart.anisotropy = rays
                .iter()
                .flat_map(|r| r.0.iter().zip(&chart.values).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max)
                / scale;
        }
    }
    Ok(chart)
}

/// ∫_{B(x_t, r)} u^α dv on the manifold. Radial and analytic members use
/// one-dimensional quadrature of the profile; torus members sum the cells
/// whose node lies in the ball.
pub fn ball_power_integral(member: &FamilyMember, r: f64, alpha: f64) -> Result<f64> {
    let m = member.manifold();
    let n = member.dim();
    let area = sphere_area(n - 1);
    if let MemberProfile::SphereExtremal { .. } = member.profile {
        let upper = r.min(std::f64::consts::PI);
        let g = |rho: f64| {
            member.extremal_jet(Jet::var(rho)).expect("analytic").v.powf(alpha) * area * rho.sin().powi(n as i32 - 1)
        };
        return Ok(quad::integrate_pieces(&g, &scale_breaks(member.width(), upper), 1e-12));
    }
    match &m.disc {
        Disc::Radial(g) => {
            let upper = r.min(*g.r.last().unwrap());
            let u = member.u.values();
            let f = |rho: f64| g.interpolate(u, rho).0.abs().powf(alpha) * g.density(rho);
            let mut breaks: Vec<f64> = g.r.iter().copied().take_while(|&x| x < upper).collect();
            breaks.push(upper);
            Ok(quad::integrate_pieces(&f, &breaks, 1e-12))
        }
        Disc::Spectral(_) => {
            let d = m.distances_from(&member.x_t)?;
            let w = m.node_weights();
            Ok((0..d.len()).filter(|&i| d[i] < r).map(|i| w[i] * member.u.values()[i].abs().powf(alpha)).sum())
        }
    }
}

/// Breakpoints 0, μ/4, μ/2, μ, 2μ, … up to `upper`, for integrands
/// concentrated at scale μ.
fn scale_breaks(mu: f64, upper: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    let mut x = 0.25 * mu;
    while x < upper {
        b.push(x);
        x *= 2.0;
    }
    b.push(upper);
    b
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationReport {
    pub x0: Point,
    pub t: Vec<f64>,
    pub radii: Vec<f64>,
    pub deltas: Vec<f64>,
    /// ∫_{B(x_t, Rμ_t)} f u_t^{2*}, indexed [member][radius].
    pub ball_mass: Vec<Vec<f64>>,
    /// sup d(x_t, ·)^{(n−2)/2} u_t.
    pub weak_sup: Vec<f64>,
    /// sup d(x_t, ·)^{n−2} μ_t^{−(n−2)/2} u_t.
    pub strong_sup: Vec<f64>,
    /// ∫_{B(x0, δ)} u_t² / ∫ u_t², indexed [member][delta]; only for n ≥ 4.
    pub l2_ratio: Option<Vec<Vec<f64>>>,
    /// d(x_t, x0)/μ_t.
    pub second_ratio: Vec<f64>,
}

struct MemberDiagnostics {
    ball_mass: Vec<f64>,
    weak_sup: f64,
    strong_sup: f64,
    l2_ratio: Vec<f64>,
    second_ratio: f64,
}

pub fn concentration_diagnostics(
    family: &[FamilyMember],
    x0: &Point,
    radii: &[f64],
    deltas: &[f64],
) -> Result<ConcentrationReport> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let n = family[0].dim();
    let with_l2 = n >= 4;
    let rows: Vec<MemberDiagnostics> = family
        .par_iter()
        .map(|mem| {
            if mem.profile == MemberProfile::Sampled {
                sampled_diagnostics(mem, x0, radii, if with_l2 { deltas } else { &[] })
            } else {
                analytic_diagnostics(mem, x0, radii, if with_l2 { deltas } else { &[] })
            }
        })
        .collect::<Result<_>>()?;
    let report = ConcentrationReport {
        x0: x0.clone(),
        t: family.iter().map(|m| m.t).collect(),
        radii: radii.to_vec(),
        deltas: deltas.to_vec(),
        ball_mass: rows.iter().map(|r| r.ball_mass.clone()).collect(),
        weak_sup: rows.iter().map(|r| r.weak_sup).collect(),
        strong_sup: rows.iter().map(|r| r.strong_sup).collect(),
        l2_ratio: with_l2.then(|| rows.iter().map(|r| r.l2_ratio.clone()).collect()),
        second_ratio: rows.iter().map(|r| r.second_ratio).collect(),
    };
    let finite = |v: f64| v.is_finite() && v >= 0.0;
    let all_ok = report.ball_mass.iter().flatten().all(|&v| finite(v))
        && report.weak_sup.iter().chain(&report.strong_sup).chain(&report.second_ratio).all(|&v| finite(v))
        && report.l2_ratio.iter().flatten().flatten().all(|&v| finite(v));
    if !all_ok {
        return Err(Error::Precondition("concentration diagnostics produced a non-finite entry".into()));
    }
    Ok(report)
}

fn sampled_diagnostics(mem: &FamilyMember, x0: &Point, radii: &[f64], deltas: &[f64]) -> Result<MemberDiagnostics> {
    let m = mem.manifold();
    let n = mem.dim() as f64;
    let p = critical_exponent(mem.dim());
    let w = m.node_weights();
    let u = mem.u.values();
    let dt = m.distances_from(&mem.x_t)?;
    let d0 = m.distances_from(x0)?;
    let fw = |i: usize| mem.f.as_ref().map_or(1.0, |f| f.values()[i]);
    let ball_mass = radii
        .iter()
        .map(|&rr| (0..u.len()).filter(|&i| dt[i] < rr * mem.mu_t).map(|i| w[i] * fw(i) * u[i].powf(p)).sum())
        .collect();
    let weak_sup = (0..u.len()).map(|i| dt[i].powf((n - 2.0) / 2.0) * u[i]).fold(0.0, f64::max);
    let norm = mem.mu_t.powf(-(n - 2.0) / 2.0);
    let strong_sup = (0..u.len()).map(|i| dt[i].powf(n - 2.0) * u[i] / norm).fold(0.0, f64::max);
    let total: f64 = (0..u.len()).map(|i| w[i] * u[i] * u[i]).sum();
    let l2_ratio = deltas
        .iter()
        .map(|&d| (0..u.len()).filter(|&i| d0[i] < d).map(|i| w[i] * u[i] * u[i]).sum::<f64>() / total)
        .collect();
    let second_ratio = geodesic_distance(m, &mem.x_t, x0)? / mem.mu_t;
    Ok(MemberDiagnostics { ball_mass, weak_sup, strong_sup, l2_ratio, second_ratio })
}

fn analytic_diagnostics(mem: &FamilyMember, x0: &Point, radii: &[f64], deltas: &[f64]) -> Result<MemberDiagnostics> {
    use std::f64::consts::PI;
    let n = mem.dim();
    let nf = n as f64;
    let mu = mem.mu_t;
    let width = mem.width();
    let p = critical_exponent(n);
    let area = sphere_area(n - 1);
    let u = |rho: f64| mem.extremal_jet(Jet::var(rho)).expect("analytic").v;
    let vol = |rho: f64| area * rho.sin().powi(n as i32 - 1);
    let ball_mass = radii
        .iter()
        .map(|&rr| {
            let upper = (rr * mu).min(PI);
            quad::integrate_pieces(&|rho: f64| u(rho).powf(p) * vol(rho), &scale_breaks(width, upper), 1e-11)
        })
        .collect();
    let weak_sup = profile_sup(width, |rho| rho.powf((nf - 2.0) / 2.0) * u(rho));
    let norm = mu.powf(-(nf - 2.0) / 2.0);
    let strong_sup = profile_sup(width, |rho| rho.powf(nf - 2.0) * u(rho) / norm);
    let d = geodesic_distance(mem.manifold(), &mem.x_t, x0)?;
    let l2 = |rho: f64| u(rho).powi(2) * vol(rho);
    let total = quad::integrate_pieces(&l2, &scale_breaks(width, PI), 1e-11);
    let l2_ratio = deltas
        .iter()
        .map(|&delta| {
            let mut breaks = scale_breaks(width, PI);
            breaks.extend([(delta - d).abs(), (delta + d).min(PI)]);
            let inside = quad::integrate_pieces(&|rho: f64| l2(rho) * cap_fraction(n, rho, d, delta), &breaks, 1e-11);
            inside / total
        })
        .collect();
    Ok(MemberDiagnostics { ball_mass, weak_sup, strong_sup, l2_ratio, second_ratio: d / mu })
}

/// Supremum over ρ ∈ (0, π] of a profile functional varying on scale μ:
/// a log-spaced scan refined by golden-section search.
fn profile_sup(mu: f64, g: impl Fn(f64) -> f64) -> f64 {
    let lo = (mu * 1e-4).ln();
    let hi = std::f64::consts::PI.ln();
    let k = 4000;
    let at = |j: usize| (lo + (hi - lo) * j as f64 / k as f64).exp();
    let (mut best, mut jb) = (f64::NEG_INFINITY, 0);
    for j in 0..=k {
        let v = g(at(j));
        if v > best {
            best = v;
            jb = j;
        }
    }
    let (mut a, mut b) = (at(jb.saturating_sub(1)).ln(), at((jb + 1).min(k)).ln());
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - phi * (b - a);
        let e = a + phi * (b - a);
        if g(c.exp()) >= g(e.exp()) {
            b = e;
        } else {
            a = c;
        }
    }
    best.max(g((0.5 * (a + b)).exp()))
}

/// Fraction of the geodesic sphere S(x_t, ρ) lying in B(x0, δ), where
/// d = d(x_t, x0), on the unit sphere.
fn cap_fraction(n: usize, rho: f64, d: f64, delta: f64) -> f64 {
    if d == 0.0 {
        return if rho < delta { 1.0 } else { 0.0 };
    }
    let hs = |x: f64| (0.5 * x).sin().powi(2);
    // cos δ − cos ρ cos d in haversine form.
    let num = 2.0 * (hs(rho) - hs(delta)) + rho.cos() * 2.0 * hs(d);
    let den = rho.sin() * d.sin();
    if den <= 0.0 {
        return if num < 0.0 { 1.0 } else { 0.0 };
    }
    let c = num / den;
    if c <= -1.0 {
        1.0
    } else if c >= 1.0 {
        0.0
    } else {
        let theta = c.acos();
        polar_cap(n, theta) / polar_cap(n, std::f64::consts::PI)
    }
}

/// ∫₀^θ sin^{n−2} by Gauss–Legendre.
fn polar_cap(n: usize, theta: f64) -> f64 {
    let h = 0.5 * theta;
    gauss_legendre(32).iter().map(|&(x, w)| w * h * (h * (x + 1.0)).sin().powi(n as i32 - 2)).sum()
}

/// Points at distances 10^{−1}, …, 10^{−count} from the pole along the
/// meridian, with width d².
pub fn quadratic_schedule(count: usize) -> Vec<(Point, f64)> {
    (1..=count)
        .map(|j| {
            let d = 10f64.powi(-(j as i32));
            (Point::Radial(d), d * d)
        })
        .collect()
}

/// u_t = c_t w^{(n−2)/2}(w² + 1 − cos r_t)^{−(n−2)/2} on the unit sphere, with
/// r_t = d(x_t, ·), w the scheduled width and c_t chosen so that
/// ∫ u_t^{2*} = 1; μ_t = u_t(x_t)^{−2/(n−2)} = c_t^{−2/(n−2)} w. Points are
/// given on the meridian of the radial sphere model.
pub fn sphere_counterexample_family(n: usize, x0: &Point, schedule: &[(Point, f64)]) -> Result<Vec<FamilyMember>> {
    if n < 3 {
        return Err(Error::UnsupportedDimension { dim: n, reason: "the family needs n ≥ 3".into() });
    }
    if !matches!(x0, Point::Radial(_)) {
        return Err(Error::Precondition("points are given on the meridian (Point::Radial)".into()));
    }
    let m = ManifoldModel::sphere(n, DEFAULT_RADIAL_NODES)?;
    let crit = critical_exponent(n);
    let area = sphere_area(n - 1);
    schedule
        .par_iter()
        .enumerate()
        .map(|(j, (x_t, mu))| {
            if !matches!(x_t, Point::Radial(r) if (0.0..=std::f64::consts::PI).contains(r)) {
                return Err(Error::Precondition("x_t must be a meridian point".into()));
            }
            if !(*mu > 0.0) {
                return Err(Error::Precondition("μ_t must be positive".into()));
            }
            let bare = |rho: f64| extremal_jet(n, *mu, 1.0, Jet::var(rho)).v.powf(crit) * area * rho.sin().powi(n as i32 - 1);
            let mass = quad::integrate_pieces(&bare, &scale_breaks(*mu, std::f64::consts::PI), 1e-13);
            let scale = mass.powf(-1.0 / crit);
            let u = Field::radial_about(&m, x_t, |rho| extremal_jet(n, *mu, scale, Jet::var(rho)).v)?;
            Ok(FamilyMember {
                u,
                t: (j + 1) as f64,
                x_t: x_t.clone(),
                mu_t: *mu * scale.powf(-2.0 / (n as f64 - 2.0)),
                lambda_t: 1.0 / sobolev_k2(n),
                q_t: crit,
                f: None,
                profile: MemberProfile::SphereExtremal { scale, width: *mu },
            })
        })
        .collect()
}

/// Least-squares constant c in Δu + n(n−2)/4·u = c·u^{(n+2)/(n−2)} for an
/// analytic member, with the largest pointwise residual relative to the
/// size of the terms.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EquationFit {
    pub c: f64,
    pub max_rel_residual: f64,
}

pub fn extremal_equation_fit(member: &FamilyMember) -> Result<EquationFit> {
    let (scale, width) = match member.profile {
        MemberProfile::SphereExtremal { scale, width } => (scale, width),
        MemberProfile::Sampled => return Err(Error::Precondition("the fit needs an analytic member".into())),
    };
    let n = member.dim();
    let nf = n as f64;
    let p = critical_exponent(n) - 1.0;
    let pot = nf * (nf - 2.0) / 4.0;
    let lo = (width * 1e-3).ln();
    let hi = (std::f64::consts::PI - 1e-3).ln();
    let rows: Vec<(f64, f64, f64)> = (0..=400)
        .map(|j| {
            let rho = (lo + (hi - lo) * j as f64 / 400.0).exp();
            let u = extremal_jet(n, width, scale, Jet::var(rho));
            let cot = rho.cos() / rho.sin();
            let lhs = sphere_radial_laplacian(n, rho, u) + pot * u.v;
            let size = u.dd.abs() + (nf - 1.0) * (cot * u.d).abs() + pot * u.v;
            (lhs, u.v.powf(p), size)
        })
        .collect();
    let num: f64 = rows.iter().map(|(l, r, s)| l * r / (s * s)).sum();
    let den: f64 = rows.iter().map(|(_, r, s)| r * r / (s * s)).sum();
    let c = num / den;
    let max_rel_residual = rows.iter().map(|(l, r, s)| (l - c * r).abs() / (s + c * r)).fold(0.0, f64::max);
    Ok(EquationFit { c, max_rel_residual })
}

/// Q = 4k/(k+1)² − λ_t K² sup|f| H, where H = (∫_{supp η} u^{2*})^{2/n} at the
/// critical exponent and Vol(supp η)^{2/q−2/2*}(∫_{supp η} u^q)^{(q−2)/q} below it.
pub fn moser_q(member: &FamilyMember, k: f64, eta: &Field, sup_abs_f: f64, k2: f64) -> Result<f64> {
    if !(k >= 1.0) {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let m = member.manifold();
    if !eta.lives_on(m) {
        return Err(Error::GridMismatch);
    }
    let n = member.dim() as f64;
    let crit = critical_exponent(member.dim());
    let q = member.q_t;
    let w = m.node_weights();
    let u = member.u.values();
    let supp: Vec<usize> = (0..u.len()).filter(|&i| eta.values()[i] > 0.0).collect();
    let holder = if q >= crit - 1e-12 {
        supp.iter().map(|&i| w[i] * u[i].powf(crit)).sum::<f64>().powf(2.0 / n)
    } else {
        let vol: f64 = supp.iter().map(|&i| w[i]).sum();
        let mass: f64 = supp.iter().map(|&i| w[i] * u[i].powf(q)).sum();
        vol.powf(2.0 / q - 2.0 / crit) * mass.powf((q - 2.0) / q)
    };
    Ok(4.0 * k / (k + 1.0).powi(2) - member.lambda_t * k2 * sup_abs_f * holder)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MoserCheck {
    pub k: f64,
    pub q_value: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub b: f64,
    pub c0: f64,
    pub c_eta: f64,
}

/// Q·(∫(η u^{(k+1)/2})^{2*})^{2/2*} ≤ (4k/(k+1)²·B + C₀ + C_η)·∫_{supp η} u^{k+1},
/// with C₀ = ‖h‖_∞ and C_η = sup |(2/(k+1))|∇η|² + (2(k−1)/(k+1)²)ηΔη|.
pub fn moser_inequality_check(t: &Triple, report: &MinimizeReport, k: f64, eta: &Field) -> Result<MoserCheck> {
    if t.conformal.is_some() {
        return Err(Error::Precondition("the bound is checked in the base metric".into()));
    }
    let m = &t.manifold;
    if !report.u.lives_on(m) || !eta.lives_on(m) {
        return Err(Error::GridMismatch);
    }
    let n = t.dim();
    let crit = critical_exponent(n);
    let member = FamilyMember::from_report(report, 0.0, Some(t.f.clone()))?;
    let sup_abs_f = t.f.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let q_value = moser_q(&member, k, eta, sup_abs_f, sobolev_k2(n))?;
    let u = report.u.values();
    let e = eta.values();
    let w = m.node_weights();
    let lw: f64 = (0..u.len()).map(|i| w[i] * (e[i] * u[i].powf(0.5 * (k + 1.0))).abs().powf(crit)).sum();
    let lhs = q_value * lw.powf(2.0 / crit);
    let b = b0_lower_estimate(m, std::slice::from_ref(&report.u))?;
    let c0 = t.h.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let grad = manifold::gradient_norm_sq(m, eta)?;
    let lap = manifold::laplacian(m, eta)?;
    let c_eta = (0..u.len())
        .map(|i| {
            (2.0 / (k + 1.0) * grad.values()[i] + 2.0 * (k - 1.0) / (k + 1.0).powi(2) * e[i] * lap.values()[i]).abs()
        })
        .fold(0.0, f64::max);
    let mass: f64 = (0..u.len()).filter(|&i| e[i] > 0.0).map(|i| w[i] * u[i].powf(k + 1.0)).sum();
    let rhs = (4.0 * k / (k + 1.0).powi(2) * b + c0 + c_eta) * mass;
    Ok(MoserCheck { k, q_value, lhs, rhs, slack: rhs - lhs, b, c0, c_eta })
}

/// Where Δū comes from in the Pohozaev identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LaplacianSource {
    /// The chart's own Euclidean Laplacian.
    Profile,
    /// Δū = coefficient·ū^{exponent−1} − potential·ū.
    Equation { potential: f64, coefficient: f64, exponent: f64 },
}

impl LaplacianSource {
    /// The equation Δu + hu = λ f u^{q−1} with constant h and f, carried to
    /// the scale of a rescaled chart.
    pub fn rescaled_equation(chart: &ChartField, h: f64, f: f64, lambda: f64, q: f64) -> Self {
        let mu = 1.0 / chart.k_t;
        LaplacianSource::Equation {
            potential: mu * mu * h,
            coefficient: lambda * f * mu * mu * chart.m_t.powf(q - 2.0),
            exponent: q,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PohozaevTerms {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Both sides of ∫_{B(0,δ)}(x·∇ū + (n−2)/2·ū)Δū dx
/// = δ∫_{∂B}(|∇ū|²/2 − (∂_νū)²)dσ − (n−2)/2·∫_{∂B} ū ∂_νū dσ for a radial chart.
pub fn pohozaev_terms(chart: &ChartField, source: LaplacianSource, delta: f64) -> Result<PohozaevTerms> {
    if chart.anisotropy > RADIAL_TOL {
        return Err(Error::NotRadial(chart.anisotropy));
    }
    if !(delta > 0.0) || delta > chart.radius {
        return Err(Error::RadiusTooLarge { radius: delta, limit: chart.radius });
    }
    let n = chart.dim as f64;
    let area = sphere_area(chart.dim - 1);
    let lap: Vec<f64> = match source {
        LaplacianSource::Profile => chart.euclidean_laplacian(),
        LaplacianSource::Equation { potential, coefficient, exponent } => chart
            .values
            .iter()
            .map(|&v| coefficient * v.abs().powf(exponent - 2.0) * v - potential * v)
            .collect(),
    };
    let integrand: Vec<f64> = (0..chart.s.len())
        .map(|j| {
            let s = chart.s[j];
            (s * chart.derivs[j] + 0.5 * (n - 2.0) * chart.values[j]) * lap[j] * s.powi(chart.dim as i32 - 1)
        })
        .collect();
    let h = chart.step();
    let lhs = area * quad::integrate_uniform_samples(h, &integrand, delta);
    let v = quad::lagrange4(h, &chart.values, delta);
    let d = quad::lagrange4(h, &chart.derivs, delta);
    let rhs = -area * delta.powi(chart.dim as i32) * d * d / 2.0
        - 0.5 * (n - 2.0) * area * delta.powi(chart.dim as i32 - 1) * v * d;
    Ok(PohozaevTerms { lhs, rhs, residual: (lhs - rhs).abs() })
}

pub fn pohozaev_residual(chart: &ChartField, source: LaplacianSource, delta: f64) -> Result<f64> {
    Ok(pohozaev_terms(chart, source, delta)?.residual)
}
