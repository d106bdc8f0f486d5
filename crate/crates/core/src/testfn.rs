//! Aubin test functions and their expansions, the maximum-point criterion,
//! and the dimension-3 test functions built on the Green regular part.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::{self, classify_with, Classification, ContinuationSchedule, Triple, CLASSIFY_BAND_REL};
use crate::green::{self, cutoff_jet};
use crate::jet::Jet;
use crate::manifold::{self, critical_exponent, sobolev_k2, sphere_area, Field, ManifoldKind, ManifoldModel, Point};
use crate::quad;

#[derive(Clone, Debug, Serialize)]
pub struct AubinParams {
    pub k: f64,
    pub p: Point,
    pub delta: f64,
}

fn check_params(m: &ManifoldModel, p: &AubinParams) -> Result<()> {
    if !(p.k >= 1.0) {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    if !(p.delta > 0.0) || p.delta >= m.injectivity_radius() {
        return Err(Error::RadiusTooLarge { radius: p.delta, limit: m.injectivity_radius() });
    }
    Ok(())
}

/// ψ_k and its radial derivative at distance r from the centre.
fn psi(n: usize, k: f64, delta: f64, r: f64) -> (f64, f64) {
    if r >= delta {
        return (0.0, 0.0);
    }
    let e = (n as f64 - 2.0) / 2.0;
    let base = 1.0 / k + r * r;
    (base.powf(-e) - (1.0 / k + delta * delta).powf(-e), -(n as f64 - 2.0) * r * base.powf(-e - 1.0))
}

/// ψ_k(Q) = (1/k + r²)^{−(n−2)/2} − (1/k + δ²)^{−(n−2)/2} inside B(P, δ), zero outside.
pub fn aubin_psi(m: &std::sync::Arc<ManifoldModel>, p: &AubinParams) -> Result<Field> {
    check_params(m, p)?;
    let n = m.dim();
    Field::radial_about(m, &p.p, |r| psi(n, p.k, p.delta, r).0)
}

fn at_pole(m: &ManifoldModel, p: &Point) -> bool {
    m.is_radial() && m.nearest_node(p).map(|i| i == 0).unwrap_or(false)
        && match p {
            Point::Radial(r) => *r == 0.0,
            Point::Cartesian(x) => x.iter().all(|v| *v == 0.0),
        }
}

/// Radial profile of a field by cubic interpolation of its nodal values.
fn profile<'a>(m: &'a ManifoldModel, u: &'a Field) -> impl Fn(f64) -> (f64, f64) + 'a {
    let g = m.radial().expect("radial model");
    move |r| g.interpolate(u.values(), r)
}

fn volume_density(m: &ManifoldModel) -> impl Fn(f64) -> f64 {
    let n = m.dim();
    let spherical = m.kind() == ManifoldKind::RoundSphere;
    let area = sphere_area(n - 1);
    move |r| area * if spherical { r.sin() } else { r }.powi(n as i32 - 1)
}

/// J_q(ψ_k). On radial models with P at the pole the integrals are
/// evaluated by adaptive quadrature of the closed-form profile; elsewhere
/// the sampled field is used.
pub fn aubin_quotient(t: &Triple, p: &AubinParams, q: f64) -> Result<f64> {
    let m = &t.manifold;
    check_params(m, p)?;
    if t.conformal.is_some() || !at_pole(m, &p.p) {
        let w = aubin_psi(m, p)?;
        return functional::quotient_j(t, &w, q);
    }
    let n = m.dim();
    let dens = volume_density(m);
    let hp = profile(m, &t.h);
    let fp = profile(m, &t.f);
    let w = 1.0 / p.k.sqrt();
    let mut breaks: Vec<f64> = [0.0, 0.25 * w, w, 4.0 * w, 16.0 * w].iter().cloned().filter(|&b| b < p.delta).collect();
    breaks.push(p.delta);
    let energy = quad::integrate_pieces(
        &|r: f64| {
            let (v, d) = psi(n, p.k, p.delta, r);
            (d * d + hp(r).0 * v * v) * dens(r)
        },
        &breaks,
        1e-12,
    );
    let mass = quad::integrate_pieces(
        &|r: f64| {
            let v = psi(n, p.k, p.delta, r).0;
            fp(r).0 * v.abs().powf(q) * dens(r)
        },
        &breaks,
        1e-12,
    );
    if !(mass > 0.0) {
        return Err(Error::DenominatorNonpositive(mass));
    }
    Ok(energy / mass.powf(2.0 / q))
}

/// Predicted J_{h,f,g}(ψ_k) without the remainder term:
/// ceiling·(1 + gap/(n(n−4)k)) for n > 4 and ceiling·(1 + (6h − S) log k/(8k)) for n = 4.
pub fn aubin_expansion(n: usize, h_p: f64, s_p: f64, lapf_over_f: f64, k: f64, sup_f: f64) -> Result<f64> {
    if n < 4 {
        return Err(Error::UnsupportedDimension { dim: n, reason: "the expansion needs n ≥ 4".into() });
    }
    if !(sup_f > 0.0) {
        return Err(Error::Precondition("sup f must be positive".into()));
    }
    let ceiling = functional::Ceiling::new(n, sup_f).value;
    let nf = n as f64;
    Ok(if n == 4 {
        ceiling * (1.0 + (6.0 * h_p - s_p) * k.ln() / (8.0 * k))
    } else {
        let gap = 4.0 * (nf - 1.0) / (nf - 2.0) * h_p - s_p + (nf - 4.0) / 2.0 * lapf_over_f;
        ceiling * (1.0 + gap / (nf * (nf - 4.0) * k))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    N4,
    NGreater4,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub p: Point,
    pub gap: f64,
    pub branch: Branch,
    pub h_p: f64,
    pub scalar_curvature: f64,
    pub lapf_over_f: f64,
}

/// Scalar curvature and Δf/f of the triple's metric at a node.
fn local_geometry(t: &Triple, node: usize) -> Result<(f64, f64)> {
    let m = &t.manifold;
    let n = m.dim() as f64;
    let s = m.scalar_curvature();
    let f_p = t.f.values()[node];
    match &t.conformal {
        None => Ok((s, manifold::laplacian_at(m, &t.f, node)? / f_p)),
        Some(u) => {
            let c = (n - 2.0) / (4.0 * (n - 1.0));
            let u_p = u.values()[node];
            let scale = u_p.powf(1.0 - critical_exponent(m.dim()));
            let lu = manifold::laplacian_at(m, u, node)?;
            let s_new = scale * (lu + c * s * u_p) / c;
            let uf = u.zip_map(&t.f, |a, b| a * b)?;
            let luf = manifold::laplacian_at(m, &uf, node)?;
            let lap_f = scale * (luf + c * s * u_p * f_p) - c * s_new * f_p;
            Ok((s_new, lap_f / f_p))
        }
    }
}

/// 4(n−1)/(n−2)·h(P) − S(P) + (n−4)/2·Δf(P)/f(P), which is 6h(P) − S(P) when n = 4.
pub fn criterion_gap(t: &Triple, p: &Point) -> Result<CriterionReport> {
    let n = t.dim();
    if n < 4 {
        return Err(Error::UnsupportedDimension { dim: n, reason: "the maximum-point criterion needs n ≥ 4".into() });
    }
    let node = t.manifold.nearest_node(p)?;
    if !t.maxima_nodes.contains(&node) {
        return Err(Error::NotAMaximum);
    }
    let (s, lf) = local_geometry(t, node)?;
    let nf = n as f64;
    let h_p = t.h.values()[node];
    let gap = 4.0 * (nf - 1.0) / (nf - 2.0) * h_p - s + (nf - 4.0) / 2.0 * lf;
    let branch = if n == 4 { Branch::N4 } else { Branch::NGreater4 };
    Ok(CriterionReport { p: t.manifold.node_point(node), gap, branch, h_p, scalar_curvature: s, lapf_over_f: lf })
}

fn require_dim3(m: &ManifoldModel) -> Result<()> {
    if m.dim() != 3 {
        return Err(Error::UnsupportedDimension { dim: m.dim(), reason: "dimension-3 test functions".into() });
    }
    Ok(())
}

/// u_ε = η v_ε + β with v_ε = (ε² + d(x₀, ·)²)^{−1/2}.
pub fn dim3_test_function(
    m: &std::sync::Arc<ManifoldModel>,
    x0: &Point,
    eps: f64,
    beta: &Field,
    delta: f64,
) -> Result<Field> {
    require_dim3(m)?;
    if !beta.lives_on(m) {
        return Err(Error::GridMismatch);
    }
    if !(eps > 0.0) {
        return Err(Error::Precondition("epsilon must be positive".into()));
    }
    let d = m.distances_from(x0)?;
    let vals = d
        .iter()
        .zip(beta.values())
        .map(|(&r, b)| green::cutoff(r, delta) / (eps * eps + r * r).sqrt() + b)
        .collect();
    Field::new(m, vals)
}

/// I_{p,q} = ∫₀^∞ s^{p+2} (1+s²)^{−q/2} ds, via s = tan θ:
/// ∫₀^{π/2} sin^{p+2}θ cos^{q−p−4}θ dθ.
pub fn radial_integral_ipq(p: i32, q: i32) -> Result<f64> {
    if q - p <= 3 || p < -2 {
        return Err(Error::Divergent { p, q });
    }
    let (a, b) = (p + 2, q - p - 4);
    Ok(quad::integrate(&|th: f64| th.sin().powi(a) * th.cos().powi(b), 0.0, std::f64::consts::FRAC_PI_2, 1e-14))
}

#[derive(Clone, Debug, Serialize)]
pub struct MassSignReport {
    pub x0: Point,
    pub eps: Vec<f64>,
    pub deficits: Vec<f64>,
    /// Intercept and slope of deficit(ε) ≈ a₀ + a₁ε.
    pub a0: f64,
    pub a1: f64,
    pub min_deficit: f64,
    pub beta_at_x0: f64,
    pub mass: f64,
}

/// Deficit of the weakly-critical inequality
/// K⁻²(sup f)^{−1/3}(∫f u_ε⁶)^{1/3} ≤ ∫|∇u_ε|² + ∫h u_ε² along an ε sweep.
pub fn dim3_weakly_critical_test(t: &Triple, x0: &Point, eps_sweep: &[f64]) -> Result<MassSignReport> {
    let m = &t.manifold;
    require_dim3(m)?;
    if eps_sweep.len() < 2 {
        return Err(Error::Precondition("need at least two values of epsilon".into()));
    }
    let node = m.nearest_node(x0)?;
    if !t.maxima_nodes.contains(&node) {
        return Err(Error::NotAMaximum);
    }
    let class = classify_with(t, &ContinuationSchedule::default_for(3), CLASSIFY_BAND_REL)?.classification;
    if !matches!(class, Classification::WeaklyCritical(_)) {
        return Err(Error::Precondition(format!("triple is {}, not weakly critical", class.label())));
    }
    let delta = green::default_delta(m);
    let gf = green::build_green(m, &t.h, x0, delta, 1e-12)?;
    let lead = 1.0 / (sobolev_k2(3) * t.sup_f.powf(1.0 / 3.0));
    let deficits: Vec<f64> = eps_sweep
        .iter()
        .map(|&eps| -> Result<f64> {
            let (energy, crit) = if t.conformal.is_none() && at_pole(m, &gf.pole) {
                dim3_integrals_radial(t, &gf.beta, delta, eps)
            } else {
                let u = dim3_test_function(m, &gf.pole, eps, &gf.beta, delta)?;
                let w = t.volume_weights();
                let crit = u.values().iter().zip(t.f.values()).zip(&w).map(|((a, f), v)| v * f * a.powi(6)).sum();
                (functional::energy_i(t, &u)?, crit)
            };
            Ok(energy - lead * crit.powf(1.0 / 3.0))
        })
        .collect::<Result<_>>()?;
    let (a0, a1) = linear_fit(eps_sweep, &deficits);
    let beta_at_x0 = gf.beta.values()[gf.pole_node];
    Ok(MassSignReport {
        x0: gf.pole.clone(),
        eps: eps_sweep.to_vec(),
        min_deficit: deficits.iter().cloned().fold(f64::INFINITY, f64::min),
        deficits,
        a0,
        a1,
        beta_at_x0,
        mass: beta_at_x0 / sphere_area(2),
    })
}

/// (∫|∇u_ε|² + h u_ε², ∫ f u_ε⁶) by quadrature of the interpolated profiles.
fn dim3_integrals_radial(t: &Triple, beta: &Field, delta: f64, eps: f64) -> (f64, f64) {
    let m = &t.manifold;
    let dens = volume_density(m);
    let bp = profile(m, beta);
    let hp = profile(m, &t.h);
    let fp = profile(m, &t.f);
    let rmax = match m.kind() {
        ManifoldKind::RoundSphere => std::f64::consts::PI,
        _ => m.size(),
    };
    let u = |r: f64| -> (f64, f64) {
        let x = Jet::var(r);
        let v = cutoff_jet(x, delta) * (x * x + eps * eps).powf(-0.5);
        let (b, db) = bp(r);
        (v.v + b, v.d + db)
    };
    let mut breaks: Vec<f64> =
        [0.0, eps, 4.0 * eps, 16.0 * eps, delta, 2.0 * delta].iter().cloned().filter(|&b| b < rmax).collect();
    breaks.push(rmax);
    let energy = quad::integrate_pieces(
        &|r: f64| {
            let (v, d) = u(r);
            (d * d + hp(r).0 * v * v) * dens(r)
        },
        &breaks,
        1e-13,
    );
    let crit = quad::integrate_pieces(&|r: f64| fp(r).0 * u(r).0.powi(6) * dens(r), &breaks, 1e-13);
    (energy, crit)
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    ((sy - slope * sx) / k, slope)
}
