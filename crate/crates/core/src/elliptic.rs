//! Linear solves for `Δ_g + h` and measured coercivity.

use crate::error::{Error, Result};
use crate::manifold::{self, solve_spd_tridiagonal, Disc, Field, ManifoldModel};

/// Margins at or below this value are treated as not coercive.
pub const COERCIVE_THRESHOLD: f64 = 1e-6;

const POWER_MAX_ITER: usize = 200;
const POWER_TOL: f64 = 1e-8;
const PCG_MAX_ITER: usize = 1000;

fn check(m: &ManifoldModel, fields: &[&Field]) -> Result<()> {
    if fields.iter().all(|f| f.lives_on(m)) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// (Δ + h) u.
pub fn apply_operator(m: &ManifoldModel, h: &Field, u: &Field) -> Result<Field> {
    check(m, &[h, u])?;
    let v = apply_values(m, h.values(), u.values());
    Field::new(u.manifold(), v)
}

pub(crate) fn apply_values(m: &ManifoldModel, h: &[f64], u: &[f64]) -> Vec<f64> {
    let mut out = manifold::laplacian_values(m, u);
    for ((o, &hv), &uv) in out.iter_mut().zip(h).zip(u) {
        *o += hv * uv;
    }
    out
}

/// Weighted L2 norm of a nodal vector.
pub(crate) fn l2_norm(m: &ManifoldModel, v: &[f64]) -> f64 {
    v.iter().zip(m.node_weights()).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

/// Solves (Δ + h) v = rhs to the relative residual `tol`.
pub fn solve_linear(m: &ManifoldModel, h: &Field, rhs: &Field, tol: f64) -> Result<Field> {
    check(m, &[h, rhs])?;
    let v = solve_values(m, h.values(), rhs.values(), tol)?;
    Field::new(rhs.manifold(), v)
}

pub(crate) fn solve_values(m: &ManifoldModel, h: &[f64], rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    match &m.disc {
        Disc::Radial(g) => {
            let (diag, off) = g.operator_bands(h);
            let b: Vec<f64> = rhs.iter().zip(&g.vol).map(|(r, v)| r * v).collect();
            solve_spd_tridiagonal(&diag, &off, &b).ok_or(Error::NotCoercive { margin: None })
        }
        Disc::Spectral(s) => {
            let h0 = h[0];
            if h.iter().all(|&x| x == h0) {
                if h0 <= 0.0 {
                    return Err(Error::NotCoercive { margin: Some(h0) });
                }
                return Ok(s.solve_shifted(rhs, h0));
            }
            let mean = h.iter().sum::<f64>() / h.len() as f64;
            if mean <= 0.0 {
                // Testing with constants shows the operator is not positive.
                return Err(Error::NotCoercive { margin: None });
            }
            pcg(
                |x| apply_values(m, h, x),
                |r| s.solve_shifted(r, mean),
                rhs,
                None,
                tol,
            )
        }
    }
}

/// Preconditioned conjugate gradients for a symmetric operator that must be
/// positive definite; a non-positive curvature direction means the operator
/// is not coercive.
pub(crate) fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
) -> Result<Vec<f64>> {
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| precond(b));
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..PCG_MAX_ITER {
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return Ok(x);
        }
        let ap = apply(&p);
        let curv = dot(&p, &ap);
        if curv <= 0.0 {
            return Err(Error::NotCoercive { margin: None });
        }
        let alpha = rz / curv;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    if dot(&r, &r).sqrt() <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::NoConvergence { tol, iterations: PCG_MAX_ITER })
    }
}

/// Estimate of the bottom of the spectrum of Δ + h by shifted inverse
/// power iteration (shift min(h) - 1) with Rayleigh quotients.
pub fn coercivity_margin(m: &ManifoldModel, h: &Field) -> Result<f64> {
    check(m, &[h])?;
    let hv = h.values();
    if let Disc::Spectral(_) = m.disc {
        if h.is_constant(0.0) {
            return Ok(hv[0]);
        }
    }
    let sigma = h.min() - 1.0;
    let shifted: Vec<f64> = hv.iter().map(|x| x - sigma).collect();
    let w = m.node_weights();
    let rayleigh = |x: &[f64]| -> f64 {
        let num = manifold::dirichlet_energy(m, x) + x.iter().zip(hv).zip(w).map(|((a, b), c)| c * b * a * a).sum::<f64>();
        let den: f64 = x.iter().zip(w).map(|(a, c)| c * a * a).sum();
        num / den
    };
    let mut x = vec![1.0; hv.len()];
    let mut prev = rayleigh(&x);
    for _ in 0..POWER_MAX_ITER {
        // (Δ + h - σ) y = x, i.e. one inverse iteration on the generalized problem.
        let y = solve_values(m, &shifted, &x, 1e-12)?;
        let norm = l2_norm(m, &y);
        x = y.iter().map(|v| v / norm).collect();
        let mu = rayleigh(&x);
        if (mu - prev).abs() <= POWER_TOL * mu.abs().max(1.0) {
            return Ok(mu);
        }
        prev = mu;
    }
    Err(Error::NoConvergence { tol: POWER_TOL, iterations: POWER_MAX_ITER })
}

/// True when the measured margin clears the coercivity threshold.
pub fn is_coercive(m: &ManifoldModel, h: &Field) -> Result<bool> {
    Ok(coercivity_margin(m, h)? > COERCIVE_THRESHOLD)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{laplacian, ManifoldModel};
    use std::f64::consts::PI;

    #[test]
    fn torus_mode_division() {
        let l = 2.0;
        let t = ManifoldModel::torus(3, l, 16).unwrap();
        let mode = Field::from_fn(&t, |c| (2.0 * PI * (c.x[0] + 2.0 * c.x[2]) / l).cos());
        let h = Field::constant(&t, 1.0);
        let v = solve_linear(&t, &h, &mode, 1e-12).unwrap();
        let k2 = (2.0 * PI / l).powi(2) * 5.0;
        for (a, b) in v.values().iter().zip(mode.values()) {
            assert!((a - b / (k2 + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn variable_coefficient_round_trip() {
        let t = ManifoldModel::torus(3, 2.0 * PI, 16).unwrap();
        let h = Field::from_fn(&t, |c| 1.0 + 0.5 * c.x[0].cos() * c.x[1].sin());
        let rhs = Field::from_fn(&t, |c| (c.x[2]).sin() + 0.3);
        let v = solve_linear(&t, &h, &rhs, 1e-10).unwrap();
        let back = apply_operator(&t, &h, &v).unwrap();
        let err: Vec<f64> = back.values().iter().zip(rhs.values()).map(|(a, b)| a - b).collect();
        assert!(l2_norm(&t, &err) <= 1e-9 * l2_norm(&t, rhs.values()));

        let s = ManifoldModel::sphere(4, 1024).unwrap();
        let h = Field::from_fn(&s, |c| 2.0 + c.r.cos());
        let rhs = Field::from_fn(&s, |c| (-c.r * c.r).exp());
        let v = solve_linear(&s, &h, &rhs, 1e-12).unwrap();
        let back = apply_operator(&s, &h, &v).unwrap();
        let err: Vec<f64> = back.values().iter().zip(rhs.values()).map(|(a, b)| a - b).collect();
        assert!(l2_norm(&s, &err) <= 1e-10 * l2_norm(&s, rhs.values()));
    }

    #[test]
    fn margins() {
        let t = ManifoldModel::torus(3, 1.0, 8).unwrap();
        assert!((coercivity_margin(&t, &Field::constant(&t, 0.7)).unwrap() - 0.7).abs() < 1e-8);
        assert!(coercivity_margin(&t, &Field::constant(&t, 0.0)).unwrap().abs() < 1e-8);
        let s = ManifoldModel::sphere(3, 1024).unwrap();
        assert!((coercivity_margin(&s, &Field::constant(&s, 0.75)).unwrap() - 0.75).abs() < 1e-6);
        assert!(coercivity_margin(&s, &Field::constant(&s, 0.0)).unwrap().abs() < 1e-8);
    }

    #[test]
    fn negative_potential_is_rejected() {
        let n = 4;
        let s = ManifoldModel::sphere(n, 512).unwrap();
        let h = Field::constant(&s, -2.0 * n as f64);
        let rhs = Field::constant(&s, 1.0);
        assert!(matches!(solve_linear(&s, &h, &rhs, 1e-10), Err(Error::NotCoercive { .. })));
        assert!(coercivity_margin(&s, &h).unwrap() < 0.0);
        let t = ManifoldModel::torus(3, 1.0, 8).unwrap();
        assert!(matches!(
            solve_linear(&t, &Field::constant(&t, 0.0), &Field::constant(&t, 1.0), 1e-10),
            Err(Error::NotCoercive { .. })
        ));
    }

    #[test]
    fn variable_margin_matches_first_eigenvalue_shift() {
        // h = c - a cos r on S^n: compare with the Rayleigh quotient bound.
        let s = ManifoldModel::sphere(3, 2048).unwrap();
        let h = Field::from_fn(&s, |c| 1.0 - 0.5 * c.r.cos());
        let mu = coercivity_margin(&s, &h).unwrap();
        let one = Field::constant(&s, 1.0);
        let rq = crate::manifold::integrate(&s, &h).unwrap() / s.volume();
        assert!(mu <= rq + 1e-9 && mu > 0.0);
        let _ = laplacian(&s, &one).unwrap();
    }
}
