use serde::Serialize;

use super::{ManifoldKind, ManifoldModel, Point};
use crate::error::{Error, Result};

/// Samples of an exponential chart centred at a point: chart radii and the
/// metric in normal coordinates, which is radial-block diagonal on every
/// model (radial component 1, tangential component `tangential[j]^2`).
#[derive(Clone, Debug, Serialize)]
pub struct ChartSampling {
    pub center: Point,
    pub radius: f64,
    pub dim: usize,
    pub rho: Vec<f64>,
    /// Ratio between the tangential metric and the Euclidean one
    /// (sin(rho)/rho on the sphere, 1 on flat models).
    pub tangential: Vec<f64>,
    pub det_g: Vec<f64>,
}

impl ChartSampling {
    /// Metric components g_ij at the chart point x.
    pub fn metric_at(&self, x: &[f64], kind: ManifoldKind) -> Vec<Vec<f64>> {
        let s2 = tangential_factor(kind, norm(x)).powi(2);
        project(x, 1.0, s2)
    }

    /// Inverse metric components g^ij at the chart point x.
    pub fn inverse_metric_at(&self, x: &[f64], kind: ManifoldKind) -> Vec<Vec<f64>> {
        let s2 = tangential_factor(kind, norm(x)).powi(2);
        project(x, 1.0, 1.0 / s2)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn tangential_factor(kind: ManifoldKind, rho: f64) -> f64 {
    match kind {
        ManifoldKind::RoundSphere if rho > 0.0 => rho.sin() / rho,
        _ => 1.0,
    }
}

/// radial * x̂x̂ᵀ + tangential * (I - x̂x̂ᵀ)
fn project(x: &[f64], radial: f64, tangential: f64) -> Vec<Vec<f64>> {
    let r = norm(x);
    let n = x.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let pp = if r > 0.0 { x[i] * x[j] / (r * r) } else { 0.0 };
                    let id = if i == j { 1.0 } else { 0.0 };
                    if r > 0.0 {
                        radial * pp + tangential * (id - pp)
                    } else {
                        id
                    }
                })
                .collect()
        })
        .collect()
}

pub fn exp_chart_sample(m: &ManifoldModel, center: &Point, radius: f64, resolution: usize) -> Result<ChartSampling> {
    let limit = m.injectivity_radius();
    if !(radius > 0.0) || radius >= limit {
        return Err(Error::RadiusTooLarge { radius, limit });
    }
    if m.kind() == ManifoldKind::EuclideanBall {
        let c = match center {
            Point::Radial(r) => r.abs(),
            Point::Cartesian(x) => norm(x),
        };
        if c + radius > m.size() {
            return Err(Error::RadiusTooLarge { radius, limit: m.size() - c });
        }
    }
    let resolution = resolution.max(2);
    let n = m.dim();
    let rho: Vec<f64> = (0..resolution).map(|j| radius * j as f64 / (resolution - 1) as f64).collect();
    let tangential: Vec<f64> = rho.iter().map(|&p| tangential_factor(m.kind(), p)).collect();
    let det_g = tangential.iter().map(|s| s.powi(2 * (n as i32 - 1))).collect();
    Ok(ChartSampling { center: center.clone(), radius, dim: n, rho, tangential, det_g })
}
