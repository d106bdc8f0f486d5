//! Discretized model manifolds: the round unit sphere and the Euclidean
//! ball (radial profiles), and the flat torus (Fourier grid).

mod chart;
mod radial;
mod spectral;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chart::{exp_chart_sample, ChartSampling};
pub(crate) use radial::{solve_spd_tridiagonal, RadialGrid};
pub(crate) use spectral::{line_coefficients, trig_eval, SpectralGrid};

pub const DEFAULT_RADIAL_NODES: usize = 4096;

/// Area of the unit n-sphere in R^{n+1}.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 1.0) * sphere_area(n - 2),
    }
}

/// Square of the sharp Sobolev constant K(n, 2).
pub fn sobolev_k2(n: usize) -> f64 {
    let nf = n as f64;
    4.0 / (nf * (nf - 2.0) * sphere_area(n).powf(2.0 / nf))
}

/// Critical Sobolev exponent 2n/(n-2).
pub fn critical_exponent(n: usize) -> f64 {
    2.0 * n as f64 / (n as f64 - 2.0)
}

/// Per-axis torus resolution used when none is given.
pub fn default_torus_nodes(dim: usize) -> usize {
    if dim >= 4 {
        24
    } else {
        64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifoldKind {
    RoundSphere,
    FlatTorus,
    EuclideanBall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    UniformFD2,
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nodes_per_axis: Vec<usize>,
    pub scheme: Scheme,
}

/// A point of a model. On radial models `Radial(r)` is the point at
/// distance r from the pole along a fixed meridian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Point {
    Radial(f64),
    Cartesian(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    Radial,
    Full,
}

#[derive(Clone, Debug)]
pub(crate) enum Disc {
    Radial(RadialGrid),
    Spectral(SpectralGrid),
}

/// Coordinates handed to sampling closures: `r` is the distance to the
/// pole (or to the origin of the torus), `x` the embedding or grid point.
#[derive(Clone, Debug)]
pub struct NodeCoords {
    pub r: f64,
    pub x: Vec<f64>,
}

#[derive(Debug)]
pub struct ManifoldModel {
    kind: ManifoldKind,
    dim: usize,
    grid: GridSpec,
    size: f64,
    pub(crate) disc: Disc,
    weights: Vec<f64>,
}

impl PartialEq for ManifoldModel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.dim == other.dim && self.grid == other.grid && self.size == other.size
    }
}

impl ManifoldModel {
    pub fn new(kind: ManifoldKind, dim: usize, grid: GridSpec, size: f64) -> Result<Arc<Self>> {
        let bad = |msg: &str| Err(Error::InvalidModel(msg.to_string()));
        if dim < 2 {
            return bad("dimension must be at least 2");
        }
        if !(size > 0.0) || !size.is_finite() {
            return bad("size must be positive");
        }
        let disc = match kind {
            ManifoldKind::RoundSphere | ManifoldKind::EuclideanBall => {
                if grid.scheme != Scheme::UniformFD2 || grid.nodes_per_axis.len() != 1 {
                    return bad("radial models use a single UniformFD2 axis");
                }
                let nodes = grid.nodes_per_axis[0];
                let spherical = kind == ManifoldKind::RoundSphere;
                if spherical && nodes < 64 {
                    return bad("sphere grids need at least 64 nodes");
                }
                if !spherical && nodes < 8 {
                    return bad("ball grids need at least 8 nodes");
                }
                if spherical && size != 1.0 {
                    return bad("the sphere model has unit radius");
                }
                let rmax = if spherical { PI } else { size };
                Disc::Radial(RadialGrid::new(dim, nodes, rmax, spherical))
            }
            ManifoldKind::FlatTorus => {
                if grid.scheme != Scheme::Spectral {
                    return bad("torus grids are spectral");
                }
                if grid.nodes_per_axis.len() != dim {
                    return bad("torus needs one node count per axis");
                }
                if grid.nodes_per_axis.iter().any(|&m| m < 4 || m % 2 != 0) {
                    return bad("torus node counts must be even and at least 4");
                }
                if dim > 4 {
                    return bad("torus grids are capped at dimension 4");
                }
                Disc::Spectral(SpectralGrid::new(grid.nodes_per_axis.clone(), size))
            }
        };
        let weights = match &disc {
            Disc::Radial(g) => g.vol.clone(),
            Disc::Spectral(s) => vec![s.cell_volume(); s.len()],
        };
        Ok(Arc::new(ManifoldModel { kind, dim, grid, size, disc, weights }))
    }

    pub fn sphere(dim: usize, nodes: usize) -> Result<Arc<Self>> {
        Self::new(
            ManifoldKind::RoundSphere,
            dim,
            GridSpec { nodes_per_axis: vec![nodes], scheme: Scheme::UniformFD2 },
            1.0,
        )
    }

    pub fn torus(dim: usize, side: f64, nodes: usize) -> Result<Arc<Self>> {
        Self::new(
            ManifoldKind::FlatTorus,
            dim,
            GridSpec { nodes_per_axis: vec![nodes; dim], scheme: Scheme::Spectral },
            side,
        )
    }

    pub fn ball(dim: usize, radius: f64, nodes: usize) -> Result<Arc<Self>> {
        Self::new(
            ManifoldKind::EuclideanBall,
            dim,
            GridSpec { nodes_per_axis: vec![nodes], scheme: Scheme::UniformFD2 },
            radius,
        )
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Torus side L or ball radius R; 1 for the unit sphere.
    pub fn size(&self) -> f64 {
        self.size
    }

    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    /// Quadrature weights of the nodes (cell volumes).
    pub fn node_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.disc, Disc::Radial(_))
    }

    pub(crate) fn radial(&self) -> Option<&RadialGrid> {
        match &self.disc {
            Disc::Radial(g) => Some(g),
            _ => None,
        }
    }

    /// Radial grid spacing, or torus cell width.
    pub fn spacing(&self) -> f64 {
        match &self.disc {
            Disc::Radial(g) => g.step,
            Disc::Spectral(s) => s.side / s.shape[0] as f64,
        }
    }

    /// Closed-form volume of the model.
    pub fn volume(&self) -> f64 {
        match self.kind {
            ManifoldKind::RoundSphere => sphere_area(self.dim),
            ManifoldKind::FlatTorus => self.size.powi(self.dim as i32),
            ManifoldKind::EuclideanBall => sphere_area(self.dim - 1) * self.size.powi(self.dim as i32) / self.dim as f64,
        }
    }

    pub fn scalar_curvature(&self) -> f64 {
        match self.kind {
            ManifoldKind::RoundSphere => (self.dim * (self.dim - 1)) as f64,
            _ => 0.0,
        }
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self.kind {
            ManifoldKind::RoundSphere => PI,
            ManifoldKind::FlatTorus => 0.5 * self.size,
            ManifoldKind::EuclideanBall => self.size,
        }
    }

    pub fn node_coords(&self, i: usize) -> NodeCoords {
        match &self.disc {
            Disc::Radial(g) => {
                let r = g.r[i];
                let mut x = vec![0.0; if g.spherical { self.dim + 1 } else { self.dim }];
                if g.spherical {
                    x[0] = r.sin();
                    x[self.dim] = r.cos();
                } else {
                    x[0] = r;
                }
                NodeCoords { r, x }
            }
            Disc::Spectral(s) => {
                let x = s.coordinates(i);
                let r = torus_offset(&vec![0.0; self.dim], &x, s.side).iter().map(|d| d * d).sum::<f64>().sqrt();
                NodeCoords { r, x }
            }
        }
    }

    /// Distance in grid cells from the maximum of `w` to the nearest node where
    /// `w` drops below half of it, minimized over grid directions. Profiles
    /// that never halve report the node count.
    pub fn peak_width_cells(&self, w: &[f64]) -> f64 {
        let (imax, vmax) = w.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| {
            if v > acc.1 {
                (i, v)
            } else {
                acc
            }
        });
        let half = 0.5 * vmax;
        let mut best = self.node_count();
        match &self.disc {
            Disc::Radial(_) => {
                if let Some(j) = (imax..w.len()).find(|&j| w[j] < half) {
                    best = best.min(j - imax);
                }
                if let Some(j) = (0..=imax).rev().find(|&j| w[j] < half) {
                    best = best.min(imax - j);
                }
            }
            Disc::Spectral(s) => {
                let idx = s.index(imax);
                for axis in 0..self.dim {
                    let line = s.line(w, &idx, axis);
                    let k = line.len();
                    let i = idx[axis];
                    if let Some(step) =
                        (1..=k / 2).find(|&d| line[(i + d) % k] < half || line[(i + k - d) % k] < half)
                    {
                        best = best.min(step);
                    }
                }
            }
        }
        best as f64
    }

    pub fn node_point(&self, i: usize) -> Point {
        match &self.disc {
            Disc::Radial(g) => Point::Radial(g.r[i]),
            Disc::Spectral(s) => Point::Cartesian(s.coordinates(i)),
        }
    }

    /// Nearest grid node to a point.
    pub fn nearest_node(&self, p: &Point) -> Result<usize> {
        match (&self.disc, p) {
            (Disc::Radial(g), Point::Radial(r)) => Ok(g.nearest(*r)),
            (Disc::Radial(g), Point::Cartesian(x)) if !g.spherical && x.len() == self.dim => {
                Ok(g.nearest(x.iter().map(|v| v * v).sum::<f64>().sqrt()))
            }
            (Disc::Spectral(s), Point::Cartesian(x)) if x.len() == self.dim => {
                let idx: Vec<usize> = x
                    .iter()
                    .zip(&s.shape)
                    .map(|(&c, &m)| {
                        let h = s.side / m as f64;
                        ((c.rem_euclid(s.side) / h).round() as usize) % m
                    })
                    .collect();
                Ok(s.flatten(&idx))
            }
            _ => Err(Error::Precondition("point representation does not fit the model".into())),
        }
    }

    /// Distance from a point to every node of the grid.
    pub fn distances_from(&self, p: &Point) -> Result<Vec<f64>> {
        (0..self.node_count()).map(|i| geodesic_distance(self, p, &self.node_point(i))).collect()
    }
}

/// Displacement from `a` to `b` on the torus, using the nearest translate.
pub(crate) fn torus_offset(a: &[f64], b: &[f64], side: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (y - x).rem_euclid(side);
            if d > 0.5 * side {
                d - side
            } else {
                d
            }
        })
        .collect()
}

pub fn geodesic_distance(m: &ManifoldModel, x: &Point, y: &Point) -> Result<f64> {
    match m.kind {
        ManifoldKind::RoundSphere => match (x, y) {
            (Point::Radial(a), Point::Radial(b)) => Ok((a - b).abs()),
            (Point::Cartesian(a), Point::Cartesian(b)) if a.len() == m.dim + 1 && b.len() == m.dim + 1 => {
                // atan2 form stays accurate for nearby and antipodal points.
                let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
                let cross: f64 = a.iter().zip(b).map(|(p, q)| (p * dot - q).powi(2)).sum::<f64>().sqrt();
                Ok(cross.atan2(dot))
            }
            _ => Err(Error::Precondition("sphere points must both be radial or both embedded".into())),
        },
        ManifoldKind::FlatTorus => match (x, y) {
            (Point::Cartesian(a), Point::Cartesian(b)) if a.len() == m.dim && b.len() == m.dim => {
                Ok(torus_offset(a, b, m.size).iter().map(|d| d * d).sum::<f64>().sqrt())
            }
            _ => Err(Error::Precondition("torus points are Cartesian".into())),
        },
        ManifoldKind::EuclideanBall => {
            let v = |p: &Point| -> Vec<f64> {
                match p {
                    Point::Radial(r) => {
                        let mut c = vec![0.0; m.dim];
                        c[0] = *r;
                        c
                    }
                    Point::Cartesian(c) => c.clone(),
                }
            };
            let (a, b) = (v(x), v(y));
            if a.len() != b.len() {
                return Err(Error::Precondition("points of different dimension".into()));
            }
            Ok(a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
        }
    }
}

/// A scalar function sampled on the nodes of a model.
#[derive(Clone, Debug)]
pub struct Field {
    manifold: Arc<ManifoldModel>,
    values: Vec<f64>,
    symmetry: Symmetry,
}

impl Field {
    pub fn new(m: &Arc<ManifoldModel>, values: Vec<f64>) -> Result<Self> {
        if values.len() != m.node_count() {
            return Err(Error::GridMismatch);
        }
        let symmetry = if m.is_radial() { Symmetry::Radial } else { Symmetry::Full };
        Ok(Field { manifold: m.clone(), values, symmetry })
    }

    pub fn constant(m: &Arc<ManifoldModel>, c: f64) -> Self {
        Field::new(m, vec![c; m.node_count()]).expect("sized by construction")
    }

    pub fn from_fn(m: &Arc<ManifoldModel>, f: impl Fn(&NodeCoords) -> f64) -> Self {
        let values = (0..m.node_count()).map(|i| f(&m.node_coords(i))).collect();
        Field::new(m, values).expect("sized by construction")
    }

    /// Samples a function of the distance to `center`.
    pub fn radial_about(m: &Arc<ManifoldModel>, center: &Point, f: impl Fn(f64) -> f64) -> Result<Self> {
        let d = m.distances_from(center)?;
        Field::new(m, d.into_iter().map(f).collect())
    }

    pub fn manifold(&self) -> &Arc<ManifoldModel> {
        &self.manifold
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn lives_on(&self, m: &ManifoldModel) -> bool {
        std::ptr::eq(self.manifold.as_ref(), m) || *self.manifold == *m
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if !other.lives_on(&self.manifold) {
            return Err(Error::GridMismatch);
        }
        Ok(Field {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            ..self.clone()
        })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_constant(&self, tol: f64) -> bool {
        self.max() - self.min() <= tol * self.max().abs().max(1.0)
    }
}

fn check(m: &ManifoldModel, u: &Field) -> Result<()> {
    if u.lives_on(m) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Laplace–Beltrami operator with the geometers' sign (nonnegative spectrum).
pub fn laplacian(m: &ManifoldModel, u: &Field) -> Result<Field> {
    check(m, u)?;
    Ok(Field { values: laplacian_values(m, &u.values), ..u.clone() })
}

pub(crate) fn laplacian_values(m: &ManifoldModel, u: &[f64]) -> Vec<f64> {
    match &m.disc {
        Disc::Radial(g) => g.laplacian(u),
        Disc::Spectral(s) => s.laplacian(u),
    }
}

/// Integral of u against the Riemannian volume.
pub fn integrate(m: &ManifoldModel, u: &Field) -> Result<f64> {
    check(m, u)?;
    Ok(integrate_values(m, &u.values))
}

pub(crate) fn integrate_values(m: &ManifoldModel, u: &[f64]) -> f64 {
    u.iter().zip(m.node_weights()).map(|(a, w)| a * w).sum()
}

/// Integral of grad u . grad v in the discretization's own gradient pairing.
pub fn dirichlet_pairing(m: &ManifoldModel, u: &Field, v: &Field) -> Result<f64> {
    check(m, u)?;
    check(m, v)?;
    Ok(match &m.disc {
        Disc::Radial(g) => g.dirichlet(&u.values, &v.values),
        Disc::Spectral(s) => s.dirichlet(&u.values, &v.values),
    })
}

/// Dirichlet energy consistent with `laplacian`, so that it equals
/// the integral of u times its Laplacian.
pub(crate) fn dirichlet_energy(m: &ManifoldModel, u: &[f64]) -> f64 {
    match &m.disc {
        Disc::Radial(g) => g.dirichlet(u, u),
        Disc::Spectral(s) => s.energy(u),
    }
}

/// Pointwise |grad u|^2.
pub fn gradient_norm_sq(m: &ManifoldModel, u: &Field) -> Result<Field> {
    check(m, u)?;
    let values = match &m.disc {
        Disc::Radial(g) => g.grad_sq(&u.values),
        Disc::Spectral(s) => s.grad_sq(&u.values),
    };
    Ok(Field { values, ..u.clone() })
}

/// Laplacian at a single node from a centred stencil of half-width `s`
/// steps, radial models only (even reflection at the pole).
pub(crate) fn radial_stencil_laplacian(g: &RadialGrid, u: &[f64], i: usize, s: usize) -> f64 {
    let n = u.len() as isize;
    let at = |j: isize| -> f64 {
        let k = if j < 0 { -j } else if j >= n { 2 * (n - 1) - j } else { j };
        u[k as usize]
    };
    let h = g.step * s as f64;
    let (i, s) = (i as isize, s as isize);
    let d2 = (at(i + s) - 2.0 * at(i) + at(i - s)) / (h * h);
    let r = g.r[i as usize];
    let at_end = i == 0 || (g.spherical && i == n - 1);
    if at_end {
        return -(g.dim as f64) * d2;
    }
    let d1 = (at(i + s) - at(i - s)) / (2.0 * h);
    let coef = if g.spherical { r.cos() / r.sin() } else { 1.0 / r };
    -d2 - (g.dim as f64 - 1.0) * coef * d1
}

/// Laplacian at one node refined by Richardson extrapolation over stencil
/// widths one and two (spectrally exact on the torus).
pub fn laplacian_at(m: &ManifoldModel, u: &Field, node: usize) -> Result<f64> {
    check(m, u)?;
    Ok(match &m.disc {
        Disc::Radial(g) => {
            let l1 = radial_stencil_laplacian(g, &u.values, node, 1);
            let l2 = radial_stencil_laplacian(g, &u.values, node, 2);
            (4.0 * l1 - l2) / 3.0
        }
        Disc::Spectral(s) => s.laplacian(&u.values)[node],
    })
}
