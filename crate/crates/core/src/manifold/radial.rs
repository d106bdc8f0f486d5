//! Conservative finite-volume discretization of radial functions on the
//! round sphere (r in [0, pi]) and on a Euclidean ball (r in [0, R]).

use super::sphere_area;
use crate::quad::gauss_legendre;

#[derive(Clone, Debug)]
pub(crate) struct RadialGrid {
    pub dim: usize,
    pub spherical: bool,
    pub step: f64,
    pub r: Vec<f64>,
    /// Exact Riemannian volume of each node's cell.
    pub vol: Vec<f64>,
    /// Face conductances: area of the face sphere divided by the step.
    pub face: Vec<f64>,
}

impl RadialGrid {
    pub fn new(dim: usize, nodes: usize, rmax: f64, spherical: bool) -> Self {
        let step = rmax / (nodes - 1) as f64;
        let r: Vec<f64> = (0..nodes).map(|i| i as f64 * step).collect();
        let area = sphere_area(dim - 1);
        let density = |x: f64| if spherical { x.sin().powi(dim as i32 - 1) } else { x.powi(dim as i32 - 1) };
        let rule = gauss_legendre(8);
        let vol = (0..nodes)
            .map(|i| {
                let a = (r[i] - 0.5 * step).max(0.0);
                let b = (r[i] + 0.5 * step).min(rmax);
                let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
                area * h * rule.iter().map(|&(x, w)| w * density(c + h * x)).sum::<f64>()
            })
            .collect();
        let face = (0..nodes - 1).map(|i| area * density(r[i] + 0.5 * step) / step).collect();
        RadialGrid { dim, spherical, step, r, vol, face }
    }

    /// Density of dv with respect to dr, including the angular area.
    pub fn density(&self, r: f64) -> f64 {
        let s = if self.spherical { r.sin() } else { r };
        sphere_area(self.dim - 1) * s.powi(self.dim as i32 - 1)
    }

    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let n = self.r.len();
        let mut out = vec![0.0; n];
        for (i, f) in self.face.iter().enumerate() {
            let flux = f * (u[i + 1] - u[i]);
            out[i] -= flux;
            out[i + 1] += flux;
        }
        for (o, v) in out.iter_mut().zip(&self.vol) {
            *o /= v;
        }
        out
    }

    pub fn dirichlet(&self, u: &[f64], v: &[f64]) -> f64 {
        self.face.iter().enumerate().map(|(i, f)| f * (u[i + 1] - u[i]) * (v[i + 1] - v[i])).sum()
    }

    /// Dirichlet energy with face weights multiplied by `c_i c_{i+1}`; this
    /// is the gradient energy in the conformal metric with factor `c`.
    pub fn weighted_dirichlet(&self, c: &[f64], u: &[f64]) -> f64 {
        self.face
            .iter()
            .enumerate()
            .map(|(i, f)| f * c[i] * c[i + 1] * (u[i + 1] - u[i]).powi(2))
            .sum()
    }

    /// |grad u|^2 at nodes, averaging the squared one-sided slopes.
    pub fn grad_sq(&self, u: &[f64]) -> Vec<f64> {
        let n = self.r.len();
        let slopes: Vec<f64> = (0..n - 1).map(|i| ((u[i + 1] - u[i]) / self.step).powi(2)).collect();
        (0..n)
            .map(|i| {
                let left = if i > 0 { Some(slopes[i - 1]) } else { None };
                let right = if i + 1 < n { Some(slopes[i]) } else { None };
                match (left, right) {
                    (Some(a), Some(b)) => 0.5 * (a + b),
                    (Some(a), None) => if self.spherical { 0.0 } else { a },
                    (None, Some(_)) => 0.0,
                    (None, None) => 0.0,
                }
            })
            .collect()
    }

    /// Tridiagonal form of the weighted operator `S + V diag(h)`: returns
    /// the diagonal and the coupling between nodes i and i+1.
    pub fn operator_bands(&self, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.r.len();
        let mut diag: Vec<f64> = (0..n).map(|i| self.vol[i] * h[i]).collect();
        let mut off = vec![0.0; n - 1];
        for (i, f) in self.face.iter().enumerate() {
            diag[i] += f;
            diag[i + 1] += f;
            off[i] = -f;
        }
        (diag, off)
    }

    /// Index of the node closest to radius `r`.
    pub fn nearest(&self, r: f64) -> usize {
        ((r / self.step).round().max(0.0) as usize).min(self.r.len() - 1)
    }

    /// Cubic interpolation of nodal values, with even reflection at r = 0
    /// (and at r = pi on the sphere).
    pub fn interpolate(&self, u: &[f64], r: f64) -> (f64, f64) {
        let n = self.r.len();
        let pos = r / self.step;
        let base = pos.floor() as isize - 1;
        let at = |j: isize| -> f64 {
            let last = n as isize - 1;
            let k = if j < 0 {
                -j
            } else if j > last {
                if self.spherical { 2 * last - j } else { last }
            } else {
                j
            };
            u[k.clamp(0, last) as usize]
        };
        let t = pos - (base + 1) as f64;
        let (p0, p1, p2, p3) = (at(base), at(base + 1), at(base + 2), at(base + 3));
        // Lagrange weights on nodes -1, 0, 1, 2 relative to base + 1.
        let w = [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ];
        let dw = [
            -(3.0 * t * t - 6.0 * t + 2.0) / 6.0,
            (3.0 * t * t - 4.0 * t - 1.0) / 2.0,
            -(3.0 * t * t - 2.0 * t - 2.0) / 2.0,
            (3.0 * t * t - 1.0) / 6.0,
        ];
        let vals = [p0, p1, p2, p3];
        let v: f64 = w.iter().zip(&vals).map(|(a, b)| a * b).sum();
        let d: f64 = dw.iter().zip(&vals).map(|(a, b)| a * b).sum::<f64>() / self.step;
        (v, d)
    }
}

/// Solves a symmetric tridiagonal system, returning `None` as soon as a
/// pivot is not positive (the matrix is then not positive definite).
pub(crate) fn solve_spd_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if !(piv > 0.0) {
        return None;
    }
    c[0] = if n > 1 { off[0] / piv } else { 0.0 };
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - off[i - 1] * c[i - 1];
        if !(piv > 1e-13 * diag[i].abs()) {
            return None;
        }
        if i < n - 1 {
            c[i] = off[i] / piv;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}
