//! Fourier discretization of the flat torus [0, L)^n.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone)]
pub(crate) struct SpectralGrid {
    pub shape: Vec<usize>,
    pub side: f64,
    /// |2 pi k / L|^2 per flattened mode index.
    pub k2: Vec<f64>,
    /// Angular wavenumber per axis and index; the Nyquist entry is kept
    /// for the Laplacian symbol and dropped for first derivatives.
    pub wave: Vec<Vec<f64>>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("shape", &self.shape).field("side", &self.side).finish()
    }
}

impl SpectralGrid {
    pub fn new(shape: Vec<usize>, side: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = shape.iter().map(|&m| planner.plan_fft_forward(m)).collect();
        let inv = shape.iter().map(|&m| planner.plan_fft_inverse(m)).collect();
        let wave: Vec<Vec<f64>> = shape
            .iter()
            .map(|&m| {
                (0..m)
                    .map(|j| {
                        let k = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
                        2.0 * PI * k / side
                    })
                    .collect()
            })
            .collect();
        let total: usize = shape.iter().product();
        let mut k2 = vec![0.0; total];
        for (flat, slot) in k2.iter_mut().enumerate() {
            let idx = unflatten(flat, &shape);
            *slot = idx.iter().enumerate().map(|(a, &j)| wave[a][j].powi(2)).sum();
        }
        SpectralGrid { shape, side, k2, wave, fwd, inv }
    }

    pub fn len(&self) -> usize {
        self.k2.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.shape.iter().map(|&m| self.side / m as f64).product()
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let n = self.shape.len();
        let mut stride = 1;
        for axis in (0..n).rev() {
            let m = self.shape[axis];
            let plan = if forward { &self.fwd[axis] } else { &self.inv[axis] };
            let block = stride * m;
            let mut line = vec![Complex64::new(0.0, 0.0); m];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for outer in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    for j in 0..m {
                        line[j] = data[outer + inner + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for j in 0..m {
                        data[outer + inner + j * stride] = line[j];
                    }
                }
            }
            stride = block;
        }
    }

    pub fn forward(&self, u: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut c, true);
        c
    }

    pub fn inverse(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut c, false);
        let scale = 1.0 / self.len() as f64;
        c.iter().map(|z| z.re * scale).collect()
    }

    pub fn apply_symbol(&self, u: &[f64], symbol: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut c = self.forward(u);
        for (z, &k2) in c.iter_mut().zip(&self.k2) {
            *z *= symbol(k2);
        }
        self.inverse(c)
    }

    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.apply_symbol(u, |k2| k2)
    }

    /// (Delta + c)^{-1} for a constant c; the zero mode is divided by c.
    pub fn solve_shifted(&self, rhs: &[f64], c: f64) -> Vec<f64> {
        self.apply_symbol(rhs, |k2| 1.0 / (k2 + c))
    }

    /// Partial derivatives along every axis (Nyquist modes zeroed).
    pub fn gradient(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let c = self.forward(u);
        (0..self.shape.len())
            .map(|axis| {
                let m = self.shape[axis];
                let stride: usize = self.shape[axis + 1..].iter().product();
                let mut d = c.clone();
                for (flat, z) in d.iter_mut().enumerate() {
                    let j = (flat / stride) % m;
                    let k = if m % 2 == 0 && j == m / 2 { 0.0 } else { self.wave[axis][j] };
                    *z *= Complex64::new(0.0, k);
                }
                self.inverse(d)
            })
            .collect()
    }

    pub fn grad_sq(&self, u: &[f64]) -> Vec<f64> {
        let g = self.gradient(u);
        (0..u.len()).map(|i| g.iter().map(|ga| ga[i] * ga[i]).sum()).collect()
    }

    /// Integral of grad u . grad v computed from pointwise gradients.
    pub fn dirichlet(&self, u: &[f64], v: &[f64]) -> f64 {
        let gu = self.gradient(u);
        let gv = self.gradient(v);
        let vol = self.cell_volume();
        gu.iter().zip(&gv).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()).sum::<f64>() * vol
    }

    /// Dirichlet energy from the Fourier symbol, consistent with `laplacian`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let c = self.forward(u);
        let vol = self.cell_volume() / self.len() as f64;
        c.iter().zip(&self.k2).map(|(z, k2)| k2 * z.norm_sqr()).sum::<f64>() * vol
    }

    pub fn coordinates(&self, flat: usize) -> Vec<f64> {
        unflatten(flat, &self.shape)
            .iter()
            .zip(&self.shape)
            .map(|(&j, &m)| j as f64 * self.side / m as f64)
            .collect()
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&j, &m)| acc * m + j)
    }

    pub fn index(&self, flat: usize) -> Vec<usize> {
        unflatten(flat, &self.shape)
    }

    /// Samples of x -> u(x + offset) on the grid, through the trigonometric
    /// interpolant (Nyquist terms treated as cosines).
    pub fn shifted(&self, u: &[f64], offset: &[f64]) -> Vec<f64> {
        let mut c = self.forward(u);
        for (flat, z) in c.iter_mut().enumerate() {
            let idx = unflatten(flat, &self.shape);
            let mut factor = Complex64::new(1.0, 0.0);
            for (a, &j) in idx.iter().enumerate() {
                let w = self.wave[a][j] * offset[a];
                if self.shape[a] % 2 == 0 && j == self.shape[a] / 2 {
                    factor *= w.cos();
                } else {
                    factor *= Complex64::from_polar(1.0, w);
                }
            }
            *z *= factor;
        }
        self.inverse(c)
    }

    /// Values of u along the grid line through `node` parallel to `axis`.
    pub fn line(&self, u: &[f64], node: &[usize], axis: usize) -> Vec<f64> {
        let mut idx = node.to_vec();
        (0..self.shape[axis])
            .map(|j| {
                idx[axis] = j;
                u[self.flatten(&idx)]
            })
            .collect()
    }
}

pub(crate) fn unflatten(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = flat % shape[a];
        flat /= shape[a];
    }
    idx
}

/// Trigonometric interpolant of a line from its DFT coefficients, with its
/// first two derivatives at `x` (Nyquist term taken as a cosine).
pub(crate) fn trig_eval(coeffs: &[Complex64], side: f64, x: f64) -> (f64, f64, f64) {
    let m = coeffs.len();
    let (mut v, mut d, mut dd) = (0.0, 0.0, 0.0);
    for (j, c) in coeffs.iter().enumerate() {
        let k = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
        let w = 2.0 * PI * k / side;
        if m % 2 == 0 && j == m / 2 {
            let (s, co) = (w * x).sin_cos();
            v += c.re * co;
            d -= c.re * w * s;
            dd -= c.re * w * w * co;
        } else {
            let e = Complex64::from_polar(1.0, w * x);
            let z = c * e;
            v += z.re;
            d += (z * Complex64::new(0.0, w)).re;
            dd -= w * w * z.re;
        }
    }
    let s = 1.0 / m as f64;
    (v * s, d * s, dd * s)
}

pub(crate) fn line_coefficients(samples: &[f64]) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let plan = planner.plan_fft_forward(samples.len());
    let mut c: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.process(&mut c);
    c
}
