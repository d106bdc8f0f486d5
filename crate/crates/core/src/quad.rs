//! Adaptive one-dimensional quadrature on top of tanh-sinh rules.

use quadrature::double_exponential;

const MAX_DEPTH: u32 = 40;

/// Integrates `f` over `[a, b]` to an absolute tolerance, bisecting the
/// interval wherever the tanh-sinh error estimate is not met.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    adapt(f, a, b, abs_tol.max(1e-300), 0)
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let whole = double_exponential::integrate(|x| f(x), a, b, tol).integral;
    adapt_with(f, a, b, whole, tol, depth)
}

// The rule's own error estimate is optimistic for sharp peaks, so each level
// is accepted only when it agrees with the sum over its two halves.
fn adapt_with<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let mid = 0.5 * (a + b);
    let left = double_exponential::integrate(|x| f(x), a, mid, 0.5 * tol).integral;
    let right = double_exponential::integrate(|x| f(x), mid, b, 0.5 * tol).integral;
    let halves = left + right;
    if (halves - whole).abs() <= tol || depth >= MAX_DEPTH || (b - a).abs() < 1e-14 * a.abs().max(1e-300) {
        return halves;
    }
    adapt_with(f, a, mid, left, 0.5 * tol, depth + 1) + adapt_with(f, mid, b, right, 0.5 * tol, depth + 1)
}

/// Integrates over consecutive pieces `[breaks[i], breaks[i+1]]`, to a
/// tolerance relative to the size of the result.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, breaks: &[f64], rel_tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 2 {
        return 0.0;
    }
    // A cheap first pass fixes the scale for the absolute tolerance.
    let rough: f64 = pts
        .windows(2)
        .map(|w| double_exponential::integrate(|x| f(x).abs(), w[0], w[1], 1e-6).integral)
        .sum();
    let scale = rough.abs().max(1e-300);
    let piece_tol = rel_tol * scale / (pts.len() - 1) as f64;
    pts.windows(2).map(|w| integrate(f, w[0], w[1], piece_tol)).sum()
}

/// Composite quadrature of tabulated values on a uniform grid, exact for
/// cubics on each cell (four-point Lagrange interpolation plus Gauss rule).
pub fn integrate_uniform_samples(step: f64, values: &[f64], upper: f64) -> f64 {
    let n = values.len();
    assert!(n >= 4, "need at least four samples");
    let upper = upper.min(step * (n - 1) as f64);
    let gauss = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    ];
    let mut total = 0.0;
    let mut left = 0.0;
    while left < upper - 1e-15 * step {
        let right = (left + step).min(upper);
        let half = 0.5 * (right - left);
        let centre = 0.5 * (right + left);
        for &(x, w) in &gauss {
            total += w * half * lagrange4(step, values, centre + half * x);
        }
        left = right;
    }
    total
}

/// Four-point Lagrange interpolation of uniform samples starting at zero.
pub fn lagrange4(step: f64, values: &[f64], x: f64) -> f64 {
    let n = values.len();
    let pos = x / step;
    let base = (pos.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let mut acc = 0.0;
    for j in 0..4 {
        let mut l = 1.0;
        for m in 0..4 {
            if m != j {
                l *= (pos - (base + m) as f64) / (j as f64 - m as f64);
            }
        }
        acc += l * values[base + j];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_endpoint_singularity() {
        let v = integrate(&|x: f64| x * x, 0.0, 3.0, 1e-12);
        assert!((v - 9.0).abs() < 1e-11);
        let s = integrate(&|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10);
        assert!((s - 2.0).abs() < 1e-9);
    }

    #[test]
    fn narrow_peak_with_breakpoints() {
        let w = 1e-6;
        let f = |x: f64| w / (w * w + x * x);
        let v = integrate_pieces(&f, &[0.0, w, 10.0 * w, 1.0], 1e-12);
        let exact = (1.0 / w).atan();
        assert!((v - exact).abs() < 1e-10, "{v} {exact}");
    }

    #[test]
    fn samples_exact_for_cubics() {
        let h = 0.1;
        let vals: Vec<f64> = (0..20).map(|i| (i as f64 * h).powi(3)).collect();
        let v = integrate_uniform_samples(h, &vals, 1.234);
        assert!((v - 1.234f64.powi(4) / 4.0).abs() < 1e-12);
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(k: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=k {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pk = if k == 0 { 1.0 } else if k == 1 { x } else { p1 };
            let pkm1 = if k == 1 { 1.0 } else { p0 };
            dp = k as f64 * (x * pk - pkm1) / (x * x - 1.0);
            let dx = pk / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

#[cfg(test)]
mod gl_tests {
    use super::gauss_legendre;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(8);
        let s: f64 = rule.iter().map(|&(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        let total: f64 = rule.iter().map(|&(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-14);
    }
}
