//! Second-order forward-mode jets, used to differentiate closed-form
//! radial profiles exactly (value, first and second derivative).

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Jet {
    pub fn var(x: f64) -> Self {
        Jet { v: x, d: 1.0, dd: 0.0 }
    }

    pub fn cst(c: f64) -> Self {
        Jet { v: c, d: 0.0, dd: 0.0 }
    }

    /// Chain rule for a scalar function with known derivatives at `self.v`.
    fn lift(self, f0: f64, f1: f64, f2: f64) -> Self {
        Jet { v: f0, d: f1 * self.d, dd: f2 * self.d * self.d + f1 * self.dd }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.lift(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.lift(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.lift(e, e, e)
    }

    pub fn ln(self) -> Self {
        self.lift(self.v.ln(), 1.0 / self.v, -1.0 / (self.v * self.v))
    }

    pub fn powf(self, p: f64) -> Self {
        let x = self.v;
        self.lift(x.powf(p), p * x.powf(p - 1.0), p * (p - 1.0) * x.powf(p - 2.0))
    }

    pub fn sqrt(self) -> Self {
        self.powf(0.5)
    }

    pub fn recip(self) -> Self {
        self.powf(-1.0)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, d: self.d + o.d, dd: self.dd + o.dd }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, d: self.d - o.d, dd: self.dd - o.dd }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
            dd: self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd,
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, d: -self.d, dd: -self.dd }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, c: f64) -> Jet {
        Jet { v: self.v + c, ..self }
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, c: f64) -> Jet {
        Jet { v: self.v - c, ..self }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        Jet { v: self.v * c, d: self.d * c, dd: self.dd * c }
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, c: f64) -> Jet {
        self * (1.0 / c)
    }
}

/// Laplacian (positive geometers' sign) of a radial profile given as a jet
/// in the radius, for the round unit sphere.
pub fn sphere_radial_laplacian(n: usize, r: f64, u: Jet) -> f64 {
    -u.dd - (n as f64 - 1.0) * r.cos() / r.sin() * u.d
}

/// Same for flat space.
pub fn euclidean_radial_laplacian(n: usize, r: f64, u: Jet) -> f64 {
    -u.dd - (n as f64 - 1.0) / r * u.d
}
