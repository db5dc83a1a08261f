//! Truncated univariate Taylor jets.
//!
//! A [`Jet`] carries the value of a scalar function of one real parameter
//! together with its first three derivatives. Arithmetic follows the Leibniz
//! rule and composition follows Faà di Bruno, truncated at order three, which
//! is all the covering machinery ever needs.

use std::ops::{Add, Mul, Neg, Sub};

/// Highest derivative order carried by a [`Jet`].
pub const MAX_ORDER: usize = 3;

/// Value and derivatives `[g, g', g'', g''']` of a scalar function at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet(pub [f64; MAX_ORDER + 1]);

impl Jet {
    pub const fn constant(c: f64) -> Self {
        Jet([c, 0.0, 0.0, 0.0])
    }

    /// The identity jet `t ↦ t` evaluated at `t0`.
    pub const fn variable(t0: f64) -> Self {
        Jet([t0, 1.0, 0.0, 0.0])
    }

    /// Affine jet `t ↦ c0 + c1·t` evaluated at `t`.
    pub fn affine(c0: f64, c1: f64, t: f64) -> Self {
        Jet([c0 + c1 * t, c1, 0.0, 0.0])
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.0[0]
    }

    #[inline]
    pub fn d(&self, s: usize) -> f64 {
        self.0[s]
    }

    pub fn scale(self, c: f64) -> Self {
        let a = self.0;
        Jet([c * a[0], c * a[1], c * a[2], c * a[3]])
    }

    /// Compose an outer scalar function with this jet, given the outer
    /// function's derivatives `[h, h', h'', h''']` at `self.value()`.
    #[inline]
    pub fn compose(self, h: [f64; 4]) -> Self {
        let [_, f1, f2, f3] = self.0;
        Jet([
            h[0],
            h[1] * f1,
            h[2] * f1 * f1 + h[1] * f2,
            h[3] * f1 * f1 * f1 + 3.0 * h[2] * f1 * f2 + h[1] * f3,
        ])
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.0[0].sin_cos();
        self.compose([c, -s, -c, s])
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.0[0].sin_cos();
        self.compose([s, c, -s, -c])
    }

    /// Both `(cos, sin)` sharing one trigonometric evaluation.
    pub fn cos_sin(self) -> (Self, Self) {
        let (s, c) = self.0[0].sin_cos();
        (self.compose([c, -s, -c, s]), self.compose([s, c, -s, -c]))
    }

    pub fn sqrt(self) -> Self {
        let x = self.0[0];
        let r = x.sqrt();
        self.compose([
            r,
            0.5 / r,
            -0.25 / (r * x),
            0.375 / (r * x * x),
        ])
    }

    pub fn recip(self) -> Self {
        let x = self.0[0];
        let i = 1.0 / x;
        self.compose([i, -i * i, 2.0 * i * i * i, -6.0 * i * i * i * i])
    }

    /// Shift down one order: the jet of the derivative, with the top entry
    /// unknown (set to zero).
    pub fn derivative(self) -> Self {
        let a = self.0;
        Jet([a[1], a[2], a[3], 0.0])
    }

    /// Jet of `atan2(y, x)` continued from the principal value at the base point.
    pub fn atan2(y: Jet, x: Jet) -> Jet {
        let q = (x * y.derivative() - y * x.derivative()) * (x * x + y * y).recip();
        Jet([y.0[0].atan2(x.0[0]), q.0[0], q.0[1], q.0[2]])
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        let (a, b) = (self.0, o.0);
        Jet([a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]])
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        let (a, b) = (self.0, o.0);
        Jet([a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]])
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        let (a, b) = (self.0, o.0);
        Jet([
            a[0] * b[0],
            a[1] * b[0] + a[0] * b[1],
            a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2],
            a[3] * b[0] + 3.0 * a[2] * b[1] + 3.0 * a[1] * b[2] + a[0] * b[3],
        ])
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, c: f64) -> Jet {
        let mut a = self.0;
        a[0] += c;
        Jet(a)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        self.scale(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Central finite differences of a scalar function, used as the oracle.
    fn fd(f: impl Fn(f64) -> f64, t: f64) -> [f64; 4] {
        let h = 1e-3;
        let f0 = f(t);
        let (p1, m1, p2, m2) = (f(t + h), f(t - h), f(t + 2.0 * h), f(t - 2.0 * h));
        [
            f0,
            (p1 - m1) / (2.0 * h),
            (p1 - 2.0 * f0 + m1) / (h * h),
            (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * h * h * h),
        ]
    }

    fn close(a: [f64; 4], b: [f64; 4], tol: f64) {
        for s in 0..4 {
            assert!(
                (a[s] - b[s]).abs() <= tol * (1.0 + b[s].abs()),
                "order {s}: {} vs {}",
                a[s],
                b[s]
            );
        }
    }

    #[test]
    fn composite_expression_matches_finite_differences() {
        let t0 = 0.7;
        let t = Jet::variable(t0);
        let j = (t * t + 1.0).sqrt() * (t.scale(3.0)).cos() + t.sin().recip();
        let f = |t: f64| (t * t + 1.0).sqrt() * (3.0 * t).cos() + 1.0 / t.sin();
        close(j.0, fd(f, t0), 1e-4);
    }

    #[test]
    fn atan2_jet_matches_finite_differences() {
        let t0 = 1.3;
        let t = Jet::variable(t0);
        let y = t.sin() * 2.0 + t * t;
        let x = t.cos() + 0.5;
        let j = Jet::atan2(y, x);
        let f = |t: f64| (2.0 * t.sin() + t * t).atan2(t.cos() + 0.5);
        close(j.0, fd(f, t0), 1e-4);
    }

    #[test]
    fn affine_jet_has_no_curvature() {
        let j = Jet::affine(2.0, -3.0, 0.5);
        assert_eq!(j.0, [0.5, -3.0, 0.0, 0.0]);
    }
}
