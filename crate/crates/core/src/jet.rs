//! Truncated Taylor series used to evaluate removable singularities.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

pub const ORDER: usize = 6;

/// Coefficients `c_k` of `f(x0 + h) = Σ c_k h^k`, truncated after `ORDER` terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub c: [Complex64; ORDER],
}

impl Jet {
    pub fn constant(x: Complex64) -> Self {
        let mut c = [Complex64::new(0.0, 0.0); ORDER];
        c[0] = x;
        Jet { c }
    }

    pub fn real(x: f64) -> Self {
        Self::constant(Complex64::new(x, 0.0))
    }

    /// The independent variable expanded about `x0`.
    pub fn variable(x0: f64) -> Self {
        let mut j = Self::real(x0);
        j.c[1] = Complex64::new(1.0, 0.0);
        j
    }

    pub fn value(&self) -> Complex64 {
        self.c[0]
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = *self;
        for x in out.c.iter_mut() {
            *x *= s;
        }
        out
    }

    pub fn exp(&self) -> Self {
        // k g_k = Σ_{j=1..k} j f_j g_{k−j}
        let mut g = [Complex64::new(0.0, 0.0); ORDER];
        g[0] = self.c[0].exp();
        for k in 1..ORDER {
            let mut s = Complex64::new(0.0, 0.0);
            for j in 1..=k {
                s += self.c[j] * g[k - j] * j as f64;
            }
            g[k] = s / k as f64;
        }
        Jet { c: g }
    }

    /// `exp(i a x)` for this jet `x`.
    pub fn cis(&self, a: f64) -> Self {
        self.scale(Complex64::new(0.0, a)).exp()
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        for k in 0..ORDER {
            self.c[k] += rhs.c[k];
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + (-rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut c = [Complex64::new(0.0, 0.0); ORDER];
        for i in 0..ORDER {
            for j in 0..ORDER - i {
                c[i + j] += self.c[i] * rhs.c[j];
            }
        }
        Jet { c }
    }
}

/// Relative distance below which `ω² − p²` is treated as a removable zero.
pub const POLE_WINDOW: f64 = 1e-6;

/// Evaluates `N(ω) / (ω² − p²)` where `N(±p) = 0`.
///
/// Away from the pole the quotient is formed directly; within the window the
/// numerator is expanded about the nearer of `±p` and the common factor cancelled.
pub fn removable_quotient<F>(numerator: F, pole: f64, omega: f64) -> Complex64
where
    F: Fn(Jet) -> Jet,
{
    let d = omega * omega - pole * pole;
    if pole == 0.0 || d.abs() >= POLE_WINDOW * pole * pole {
        return numerator(Jet::real(omega)).value() / d;
    }
    let c = if omega >= 0.0 { pole.abs() } else { -pole.abs() };
    let h = omega - c;
    let n = numerator(Jet::variable(c));
    // N(c + h) / (h (2c + h)) with N(c) = 0 dropped
    let mut q = Complex64::new(0.0, 0.0);
    for k in (1..ORDER).rev() {
        q = q * h + n.c[k];
    }
    q / (2.0 * c + h)
}
