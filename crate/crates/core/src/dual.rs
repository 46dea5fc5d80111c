//! Forward-mode dual numbers.
//!
//! `Jet<N>` carries a real value and `N` partial derivatives; geometry code is
//! written generically over [`Real`] so loops and cylinders get exact tangents.
//! `CDual` is a complex value with one complex directional derivative and backs
//! expression evaluation.

use num_complex::Complex64;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type usable in generic geometry code.
pub trait Real:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(x: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn atan2(self, x: Self) -> Self;
    fn powi(self, n: i32) -> Self;
}

impl Real for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Real value with `N` partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        Jet { v, d: [0.0; N] }
    }

    /// The `k`-th coordinate variable at `v`.
    pub fn var(v: f64, k: usize) -> Self {
        let mut d = [0.0; N];
        d[k] = 1.0;
        Jet { v, d }
    }

    fn chain(self, f: f64, df: f64) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= df;
        }
        Jet { v: f, d }
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut d = self.d;
        for (x, y) in d.iter_mut().zip(o.d) {
            *x += y;
        }
        Jet { v: self.v + o.v, d }
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut d = self.d;
        for (x, y) in d.iter_mut().zip(o.d) {
            *x -= y;
        }
        Jet { v: self.v - o.v, d }
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for k in 0..N {
            d[k] = self.d[k] * o.v + self.v * o.d[k];
        }
        Jet { v: self.v * o.v, d }
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let mut d = [0.0; N];
        for k in 0..N {
            d[k] = (self.d[k] * o.v - self.v * o.d[k]) * inv * inv;
        }
        Jet { v: self.v * inv, d }
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.chain(-self.v, -1.0)
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Jet { v: self.v + o, d: self.d }
    }
}

impl<const N: usize> Sub<f64> for Jet<N> {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        Jet { v: self.v - o, d: self.d }
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        self.chain(self.v * o, o)
    }
}

impl<const N: usize> Div<f64> for Jet<N> {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        self.chain(self.v / o, 1.0 / o)
    }
}

impl<const N: usize> Real for Jet<N> {
    fn cst(x: f64) -> Self {
        Jet::constant(x)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r)
    }
    fn atan2(self, x: Self) -> Self {
        let r2 = self.v * self.v + x.v * x.v;
        let mut d = [0.0; N];
        for k in 0..N {
            d[k] = (x.v * self.d[k] - self.v * x.d[k]) / r2;
        }
        Jet { v: self.v.atan2(x.v), d }
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Jet::constant(1.0);
        }
        self.chain(self.v.powi(n), n as f64 * self.v.powi(n - 1))
    }
}

/// Complex value with one complex directional derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CDual {
    pub v: Complex64,
    pub d: Complex64,
}

impl CDual {
    pub fn new(v: Complex64, d: Complex64) -> Self {
        CDual { v, d }
    }

    pub fn constant(v: Complex64) -> Self {
        CDual { v, d: Complex64::new(0.0, 0.0) }
    }

    pub fn real(v: f64, d: f64) -> Self {
        CDual { v: Complex64::new(v, 0.0), d: Complex64::new(d, 0.0) }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        CDual { v: e, d: self.d * e }
    }

    pub fn sin(self) -> Self {
        CDual { v: self.v.sin(), d: self.d * self.v.cos() }
    }

    pub fn cos(self) -> Self {
        CDual { v: self.v.cos(), d: -self.d * self.v.sin() }
    }

    /// Principal square root.
    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        CDual { v: r, d: self.d / (r * 2.0) }
    }

    pub fn powi(self, n: i32) -> Self {
        if n == 0 {
            return CDual::constant(Complex64::new(1.0, 0.0));
        }
        CDual { v: self.v.powi(n), d: self.d * self.v.powi(n - 1) * n as f64 }
    }
}

impl Add for CDual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        CDual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for CDual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        CDual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for CDual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        CDual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

impl Div for CDual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = o.v.inv();
        CDual { v: self.v * inv, d: (self.d * o.v - self.v * o.d) * inv * inv }
    }
}

impl Neg for CDual {
    type Output = Self;
    fn neg(self) -> Self {
        CDual { v: -self.v, d: -self.d }
    }
}
