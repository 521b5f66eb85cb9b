use std::f64::consts::PI;

use libm::{erf, erfc};
use serde::{Deserialize, Serialize};

/// One-dimensional kernel factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AxisKernel {
    /// `exp(-q (u - v)^2 / 2)` with inverse squared length scale `q`.
    Se(f64),
    /// `min(u, v)` for `u, v >= 0`.
    Min,
}

/// `erf(y) - erf(x)` without cancellation when both arguments share a sign.
pub(crate) fn erf_diff(x: f64, y: f64) -> f64 {
    if x >= 0.0 && y >= 0.0 {
        erfc(x) - erfc(y)
    } else if x <= 0.0 && y <= 0.0 {
        erfc(-y) - erfc(-x)
    } else {
        erf(y) - erf(x)
    }
}

impl AxisKernel {
    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match *self {
            AxisKernel::Se(q) => (-0.5 * q * (u - v) * (u - v)).exp(),
            AxisKernel::Min => u.min(v),
        }
    }

    /// `∫_a^b k(s, t) dt`.
    pub fn single(&self, s: f64, a: f64, b: f64) -> f64 {
        match *self {
            AxisKernel::Se(q) => {
                let r = (0.5 * q).sqrt();
                (PI / (2.0 * q)).sqrt() * erf_diff(r * (a - s), r * (b - s))
            }
            AxisKernel::Min => {
                // antiderivative of min(s, t) in t
                let p = |t: f64| {
                    if t <= s {
                        0.5 * t * t
                    } else {
                        s * t - 0.5 * s * s
                    }
                };
                p(b) - p(a)
            }
        }
    }

    /// `∫_a^b ∫_c^d k(s, t) dt ds`.
    pub fn double(&self, a: f64, b: f64, c: f64, d: f64) -> f64 {
        match *self {
            AxisKernel::Se(q) => {
                let r = (0.5 * q).sqrt();
                let sqrt_pi = PI.sqrt();
                // twice-integrated exp(-r^2 x^2) minus its linear growth
                // sqrt(pi)/(2r) |x|; the linear parts combine to the overlap
                let g = |x: f64| {
                    let ax = x.abs();
                    (-(r * ax).powi(2)).exp() / (2.0 * r * r)
                        - sqrt_pi / (2.0 * r) * ax * erfc(r * ax)
                };
                let overlap = (b.min(d) - a.max(c)).max(0.0);
                sqrt_pi / r * overlap + (g(b - c) - g(a - c)) - (g(b - d) - g(a - d))
            }
            AxisKernel::Min => {
                // F(s, t) = ∫_0^s ∫_0^t min(u, v) dv du
                let f = |s: f64, t: f64| {
                    let (m, big) = if s <= t { (s, t) } else { (t, s) };
                    0.5 * m * m * big - m * m * m / 6.0
                };
                (f(b, d) - f(a, d)) - (f(b, c) - f(a, c))
            }
        }
    }
}
