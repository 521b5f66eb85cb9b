//! Covariance kernels with closed-form single and double integrals, and the
//! joint covariance of pointwise values and region integrals.
//!
//! Every kernel here is a product of one-dimensional factors, one per axis,
//! times a scalar scale. Integrals over boxes therefore factor per axis, and
//! integrals over a [`Region`] are sums over its boxes.

mod axis;
pub(crate) mod covariance;

pub use axis::AxisKernel;
pub use covariance::{
    build_augmented_covariance, build_augmented_covariance_with, cholesky_with_jitter,
    AugmentedCovariance, JITTER_LADDER,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point, Rect, Region};

/// Kernel family and hyperparameters. The prior mean is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `amplitude * exp(-inv_length_sq * |x - y|^2 / 2)`.
    SquaredExponential { amplitude: f64, inv_length_sq: f64 },
    /// `min(x, y) / precision` on a one-dimensional domain.
    BrownianMotion { precision: f64 },
    /// `min(x1, y1) * min(x2, y2) / precision`.
    BrownianSheet { precision: f64 },
    /// Product of per-axis squared-exponential factors.
    ProductSe {
        amplitude: [f64; 2],
        inv_length_sq: [f64; 2],
    },
}

/// Kernel family without hyperparameter values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
    BrownianMotion,
    BrownianSheet,
    ProductSe,
}

impl KernelFamily {
    /// Number of free hyperparameters on a domain of dimension `dim`.
    pub fn n_params(&self, dim: usize) -> usize {
        match self {
            KernelFamily::SquaredExponential => 2,
            KernelFamily::BrownianMotion | KernelFamily::BrownianSheet => 1,
            KernelFamily::ProductSe => 2 * dim,
        }
    }

    /// Build a spec from a flat hyperparameter vector (see [`KernelSpec::params`]).
    pub fn with_params(&self, p: &[f64]) -> KernelSpec {
        match self {
            KernelFamily::SquaredExponential => KernelSpec::SquaredExponential {
                amplitude: p[0],
                inv_length_sq: p[1],
            },
            KernelFamily::BrownianMotion => KernelSpec::BrownianMotion { precision: p[0] },
            KernelFamily::BrownianSheet => KernelSpec::BrownianSheet { precision: p[0] },
            KernelFamily::ProductSe => {
                if p.len() >= 4 {
                    KernelSpec::ProductSe {
                        amplitude: [p[0], p[2]],
                        inv_length_sq: [p[1], p[3]],
                    }
                } else {
                    KernelSpec::ProductSe {
                        amplitude: [p[0], 1.0],
                        inv_length_sq: [p[1], 1.0],
                    }
                }
            }
        }
    }

    /// Whether the precision is sampled by conjugate Gibbs updates.
    pub fn is_brownian(&self) -> bool {
        matches!(
            self,
            KernelFamily::BrownianMotion | KernelFamily::BrownianSheet
        )
    }
}

impl KernelSpec {
    pub fn family(&self) -> KernelFamily {
        match self {
            KernelSpec::SquaredExponential { .. } => KernelFamily::SquaredExponential,
            KernelSpec::BrownianMotion { .. } => KernelFamily::BrownianMotion,
            KernelSpec::BrownianSheet { .. } => KernelFamily::BrownianSheet,
            KernelSpec::ProductSe { .. } => KernelFamily::ProductSe,
        }
    }

    /// Flat hyperparameters in the order accepted by [`KernelFamily::with_params`].
    pub fn params(&self, dim: usize) -> Vec<f64> {
        match *self {
            KernelSpec::SquaredExponential {
                amplitude,
                inv_length_sq,
            } => vec![amplitude, inv_length_sq],
            KernelSpec::BrownianMotion { precision } | KernelSpec::BrownianSheet { precision } => {
                vec![precision]
            }
            KernelSpec::ProductSe {
                amplitude,
                inv_length_sq,
            } => {
                if dim >= 2 {
                    vec![
                        amplitude[0],
                        inv_length_sq[0],
                        amplitude[1],
                        inv_length_sq[1],
                    ]
                } else {
                    vec![amplitude[0], inv_length_sq[0]]
                }
            }
        }
    }

    /// Precision of a Brownian kernel; `None` otherwise.
    pub fn precision(&self) -> Option<f64> {
        match *self {
            KernelSpec::BrownianMotion { precision } | KernelSpec::BrownianSheet { precision } => {
                Some(precision)
            }
            _ => None,
        }
    }

    /// Same family with the Brownian precision replaced.
    pub fn with_precision(&self, theta: f64) -> KernelSpec {
        match *self {
            KernelSpec::BrownianMotion { .. } => KernelSpec::BrownianMotion { precision: theta },
            KernelSpec::BrownianSheet { .. } => KernelSpec::BrownianSheet { precision: theta },
            other => other,
        }
    }

    /// Check hyperparameter positivity and compatibility with the domain.
    pub fn validate(&self, domain: &Domain) -> Result<()> {
        let p = self.params(domain.dim);
        if p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel hyperparameters must be positive and finite: {self:?}"
            )));
        }
        match (self, domain.dim) {
            (KernelSpec::BrownianMotion { .. }, 1) | (KernelSpec::BrownianSheet { .. }, 2) => {
                let lo = domain.shift_rect(&domain.bounds).lo;
                if (0..domain.dim).any(|a| lo[a] < 0.0) {
                    return Err(Error::Domain(
                        "Brownian kernels need the translated domain to start at or above zero"
                            .into(),
                    ));
                }
                Ok(())
            }
            (KernelSpec::BrownianMotion { .. }, _) => Err(Error::Domain(
                "Brownian motion needs a one-dimensional domain".into(),
            )),
            (KernelSpec::BrownianSheet { .. }, _) => Err(Error::Domain(
                "Brownian sheet needs a two-dimensional domain".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Overall scale and per-axis factors.
    pub fn factors(&self, dim: usize) -> (f64, [AxisKernel; 2]) {
        match *self {
            KernelSpec::SquaredExponential {
                amplitude,
                inv_length_sq,
            } => (
                amplitude,
                [AxisKernel::Se(inv_length_sq), AxisKernel::Se(inv_length_sq)],
            ),
            KernelSpec::BrownianMotion { precision } | KernelSpec::BrownianSheet { precision } => {
                (1.0 / precision, [AxisKernel::Min, AxisKernel::Min])
            }
            KernelSpec::ProductSe {
                amplitude,
                inv_length_sq,
            } => {
                let scale = if dim >= 2 {
                    amplitude[0] * amplitude[1]
                } else {
                    amplitude[0]
                };
                (
                    scale,
                    [
                        AxisKernel::Se(inv_length_sq[0]),
                        AxisKernel::Se(inv_length_sq[1]),
                    ],
                )
            }
        }
    }

    fn anchored(&self) -> bool {
        self.family().is_brownian()
    }
}

fn check_kernel_point(spec: &KernelSpec, domain: &Domain, p: &Point) -> Result<Point> {
    let s = domain.shift(p);
    if spec.anchored() && (0..domain.dim).any(|a| !(s.0[a] > 0.0)) {
        return Err(Error::Domain(format!(
            "Brownian kernels need strictly positive coordinates, got {:?}",
            &s.0[..domain.dim]
        )));
    }
    Ok(s)
}

fn check_kernel_rect(spec: &KernelSpec, domain: &Domain, r: &Rect) -> Result<Rect> {
    domain.check_rect(r)?;
    let s = domain.shift_rect(r);
    if spec.anchored() && (0..domain.dim).any(|a| s.lo[a] < 0.0) {
        return Err(Error::Domain(format!(
            "Brownian kernels need regions at nonnegative coordinates, got {s:?}"
        )));
    }
    Ok(s)
}

/// `k(x, y)` with domain translation applied.
pub fn kernel_eval(spec: &KernelSpec, domain: &Domain, x: &Point, y: &Point) -> Result<f64> {
    let (sx, sy) = (
        check_kernel_point(spec, domain, x)?,
        check_kernel_point(spec, domain, y)?,
    );
    Ok(eval_shifted(spec, domain.dim, &sx, &sy))
}

#[inline]
pub(crate) fn eval_shifted(spec: &KernelSpec, dim: usize, x: &Point, y: &Point) -> f64 {
    let (scale, axes) = spec.factors(dim);
    let mut v = scale;
    for a in 0..dim {
        v *= axes[a].eval(x.0[a], y.0[a]);
    }
    v
}

/// `∫_region k(s, t) dt`.
pub fn kernel_single_integral(
    spec: &KernelSpec,
    domain: &Domain,
    s: &Point,
    region: &Rect,
) -> Result<f64> {
    let ss = check_kernel_point(spec, domain, s)?;
    let r = check_kernel_rect(spec, domain, region)?;
    Ok(single_shifted(spec, domain.dim, &ss, &r))
}

pub(crate) fn single_shifted(spec: &KernelSpec, dim: usize, s: &Point, r: &Rect) -> f64 {
    let (scale, axes) = spec.factors(dim);
    let mut v = scale;
    for a in 0..dim {
        v *= axes[a].single(s.0[a], r.lo[a], r.hi[a]);
    }
    v
}

/// `∫_{region_a} ∫_{region_b} k(s, t) dt ds`.
pub fn kernel_double_integral(
    spec: &KernelSpec,
    domain: &Domain,
    region_a: &Rect,
    region_b: &Rect,
) -> Result<f64> {
    let ra = check_kernel_rect(spec, domain, region_a)?;
    let rb = check_kernel_rect(spec, domain, region_b)?;
    Ok(double_shifted(spec, domain.dim, &ra, &rb))
}

pub(crate) fn double_shifted(spec: &KernelSpec, dim: usize, ra: &Rect, rb: &Rect) -> f64 {
    let (scale, axes) = spec.factors(dim);
    let mut v = scale;
    for a in 0..dim {
        v *= axes[a].double(ra.lo[a], ra.hi[a], rb.lo[a], rb.hi[a]);
    }
    v
}

/// Single integral over a union of boxes.
pub fn region_single_integral(
    spec: &KernelSpec,
    domain: &Domain,
    s: &Point,
    region: &Region,
) -> Result<f64> {
    region
        .parts
        .iter()
        .map(|r| kernel_single_integral(spec, domain, s, r))
        .sum()
}

/// Double integral over a pair of unions of boxes.
pub fn region_double_integral(
    spec: &KernelSpec,
    domain: &Domain,
    a: &Region,
    b: &Region,
) -> Result<f64> {
    let mut total = 0.0;
    for ra in &a.parts {
        for rb in &b.parts {
            total += kernel_double_integral(spec, domain, ra, rb)?;
        }
    }
    Ok(total)
}
