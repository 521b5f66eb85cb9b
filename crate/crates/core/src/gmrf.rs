//! Precision structures for Brownian-motion (and Brownian-sheet) priors.
//!
//! With a Brownian kernel the augmented covariance factors as `C / θ`, so
//! everything here is computed once with unit precision and reused across
//! Gibbs updates of `θ`.
//!
//! The intrinsic correction integrates out the level `λ(0)` under a flat
//! prior: `Q̃ = C⁻¹ − C⁻¹ l lᵀ C⁻¹ / (lᵀ C⁻¹ l)`, where `l` holds 1 for every
//! pointwise value and the region measure for every integral. `Q̃ l = 0`, so
//! a small ridge `ε I` is added before inversion.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{Domain, Point, Region};
use crate::kernels::covariance::{assemble_matrix, check_separation};
use crate::kernels::{cholesky_with_jitter, KernelSpec};
use crate::par::Execution;

/// Default ridge for one-dimensional data.
pub const DEFAULT_EPSILON: f64 = 1e-8;
/// Ridge that two-dimensional Brownian-sheet fits typically need.
pub const SPATIAL_EPSILON: f64 = 1e-4;

/// Tridiagonal precision of Brownian motion observed at sorted positive
/// locations `u_(1) < … < u_(M)`, started at zero.
#[derive(Debug, Clone)]
pub struct RandomWalkPrecision {
    /// Caller index of the k-th smallest location.
    pub order: Vec<usize>,
    /// Diagonal in sorted order.
    pub diag: Vec<f64>,
    /// Super-diagonal in sorted order (`len = M - 1`).
    pub off: Vec<f64>,
}

impl RandomWalkPrecision {
    /// `coords` are kernel coordinates (strictly positive, distinct).
    pub fn new(coords: &[f64]) -> Result<Self> {
        let m = coords.len();
        if m == 0 {
            return Err(Error::InvalidArgument("no locations".into()));
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| coords[a].partial_cmp(&coords[b]).unwrap());
        let u: Vec<f64> = order.iter().map(|&i| coords[i]).collect();
        if !(u[0] > 0.0) {
            return Err(Error::Domain(format!(
                "Brownian locations must be strictly positive, got {}",
                u[0]
            )));
        }
        let gaps: Vec<f64> = u.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(k) = gaps.iter().position(|g| !(*g > 0.0)) {
            return Err(Error::DuplicatePoints {
                i: order[k].min(order[k + 1]),
                j: order[k].max(order[k + 1]),
                separation: gaps[k],
                threshold: 0.0,
            });
        }
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m.saturating_sub(1)];
        diag[0] = 1.0 / u[0];
        for (k, g) in gaps.iter().enumerate() {
            let w = 1.0 / g;
            diag[k] += w;
            diag[k + 1] += w;
            off[k] = -w;
        }
        Ok(RandomWalkPrecision { order, diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `Q x` in caller order.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let m = self.len();
        let mut y = vec![0.0; m];
        for k in 0..m {
            let i = self.order[k];
            let mut v = self.diag[k] * x[i];
            if k > 0 {
                v += self.off[k - 1] * x[self.order[k - 1]];
            }
            if k + 1 < m {
                v += self.off[k] * x[self.order[k + 1]];
            }
            y[i] = v;
        }
        y
    }

    /// Dense matrix in caller order.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut q = DMatrix::zeros(m, m);
        for k in 0..m {
            let i = self.order[k];
            q[(i, i)] = self.diag[k];
            if k + 1 < m {
                let j = self.order[k + 1];
                q[(i, j)] = self.off[k];
                q[(j, i)] = self.off[k];
            }
        }
        q
    }
}

/// Unit-precision Brownian covariance bundle with its intrinsic correction.
#[derive(Debug, Clone)]
pub struct BmPrecisionBundle {
    c: DMatrix<f64>,
    c_inv: DMatrix<f64>,
    l: DVector<f64>,
    q_tilde: DMatrix<f64>,
    epsilon: f64,
    c_tilde: DMatrix<f64>,
    prec_chol: Cholesky<f64, Dyn>,
    log_det_prec: f64,
    random_walk: Option<RandomWalkPrecision>,
    n_points: usize,
}

/// One-dimensional bundle on `[0, T]` with the single full-domain integral,
/// matching the layout `[λ(x_1), …, λ(x_M), Λ([0, T])]`.
///
/// Points may come in any order; they are sorted internally and results are
/// reported in the caller's order.
pub fn build_bm_bundle(points: &[f64], t: f64, epsilon: f64) -> Result<BmPrecisionBundle> {
    let domain = Domain::interval(t)?;
    let pts: Vec<Point> = points.iter().map(|&x| Point::d1(x)).collect();
    for p in &pts {
        if !(p.x() > 0.0 && p.x() < t) {
            return Err(Error::Domain(format!(
                "Brownian locations must lie in (0, {t}), got {}",
                p.x()
            )));
        }
    }
    BmPrecisionBundle::new(
        &KernelSpec::BrownianMotion { precision: 1.0 },
        &domain,
        &pts,
        &[domain.full_region()],
        epsilon,
    )
}

impl BmPrecisionBundle {
    /// General constructor: pointwise values at `points` followed by
    /// integrals over `regions`, for a Brownian motion (1-D, tridiagonal
    /// path) or Brownian sheet (2-D, dense path). The hyperparameter in
    /// `kernel` is ignored; the bundle always has unit precision.
    pub fn new(
        kernel: &KernelSpec,
        domain: &Domain,
        points: &[Point],
        regions: &[Region],
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !kernel.family().is_brownian() {
            return Err(Error::InvalidArgument(
                "precision bundles exist only for Brownian kernels".into(),
            ));
        }
        if points.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one location is required".into(),
            ));
        }
        let unit = kernel.with_precision(1.0);
        check_separation(domain, points)?;
        let c = assemble_matrix(Execution::default(), &unit, domain, points, regions)?;
        let m = points.len();
        let n = c.nrows();
        let mut l = DVector::from_element(n, 1.0);
        for (k, r) in regions.iter().enumerate() {
            l[m + k] = r.measure(domain.dim);
        }

        let (c_inv, random_walk) = if domain.dim == 1 {
            let coords: Vec<f64> = points.iter().map(|p| domain.shift(p).x()).collect();
            let rw = RandomWalkPrecision::new(&coords)?;
            (block_inverse(&c, &rw)?, Some(rw))
        } else {
            let (ch, _) = cholesky_with_jitter(&c)?;
            (ch.inverse(), None)
        };
        let c_inv = symmetrize(c_inv);

        let u = &c_inv * &l;
        let denom = l.dot(&u);
        let q_tilde = symmetrize(&c_inv - (&u * u.transpose()) / denom);

        let mut prec = q_tilde.clone();
        for i in 0..n {
            prec[(i, i)] += epsilon;
        }
        let (prec_chol, _) = cholesky_with_jitter(&prec)?;
        let log_det_prec = {
            let lf = prec_chol.l_dirty();
            2.0 * (0..n).map(|i| lf[(i, i)].ln()).sum::<f64>()
        };
        let c_tilde = symmetrize(prec_chol.inverse());

        Ok(BmPrecisionBundle {
            c,
            c_inv,
            l,
            q_tilde,
            epsilon,
            c_tilde,
            prec_chol,
            log_det_prec,
            random_walk,
            n_points: m,
        })
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Unit-precision augmented covariance.
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn c_inv(&self) -> &DMatrix<f64> {
        &self.c_inv
    }

    /// Null direction of `Q̃`.
    pub fn l(&self) -> &DVector<f64> {
        &self.l
    }

    pub fn q_tilde(&self) -> &DMatrix<f64> {
        &self.q_tilde
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `(Q̃ + εI)⁻¹`.
    pub fn c_tilde(&self) -> &DMatrix<f64> {
        &self.c_tilde
    }

    /// Cholesky factor of `Q̃ + εI`.
    pub fn precision_cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.prec_chol
    }

    /// `log det (Q̃ + εI)`.
    pub fn log_det_precision(&self) -> f64 {
        self.log_det_prec
    }

    /// Tridiagonal random-walk precision of the value block (1-D only).
    pub fn random_walk(&self) -> Option<&RandomWalkPrecision> {
        self.random_walk.as_ref()
    }

    /// `(Q̃ + εI) x`.
    pub fn precision_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q_tilde * x + x * self.epsilon
    }

    /// `λᵀ C̃⁻¹ λ = λᵀ (Q̃ + εI) λ`.
    pub fn quadratic_form(&self, lam: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), lam.len())?;
        Ok(lam.dot(&(&self.q_tilde * lam)) + self.epsilon * lam.norm_squared())
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Inverse of `[[Σ, B], [Bᵀ, D]]` given the tridiagonal `Σ⁻¹`, through the
/// Schur complement `S = D − Bᵀ Σ⁻¹ B`.
fn block_inverse(c: &DMatrix<f64>, rw: &RandomWalkPrecision) -> Result<DMatrix<f64>> {
    let m = rw.len();
    let n = c.nrows();
    let k = n - m;
    let q = rw.to_dense();
    if k == 0 {
        return Ok(q);
    }
    let b = c.view((0, m), (m, k)).into_owned();
    let d = c.view((m, m), (k, k)).into_owned();
    let mut qb = DMatrix::zeros(m, k);
    for col in 0..k {
        let y = rw.mul(b.column(col).as_slice());
        qb.column_mut(col).copy_from_slice(&y);
    }
    let s = symmetrize(&d - b.transpose() * &qb);
    let (s_chol, _) = cholesky_with_jitter(&s)?;
    let s_inv = s_chol.inverse();
    let qb_sinv = &qb * &s_inv;
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), (m, m))
        .copy_from(&(q + &qb_sinv * qb.transpose()));
    let off = -qb_sinv;
    out.view_mut((0, m), (m, k)).copy_from(&off);
    out.view_mut((m, 0), (k, m)).copy_from(&off.transpose());
    out.view_mut((m, m), (k, k)).copy_from(&s_inv);
    Ok(out)
}
