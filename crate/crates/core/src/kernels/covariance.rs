use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    check_kernel_point, check_kernel_rect, double_shifted, eval_shifted, single_shifted, KernelSpec,
};
use crate::error::{Error, Result};
use crate::geometry::{Domain, Point, Rect, Region};
use crate::par::{self, Execution};

/// Relative diagonal jitter levels tried, after a plain attempt, when a
/// Cholesky factorization fails. Each is multiplied by the mean diagonal.
pub const JITTER_LADDER: [f64; 7] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Minimum separation between locations, as a fraction of the domain length.
pub const MIN_SEPARATION: f64 = 1e-9;

/// Factorize a symmetric positive-definite matrix, adding diagonal jitter
/// from [`JITTER_LADDER`] if needed. Returns the factor and the absolute
/// jitter that was added.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, 0.0));
    }
    let n = m.nrows();
    let mean_diag = (m.trace() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    for rel in JITTER_LADDER {
        let jitter = rel * mean_diag;
        let mut j = m.clone();
        for i in 0..n {
            j[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(j) {
            return Ok((c, jitter));
        }
    }
    let min_eigenvalue = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Err(Error::IllConditioned {
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * mean_diag,
        min_eigenvalue,
    })
}

/// Covariance of `[f(x_1), ..., f(x_M), ∫_{B_1} f, ..., ∫_{B_J} f]` for a
/// zero-mean Gaussian process `f`, with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct AugmentedCovariance {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    n_points: usize,
    n_regions: usize,
}

/// Reject pairs of locations closer than `MIN_SEPARATION` times the domain
/// length.
pub(crate) fn check_separation(domain: &Domain, points: &[Point]) -> Result<()> {
    let threshold = MIN_SEPARATION * domain.length_scale();
    let dim = domain.dim;
    if dim == 1 {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        idx.sort_by(|&a, &b| points[a].x().partial_cmp(&points[b].x()).unwrap());
        for w in idx.windows(2) {
            let sep = (points[w[1]].x() - points[w[0]].x()).abs();
            if sep < threshold {
                return Err(Error::DuplicatePoints {
                    i: w[0].min(w[1]),
                    j: w[0].max(w[1]),
                    separation: sep,
                    threshold,
                });
            }
        }
    } else {
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let sep = points[i].distance(&points[j], dim);
                if sep < threshold {
                    return Err(Error::DuplicatePoints {
                        i,
                        j,
                        separation: sep,
                        threshold,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Raw kernel blocks (no factorization): values at `points` followed by
/// integrals over `regions`.
pub(crate) fn assemble_matrix(
    exec: Execution,
    spec: &KernelSpec,
    domain: &Domain,
    points: &[Point],
    regions: &[Region],
) -> Result<DMatrix<f64>> {
    spec.validate(domain)?;
    let dim = domain.dim;
    let shifted: Vec<Point> = points
        .iter()
        .map(|p| {
            domain.check_point(p)?;
            check_kernel_point(spec, domain, p)
        })
        .collect::<Result<_>>()?;
    let shifted_regions: Vec<Vec<Rect>> = regions
        .iter()
        .map(|r| {
            r.parts
                .iter()
                .map(|b| check_kernel_rect(spec, domain, b))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    check_separation(domain, points)?;

    let m = points.len();
    let n = m + regions.len();
    // column j holds entries i <= j; mirrored below
    let columns = par::map_range(exec, n, |j| {
        let mut col = Vec::with_capacity(j + 1);
        for i in 0..=j {
            let v = match (i < m, j < m) {
                (true, true) => eval_shifted(spec, dim, &shifted[i], &shifted[j]),
                (true, false) => shifted_regions[j - m]
                    .iter()
                    .map(|b| single_shifted(spec, dim, &shifted[i], b))
                    .sum(),
                _ => {
                    let (ra, rb) = (&shifted_regions[i - m], &shifted_regions[j - m]);
                    let mut s = 0.0;
                    for a in ra {
                        for b in rb {
                            s += double_shifted(spec, dim, a, b);
                        }
                    }
                    s
                }
            };
            col.push(v);
        }
        col
    });
    let mut v = DMatrix::zeros(n, n);
    for (j, col) in columns.into_iter().enumerate() {
        for (i, x) in col.into_iter().enumerate() {
            v[(i, j)] = x;
            v[(j, i)] = x;
        }
    }
    Ok(v)
}

/// Build and factorize the augmented covariance on the default execution.
pub fn build_augmented_covariance(
    spec: &KernelSpec,
    domain: &Domain,
    points: &[Point],
    regions: &[Region],
) -> Result<AugmentedCovariance> {
    build_augmented_covariance_with(Execution::default(), spec, domain, points, regions)
}

pub fn build_augmented_covariance_with(
    exec: Execution,
    spec: &KernelSpec,
    domain: &Domain,
    points: &[Point],
    regions: &[Region],
) -> Result<AugmentedCovariance> {
    if points.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one location is required".into(),
        ));
    }
    let matrix = assemble_matrix(exec, spec, domain, points, regions)?;
    AugmentedCovariance::from_matrix(matrix, points.len())
}

impl AugmentedCovariance {
    /// Wrap an already assembled covariance; the first `n_points` rows are
    /// pointwise values.
    pub fn from_matrix(matrix: DMatrix<f64>, n_points: usize) -> Result<Self> {
        let n_regions = matrix.nrows() - n_points;
        let (chol, jitter) = cholesky_with_jitter(&matrix)?;
        Ok(AugmentedCovariance {
            matrix,
            chol,
            jitter,
            n_points,
            n_regions,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    /// Covariance without jitter.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular factor of `matrix + jitter * I`.
    pub fn chol_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn v_ss(&self) -> DMatrix<f64> {
        self.matrix
            .view((0, 0), (self.n_points, self.n_points))
            .into_owned()
    }

    pub fn v_si(&self) -> DMatrix<f64> {
        self.matrix
            .view((0, self.n_points), (self.n_points, self.n_regions))
            .into_owned()
    }

    pub fn v_ii(&self) -> DMatrix<f64> {
        self.matrix
            .view(
                (self.n_points, self.n_points),
                (self.n_regions, self.n_regions),
            )
            .into_owned()
    }

    /// `V^{-1} x` using the (jittered) factor.
    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(x)
    }

    /// `x' V^{-1} x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        let mut y = x.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut y);
        y.norm_squared()
    }

    /// `log det V` of the jittered matrix.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..self.dim()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// One draw from `N(0, V)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.chol.l_dirty().lower_triangle() * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use approx::assert_relative_eq;

    fn bm1() -> KernelSpec {
        KernelSpec::BrownianMotion { precision: 1.0 }
    }

    #[test]
    fn bm_single_point_single_region() {
        let d = Domain::interval(2.0).unwrap();
        let v = build_augmented_covariance(
            &bm1(),
            &d,
            &[Point::d1(1.0)],
            &[Region::from_rect(Rect::interval(0.0, 2.0))],
        )
        .unwrap();
        let m = v.matrix();
        assert_relative_eq!(m[(0, 0)], 1.0);
        assert_relative_eq!(m[(0, 1)], 1.5, max_relative = 1e-15);
        assert_relative_eq!(m[(1, 0)], 1.5, max_relative = 1e-15);
        assert_relative_eq!(m[(1, 1)], 8.0 / 3.0, max_relative = 1e-15);
        assert_eq!(v.jitter(), 0.0);
    }

    #[test]
    fn single_entry_case() {
        let d = Domain::interval(2.0).unwrap();
        let k = KernelSpec::SquaredExponential {
            amplitude: 3.0,
            inv_length_sq: 1.0,
        };
        let v = build_augmented_covariance(&k, &d, &[Point::d1(0.4)], &[]).unwrap();
        assert_eq!(v.dim(), 1);
        assert_eq!(v.matrix()[(0, 0)], 3.0);
    }

    #[test]
    fn partition_additivity() {
        let d = Domain::interval(2.0).unwrap();
        let pts = [Point::d1(0.3), Point::d1(1.2), Point::d1(1.9)];
        let whole = [Region::from_rect(Rect::interval(0.0, 2.0))];
        let split = [
            Region::from_rect(Rect::interval(0.0, 1.0)),
            Region::from_rect(Rect::interval(1.0, 2.0)),
        ];
        for k in [
            bm1(),
            KernelSpec::SquaredExponential {
                amplitude: 1.3,
                inv_length_sq: 2.5,
            },
        ] {
            let a = build_augmented_covariance(&k, &d, &pts, &whole).unwrap();
            let b = build_augmented_covariance(&k, &d, &pts, &split).unwrap();
            for i in 0..3 {
                let s: f64 = b.v_si().row(i).sum();
                assert_relative_eq!(s, a.v_si()[(i, 0)], max_relative = 1e-12);
            }
            assert_relative_eq!(b.v_ii().sum(), a.v_ii()[(0, 0)], max_relative = 1e-12);
        }
    }

    #[test]
    fn duplicates_rejected() {
        let d = Domain::interval(2.0).unwrap();
        let e = build_augmented_covariance(&bm1(), &d, &[Point::d1(1.0), Point::d1(1.0)], &[]);
        assert!(matches!(e, Err(Error::DuplicatePoints { .. })));
    }

    #[test]
    fn ill_conditioned_reports_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky_with_jitter(&m) {
            Err(Error::IllConditioned { min_eigenvalue, .. }) => {
                assert_relative_eq!(min_eigenvalue, -1.0, max_relative = 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sequential_and_parallel_builds_identical() {
        let d = Domain::interval(5.0).unwrap();
        let pts: Vec<Point> = (0..40).map(|i| Point::d1(0.06 + 0.12 * i as f64)).collect();
        let k = KernelSpec::SquaredExponential {
            amplitude: 2.0,
            inv_length_sq: 0.8,
        };
        let r = [d.full_region()];
        let a = build_augmented_covariance_with(Execution::Sequential, &k, &d, &pts, &r).unwrap();
        let b = build_augmented_covariance_with(Execution::Parallel, &k, &d, &pts, &r).unwrap();
        assert_eq!(a.matrix(), b.matrix());
    }
}
