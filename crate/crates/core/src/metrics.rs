//! Posterior summaries: quantiles, SSE, coverage and credible-interval width.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::par::{self, Execution};
use crate::samplers::PosteriorSamples;

/// Probabilities reported per point.
pub const PROBS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// Quantile by linear interpolation of order statistics (type 7) on sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The five [`PROBS`] quantiles of an unsorted sample.
pub fn five_quantiles(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    PROBS.map(|p| quantile_sorted(&v, p))
}

pub fn sse(medians: &[f64], truth: &[f64]) -> f64 {
    medians
        .iter()
        .zip(truth)
        .map(|(m, t)| (m - t) * (m - t))
        .sum()
}

/// Fraction of points with `truth` inside `[q2.5, q97.5]`.
pub fn coverage(quantiles: &[[f64; 5]], truth: &[f64]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = quantiles
        .iter()
        .zip(truth)
        .filter(|(q, t)| **t >= q[0] && **t <= q[4])
        .count();
    hits as f64 / truth.len() as f64
}

pub fn ci_width(quantiles: &[[f64; 5]]) -> f64 {
    if quantiles.is_empty() {
        return 0.0;
    }
    quantiles.iter().map(|q| q[4] - q[0]).sum::<f64>() / quantiles.len() as f64
}

/// Statistics over one group of points (grid or observed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub sse: Option<f64>,
    pub coverage: Option<f64>,
    pub ci_width: f64,
}

impl PointStats {
    fn new(quantiles: &[[f64; 5]], truth: Option<&[f64]>) -> Self {
        let medians: Vec<f64> = quantiles.iter().map(|q| q[2]).collect();
        PointStats {
            sse: truth.map(|t| sse(&medians, t)),
            coverage: truth.map(|t| coverage(quantiles, t)),
            ci_width: ci_width(quantiles),
        }
    }
}

/// Posterior summary of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_draws: usize,
    pub grid: PointStats,
    pub observed: PointStats,
    /// Quantiles at each value slot, grid points first.
    pub quantiles: Vec<[f64; 5]>,
    /// Quantiles of `Λ(S)`.
    pub integral: [f64; 5],
    /// Quantiles of the Brownian precision, when sampled.
    pub theta: Option<[f64; 5]>,
}

impl EvalReport {
    pub fn sse_grid(&self) -> Option<f64> {
        self.grid.sse
    }

    pub fn coverage_grid(&self) -> Option<f64> {
        self.grid.coverage
    }

    pub fn ci_width(&self) -> f64 {
        self.grid.ci_width
    }
}

/// Ground truth at the grid and at the observed points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub grid: Option<Vec<f64>>,
    pub observed: Option<Vec<f64>>,
}

/// Summarize retained draws against optional ground truth.
pub fn summarize(exec: Execution, samples: &PosteriorSamples, truth: &Truth) -> Result<EvalReport> {
    let n = samples.n_draws();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 draws to summarize, got {n}"
        )));
    }
    let layout = samples.layout;
    if let Some(t) = &truth.grid {
        check_dim(layout.n_grid, t.len())?;
    }
    if let Some(t) = &truth.observed {
        check_dim(layout.n_obs, t.len())?;
    }
    let quantiles = par::map_range(exec, layout.n_values(), |j| {
        five_quantiles(&samples.column(j))
    });
    let (g, o) = quantiles.split_at(layout.n_grid);
    Ok(EvalReport {
        n_draws: n,
        grid: PointStats::new(g, truth.grid.as_deref()),
        observed: PointStats::new(o, truth.observed.as_deref()),
        integral: five_quantiles(&samples.total_integral()),
        theta: (!samples.theta.is_empty()).then(|| five_quantiles(&samples.theta)),
        quantiles,
    })
}

/// Five-number summary of a statistic across replicates.
pub fn aggregate(values: &[f64]) -> Option<[f64; 5]> {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    (!v.is_empty()).then(|| five_quantiles(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layout;
    use proptest::prelude::*;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        // numpy.quantile([3, 1, 4, 1, 5, 9, 2, 6], 0.975) with the default method
        assert!(
            (five_quantiles(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0])[4] - 8.475).abs() < 1e-12
        );
    }

    #[test]
    fn sse_and_coverage_examples() {
        assert_eq!(sse(&[1.0, 2.0], &[1.5, 1.0]), 1.25);
        let q = [[0.0, 0.0, 0.0, 0.0, 10.0]; 3];
        let mut qs = q.to_vec();
        qs.push([6.0, 7.0, 8.0, 9.0, 10.0]);
        assert_eq!(coverage(&qs, &[5.0; 4]), 0.75);
    }

    #[test]
    fn constant_draws() {
        let layout = Layout::events(2, 0);
        let s = PosteriorSamples::new(layout, [3.0, 5.0, 15.0].repeat(4), vec![]);
        let r = summarize(
            Execution::Sequential,
            &s,
            &Truth {
                grid: Some(vec![3.0, 5.5]),
                observed: None,
            },
        )
        .unwrap();
        assert_eq!(r.ci_width(), 0.0);
        assert_eq!(r.coverage_grid(), Some(0.5));
        assert_eq!(r.integral, [15.0; 5]);
        assert_eq!(r.observed.sse, None);
        let one = PosteriorSamples::new(layout, vec![1.0, 1.0, 1.0], vec![]);
        assert!(summarize(Execution::Sequential, &one, &Truth::default()).is_err());
    }

    proptest! {
        #[test]
        fn quantiles_monotone_and_order_free(mut v in proptest::collection::vec(-50.0f64..50.0, 2..60), k in 0usize..60) {
            let q = five_quantiles(&v);
            prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
            let n = v.len();
            v.rotate_left(k % n);
            v.reverse();
            prop_assert_eq!(five_quantiles(&v), q);
        }

        #[test]
        fn coverage_matches_recount(qs in proptest::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..30), t in proptest::collection::vec(0.0f64..10.0, 30)) {
            let quantiles: Vec<[f64; 5]> = qs.iter().map(|&(a, w)| [a, a, a, a, a + w]).collect();
            let truth = &t[..quantiles.len()];
            let misses = quantiles.iter().zip(truth).filter(|(q, x)| **x < q[0] || **x > q[4]).count();
            let c = coverage(&quantiles, truth);
            prop_assert!((c - (1.0 - misses as f64 / truth.len() as f64)).abs() < 1e-12);
            // adding exactly matched points leaves SSE unchanged
            let med: Vec<f64> = quantiles.iter().map(|q| q[2]).collect();
            let mut med2 = med.clone();
            let mut truth2 = truth.to_vec();
            med2.push(1.0);
            truth2.push(1.0);
            prop_assert_eq!(sse(&med, truth), sse(&med2, &truth2));
        }
    }
}
