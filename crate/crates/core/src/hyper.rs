//! Hyperparameter estimation for fixed-θ kernels: the weighted MAP
//! objective over piecewise-constant intensities, differential evolution, and
//! the oracle maximum-likelihood fit used in simulation studies.
//!
//! The truncated-Gaussian term of the weighted objective is evaluated without
//! its orthant-probability normalizer, which has no closed form.

use std::ops::RangeInclusive;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point, Rect};
use crate::kernels::{build_augmented_covariance_with, KernelFamily, KernelSpec};
use crate::model::{gaussian_log_density, Dataset};
use crate::par::{self, Execution};

/// One-dimensional piecewise-constant grid with `m` levels: cells centred on
/// `m` equispaced knots, with half-width cells at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseGrid {
    pub lo: f64,
    pub hi: f64,
    pub m: usize,
}

impl PiecewiseGrid {
    pub fn new(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if m == 0 || !(hi > lo) {
            return Err(Error::InvalidArgument(format!(
                "piecewise grid needs m >= 1 and hi > lo, got m={m} on [{lo}, {hi}]"
            )));
        }
        Ok(PiecewiseGrid { lo, hi, m })
    }

    /// Knot spacing `T/(m − 1)`, or `T` when `m = 1`.
    pub fn delta(&self) -> f64 {
        let t = self.hi - self.lo;
        if self.m == 1 {
            t
        } else {
            t / (self.m - 1) as f64
        }
    }

    /// Interior breakpoints `(2k − 1)Δ/2`, `k = 1..m−1`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let d = self.delta();
        (1..self.m)
            .map(|k| self.lo + (2 * k - 1) as f64 * d / 2.0)
            .collect()
    }

    pub fn edges(&self) -> Vec<f64> {
        let mut e = vec![self.lo];
        e.extend(self.breakpoints());
        e.push(self.hi);
        e
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.edges().windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.edges()
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }

    /// Cell of `x` with half-open cells, the last closed.
    pub fn cell(&self, x: f64) -> usize {
        self.breakpoints().partition_point(|&b| b <= x)
    }
}

/// Piecewise-constant cells on the domain: a grid per axis, tensorized in 2-D.
#[derive(Debug, Clone, PartialEq)]
pub struct Cells {
    pub axes: Vec<PiecewiseGrid>,
    pub rects: Vec<Rect>,
}

impl Cells {
    pub fn new(domain: &Domain, m: usize) -> Result<Self> {
        let b = &domain.bounds;
        let axes: Vec<PiecewiseGrid> = (0..domain.dim)
            .map(|a| PiecewiseGrid::new(b.lo[a], b.hi[a], m))
            .collect::<Result<_>>()?;
        let ex = axes[0].edges();
        let rects = if domain.dim == 1 {
            ex.windows(2).map(|w| Rect::interval(w[0], w[1])).collect()
        } else {
            let ey = axes[1].edges();
            ey.windows(2)
                .flat_map(|wy| {
                    ex.windows(2)
                        .map(move |wx| Rect::rectangle((wx[0], wx[1]), (wy[0], wy[1])))
                })
                .collect()
        };
        Ok(Cells { axes, rects })
    }

    pub fn len(&self) -> usize {
        self.rects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    fn cell_of(&self, p: &Point) -> usize {
        let i = self.axes[0].cell(p.x());
        if self.axes.len() == 1 {
            i
        } else {
            self.axes[1].cell(p.y()) * self.axes[0].m + i
        }
    }
}

/// Weighted MAP settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    /// Weight of the prior term, in (0, 1).
    pub c: f64,
    pub m_range: RangeInclusive<usize>,
    pub de: DeConfig,
    /// Bounds of `log10 θ` for every kernel hyperparameter.
    pub log10_theta_bounds: (f64, f64),
    /// Upper bound of each level as a multiple of `N/|S|`.
    pub level_factor: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            c: 0.2,
            m_range: 1..=10,
            de: DeConfig::default(),
            log10_theta_bounds: (-4.0, 4.0),
            level_factor: 10.0,
        }
    }
}

impl MapConfig {
    /// Defaults for a domain; two-dimensional tensor grids stop at 4 × 4.
    pub fn for_domain(domain: &Domain) -> Self {
        let m_range = if domain.dim == 2 { 1..=4 } else { 1..=10 };
        MapConfig {
            m_range,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "c must lie in (0, 1), got {}",
                self.c
            )));
        }
        if self.m_range.is_empty() || *self.m_range.start() == 0 {
            return Err(Error::InvalidArgument(
                "m range must be a nonempty range of positive integers".into(),
            ));
        }
        let (a, b) = self.log10_theta_bounds;
        if !(b > a) || !(self.level_factor > 0.0) {
            return Err(Error::InvalidArgument("invalid optimization bounds".into()));
        }
        self.de.validate()
    }
}

/// Precomputed data terms of the weighted objective for one cell layout.
#[derive(Debug, Clone)]
pub struct MapProblem {
    pub cells: Cells,
    domain: Domain,
    /// Events per cell.
    cell_counts: Vec<f64>,
    /// `|cell ∩ bin|` per bin, per cell.
    bin_overlap: Vec<Vec<f64>>,
    bin_counts: Vec<f64>,
    lengths: Vec<f64>,
    midpoints: Vec<Point>,
}

impl MapProblem {
    pub fn new(data: &Dataset, m: usize) -> Result<Self> {
        let domain = data.domain;
        let cells = Cells::new(&domain, m)?;
        let mut cell_counts = vec![0.0; cells.len()];
        for p in &data.events {
            cell_counts[cells.cell_of(p)] += 1.0;
        }
        let bin_overlap = data
            .bins
            .iter()
            .map(|b| {
                cells
                    .rects
                    .iter()
                    .map(|r| r.overlap(&b.region, domain.dim))
                    .collect()
            })
            .collect();
        Ok(MapProblem {
            lengths: cells.rects.iter().map(|r| r.measure(domain.dim)).collect(),
            midpoints: cells.rects.iter().map(|r| r.center()).collect(),
            bin_counts: data.bins.iter().map(|b| b.count as f64).collect(),
            cell_counts,
            bin_overlap,
            cells,
            domain,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.cells.len()
    }

    /// Piecewise-constant Poisson log-likelihood.
    pub fn log_likelihood(&self, levels: &[f64]) -> f64 {
        if levels.iter().any(|&v| !(v > 0.0)) {
            return f64::NEG_INFINITY;
        }
        let mut ll = 0.0;
        for (n, v) in self.cell_counts.iter().zip(levels) {
            if *n > 0.0 {
                ll += n * v.ln();
            }
        }
        for (c, ov) in self.bin_counts.iter().zip(&self.bin_overlap) {
            let lam: f64 = ov.iter().zip(levels).map(|(o, v)| o * v).sum();
            if *c > 0.0 {
                ll += c * lam.ln();
            }
        }
        ll - self.total(levels)
    }

    /// `Λ*`: integral of the piecewise intensity.
    pub fn total(&self, levels: &[f64]) -> f64 {
        self.lengths.iter().zip(levels).map(|(l, v)| l * v).sum()
    }

    /// Untruncated Gaussian log-density of `(λ*, Λ*)` at the cell midpoints.
    pub fn log_prior(&self, levels: &[f64], kernel: &KernelSpec) -> f64 {
        if levels.iter().any(|&v| !(v > 0.0)) {
            return f64::NEG_INFINITY;
        }
        let cov = match build_augmented_covariance_with(
            Execution::Sequential,
            kernel,
            &self.domain,
            &self.midpoints,
            &[self.domain.full_region()],
        ) {
            Ok(c) => c,
            Err(_) => return f64::NEG_INFINITY,
        };
        let mut x = DVector::zeros(levels.len() + 1);
        x.as_mut_slice()[..levels.len()].copy_from_slice(levels);
        x[levels.len()] = self.total(levels);
        gaussian_log_density(&x, &cov)
    }

    /// `(1 − c)·log p(data | λ*) + c·log N((λ*, Λ*); 0, V_θ)`.
    pub fn objective(&self, levels: &[f64], kernel: &KernelSpec, c: f64) -> f64 {
        let ll = self.log_likelihood(levels);
        if !ll.is_finite() {
            return f64::NEG_INFINITY;
        }
        let lp = self.log_prior(levels, kernel);
        (1.0 - c) * ll + c * lp
    }
}

/// Weighted MAP objective for `m` levels per axis.
pub fn map_objective(
    data: &Dataset,
    m: usize,
    levels: &[f64],
    kernel: &KernelSpec,
    c: f64,
) -> Result<f64> {
    let p = MapProblem::new(data, m)?;
    crate::error::check_dim(p.n_levels(), levels.len())?;
    Ok(p.objective(levels, kernel, c))
}

/// Differential evolution settings (rand/1/bin with dithered mutation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeConfig {
    /// Population size per parameter.
    pub pop_per_dim: usize,
    pub crossover: f64,
    /// Mutation factor drawn uniformly from this range once per generation.
    pub mutation: (f64, f64),
    pub max_generations: usize,
    /// Stop when the spread of population costs falls below
    /// `atol + rtol·|mean|`.
    pub rtol: f64,
    pub atol: f64,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            pop_per_dim: 10,
            crossover: 0.9,
            mutation: (0.5, 1.0),
            max_generations: 1000,
            rtol: 1e-10,
            atol: 1e-12,
            seed: 0,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.mutation;
        if self.pop_per_dim == 0 || !(0.0..=1.0).contains(&self.crossover) || !(b >= a && a > 0.0) {
            return Err(Error::InvalidArgument(
                "invalid differential evolution settings".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeResult {
    pub x: Vec<f64>,
    /// Best cost (the minimized value).
    pub cost: f64,
    pub generations: usize,
    pub evaluations: usize,
}

/// Minimize `f` over a box. Non-finite costs count as `+∞`.
pub fn differential_evolution<F>(
    exec: Execution,
    f: F,
    bounds: &[(f64, f64)],
    cfg: &DeConfig,
) -> Result<DeResult>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    cfg.validate()?;
    let d = bounds.len();
    if d == 0 || bounds.iter().any(|(a, b)| !(b >= a)) {
        return Err(Error::InvalidArgument(
            "differential evolution needs a nonempty box".into(),
        ));
    }
    let np = (cfg.pop_per_dim * d).max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cost = |x: &Vec<f64>| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            bounds
                .iter()
                .map(|&(a, b)| a + rng.random::<f64>() * (b - a))
                .collect()
        })
        .collect();
    let mut costs = par::map_slice(exec, &pop, cost);
    let mut evaluations = np;
    let mut generations = 0;
    while generations < cfg.max_generations {
        let finite: Vec<f64> = costs.iter().copied().filter(|c| c.is_finite()).collect();
        if finite.len() == np {
            let mean = finite.iter().sum::<f64>() / np as f64;
            let sd = (finite.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / np as f64).sqrt();
            if sd <= cfg.atol + cfg.rtol * mean.abs() {
                break;
            }
        }
        generations += 1;
        let scale = rng.random_range(cfg.mutation.0..=cfg.mutation.1);
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut pick = || loop {
                    let r = rng.random_range(0..np);
                    if r != i {
                        break r;
                    }
                };
                let r1 = pick();
                let r2 = loop {
                    let r = pick();
                    if r != r1 {
                        break r;
                    }
                };
                let r3 = loop {
                    let r = pick();
                    if r != r1 && r != r2 {
                        break r;
                    }
                };
                let jrand = rng.random_range(0..d);
                (0..d)
                    .map(|j| {
                        if j == jrand || rng.random::<f64>() < cfg.crossover {
                            let v = pop[r1][j] + scale * (pop[r2][j] - pop[r3][j]);
                            let (a, b) = bounds[j];
                            if v < a || v > b {
                                // resample out-of-box coordinates uniformly
                                a + rng.random::<f64>() * (b - a)
                            } else {
                                v
                            }
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_costs = par::map_slice(exec, &trials, cost);
        evaluations += np;
        for (i, (t, c)) in trials.into_iter().zip(trial_costs).enumerate() {
            if c <= costs[i] {
                pop[i] = t;
                costs[i] = c;
            }
        }
    }
    let best = (0..np)
        .min_by(|&a, &b| costs[a].total_cmp(&costs[b]))
        .expect("nonempty population");
    if !costs[best].is_finite() {
        return Err(Error::Estimation(format!(
            "objective was non-finite at all {evaluations} evaluated points"
        )));
    }
    Ok(DeResult {
        x: pop[best].clone(),
        cost: costs[best],
        generations,
        evaluations,
    })
}

/// Result of the weighted MAP search for one `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCandidate {
    pub m: usize,
    pub levels: Vec<f64>,
    /// `Λ*` of the fitted levels.
    pub integral: f64,
    pub kernel: KernelSpec,
    pub objective: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFit {
    pub best: MapCandidate,
    pub candidates: Vec<MapCandidate>,
}

impl MapFit {
    pub fn kernel(&self) -> KernelSpec {
        self.best.kernel
    }
}

fn kernel_from_log10(family: KernelFamily, x: &[f64]) -> KernelSpec {
    let p: Vec<f64> = x.iter().map(|v| 10f64.powf(*v)).collect();
    family.with_params(&p)
}

/// Optimize one `m` jointly over levels and `log10 θ`.
pub fn fit_map_single(
    data: &Dataset,
    family: KernelFamily,
    m: usize,
    config: &MapConfig,
    exec: Execution,
) -> Result<MapCandidate> {
    let problem = MapProblem::new(data, m)?;
    let k = problem.n_levels();
    let n_theta = family.n_params(data.domain.dim);
    let count = data.total_count().max(1) as f64;
    let upper = config.level_factor * count / data.domain.measure();
    let mut bounds = vec![(upper * 1e-9, upper); k];
    bounds.extend(std::iter::repeat_n(config.log10_theta_bounds, n_theta));
    let c = config.c;
    let de = DeConfig {
        seed: config.de.seed.wrapping_add(m as u64),
        ..config.de.clone()
    };
    let r = differential_evolution(
        exec,
        |x| -problem.objective(&x[..k], &kernel_from_log10(family, &x[k..]), c),
        &bounds,
        &de,
    )?;
    Ok(MapCandidate {
        m,
        levels: r.x[..k].to_vec(),
        integral: problem.total(&r.x[..k]),
        kernel: kernel_from_log10(family, &r.x[k..]),
        objective: -r.cost,
        evaluations: r.evaluations,
    })
}

/// Weighted MAP over every `m` in the configured range; the `m` values run
/// concurrently under `exec`.
pub fn fit_map(
    data: &Dataset,
    family: KernelFamily,
    config: &MapConfig,
    exec: Execution,
) -> Result<MapFit> {
    config.validate()?;
    let ms: Vec<usize> = config.m_range.clone().collect();
    let candidates: Vec<MapCandidate> = par::map_slice(exec, &ms, |&m| {
        fit_map_single(data, family, m, config, Execution::Sequential)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let best = candidates
        .iter()
        .max_by(|a, b| a.objective.total_cmp(&b.objective))
        .cloned()
        .ok_or_else(|| Error::Estimation("no candidate fits".into()))?;
    Ok(MapFit { best, candidates })
}

/// Known intensity values at points plus the known integral over the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTarget {
    pub domain: Domain,
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    pub integral: f64,
}

impl OracleTarget {
    /// Gaussian log-density of the true values under the kernel.
    pub fn log_density(&self, kernel: &KernelSpec) -> f64 {
        let cov = match build_augmented_covariance_with(
            Execution::Sequential,
            kernel,
            &self.domain,
            &self.points,
            &[self.domain.full_region()],
        ) {
            Ok(c) => c,
            Err(_) => return f64::NEG_INFINITY,
        };
        let mut x = DVector::zeros(self.values.len() + 1);
        x.as_mut_slice()[..self.values.len()].copy_from_slice(&self.values);
        x[self.values.len()] = self.integral;
        gaussian_log_density(&x, &cov)
    }
}

/// Oracle maximum likelihood: maximize the Gaussian density of the true
/// intensity at the observed events and its true integral.
pub fn fit_oracle_mle<F>(
    truth: F,
    data: &Dataset,
    family: KernelFamily,
    config: &MapConfig,
    exec: Execution,
) -> Result<(KernelSpec, f64)>
where
    F: Fn(&Point) -> f64,
{
    let target = OracleTarget {
        domain: data.domain,
        points: data.events.clone(),
        values: data.events.iter().map(&truth).collect(),
        integral: integrate_truth(&truth, &data.domain),
    };
    fit_oracle_target(&target, family, config, exec)
}

/// [`fit_oracle_mle`] on precomputed values.
pub fn fit_oracle_target(
    target: &OracleTarget,
    family: KernelFamily,
    config: &MapConfig,
    exec: Execution,
) -> Result<(KernelSpec, f64)> {
    config.validate()?;
    if target.points.is_empty() {
        return Err(Error::Estimation(
            "oracle fit needs at least one point".into(),
        ));
    }
    let n_theta = family.n_params(target.domain.dim);
    let bounds = vec![config.log10_theta_bounds; n_theta];
    let r = differential_evolution(
        exec,
        |x| -target.log_density(&kernel_from_log10(family, x)),
        &bounds,
        &config.de,
    )?;
    Ok((kernel_from_log10(family, &r.x), -r.cost))
}

/// Composite Gauss–Legendre integral of a truth function over the domain.
fn integrate_truth<F: Fn(&Point) -> f64>(f: &F, domain: &Domain) -> f64 {
    const NODES: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.236_926_885_056_189,
        0.478_628_670_499_366,
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
    ];
    let panels = if domain.dim == 1 { 2000 } else { 200 };
    let b = &domain.bounds;
    let axis = |a: usize| -> Vec<(f64, f64)> {
        let h = b.width(a) / panels as f64;
        (0..panels)
            .flat_map(|i| {
                let c = b.lo[a] + (i as f64 + 0.5) * h;
                NODES
                    .iter()
                    .zip(WEIGHTS)
                    .map(move |(n, w)| (c + 0.5 * h * n, 0.5 * h * w))
            })
            .collect()
    };
    let xs = axis(0);
    if domain.dim == 1 {
        xs.iter().map(|&(x, w)| w * f(&Point::d1(x))).sum()
    } else {
        let ys = axis(1);
        ys.iter()
            .map(|&(y, wy)| {
                wy * xs
                    .iter()
                    .map(|&(x, wx)| wx * f(&Point::d2(x, y)))
                    .sum::<f64>()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::build_augmented_covariance;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn grid_formula() {
        let g = PiecewiseGrid::new(0.0, 10.0, 3).unwrap();
        assert_eq!(g.breakpoints(), vec![2.5, 7.5]);
        assert_eq!(g.lengths(), vec![2.5, 5.0, 2.5]);
        let one = PiecewiseGrid::new(0.0, 10.0, 1).unwrap();
        assert_eq!(one.lengths(), vec![10.0]);
        assert_eq!(g.cell(2.5), 1);
        assert_eq!(g.cell(10.0), 2);
    }

    fn dataset(events: &[f64], t: f64) -> Dataset {
        let d = Domain::interval(t).unwrap();
        Dataset::events_only(d, events.iter().map(|&x| Point::d1(x)).collect(), vec![]).unwrap()
    }

    #[test]
    fn objective_matches_independent_evaluation() {
        let data = dataset(&[0.5, 1.0, 4.0, 6.2, 9.9], 10.0);
        let kernel = KernelSpec::SquaredExponential {
            amplitude: 2.0,
            inv_length_sq: 0.3,
        };
        let levels = [0.4, 0.7, 0.2];
        let c = 0.2;
        let v = map_objective(&data, 3, &levels, &kernel, c).unwrap();
        // cells [0,2.5], [2.5,7.5], [7.5,10] hold 2, 2, 1 events
        let ll = 2.0 * 0.4f64.ln() + 2.0 * 0.7f64.ln() + 0.2f64.ln()
            - (0.4 * 2.5 + 0.7 * 5.0 + 0.2 * 2.5);
        let mids = [1.25, 5.0, 8.75].map(Point::d1);
        let cov =
            build_augmented_covariance(&kernel, &data.domain, &mids, &[data.domain.full_region()])
                .unwrap();
        let x = DVector::from_vec(vec![0.4, 0.7, 0.2, 5.0]);
        let m = cov.matrix().clone();
        let inv = m.clone().try_inverse().unwrap();
        let lp = -0.5 * x.dot(&(&inv * &x))
            - 0.5 * m.determinant().ln()
            - 2.0 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(v, (1.0 - c) * ll + c * lp, max_relative = 1e-10);
    }

    #[test]
    fn objective_decomposition() {
        let kernel = KernelSpec::SquaredExponential {
            amplitude: 2.0,
            inv_length_sq: 0.3,
        };
        let other = KernelSpec::SquaredExponential {
            amplitude: 0.1,
            inv_length_sq: 3.0,
        };
        let a = dataset(&[0.5, 1.0, 4.0], 10.0);
        let b = dataset(&[0.6, 1.2, 3.9], 10.0);
        let lv = [0.4, 0.7, 0.2];
        // c = 0 ignores θ; moving events within their cells with c = 1 changes nothing
        let p = MapProblem::new(&a, 3).unwrap();
        assert_eq!(
            p.objective(&lv, &kernel, 0.0),
            p.objective(&lv, &other, 0.0)
        );
        let q = MapProblem::new(&b, 3).unwrap();
        assert_eq!(
            p.objective(&lv, &kernel, 1.0),
            q.objective(&lv, &kernel, 1.0)
        );
        assert_eq!(
            p.objective(&[0.4, 0.0, 0.2], &kernel, 0.5),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn de_on_separable_function() {
        let f = |x: &[f64]| (x[0] - 1.5).powi(2) + 3.0 * (x[1] + 0.5).powi(2) + 2.0;
        let r = differential_evolution(
            Execution::Parallel,
            f,
            &[(-5.0, 5.0), (-5.0, 5.0)],
            &DeConfig::default(),
        )
        .unwrap();
        assert!((r.cost - 2.0).abs() < 1e-6, "{r:?}");
        let s = differential_evolution(
            Execution::Sequential,
            f,
            &[(-5.0, 5.0), (-5.0, 5.0)],
            &DeConfig::default(),
        )
        .unwrap();
        assert_eq!(r, s);
        let never = differential_evolution(
            Execution::Sequential,
            |_| f64::NAN,
            &[(0.0, 1.0)],
            &DeConfig {
                max_generations: 3,
                ..Default::default()
            },
        );
        assert_eq!(never.unwrap_err().kind(), "estimation");
    }

    #[test]
    fn homogeneous_limit_of_likelihood_term() {
        let data = dataset(&[0.5, 1.0, 4.0, 6.2, 9.9], 10.0);
        let p = MapProblem::new(&data, 1).unwrap();
        let r = differential_evolution(
            Execution::Sequential,
            |x| -p.log_likelihood(x),
            &[(1e-6, 5.0)],
            &DeConfig::default(),
        )
        .unwrap();
        assert!((r.x[0] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn single_event_fit_is_finite() {
        let data = dataset(&[2.0], 5.0);
        let cfg = MapConfig {
            m_range: 1..=2,
            de: DeConfig {
                max_generations: 60,
                ..Default::default()
            },
            ..Default::default()
        };
        let fit = fit_map(
            &data,
            KernelFamily::SquaredExponential,
            &cfg,
            Execution::Parallel,
        )
        .unwrap();
        let p = fit.kernel().params(1);
        assert!(p
            .iter()
            .all(|v| v.is_finite() && *v >= 1e-4 * 0.999 && *v <= 1e4 * 1.001));
        let again = fit_map(
            &data,
            KernelFamily::SquaredExponential,
            &cfg,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(fit, again);
    }

    #[test]
    fn oracle_profile_found() {
        let data = dataset(&[0.7, 1.9, 2.4, 3.3, 4.1], 5.0);
        let truth = |_: &Point| 3.0;
        let cfg = MapConfig::default();
        let (k, best) = fit_oracle_mle(
            truth,
            &data,
            KernelFamily::BrownianMotion,
            &cfg,
            Execution::Parallel,
        )
        .unwrap();
        let target = OracleTarget {
            domain: data.domain,
            points: data.events.clone(),
            values: vec![3.0; 5],
            integral: 15.0,
        };
        let scan = (0..=8000)
            .map(|i| {
                target.log_density(&KernelSpec::BrownianMotion {
                    precision: 10f64.powf(-4.0 + i as f64 * 1e-3),
                })
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best >= scan - 1e-6, "{best} vs {scan}");
        assert!(k.precision().unwrap() > 0.0);
    }

    proptest! {
        #[test]
        fn grid_exactness(m in 1usize..=10, t in 0.1f64..100.0) {
            let g = PiecewiseGrid::new(0.0, t, m).unwrap();
            let total: f64 = g.lengths().iter().sum();
            prop_assert!((total - t).abs() <= 1e-12 * t.max(1.0));
            let d = g.delta();
            for (k, b) in g.breakpoints().iter().enumerate() {
                prop_assert!((b - (2 * k + 1) as f64 * d / 2.0).abs() <= 1e-12 * t.max(1.0));
            }
        }
    }
}
