//! Ground-truth intensities, Poisson simulation by thinning, and binning of
//! events into counts.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_disjoint, Domain, Point, Rect};
use crate::model::Bin;

/// Resolution of the grid scan bounding smooth intensities.
const SCAN_STEP: f64 = 1e-3;
/// Relative safety margin on a scanned bound.
const SCAN_MARGIN: f64 = 0.01;

/// Shape of an intensity function. One-dimensional kinds act on axis 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensityKind {
    /// `2 exp(−s/15) + exp(−((s − 25)/10)²)`.
    Lambda1,
    /// The constant 10.
    Lambda2,
    Constant {
        rate: f64,
    },
    /// Linear interpolation through `(grid, values)`, flat outside the grid.
    Table {
        grid: Vec<f64>,
        values: Vec<f64>,
    },
    /// `rates[i]` on `[edges[i], edges[i+1])`.
    Piecewise {
        edges: Vec<f64>,
        rates: Vec<f64>,
    },
    /// `f(x)·g(y)` from two one-dimensional kinds.
    Product2d {
        x: Box<IntensityKind>,
        y: Box<IntensityKind>,
    },
}

impl IntensityKind {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            IntensityKind::Constant { rate } if !(*rate >= 0.0 && rate.is_finite()) => bad(
                format!("constant rate must be finite and nonnegative, got {rate}"),
            ),
            IntensityKind::Table { grid, values } => {
                if grid.is_empty() || grid.len() != values.len() {
                    return bad("table needs matching, nonempty grid and values".into());
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("table grid must be strictly increasing".into());
                }
                if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return bad("table values must be finite and nonnegative".into());
                }
                Ok(())
            }
            IntensityKind::Piecewise { edges, rates } => {
                if rates.is_empty() || edges.len() != rates.len() + 1 {
                    return bad("piecewise intensity needs one more edge than rates".into());
                }
                if edges.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("piecewise edges must be strictly increasing".into());
                }
                if rates.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return bad("piecewise rates must be finite and nonnegative".into());
                }
                Ok(())
            }
            IntensityKind::Product2d { x, y } => {
                if matches!(**x, IntensityKind::Product2d { .. })
                    || matches!(**y, IntensityKind::Product2d { .. })
                {
                    return bad("product factors must be one-dimensional".into());
                }
                x.validate()?;
                y.validate()
            }
            _ => Ok(()),
        }
    }

    fn eval1(&self, s: f64) -> f64 {
        match self {
            IntensityKind::Lambda1 => {
                2.0 * (-s / 15.0).exp() + (-((s - 25.0) / 10.0).powi(2)).exp()
            }
            IntensityKind::Lambda2 => 10.0,
            IntensityKind::Constant { rate } => *rate,
            IntensityKind::Table { grid, values } => {
                let k = grid.partition_point(|&g| g <= s);
                if k == 0 {
                    values[0]
                } else if k == grid.len() {
                    values[k - 1]
                } else {
                    let t = (s - grid[k - 1]) / (grid[k] - grid[k - 1]);
                    values[k - 1] + t * (values[k] - values[k - 1])
                }
            }
            IntensityKind::Piecewise { edges, rates } => {
                let k = edges.partition_point(|&e| e <= s);
                if k == 0 {
                    rates[0]
                } else {
                    rates[(k - 1).min(rates.len() - 1)]
                }
            }
            IntensityKind::Product2d { .. } => unreachable!("two-dimensional kind"),
        }
    }

    fn sup1(&self, lo: f64, hi: f64) -> f64 {
        match self {
            IntensityKind::Lambda1 => {
                let n = ((hi - lo) / SCAN_STEP).ceil() as usize;
                let m = (0..=n)
                    .map(|i| self.eval1((lo + i as f64 * SCAN_STEP).min(hi)))
                    .fold(0.0, f64::max);
                m * (1.0 + SCAN_MARGIN)
            }
            IntensityKind::Table { grid, values } => {
                let mut m = self.eval1(lo).max(self.eval1(hi));
                for (g, v) in grid.iter().zip(values) {
                    if *g >= lo && *g <= hi {
                        m = m.max(*v);
                    }
                }
                m
            }
            IntensityKind::Piecewise { edges, rates } => {
                let mut m = self.eval1(lo);
                for (i, r) in rates.iter().enumerate() {
                    if edges[i] < hi && edges[i + 1] > lo {
                        m = m.max(*r);
                    }
                }
                m
            }
            _ => self.eval1(lo),
        }
    }

    fn int1(&self, lo: f64, hi: f64) -> f64 {
        match self {
            IntensityKind::Lambda1 => {
                30.0 * ((-lo / 15.0).exp() - (-hi / 15.0).exp())
                    + 5.0
                        * PI.sqrt()
                        * (libm::erf((hi - 25.0) / 10.0) - libm::erf((lo - 25.0) / 10.0))
            }
            IntensityKind::Table { grid, .. } => {
                let mut knots = vec![lo];
                knots.extend(grid.iter().copied().filter(|g| *g > lo && *g < hi));
                knots.push(hi);
                knots
                    .windows(2)
                    .map(|w| 0.5 * (w[1] - w[0]) * (self.eval1(w[0]) + self.eval1(w[1])))
                    .sum()
            }
            IntensityKind::Piecewise { edges, rates } => {
                let n = rates.len();
                let mut total = 0.0;
                for i in 0..n {
                    let a = if i == 0 { f64::NEG_INFINITY } else { edges[i] };
                    let b = if i == n - 1 {
                        f64::INFINITY
                    } else {
                        edges[i + 1]
                    };
                    let w = (hi.min(b) - lo.max(a)).max(0.0);
                    total += rates[i] * w;
                }
                total
            }
            _ => self.eval1(lo) * (hi - lo),
        }
    }
}

/// A nonnegative ground-truth intensity on a domain, times `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensitySpec {
    #[serde(flatten)]
    pub kind: IntensityKind,
    #[serde(default = "unit_scale")]
    pub scale: f64,
    pub domain: Domain,
}

fn unit_scale() -> f64 {
    1.0
}

impl IntensitySpec {
    pub fn new(kind: IntensityKind, scale: f64, domain: Domain) -> Result<Self> {
        kind.validate()?;
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale must be finite and nonnegative, got {scale}"
            )));
        }
        let two_d = matches!(kind, IntensityKind::Product2d { .. });
        if two_d != (domain.dim == 2) {
            return Err(Error::InvalidArgument(
                "two-dimensional intensities need a rectangle and vice versa".into(),
            ));
        }
        Ok(IntensitySpec {
            kind,
            scale,
            domain,
        })
    }

    /// `λ₁` on `[0, 50]`.
    pub fn lambda1() -> Self {
        Self::new(
            IntensityKind::Lambda1,
            1.0,
            Domain::interval(50.0).expect("valid"),
        )
        .expect("valid")
    }

    /// `λ₂ = 10` on `[0, 5]`.
    pub fn lambda2() -> Self {
        Self::new(
            IntensityKind::Lambda2,
            1.0,
            Domain::interval(5.0).expect("valid"),
        )
        .expect("valid")
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    fn raw(&self, p: &Point) -> f64 {
        match &self.kind {
            IntensityKind::Product2d { x, y } => x.eval1(p.x()) * y.eval1(p.y()),
            k => k.eval1(p.x()),
        }
    }

    pub fn eval(&self, p: &Point) -> Result<f64> {
        self.domain.check_point(p)?;
        Ok(self.scale * self.raw(p))
    }

    pub fn eval_many(&self, points: &[Point]) -> Result<Vec<f64>> {
        points.iter().map(|p| self.eval(p)).collect()
    }

    /// Upper bound on the domain used for thinning.
    pub fn upper_bound(&self) -> f64 {
        let b = &self.domain.bounds;
        let raw = match &self.kind {
            IntensityKind::Product2d { x, y } => {
                x.sup1(b.lo[0], b.hi[0]) * y.sup1(b.lo[1], b.hi[1])
            }
            k => k.sup1(b.lo[0], b.hi[0]),
        };
        self.scale * raw
    }

    /// Integral over a box inside the domain.
    pub fn integral_over(&self, r: &Rect) -> f64 {
        let raw = match &self.kind {
            IntensityKind::Product2d { x, y } => {
                x.int1(r.lo[0], r.hi[0]) * y.int1(r.lo[1], r.hi[1])
            }
            k => k.int1(r.lo[0], r.hi[0]),
        };
        self.scale * raw
    }

    /// Expected event count on the whole domain.
    pub fn integral(&self) -> f64 {
        self.integral_over(&self.domain.bounds)
    }
}

fn uniform_point<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> Point {
    let b = &domain.bounds;
    let mut p = [0.0; 2];
    for (a, v) in p.iter_mut().enumerate().take(domain.dim) {
        *v = b.lo[a] + rng.random::<f64>() * b.width(a);
    }
    Point(p)
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

fn sort_1d(domain: &Domain, events: &mut [Point]) {
    if domain.dim == 1 {
        events.sort_by(|a, b| a.x().total_cmp(&b.x()));
    }
}

/// Homogeneous Poisson process with the given rate.
pub fn simulate_homogeneous<R: Rng + ?Sized>(
    rate: f64,
    domain: &Domain,
    rng: &mut R,
) -> Vec<Point> {
    let n = poisson(rate * domain.measure(), rng);
    let mut events: Vec<Point> = (0..n).map(|_| uniform_point(domain, rng)).collect();
    sort_1d(domain, &mut events);
    events
}

/// Lewis–Shedler thinning: candidates at rate `λ_max`, each kept with
/// probability `λ(s)/λ_max`. One-dimensional output is sorted.
pub fn simulate_thinning<R: Rng + ?Sized>(spec: &IntensitySpec, rng: &mut R) -> Vec<Point> {
    let bound = spec.upper_bound();
    if !(bound > 0.0) {
        return Vec::new();
    }
    let n = poisson(bound * spec.domain.measure(), rng);
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        let p = uniform_point(&spec.domain, rng);
        let keep = spec.scale * spec.raw(&p) / bound;
        if rng.random::<f64>() < keep {
            events.push(p);
        }
    }
    sort_1d(&spec.domain, &mut events);
    events
}

/// Events left outside every bin, and per-bin counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCounts {
    pub events: Vec<Point>,
    pub bins: Vec<Bin>,
}

impl BinnedCounts {
    pub fn total(&self) -> u64 {
        self.events.len() as u64 + self.bins.iter().map(|b| b.count).sum::<u64>()
    }
}

/// Count events per bin with half-open membership `[lo, hi)` (closed at the
/// domain's upper edge). Events outside all bins pass through unchanged.
pub fn bin_events(events: &[Point], bins: &[Rect], domain: &Domain) -> Result<BinnedCounts> {
    check_disjoint(bins, domain.dim)?;
    for b in bins {
        domain.check_rect(b)?;
    }
    let mut counts = vec![0u64; bins.len()];
    let mut kept = Vec::new();
    for p in events {
        match bins
            .iter()
            .position(|b| b.contains_half_open(p, domain.dim, &domain.bounds.hi))
        {
            Some(j) => counts[j] += 1,
            None => kept.push(*p),
        }
    }
    Ok(BinnedCounts {
        events: kept,
        bins: bins
            .iter()
            .zip(counts)
            .map(|(r, c)| Bin {
                region: *r,
                count: c,
            })
            .collect(),
    })
}

/// Consecutive bins of `width` from `start` to the end of an interval domain;
/// the last bin is truncated at the domain end.
pub fn tail_bins(domain: &Domain, start: f64, width: f64) -> Result<Vec<Rect>> {
    if domain.dim != 1 {
        return Err(Error::InvalidArgument(
            "tail binning needs an interval domain".into(),
        ));
    }
    let (lo, hi) = (domain.bounds.lo[0], domain.bounds.hi[0]);
    if !(width > 0.0) || !(start >= lo && start < hi) {
        return Err(Error::InvalidArgument(format!(
            "tail bins need width > 0 and a start inside [{lo}, {hi}), got start {start}, width {width}"
        )));
    }
    let mut out = Vec::new();
    let mut a = start;
    while a < hi {
        let b = (a + width).min(hi);
        // fold a sliver below 1e-9 of the width into the previous bin
        if b - a < 1e-9 * width {
            if let Some(last) = out.last_mut() {
                let r: &mut Rect = last;
                r.hi[0] = hi;
            }
            break;
        }
        out.push(Rect::interval(a, b));
        a = b;
    }
    Ok(out)
}

/// Bin the tail `[start, end]` of one-dimensional events into fixed-width bins.
pub fn bin_tail(events: &[Point], domain: &Domain, start: f64, width: f64) -> Result<BinnedCounts> {
    bin_events(events, &tail_bins(domain, start, width)?, domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_values() {
        let l1 = IntensitySpec::lambda1();
        assert_relative_eq!(
            l1.eval(&Point::d1(25.0)).unwrap(),
            2.0 * (-5.0f64 / 3.0).exp() + 1.0
        );
        assert_relative_eq!(
            l1.eval(&Point::d1(25.0)).unwrap(),
            1.377_751_205_675_123_5,
            max_relative = 1e-14
        );
        assert!((l1.integral() - 46.65).abs() < 0.005);
        assert_relative_eq!(l1.integral(), 46.647_105_671_933_05, max_relative = 1e-13);
        assert!(l1.eval(&Point::d1(51.0)).is_err());
        let l2 = IntensitySpec::lambda2();
        assert_eq!(l2.eval(&Point::d1(3.3)).unwrap(), 10.0);
        assert_eq!(l2.integral(), 50.0);
    }

    #[test]
    fn lambda1_bound_covers_scan() {
        let l1 = IntensitySpec::lambda1();
        let b = l1.upper_bound();
        for i in 0..=50_000 {
            assert!(l1.raw(&Point::d1(i as f64 * 1e-3)) <= b);
        }
        assert!(b <= 2.0 * 1.02);
    }

    #[test]
    fn table_and_piecewise_integrals() {
        let d = Domain::interval(4.0).unwrap();
        let t = IntensitySpec::new(
            IntensityKind::Table {
                grid: vec![1.0, 3.0],
                values: vec![2.0, 4.0],
            },
            1.0,
            d,
        )
        .unwrap();
        // flat 2 on [0,1], ramp 2→4 on [1,3], flat 4 on [3,4]
        assert_relative_eq!(t.integral(), 2.0 + 6.0 + 4.0, max_relative = 1e-14);
        assert_relative_eq!(t.eval(&Point::d1(2.0)).unwrap(), 3.0);
        assert_eq!(t.upper_bound(), 4.0);
        let p = IntensitySpec::new(
            IntensityKind::Piecewise {
                edges: vec![0.0, 1.0, 4.0],
                rates: vec![5.0, 1.0],
            },
            2.0,
            d,
        )
        .unwrap();
        assert_relative_eq!(p.integral(), 2.0 * (5.0 + 3.0), max_relative = 1e-14);
        assert_eq!(p.upper_bound(), 10.0);
        assert_eq!(p.eval(&Point::d1(1.0)).unwrap(), 2.0);
    }

    #[test]
    fn product_intensity() {
        let d = Domain::rectangle((0.0, 2.0), (0.0, 1.0)).unwrap();
        let s = IntensitySpec::new(
            IntensityKind::Product2d {
                x: Box::new(IntensityKind::Constant { rate: 3.0 }),
                y: Box::new(IntensityKind::Table {
                    grid: vec![0.0, 1.0],
                    values: vec![0.0, 2.0],
                }),
            },
            1.0,
            d,
        )
        .unwrap();
        assert_relative_eq!(s.integral(), 3.0 * 2.0 * 1.0, max_relative = 1e-14);
        assert_eq!(s.upper_bound(), 6.0);
        assert!(IntensitySpec::new(IntensityKind::Lambda2, 1.0, d).is_err());
    }

    #[test]
    fn constant_mean_count() {
        let spec = IntensitySpec::new(
            IntensityKind::Constant { rate: 10.0 },
            1.0,
            Domain::interval(5.0).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let runs = 2000;
        let total: usize = (0..runs)
            .map(|_| simulate_thinning(&spec, &mut rng).len())
            .sum();
        let mean = total as f64 / runs as f64;
        assert!(
            (mean - 50.0).abs() < 3.0 * (50.0f64 / runs as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn zero_intensity_is_empty() {
        let spec = IntensitySpec::new(
            IntensityKind::Constant { rate: 0.0 },
            1.0,
            Domain::interval(5.0).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(simulate_thinning(&spec, &mut rng).is_empty());
        }
    }

    #[test]
    fn thinning_matches_piecewise_means() {
        let d = Domain::interval(3.0).unwrap();
        let rates = [4.0, 0.5, 9.0];
        let spec = IntensitySpec::new(
            IntensityKind::Piecewise {
                edges: vec![0.0, 1.0, 2.0, 3.0],
                rates: rates.to_vec(),
            },
            1.0,
            d,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let runs = 5000;
        let mut counts = [0usize; 3];
        for _ in 0..runs {
            for p in simulate_thinning(&spec, &mut rng) {
                counts[(p.x() as usize).min(2)] += 1;
            }
        }
        for i in 0..3 {
            let mean = counts[i] as f64 / runs as f64;
            assert!(
                (mean - rates[i]).abs() < 3.0 * (rates[i] / runs as f64).sqrt(),
                "{i}: {mean}"
            );
        }
    }

    #[test]
    fn sorted_and_deterministic() {
        let spec = IntensitySpec::lambda1();
        let a = simulate_thinning(&spec, &mut ChaCha8Rng::seed_from_u64(8));
        let b = simulate_thinning(&spec, &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].x() <= w[1].x()));
    }

    #[test]
    fn binning_examples() {
        let d = Domain::interval(2.0).unwrap();
        let ev = [0.5, 1.5, 1.6].map(Point::d1);
        let b = bin_events(&ev, &[Rect::interval(1.0, 2.0)], &d).unwrap();
        assert_eq!(b.events, vec![Point::d1(0.5)]);
        assert_eq!(b.bins[0].count, 2);
        let e = bin_events(&ev, &[Rect::interval(0.6, 0.9)], &d).unwrap();
        assert_eq!(e.bins[0].count, 0);
        assert!(bin_events(
            &ev,
            &[Rect::interval(0.0, 1.0), Rect::interval(0.5, 2.0)],
            &d
        )
        .is_err());
        // a point at the domain end falls in the last bin
        let end = bin_events(&[Point::d1(2.0)], &[Rect::interval(1.0, 2.0)], &d).unwrap();
        assert_eq!(end.bins[0].count, 1);
    }

    #[test]
    fn tail_bins_cover_the_tail() {
        let d = Domain::interval(100.0).unwrap();
        let bins = tail_bins(&d, 16.0, 7.0).unwrap();
        assert_eq!(bins.len(), 12);
        assert_eq!(bins[0], Rect::interval(16.0, 23.0));
        assert_eq!(bins.last().unwrap().hi[0], 100.0);
        assert!(tail_bins(&d, 100.0, 7.0).is_err());
    }

    proptest! {
        #[test]
        fn binning_conserves_events(seed in 0u64..1000, cut in 0.1f64..4.9, w in 0.05f64..3.0) {
            let d = Domain::interval(5.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ev = simulate_homogeneous(8.0, &d, &mut rng);
            let b = bin_tail(&ev, &d, cut, w).unwrap();
            prop_assert_eq!(b.total(), ev.len() as u64);
            let recount = ev.iter().filter(|p| p.x() >= cut).count() as u64;
            prop_assert_eq!(b.bins.iter().map(|b| b.count).sum::<u64>(), recount);
        }

        #[test]
        fn table_integral_matches_trapezoid_refinement(v in proptest::collection::vec(0.0f64..5.0, 3)) {
            let d = Domain::interval(2.0).unwrap();
            let t = IntensitySpec::new(IntensityKind::Table { grid: vec![0.0, 0.7, 2.0], values: v }, 1.0, d).unwrap();
            let n = 2000;
            let h = 2.0 / n as f64;
            let fine: f64 = (0..n).map(|i| 0.5 * h * (t.raw(&Point::d1(i as f64 * h)) + t.raw(&Point::d1((i + 1) as f64 * h)))).sum();
            prop_assert!((fine - t.integral()).abs() < 1e-6);
        }
    }
}
