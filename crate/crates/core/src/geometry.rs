//! Points, axis-aligned boxes and observation domains in one or two
//! dimensions.
//!
//! One-dimensional objects carry their coordinate in axis 0; axis 1 is
//! ignored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location in the observation domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point(pub [f64; 2]);

impl Point {
    pub fn d1(x: f64) -> Self {
        Point([x, 0.0])
    }

    pub fn d2(x: f64, y: f64) -> Self {
        Point([x, y])
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.0[0]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.0[1]
    }

    #[inline]
    pub fn axis(&self, a: usize) -> f64 {
        self.0[a]
    }

    /// Euclidean distance over the first `dim` axes.
    pub fn distance(&self, other: &Point, dim: usize) -> f64 {
        (0..dim)
            .map(|a| (self.0[a] - other.0[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Closed axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub fn interval(a: f64, b: f64) -> Self {
        Rect {
            lo: [a, 0.0],
            hi: [b, 0.0],
        }
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64)) -> Self {
        Rect {
            lo: [x.0, y.0],
            hi: [x.1, y.1],
        }
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn measure(&self, dim: usize) -> f64 {
        (0..dim).map(|a| self.width(a)).product()
    }

    pub fn contains(&self, p: &Point, dim: usize) -> bool {
        (0..dim).all(|a| p.0[a] >= self.lo[a] && p.0[a] <= self.hi[a])
    }

    /// Half-open membership `[lo, hi)` per axis, closed at `hi` where `hi`
    /// coincides with `closed_hi`. Used so adjacent bins never share events.
    pub fn contains_half_open(&self, p: &Point, dim: usize, closed_hi: &[f64; 2]) -> bool {
        (0..dim).all(|a| {
            let v = p.0[a];
            v >= self.lo[a] && (v < self.hi[a] || (self.hi[a] == closed_hi[a] && v <= self.hi[a]))
        })
    }

    pub fn contains_rect(&self, other: &Rect, dim: usize) -> bool {
        (0..dim).all(|a| other.lo[a] >= self.lo[a] && other.hi[a] <= self.hi[a])
    }

    /// Measure of the intersection with `other`.
    pub fn overlap(&self, other: &Rect, dim: usize) -> f64 {
        (0..dim)
            .map(|a| (self.hi[a].min(other.hi[a]) - self.lo[a].max(other.lo[a])).max(0.0))
            .product()
    }

    pub fn translate(&self, by: &[f64; 2]) -> Rect {
        Rect {
            lo: [self.lo[0] + by[0], self.lo[1] + by[1]],
            hi: [self.hi[0] + by[0], self.hi[1] + by[1]],
        }
    }

    pub fn center(&self) -> Point {
        Point([
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
        ])
    }
}

/// A finite union of pairwise-disjoint boxes. Integrals over a region are the
/// sums of the integrals over its boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub parts: Vec<Rect>,
}

impl Region {
    pub fn from_rect(r: Rect) -> Self {
        Region { parts: vec![r] }
    }

    pub fn measure(&self, dim: usize) -> f64 {
        self.parts.iter().map(|r| r.measure(dim)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

/// Observation window: an interval (`dim == 1`) or a rectangle (`dim == 2`).
///
/// `offset` translates raw coordinates before kernel evaluation. Kernels
/// anchored at the origin (Brownian motion and sheet) need every translated
/// coordinate to be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub bounds: Rect,
    pub dim: usize,
    pub offset: [f64; 2],
}

impl Domain {
    /// `[0, T]`.
    pub fn interval(t: f64) -> Result<Self> {
        Self::interval_range(0.0, t)
    }

    pub fn interval_range(a: f64, b: f64) -> Result<Self> {
        if !(b - a > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain(format!(
                "interval [{a}, {b}] must have positive length"
            )));
        }
        Ok(Domain {
            bounds: Rect::interval(a, b),
            dim: 1,
            offset: [0.0; 2],
        })
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64)) -> Result<Self> {
        let ok = |r: (f64, f64)| r.1 - r.0 > 0.0 && r.0.is_finite() && r.1.is_finite();
        if !ok(x) || !ok(y) {
            return Err(Error::Domain(format!(
                "rectangle {x:?} x {y:?} must have positive side lengths"
            )));
        }
        Ok(Domain {
            bounds: Rect::rectangle(x, y),
            dim: 2,
            offset: [0.0; 2],
        })
    }

    pub fn with_offset(mut self, offset: [f64; 2]) -> Self {
        self.offset = offset;
        self
    }

    /// Length of an interval, area of a rectangle.
    pub fn measure(&self) -> f64 {
        self.bounds.measure(self.dim)
    }

    /// Largest side length; scale for duplicate-point separation.
    pub fn length_scale(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.bounds.width(a))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.bounds.contains(p, self.dim)
    }

    pub fn full_rect(&self) -> Rect {
        self.bounds
    }

    pub fn full_region(&self) -> Region {
        Region::from_rect(self.bounds)
    }

    /// Coordinates seen by the kernel.
    #[inline]
    pub fn shift(&self, p: &Point) -> Point {
        Point([p.0[0] + self.offset[0], p.0[1] + self.offset[1]])
    }

    pub fn shift_rect(&self, r: &Rect) -> Rect {
        r.translate(&self.offset)
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "point {:?} lies outside {:?}",
                &p.0[..self.dim],
                self.bounds
            )))
        }
    }

    pub fn check_rect(&self, r: &Rect) -> Result<()> {
        let valid = (0..self.dim).all(|a| r.hi[a] >= r.lo[a]);
        if valid && self.bounds.contains_rect(r, self.dim) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "region {r:?} is not inside {:?}",
                self.bounds
            )))
        }
    }

    /// `n` equispaced cell midpoints per axis (`n^dim` points in total).
    pub fn midpoint_grid(&self, n: usize) -> Vec<Point> {
        let axis = |a: usize| -> Vec<f64> {
            let (lo, w) = (self.bounds.lo[a], self.bounds.width(a));
            (0..n)
                .map(|i| lo + (i as f64 + 0.5) * w / n as f64)
                .collect()
        };
        match self.dim {
            1 => axis(0).into_iter().map(Point::d1).collect(),
            _ => {
                let (xs, ys) = (axis(0), axis(1));
                ys.iter()
                    .flat_map(|&y| xs.iter().map(move |&x| Point::d2(x, y)))
                    .collect()
            }
        }
    }

    /// The part of the domain not covered by `boxes`, as disjoint boxes.
    ///
    /// Built from the cells of the grid induced by all box edges, merging
    /// adjacent uncovered cells along axis 0 in one dimension.
    pub fn complement(&self, boxes: &[Rect]) -> Region {
        let cuts = |a: usize| -> Vec<f64> {
            let mut v = vec![self.bounds.lo[a], self.bounds.hi[a]];
            for b in boxes {
                v.push(b.lo[a].clamp(self.bounds.lo[a], self.bounds.hi[a]));
                v.push(b.hi[a].clamp(self.bounds.lo[a], self.bounds.hi[a]));
            }
            v.sort_by(|x, y| x.partial_cmp(y).unwrap());
            v.dedup();
            v
        };
        let xs = cuts(0);
        let ys = if self.dim == 2 {
            cuts(1)
        } else {
            vec![0.0, 0.0]
        };
        let mut parts: Vec<Rect> = Vec::new();
        for yw in ys.windows(2) {
            let mut run: Option<Rect> = None;
            for xw in xs.windows(2) {
                let cell = Rect {
                    lo: [xw[0], yw[0]],
                    hi: [xw[1], yw[1]],
                };
                let covered = boxes.iter().any(|b| {
                    let c = cell.center();
                    (0..self.dim).all(|a| c.0[a] > b.lo[a] && c.0[a] < b.hi[a])
                });
                if covered || cell.width(0) <= 0.0 {
                    if let Some(r) = run.take() {
                        parts.push(r);
                    }
                    continue;
                }
                run = Some(match run {
                    Some(mut r) if r.hi[0] == cell.lo[0] => {
                        r.hi[0] = cell.hi[0];
                        r
                    }
                    Some(r) => {
                        parts.push(r);
                        cell
                    }
                    None => cell,
                });
            }
            if let Some(r) = run.take() {
                parts.push(r);
            }
        }
        if self.dim == 1 {
            for p in &mut parts {
                p.lo[1] = 0.0;
                p.hi[1] = 0.0;
            }
        }
        Region { parts }
    }
}

/// Error if any two boxes overlap with positive measure.
pub fn check_disjoint(boxes: &[Rect], dim: usize) -> Result<()> {
    for i in 0..boxes.len() {
        for j in (i + 1)..boxes.len() {
            if boxes[i].overlap(&boxes[j], dim) > 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "regions {i} and {j} overlap: {:?} and {:?}",
                    boxes[i], boxes[j]
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_grid_is_interior_and_equispaced() {
        let d = Domain::interval(5.0).unwrap();
        let g = d.midpoint_grid(100);
        assert_eq!(g.len(), 100);
        assert!((g[0].x() - 0.025).abs() < 1e-15);
        assert!((g[99].x() - 4.975).abs() < 1e-12);
    }

    #[test]
    fn complement_of_tail_bins() {
        let d = Domain::interval(10.0).unwrap();
        let bins = [Rect::interval(7.0, 8.0), Rect::interval(8.0, 10.0)];
        let c = d.complement(&bins);
        assert_eq!(c.parts.len(), 1);
        assert_eq!(c.parts[0], Rect::interval(0.0, 7.0));
    }

    #[test]
    fn complement_in_two_dimensions_has_right_measure() {
        let d = Domain::rectangle((0.0, 2.0), (0.0, 2.0)).unwrap();
        let bins = [Rect::rectangle((0.0, 1.0), (0.0, 1.0))];
        let c = d.complement(&bins);
        assert!((c.measure(2) - 3.0).abs() < 1e-14);
        for p in &c.parts {
            assert_eq!(p.overlap(&bins[0], 2), 0.0);
        }
    }

    #[test]
    fn overlapping_boxes_rejected() {
        let b = [Rect::interval(0.0, 2.0), Rect::interval(1.0, 3.0)];
        assert!(check_disjoint(&b, 1).is_err());
        let b = [Rect::interval(0.0, 1.0), Rect::interval(1.0, 3.0)];
        assert!(check_disjoint(&b, 1).is_ok());
    }

    #[test]
    fn empty_domain_rejected() {
        assert!(Domain::interval(0.0).is_err());
        assert!(Domain::rectangle((0.0, 1.0), (2.0, 2.0)).is_err());
    }
}
