//! Datasets, the augmented latent state, likelihoods and the Gaussian
//! log-prior.
//!
//! The state vector is laid out as `[grid values | observed values |
//! integrals]`. In pure-event mode the integral block is the single slot
//! `Λ(S)`. In mixed mode it holds one slot per count bin followed by the slot
//! for the event region `B₀` (the part of the domain outside every bin), so
//! that `Λ(S)` is the sum of the integral block.

use std::ops::Range;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{check_disjoint, Domain, Point, Rect, Region};
use crate::gmrf::BmPrecisionBundle;
use crate::kernels::AugmentedCovariance;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A region with an aggregated event count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub region: Rect,
    pub count: u64,
}

/// Observed events, optional binned counts and the prediction grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub domain: Domain,
    pub events: Vec<Point>,
    pub bins: Vec<Bin>,
    pub grid: Vec<Point>,
}

impl Dataset {
    /// Validate and assemble a dataset.
    pub fn new(
        domain: Domain,
        events: Vec<Point>,
        bins: Vec<Bin>,
        grid: Vec<Point>,
    ) -> Result<Self> {
        if events.is_empty() && bins.is_empty() {
            return Err(Error::InvalidArgument(
                "a dataset needs at least one event or one bin".into(),
            ));
        }
        for p in events.iter().chain(grid.iter()) {
            domain.check_point(p)?;
        }
        for b in &bins {
            domain.check_rect(&b.region)?;
            if b.region.measure(domain.dim) <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "bin {:?} has zero measure",
                    b.region
                )));
            }
        }
        let rects: Vec<Rect> = bins.iter().map(|b| b.region).collect();
        check_disjoint(&rects, domain.dim)?;
        for (n, p) in events.iter().enumerate() {
            if let Some(j) = rects.iter().position(|r| interior(r, p, domain.dim)) {
                return Err(Error::InvalidArgument(format!(
                    "event {n} at {:?} lies inside count bin {j}",
                    &p.0[..domain.dim]
                )));
            }
        }
        let data = Dataset {
            domain,
            events,
            bins,
            grid,
        };
        if !data.layout().has_rest && !data.events.is_empty() {
            return Err(Error::InvalidArgument(
                "bins cover the whole domain but events were also given".into(),
            ));
        }
        Ok(data)
    }

    /// Event-only dataset.
    pub fn events_only(domain: Domain, events: Vec<Point>, grid: Vec<Point>) -> Result<Self> {
        Self::new(domain, events, Vec::new(), grid)
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn is_mixed(&self) -> bool {
        !self.bins.is_empty()
    }

    /// Events plus all binned counts.
    pub fn total_count(&self) -> u64 {
        self.events.len() as u64 + self.bins.iter().map(|b| b.count).sum::<u64>()
    }

    /// The part of the domain outside every bin.
    pub fn rest_region(&self) -> Region {
        if self.bins.is_empty() {
            return self.domain.full_region();
        }
        let rects: Vec<Rect> = self.bins.iter().map(|b| b.region).collect();
        self.domain.complement(&rects)
    }

    pub fn layout(&self) -> Layout {
        let has_rest = self.bins.is_empty() || self.rest_region().measure(self.domain.dim) > 0.0;
        Layout {
            n_grid: self.grid.len(),
            n_obs: self.events.len(),
            n_bins: self.bins.len(),
            has_rest,
        }
    }

    /// Pointwise locations in state order: grid, then events.
    pub fn points(&self) -> Vec<Point> {
        self.grid
            .iter()
            .chain(self.events.iter())
            .copied()
            .collect()
    }

    /// Integration regions in state order.
    pub fn regions(&self) -> Vec<Region> {
        let mut out: Vec<Region> = self
            .bins
            .iter()
            .map(|b| Region::from_rect(b.region))
            .collect();
        if self.layout().has_rest {
            out.push(self.rest_region());
        }
        out
    }

    /// Homogeneous starting state: every value at `K/|S|` and every integral
    /// at `K·|region|/|S|`, with `K` the total count (events and bins).
    pub fn initial_state(&self) -> AugmentedState {
        let layout = self.layout();
        let area = self.domain.measure();
        let rate = self.total_count().max(1) as f64 / area;
        let mut data = DVector::from_element(layout.dim(), rate);
        for (k, r) in self.regions().iter().enumerate() {
            data[layout.n_values() + k] = rate * r.measure(self.domain.dim);
        }
        AugmentedState::new(data, layout.n_values())
    }
}

fn interior(r: &Rect, p: &Point, dim: usize) -> bool {
    (0..dim).all(|a| p.0[a] > r.lo[a] && p.0[a] < r.hi[a])
}

/// Index map of the state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n_grid: usize,
    pub n_obs: usize,
    pub n_bins: usize,
    /// Whether the event region `B₀` (the whole domain without bins) has a slot.
    pub has_rest: bool,
}

impl Layout {
    /// Pure-event layout.
    pub fn events(n_grid: usize, n_obs: usize) -> Self {
        Layout {
            n_grid,
            n_obs,
            n_bins: 0,
            has_rest: true,
        }
    }

    pub fn n_values(&self) -> usize {
        self.n_grid + self.n_obs
    }

    pub fn n_integrals(&self) -> usize {
        self.n_bins + usize::from(self.has_rest)
    }

    pub fn dim(&self) -> usize {
        self.n_values() + self.n_integrals()
    }

    pub fn grid(&self) -> Range<usize> {
        0..self.n_grid
    }

    pub fn obs(&self) -> Range<usize> {
        self.n_grid..self.n_values()
    }

    pub fn bins(&self) -> Range<usize> {
        self.n_values()..self.n_values() + self.n_bins
    }

    pub fn rest(&self) -> Option<usize> {
        self.has_rest.then(|| self.n_values() + self.n_bins)
    }

    pub fn integrals(&self) -> Range<usize> {
        self.n_values()..self.dim()
    }
}

/// `[λ(x_1), …, λ(x_M), integrals…]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub data: DVector<f64>,
    n_values: usize,
}

impl AugmentedState {
    pub fn new(data: DVector<f64>, n_values: usize) -> Self {
        assert!(n_values <= data.len(), "more values than state entries");
        AugmentedState { data, n_values }
    }

    pub fn from_parts(values: &[f64], integrals: &[f64]) -> Self {
        let data = DVector::from_iterator(
            values.len() + integrals.len(),
            values.iter().chain(integrals).copied(),
        );
        AugmentedState::new(data, values.len())
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn n_values(&self) -> usize {
        self.n_values
    }

    pub fn values(&self) -> &[f64] {
        &self.data.as_slice()[..self.n_values]
    }

    pub fn integrals(&self) -> &[f64] {
        &self.data.as_slice()[self.n_values..]
    }

    /// `Λ(S)`: the sum of the integral block.
    pub fn total_integral(&self) -> f64 {
        self.integrals().iter().sum()
    }

    pub fn is_positive(&self) -> bool {
        self.data.iter().all(|&v| v > 0.0)
    }
}

/// Conjugate Gamma prior on the Brownian precision (shape, rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        GammaPrior {
            alpha: 0.1,
            beta: 0.1,
        }
    }
}

impl GammaPrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Gamma prior needs positive shape and rate, got ({alpha}, {beta})"
            )));
        }
        Ok(GammaPrior { alpha, beta })
    }

    /// Posterior (shape, rate) given `dim` Gaussian coordinates with
    /// unit-precision quadratic form `quad`.
    pub fn posterior(&self, dim: usize, quad: f64) -> (f64, f64) {
        (self.alpha + 0.5 * dim as f64, self.beta + 0.5 * quad)
    }
}

/// `Σₙ ln λ(sₙ) − Λ(S)`; `−∞` off the positive orthant of its arguments.
pub fn event_log_likelihood(observed: &[f64], total: f64) -> f64 {
    if !(total > 0.0) || observed.iter().any(|&v| !(v > 0.0)) {
        return f64::NEG_INFINITY;
    }
    let mut ll: f64 = observed.iter().map(|v| v.ln()).sum();
    ll -= total;
    ll
}

/// `Σₙ ln λ(sₙ) + Σⱼ cⱼ ln Λ(Bⱼ) − Λ(S)` with `Λ(S)` the sum of the bin
/// integrals and the event-region integral (if present).
pub fn mixed_log_likelihood(
    observed: &[f64],
    bin_integrals: &[f64],
    counts: &[f64],
    rest: Option<f64>,
) -> f64 {
    let positive = |v: &f64| *v > 0.0;
    if !observed.iter().all(positive)
        || !bin_integrals.iter().all(positive)
        || !rest.iter().all(positive)
    {
        return f64::NEG_INFINITY;
    }
    let mut ll: f64 = observed.iter().map(|v| v.ln()).sum();
    for (c, v) in counts.iter().zip(bin_integrals) {
        ll += c * v.ln();
    }
    let total: f64 = bin_integrals.iter().chain(rest.iter()).sum();
    ll -= total;
    ll
}

/// Log-likelihood of a state for a dataset. Any nonpositive component of the
/// state (the truncation indicators) gives `−∞`.
pub fn log_likelihood(state: &AugmentedState, data: &Dataset) -> Result<f64> {
    let lik = Likelihood::new(data);
    check_dim(lik.layout.dim(), state.dim())?;
    Ok(lik.eval(state.data.as_slice()))
}

/// Precomputed likelihood terms for repeated evaluation on raw state slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Likelihood {
    pub layout: Layout,
    counts: Vec<f64>,
}

impl Likelihood {
    pub fn new(data: &Dataset) -> Self {
        Likelihood {
            layout: data.layout(),
            counts: data.bins.iter().map(|b| b.count as f64).collect(),
        }
    }

    pub fn from_layout(layout: Layout, counts: Vec<f64>) -> Self {
        assert_eq!(layout.n_bins, counts.len(), "one count per bin");
        Likelihood { layout, counts }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let l = &self.layout;
        if x[l.grid()].iter().any(|&v| !(v > 0.0)) {
            return f64::NEG_INFINITY;
        }
        let obs = &x[l.obs()];
        if l.n_bins == 0 {
            match l.rest() {
                Some(k) => event_log_likelihood(obs, x[k]),
                None => f64::NEG_INFINITY,
            }
        } else {
            mixed_log_likelihood(obs, &x[l.bins()], &self.counts, l.rest().map(|k| x[k]))
        }
    }

    /// Gradient of [`Likelihood::eval`] on the positive orthant.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let l = &self.layout;
        out[l.grid()].iter_mut().for_each(|g| *g = 0.0);
        for i in l.obs() {
            out[i] = 1.0 / x[i];
        }
        for (k, i) in l.bins().enumerate() {
            out[i] = self.counts[k] / x[i] - 1.0;
        }
        if let Some(k) = l.rest() {
            out[k] = -1.0;
        }
    }
}

/// A zero-mean Gaussian prior over the augmented state.
pub trait GaussianPrior: Sync {
    fn dim(&self) -> usize;
    /// `V⁻¹ x`.
    fn precision_mul(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `log det V`.
    fn log_det_cov(&self) -> f64;
    /// `xᵀ V⁻¹ x`.
    fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.precision_mul(x))
    }
}

impl GaussianPrior for AugmentedCovariance {
    fn dim(&self) -> usize {
        AugmentedCovariance::dim(self)
    }

    fn precision_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        self.solve(x)
    }

    fn log_det_cov(&self) -> f64 {
        self.log_det()
    }

    fn quad_form(&self, x: &DVector<f64>) -> f64 {
        AugmentedCovariance::quad_form(self, x)
    }
}

/// Brownian prior `N(0, C̃/θ)`, i.e. precision `θ (Q̃ + εI)`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledBmPrior<'a> {
    pub bundle: &'a BmPrecisionBundle,
    pub theta: f64,
}

impl GaussianPrior for ScaledBmPrior<'_> {
    fn dim(&self) -> usize {
        self.bundle.dim()
    }

    fn precision_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        self.bundle.precision_mul(x) * self.theta
    }

    fn log_det_cov(&self) -> f64 {
        -(self.bundle.dim() as f64 * self.theta.ln() + self.bundle.log_det_precision())
    }

    fn quad_form(&self, x: &DVector<f64>) -> f64 {
        let q = self.bundle.q_tilde();
        self.theta * (x.dot(&(q * x)) + self.bundle.epsilon() * x.norm_squared())
    }
}

/// Untruncated Gaussian log-density; the orthant normalizer of the
/// truncated prior is omitted.
pub fn log_prior<P: GaussianPrior + ?Sized>(state: &AugmentedState, prior: &P) -> Result<f64> {
    check_dim(prior.dim(), state.dim())?;
    Ok(gaussian_log_density(&state.data, prior))
}

pub(crate) fn gaussian_log_density<P: GaussianPrior + ?Sized>(x: &DVector<f64>, prior: &P) -> f64 {
    -0.5 * (prior.quad_form(x) + prior.log_det_cov() + x.len() as f64 * LN_2PI)
}

/// Unnormalized log-posterior and its gradient at a strictly positive state.
pub fn log_posterior_and_gradient<P: GaussianPrior + ?Sized>(
    state: &AugmentedState,
    lik: &Likelihood,
    prior: &P,
) -> Result<(f64, DVector<f64>)> {
    check_dim(lik.dim(), state.dim())?;
    check_dim(prior.dim(), state.dim())?;
    if let Some((index, &value)) = state.data.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::GradientUndefined { index, value });
    }
    let x = &state.data;
    let prec_x = prior.precision_mul(x);
    let value = lik.eval(x.as_slice())
        - 0.5 * (x.dot(&prec_x) + prior.log_det_cov() + x.len() as f64 * LN_2PI);
    let mut grad = DVector::zeros(x.len());
    lik.gradient(x.as_slice(), grad.as_mut_slice());
    grad -= prec_x;
    Ok((value, grad))
}
