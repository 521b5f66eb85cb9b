//! MCMC for the augmented state: elliptical slice sampling and NUTS for
//! `λ | θ`, the conjugate Gamma update for the Brownian precision, and the
//! Metropolis-within-Gibbs driver.
//!
//! Brownian priors `N(0, C̃/θ)` have one very long axis: the level direction
//! `l`, an eigenvector of `Q̃ + εI` with eigenvalue `ε`. The driver splits the
//! state into its coordinate `a` along `l̂ = l/|l|` and the orthogonal part
//! `w`, which are independent under the prior. `w` is updated by ESS (or
//! NUTS) with `a` fixed, then `a` by a one-dimensional ESS with `w` fixed.

mod ess;
mod gibbs;
mod nuts;

pub use ess::{ess_step, ess_step_chol, EssMove};
pub use gibbs::{gibbs_theta, theta_conditional};
pub use nuts::{
    find_reasonable_step, leapfrog, nuts_step, DualAveraging, GradientTarget, NutsInfo,
    MAX_DELTA_ENERGY,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmrf::{BmPrecisionBundle, DEFAULT_EPSILON};
use crate::kernels::{build_augmented_covariance, KernelSpec};
use crate::model::{Dataset, GammaPrior, Layout, Likelihood};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    #[default]
    Ess,
    Nuts,
}

/// Starting state of a chain.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitRule {
    /// Values at the homogeneous rate, integrals proportional to measure.
    #[default]
    Homogeneous,
    /// An explicit state vector in layout order.
    State(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_burnin: usize,
    /// Post-burn-in iterations; every `thin`-th one is retained.
    pub n_samples: usize,
    pub thin: usize,
    pub sampler: SamplerKind,
    pub seed: u64,
    /// RNG stream, so chains sharing a seed stay independent.
    pub stream: u64,
    pub init: InitRule,
    pub nuts_target_accept: f64,
    pub nuts_max_depth: usize,
    /// Ridge `ε` of the Brownian precision.
    pub epsilon: f64,
    pub gamma_prior: GammaPrior,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_burnin: 10_000,
            n_samples: 50_000,
            thin: 1,
            sampler: SamplerKind::Ess,
            seed: 0,
            stream: 0,
            init: InitRule::Homogeneous,
            nuts_target_accept: 0.8,
            nuts_max_depth: 10,
            epsilon: DEFAULT_EPSILON,
            gamma_prior: GammaPrior::default(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        if !(self.nuts_target_accept > 0.0 && self.nuts_target_accept < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "NUTS target acceptance must lie in (0, 1), got {}",
                self.nuts_target_accept
            )));
        }
        if self.nuts_max_depth == 0 {
            return Err(Error::InvalidArgument(
                "NUTS max depth must be at least 1".into(),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        GammaPrior::new(self.gamma_prior.alpha, self.gamma_prior.beta)?;
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    pub fn n_retained(&self) -> usize {
        self.n_samples / self.thin.max(1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub loglik_evals: u64,
    /// Bracket shrinks of the main ESS update.
    pub ess_shrinks: u64,
    /// Bracket shrinks of the level update (Brownian kernels).
    pub level_shrinks: u64,
    pub nuts_divergences: u64,
    pub nuts_leapfrog_steps: u64,
    pub nuts_mean_depth: f64,
    pub nuts_step_size: f64,
    pub nuts_mean_accept: f64,
}

/// Retained draws in layout order, one row per draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub layout: Layout,
    draws: Vec<f64>,
    /// Brownian precision per retained draw (empty for fixed-θ kernels).
    pub theta: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub seed: u64,
    pub stream: u64,
}

impl PosteriorSamples {
    pub fn new(layout: Layout, draws: Vec<f64>, theta: Vec<f64>) -> Self {
        assert_eq!(draws.len() % layout.dim().max(1), 0);
        PosteriorSamples {
            layout,
            draws,
            theta,
            diagnostics: Diagnostics::default(),
            seed: 0,
            stream: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn n_draws(&self) -> usize {
        if self.dim() == 0 {
            0
        } else {
            self.draws.len() / self.dim()
        }
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.draws[i * d..(i + 1) * d]
    }

    pub fn draws(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.chunks_exact(self.dim().max(1))
    }

    /// All draws of component `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws().map(|d| d[j]).collect()
    }

    /// `Λ(S)` per draw.
    pub fn total_integral(&self) -> Vec<f64> {
        let r = self.layout.integrals();
        self.draws().map(|d| d[r.clone()].iter().sum()).collect()
    }

    pub fn min_component(&self) -> f64 {
        self.draws.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Whitened parameterization `λ = offset + B z` for NUTS.
struct Whitened<'a> {
    lik: &'a Likelihood,
    offset: DVector<f64>,
    map: WhiteMap<'a>,
}

enum WhiteMap<'a> {
    /// `B = L`, the Cholesky factor of the prior covariance.
    Dense(&'a DMatrix<f64>),
    /// `B = (I − l̂l̂ᵀ) L⁻ᵀ / √θ` with `L Lᵀ = Q̃ + εI`.
    Projected {
        chol: &'a DMatrix<f64>,
        l_hat: &'a DVector<f64>,
        scale: f64,
    },
}

impl Whitened<'_> {
    fn to_state(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.map {
            WhiteMap::Dense(l) => &self.offset + *l * z,
            WhiteMap::Projected { chol, l_hat, scale } => {
                let mut v = chol
                    .tr_solve_lower_triangular(z)
                    .expect("triangular factor");
                let a = l_hat.dot(&v);
                v.axpy(-a, l_hat, 1.0);
                &self.offset + v * *scale
            }
        }
    }

    fn pull_back(&self, g: &DVector<f64>) -> DVector<f64> {
        match &self.map {
            WhiteMap::Dense(l) => l.tr_mul(g),
            WhiteMap::Projected { chol, l_hat, scale } => {
                let mut p = g.clone();
                let a = l_hat.dot(g);
                p.axpy(-a, l_hat, 1.0);
                chol.solve_lower_triangular(&p).expect("triangular factor") * *scale
            }
        }
    }

    /// A `z` mapping to `lam`, with the null-space component (if any) drawn
    /// from its standard normal conditional.
    fn from_state<R: Rng + ?Sized>(&self, lam: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let w = lam - &self.offset;
        match &self.map {
            WhiteMap::Dense(l) => l.solve_lower_triangular(&w).expect("triangular factor"),
            WhiteMap::Projected { chol, l_hat, scale } => {
                let mut z = chol.tr_mul(&w) / *scale;
                let mut n = chol.tr_mul(*l_hat);
                n.normalize_mut();
                let c: f64 = rng.sample(StandardNormal);
                z.axpy(c, &n, 1.0);
                z
            }
        }
    }
}

impl GradientTarget for Whitened<'_> {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn log_density_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let zv = DVector::from_column_slice(z);
        let lam = self.to_state(&zv);
        let ll = self.lik.eval(lam.as_slice());
        if !ll.is_finite() {
            return f64::NEG_INFINITY;
        }
        let mut g = DVector::zeros(lam.len());
        self.lik.gradient(lam.as_slice(), g.as_mut_slice());
        let gz = self.pull_back(&g) - &zv;
        grad.copy_from_slice(gz.as_slice());
        ll - 0.5 * zv.norm_squared()
    }
}

enum Geometry {
    Dense {
        chol: DMatrix<f64>,
    },
    Brownian {
        bundle: BmPrecisionBundle,
        chol: DMatrix<f64>,
        l_hat: DVector<f64>,
    },
}

struct NutsState {
    adapt: DualAveraging,
    step: f64,
    depth_sum: u64,
    accept_sum: f64,
    steps: u64,
}

struct Chain<'a> {
    lik: &'a Likelihood,
    geometry: Geometry,
    config: &'a ChainConfig,
    x: DVector<f64>,
    ll: f64,
    theta: f64,
    nuts: Option<NutsState>,
    diag: Diagnostics,
}

impl Chain<'_> {
    /// ESS on the orthogonal part with `offset` held fixed.
    fn ess_update(&mut self, offset: &DVector<f64>, nu: &DVector<f64>, rng: &mut ChaCha8Rng) {
        let f = &self.x - offset;
        let mut buf = vec![0.0; f.len()];
        let lik = self.lik;
        let mut evals = 0u64;
        let m = ess_step(
            f.as_slice(),
            self.ll,
            nu.as_slice(),
            |cand| {
                evals += 1;
                for ((b, c), o) in buf.iter_mut().zip(cand).zip(offset.iter()) {
                    *b = c + o;
                }
                lik.eval(&buf)
            },
            rng,
        );
        self.diag.loglik_evals += evals;
        self.diag.ess_shrinks += m.shrinks as u64;
        self.x = offset + DVector::from_vec(m.state);
        self.ll = m.loglik;
    }

    fn nuts_update(&mut self, offset: DVector<f64>, adapting: bool, rng: &mut ChaCha8Rng) {
        let map = match &self.geometry {
            Geometry::Dense { chol } => WhiteMap::Dense(chol),
            Geometry::Brownian { chol, l_hat, .. } => WhiteMap::Projected {
                chol,
                l_hat,
                scale: 1.0 / self.theta.sqrt(),
            },
        };
        let target = Whitened {
            lik: self.lik,
            offset,
            map,
        };
        let z0 = target.from_state(&self.x, rng);
        let state = self.nuts.get_or_insert_with(|| {
            let eps0 = find_reasonable_step(&target, z0.as_slice(), rng);
            NutsState {
                adapt: DualAveraging::new(eps0, self.config.nuts_target_accept),
                step: eps0,
                depth_sum: 0,
                accept_sum: 0.0,
                steps: 0,
            }
        });
        let eps = if adapting {
            state.adapt.step()
        } else {
            state.step
        };
        let (z, info) = nuts_step(&target, z0.as_slice(), eps, self.config.nuts_max_depth, rng);
        if adapting {
            state.adapt.update(info.accept_stat);
            state.step = state.adapt.final_step();
        }
        state.depth_sum += info.depth as u64;
        state.accept_sum += info.accept_stat;
        state.steps += 1;
        self.diag.nuts_leapfrog_steps += info.n_leapfrog as u64;
        self.diag.loglik_evals += info.n_leapfrog as u64 + 1;
        self.diag.nuts_divergences += u64::from(info.divergent);
        self.x = target.to_state(&DVector::from_vec(z));
        self.ll = self.lik.eval(self.x.as_slice());
    }

    fn iterate(&mut self, adapting: bool, rng: &mut ChaCha8Rng) -> Result<()> {
        let n = self.x.len();
        match &self.geometry {
            Geometry::Dense { chol } => match self.config.sampler {
                SamplerKind::Ess => {
                    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let nu = chol * z;
                    self.ess_update(&DVector::zeros(n), &nu, rng);
                }
                SamplerKind::Nuts => self.nuts_update(DVector::zeros(n), adapting, rng),
            },
            Geometry::Brownian { chol, l_hat, .. } => {
                let level = l_hat.dot(&self.x);
                let offset = l_hat * level;
                match self.config.sampler {
                    SamplerKind::Ess => {
                        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                        let mut nu = chol
                            .tr_solve_lower_triangular(&z)
                            .expect("triangular factor");
                        let a = l_hat.dot(&nu);
                        nu.axpy(-a, l_hat, 1.0);
                        nu /= self.theta.sqrt();
                        self.ess_update(&offset, &nu, rng);
                    }
                    SamplerKind::Nuts => self.nuts_update(offset, adapting, rng),
                }
                self.level_update(rng);
                self.theta_update(rng)?;
            }
        }
        self.diag.iterations += 1;
        Ok(())
    }

    fn level_update(&mut self, rng: &mut ChaCha8Rng) {
        let Geometry::Brownian { l_hat, bundle, .. } = &self.geometry else {
            return;
        };
        let level = l_hat.dot(&self.x);
        let rest = &self.x - l_hat * level;
        let sd = 1.0 / (self.theta * bundle.epsilon()).sqrt();
        let nu = [sd * rng.sample::<f64, _>(StandardNormal)];
        let mut buf = vec![0.0; rest.len()];
        let lik = self.lik;
        let mut evals = 0u64;
        let m = ess_step(
            &[level],
            self.ll,
            &nu,
            |a| {
                evals += 1;
                for ((b, r), h) in buf.iter_mut().zip(rest.iter()).zip(l_hat.iter()) {
                    *b = r + a[0] * h;
                }
                lik.eval(&buf)
            },
            rng,
        );
        self.diag.loglik_evals += evals;
        self.diag.level_shrinks += m.shrinks as u64;
        self.x = rest + l_hat * m.state[0];
        self.ll = m.loglik;
    }

    fn theta_update(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        if let Geometry::Brownian { bundle, .. } = &self.geometry {
            self.theta = gibbs_theta(&self.x, bundle, &self.config.gamma_prior, rng)?;
        }
        Ok(())
    }
}

/// Run one chain. Brownian kernels alternate `λ | θ` with the conjugate
/// `θ | λ` update starting from the kernel's precision; other kernels keep
/// their hyperparameters fixed.
pub fn run_chain(
    data: &Dataset,
    kernel: &KernelSpec,
    config: &ChainConfig,
) -> Result<PosteriorSamples> {
    config.validate()?;
    kernel.validate(&data.domain)?;
    let lik = Likelihood::new(data);
    let layout = lik.layout;
    let points = data.points();
    let regions = data.regions();
    let geometry = if kernel.family().is_brownian() {
        let bundle =
            BmPrecisionBundle::new(kernel, &data.domain, &points, &regions, config.epsilon)?;
        let chol = bundle.precision_cholesky().l();
        let l_hat = bundle.l().normalize();
        Geometry::Brownian {
            bundle,
            chol,
            l_hat,
        }
    } else {
        let cov = build_augmented_covariance(kernel, &data.domain, &points, &regions)?;
        Geometry::Dense { chol: cov.chol_l() }
    };
    let x = match &config.init {
        InitRule::Homogeneous => data.initial_state().data,
        InitRule::State(v) => {
            crate::error::check_dim(layout.dim(), v.len())?;
            DVector::from_column_slice(v)
        }
    };
    let ll = lik.eval(x.as_slice());
    if !ll.is_finite() {
        return Err(Error::Initialization(
            "the starting state has zero likelihood; every component must be strictly positive \
             (use the homogeneous initialization or supply a positive state)"
                .into(),
        ));
    }
    let mut chain = Chain {
        lik: &lik,
        geometry,
        config,
        x,
        ll,
        theta: kernel.precision().unwrap_or(1.0),
        nuts: None,
        diag: Diagnostics::default(),
    };
    let brownian = matches!(chain.geometry, Geometry::Brownian { .. });
    let mut rng = config.rng();
    let kept = config.n_retained();
    let mut draws = Vec::with_capacity(kept * layout.dim());
    let mut theta = Vec::with_capacity(if brownian { kept } else { 0 });
    for _ in 0..config.n_burnin {
        chain.iterate(true, &mut rng)?;
    }
    for i in 0..config.n_samples {
        chain.iterate(false, &mut rng)?;
        if (i + 1) % config.thin == 0 {
            draws.extend_from_slice(chain.x.as_slice());
            if brownian {
                theta.push(chain.theta);
            }
        }
    }
    let mut diag = chain.diag;
    if let Some(s) = &chain.nuts {
        diag.nuts_step_size = s.step;
        if s.steps > 0 {
            diag.nuts_mean_depth = s.depth_sum as f64 / s.steps as f64;
            diag.nuts_mean_accept = s.accept_sum / s.steps as f64;
        }
    }
    let mut out = PosteriorSamples::new(layout, draws, theta);
    out.diagnostics = diag;
    out.seed = config.seed;
    out.stream = config.stream;
    Ok(out)
}

/// Run independent chains, one per configuration.
pub fn run_chains(
    exec: Execution,
    data: &Dataset,
    kernel: &KernelSpec,
    configs: &[ChainConfig],
) -> Vec<Result<PosteriorSamples>> {
    par::map_slice(exec, configs, |c| run_chain(data, kernel, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, Point};

    fn small_data() -> Dataset {
        let d = Domain::interval(5.0).unwrap();
        let events = [0.3, 1.1, 1.4, 2.2, 2.9, 3.3, 3.8, 4.6]
            .map(Point::d1)
            .to_vec();
        Dataset::events_only(d, events, d.midpoint_grid(10)).unwrap()
    }

    fn short(sampler: SamplerKind) -> ChainConfig {
        ChainConfig {
            n_burnin: 200,
            n_samples: 400,
            thin: 2,
            sampler,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn chains_are_positive_and_reproducible() {
        let data = small_data();
        for kernel in [
            KernelSpec::BrownianMotion { precision: 1.0 },
            KernelSpec::SquaredExponential {
                amplitude: 4.0,
                inv_length_sq: 0.5,
            },
        ] {
            for sampler in [SamplerKind::Ess, SamplerKind::Nuts] {
                let a = run_chain(&data, &kernel, &short(sampler)).unwrap();
                let b = run_chain(&data, &kernel, &short(sampler)).unwrap();
                assert_eq!(a, b);
                assert_eq!(a.n_draws(), 200);
                assert!(a.min_component() > 0.0);
                assert_eq!(
                    a.theta.len(),
                    if kernel.family().is_brownian() {
                        200
                    } else {
                        0
                    }
                );
            }
        }
    }

    #[test]
    fn zero_length_chain() {
        let c = ChainConfig {
            n_burnin: 0,
            n_samples: 0,
            ..Default::default()
        };
        let s = run_chain(
            &small_data(),
            &KernelSpec::BrownianMotion { precision: 1.0 },
            &c,
        )
        .unwrap();
        assert_eq!(s.n_draws(), 0);
        assert!(s.theta.is_empty());
    }

    #[test]
    fn bad_initial_state_is_reported() {
        let data = small_data();
        let mut init = data.initial_state().data.as_slice().to_vec();
        init[0] = -1.0;
        let c = ChainConfig {
            init: InitRule::State(init),
            n_samples: 1,
            ..Default::default()
        };
        let err = run_chain(&data, &KernelSpec::BrownianMotion { precision: 1.0 }, &c).unwrap_err();
        assert_eq!(err.kind(), "initialization");
    }

    #[test]
    fn whitened_maps_round_trip() {
        let data = small_data();
        let lik = Likelihood::new(&data);
        let bundle = BmPrecisionBundle::new(
            &KernelSpec::BrownianMotion { precision: 1.0 },
            &data.domain,
            &data.points(),
            &data.regions(),
            1e-8,
        )
        .unwrap();
        let chol = bundle.precision_cholesky().l();
        let l_hat = bundle.l().normalize();
        let x = data.initial_state().data.map(|v| v * 1.3)
            + DVector::from_fn(19, |i, _| 0.01 * i as f64);
        let level = l_hat.dot(&x);
        let t = Whitened {
            lik: &lik,
            offset: &l_hat * level,
            map: WhiteMap::Projected {
                chol: &chol,
                l_hat: &l_hat,
                scale: 1.0 / 2f64.sqrt(),
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = t.from_state(&x, &mut rng);
        assert!((t.to_state(&z) - &x).amax() < 1e-9 * x.amax());

        // gradient of the whitened target against central differences
        let mut g = vec![0.0; 19];
        t.log_density_gradient(z.as_slice(), &mut g);
        for i in [0, 7, 18] {
            let h = 1e-5;
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            let mut tmp = vec![0.0; 19];
            let fd = (t.log_density_gradient(zp.as_slice(), &mut tmp)
                - t.log_density_gradient(zm.as_slice(), &mut tmp))
                / (2.0 * h);
            assert!(
                (fd - g[i]).abs() < 1e-5 * (1.0 + g[i].abs()),
                "{i}: {fd} vs {}",
                g[i]
            );
        }
    }
}
