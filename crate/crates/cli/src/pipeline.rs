//! The simulate / fit / evaluate / predict workflows.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use ricox::hyper::{fit_map, fit_oracle_mle};
use ricox::kernels::KernelSpec;
use ricox::metrics::{aggregate, summarize, EvalReport, Truth};
use ricox::par::Execution;
use ricox::samplers::{run_chain, ChainConfig, Diagnostics, PosteriorSamples};
use ricox::simulate::{bin_tail, simulate_thinning, IntensitySpec};
use ricox::{Dataset, Domain, Point};
use serde::Serialize;

use crate::config::{HyperMethod, KernelChoice, Mode, RunConfig};
use crate::ingest::{ingest, read_points};
use crate::output;

/// RNG stream reserved for breaking ties at ingestion.
const TIE_STREAM: u64 = u64::MAX;

#[derive(Debug, Serialize)]
pub struct DataSummary {
    pub n_events: usize,
    pub n_bins: usize,
    pub binned_count: u64,
    pub n_eval_points: usize,
}

impl DataSummary {
    fn of(data: &Dataset) -> Self {
        DataSummary {
            n_events: data.n_events(),
            n_bins: data.bins.len(),
            binned_count: data.bins.iter().map(|b| b.count).sum(),
            n_eval_points: data.grid.len(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct HyperSummary {
    pub method: HyperMethod,
    /// Selected number of levels per axis (weighted MAP only).
    pub m: Option<usize>,
    pub objective: f64,
}

#[derive(Debug, Serialize)]
pub struct ReplicateSummary {
    pub replicate: usize,
    pub n_events: usize,
    pub kernel: KernelSpec,
    pub sse_grid: Option<f64>,
    pub coverage_grid: Option<f64>,
    pub ci_width: f64,
    pub sse_obs: Option<f64>,
    pub coverage_obs: Option<f64>,
    pub theta_median: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Aggregate {
    pub sse_grid: Option<[f64; 5]>,
    pub coverage_grid: Option<[f64; 5]>,
    pub ci_width: Option<[f64; 5]>,
    pub seconds: Option<[f64; 5]>,
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub version: &'static str,
    pub mode: Mode,
    pub seed: u64,
    pub config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<IntensitySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_count: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyper: Option<HyperSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub replicates: Vec<ReplicateSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<Aggregate>,
    pub seconds: f64,
}

impl<'a> RunReport<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        RunReport {
            version: env!("CARGO_PKG_VERSION"),
            mode: cfg.mode,
            seed: cfg.seed,
            config: cfg,
            truth: None,
            expected_count: None,
            data: None,
            kernel: None,
            hyper: None,
            report: None,
            diagnostics: None,
            replicates: Vec::new(),
            aggregate: None,
            seconds: 0.0,
        }
    }
}

struct Fit {
    kernel: KernelSpec,
    hyper: Option<HyperSummary>,
    samples: PosteriorSamples,
    report: EvalReport,
    seconds: f64,
}

fn simulation_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * replicate as u64);
    rng
}

fn resolve_kernel(
    cfg: &RunConfig,
    data: &Dataset,
    truth: Option<&IntensitySpec>,
) -> Result<(KernelSpec, Option<HyperSummary>)> {
    match cfg.kernel(&data.domain)? {
        KernelChoice::Brownian(k) | KernelChoice::Fixed(k) => Ok((k, None)),
        KernelChoice::Estimate(family) => {
            let map = cfg.map_config(&data.domain);
            match cfg.hyper {
                HyperMethod::Map => {
                    let fit = fit_map(data, family, &map, Execution::Parallel)?;
                    log::info!(
                        "weighted MAP selected m = {} with {:?}",
                        fit.best.m,
                        fit.best.kernel
                    );
                    Ok((
                        fit.best.kernel,
                        Some(HyperSummary {
                            method: HyperMethod::Map,
                            m: Some(fit.best.m),
                            objective: fit.best.objective,
                        }),
                    ))
                }
                HyperMethod::Oracle => {
                    let Some(truth) = truth else {
                        bail!("--hyper oracle needs a truth intensity (--truth)");
                    };
                    let f = |p: &Point| truth.eval(p).unwrap_or(0.0);
                    let (k, objective) =
                        fit_oracle_mle(f, data, family, &map, Execution::Parallel)?;
                    Ok((
                        k,
                        Some(HyperSummary {
                            method: HyperMethod::Oracle,
                            m: None,
                            objective,
                        }),
                    ))
                }
            }
        }
    }
}

fn fit(
    cfg: &RunConfig,
    data: &Dataset,
    truth: Option<&IntensitySpec>,
    chain: &ChainConfig,
) -> Result<Fit> {
    let start = Instant::now();
    let (kernel, hyper) = resolve_kernel(cfg, data, truth)?;
    let samples = run_chain(data, &kernel, chain)?;
    let truth_values = match truth {
        Some(t) => Truth {
            grid: Some(t.eval_many(&data.grid)?),
            observed: Some(t.eval_many(&data.events)?),
        },
        None => Truth::default(),
    };
    let report = summarize(Execution::Parallel, &samples, &truth_values)?;
    Ok(Fit {
        kernel,
        hyper,
        samples,
        report,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn apply_bin_tail(cfg: &RunConfig, data: Dataset) -> Result<Dataset> {
    let Some((start, width)) = cfg.bin_tail()? else {
        return Ok(data);
    };
    if !data.bins.is_empty() {
        bail!("--bin-tail cannot be combined with a bins file");
    }
    let binned = bin_tail(&data.events, &data.domain, start, width)?;
    Ok(Dataset::new(
        data.domain,
        binned.events,
        binned.bins,
        data.grid,
    )?)
}

fn eval_points(cfg: &RunConfig, domain: &Domain) -> Result<Vec<Point>> {
    match (cfg.mode, &cfg.points) {
        (Mode::Predict, Some(p)) => read_points(p, domain),
        (Mode::Predict, None) => bail!("predict mode needs --points"),
        _ => Ok(cfg.grid_points(domain)),
    }
}

fn write_fit(out: &Path, data: &Dataset, f: &Fit) -> Result<Vec<PathBuf>> {
    let mut files = vec![out.join("quantiles.csv")];
    output::write_quantiles(&files[0], &data.grid, data.domain.dim, &f.report)?;
    if !f.samples.theta.is_empty() {
        let p = out.join("theta_trace.csv");
        output::write_theta_trace(&p, &f.samples.theta)?;
        files.push(p);
    }
    Ok(files)
}

/// Run one invocation and return the files written.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let start = Instant::now();
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create {}", cfg.out.display()))?;
    let domain = cfg.domain()?;
    let truth = cfg.truth_spec(domain)?;
    let mut report = RunReport::new(cfg);
    report.truth = truth.clone();
    report.expected_count = truth.as_ref().map(|t| t.integral());
    let mut files = Vec::new();

    match cfg.mode {
        Mode::Simulate => {
            let Some(spec) = &truth else {
                bail!("simulate mode needs --truth");
            };
            let tail = cfg.bin_tail()?;
            for r in 0..cfg.replicates {
                let events = simulate_thinning(spec, &mut simulation_rng(cfg.seed, r));
                let suffix = if cfg.replicates == 1 {
                    String::new()
                } else {
                    format!("_{r:03}")
                };
                let (kept, bins) = match tail {
                    Some((s, w)) => {
                        let b = bin_tail(&events, &domain, s, w)?;
                        (b.events, Some(b.bins))
                    }
                    None => (events, None),
                };
                let p = cfg.out.join(format!("events_sim{suffix}.csv"));
                output::write_events(&p, &kept, domain.dim)?;
                files.push(p);
                if let Some(bins) = bins {
                    let p = cfg.out.join(format!("bins_sim{suffix}.csv"));
                    output::write_bins(&p, &bins, domain.dim)?;
                    files.push(p);
                }
            }
        }
        Mode::Fit | Mode::Predict | Mode::Evaluate if cfg.events.is_some() => {
            if cfg.mode == Mode::Evaluate && truth.is_none() {
                bail!("evaluate mode needs --truth");
            }
            let events = cfg.events.as_deref().expect("checked");
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(TIE_STREAM);
            let data = ingest(
                events,
                cfg.bins.as_deref(),
                domain,
                eval_points(cfg, &domain)?,
                &mut rng,
            )?;
            let data = apply_bin_tail(cfg, data)?;
            let chain = cfg.chain_for(&domain);
            let f = fit(cfg, &data, truth.as_ref(), &chain)?;
            files.extend(write_fit(&cfg.out, &data, &f)?);
            report.data = Some(DataSummary::of(&data));
            report.kernel = Some(f.kernel);
            report.hyper = f.hyper;
            report.diagnostics = Some(f.samples.diagnostics.clone());
            report.report = Some(f.report);
        }
        Mode::Fit | Mode::Predict => bail!("{:?} mode needs --events", cfg.mode),
        Mode::Evaluate => {
            let Some(spec) = &truth else {
                bail!("evaluate mode needs --truth");
            };
            let fits = replicate_fits(cfg, spec, &domain)?;
            if let [(data, f)] = fits.as_slice() {
                files.extend(write_fit(&cfg.out, data, f)?);
                let p = cfg.out.join("events_sim.csv");
                output::write_events(&p, &data.events, domain.dim)?;
                files.push(p);
                report.data = Some(DataSummary::of(data));
                report.kernel = Some(f.kernel);
                report.diagnostics = Some(f.samples.diagnostics.clone());
                report.report = Some(f.report.clone());
            }
            report.replicates = fits
                .iter()
                .enumerate()
                .map(|(r, (data, f))| ReplicateSummary {
                    replicate: r,
                    n_events: data.n_events(),
                    kernel: f.kernel,
                    sse_grid: f.report.grid.sse,
                    coverage_grid: f.report.grid.coverage,
                    ci_width: f.report.grid.ci_width,
                    sse_obs: f.report.observed.sse,
                    coverage_obs: f.report.observed.coverage,
                    theta_median: f.report.theta.map(|q| q[2]),
                    seconds: f.seconds,
                })
                .collect();
            let col = |g: &dyn Fn(&ReplicateSummary) -> Option<f64>| {
                aggregate(&report.replicates.iter().filter_map(g).collect::<Vec<_>>())
            };
            report.aggregate = Some(Aggregate {
                sse_grid: col(&|r| r.sse_grid),
                coverage_grid: col(&|r| r.coverage_grid),
                ci_width: col(&|r| Some(r.ci_width)),
                seconds: col(&|r| Some(r.seconds)),
            });
        }
    }

    report.seconds = start.elapsed().as_secs_f64();
    let p = cfg.out.join("report.json");
    output::write_json(&p, &report)?;
    files.push(p);
    Ok(files)
}

/// Simulate-and-fit replicates on `jobs` workers. Replicate `r` simulates
/// on RNG stream `2r` and samples on stream `2r + 1` of the run seed.
fn replicate_fits(
    cfg: &RunConfig,
    spec: &IntensitySpec,
    domain: &Domain,
) -> Result<Vec<(Dataset, Fit)>> {
    let one = |r: usize| -> Result<(Dataset, Fit)> {
        let events = simulate_thinning(spec, &mut simulation_rng(cfg.seed, r));
        let data = Dataset::events_only(*domain, events, cfg.grid_points(domain))?;
        let data = apply_bin_tail(cfg, data)?;
        let mut chain = cfg.chain_for(domain);
        chain.stream = 2 * r as u64 + 1;
        let f = fit(cfg, &data, Some(spec), &chain).with_context(|| format!("replicate {r}"))?;
        Ok((data, f))
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build()?;
    pool.install(|| (0..cfg.replicates).into_par_iter().map(one).collect())
}
