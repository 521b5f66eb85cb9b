//! Run configuration: file formats, flag overrides and argument parsing.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, ValueEnum};
use ricox::hyper::MapConfig;
use ricox::kernels::{KernelFamily, KernelSpec};
use ricox::samplers::{ChainConfig, SamplerKind};
use ricox::simulate::{IntensityKind, IntensitySpec};
use ricox::{Domain, Point};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    #[default]
    Fit,
    Evaluate,
    Predict,
}

/// How fixed-θ kernels get their hyperparameters when none are given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum HyperMethod {
    /// Weighted MAP over piecewise-constant intensities.
    #[default]
    Map,
    /// Gaussian likelihood of the true intensity (needs a truth spec).
    Oracle,
}

/// Ground truth given by name (`lambda1`, `lambda2`, `constant:10`) or as a
/// full intensity table in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthArg {
    Name(String),
    Kind(IntensityKind),
}

impl TruthArg {
    fn kind(&self) -> Result<IntensityKind> {
        match self {
            TruthArg::Kind(k) => Ok(k.clone()),
            TruthArg::Name(s) => {
                let s = s.trim();
                match s.split_once(':') {
                    None if s.eq_ignore_ascii_case("lambda1") => Ok(IntensityKind::Lambda1),
                    None if s.eq_ignore_ascii_case("lambda2") => Ok(IntensityKind::Lambda2),
                    Some((name, rate)) if name.eq_ignore_ascii_case("constant") => {
                        Ok(IntensityKind::Constant {
                            rate: rate
                                .trim()
                                .parse()
                                .with_context(|| format!("bad constant rate `{rate}`"))?,
                        })
                    }
                    _ => bail!("unknown truth `{s}` (expected lambda1, lambda2 or constant:RATE)"),
                }
            }
        }
    }

    /// Domain the named intensities are defined on.
    fn default_domain(&self) -> Option<Domain> {
        match self.kind().ok()? {
            IntensityKind::Lambda1 => Some(IntensitySpec::lambda1().domain),
            IntensityKind::Lambda2 => Some(IntensitySpec::lambda2().domain),
            _ => None,
        }
    }
}

/// Everything one invocation needs. Config files hold the same fields;
/// command-line flags override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub events: Option<PathBuf>,
    pub bins: Option<PathBuf>,
    /// Prediction locations (predict mode).
    pub points: Option<PathBuf>,
    /// `a:b` for an interval, `a:b,c:d` for a rectangle, or `T` for `[0, T]`.
    pub domain: Option<String>,
    /// `bm`, `se`, `se:AMP,INV_LEN_SQ`, `product-se[:a0,q0,a1,q1]`.
    pub kernel: String,
    pub hyper: HyperMethod,
    /// Ridge override; two-dimensional Brownian fits default to a larger one.
    pub epsilon: Option<f64>,
    pub seed: u64,
    /// Evaluation points per axis; 100 in 1-D and 10 in 2-D when unset.
    pub grid: Option<usize>,
    pub out: PathBuf,
    /// `start:width` bins trailing events into fixed-width counts.
    pub bin_tail: Option<String>,
    pub truth: Option<TruthArg>,
    pub scale: f64,
    pub replicates: usize,
    pub jobs: Option<usize>,
    pub chain: ChainConfig,
    pub map: Option<MapConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Fit,
            events: None,
            bins: None,
            points: None,
            domain: None,
            kernel: "bm".into(),
            hyper: HyperMethod::Map,
            epsilon: None,
            seed: 0,
            grid: None,
            out: PathBuf::from("out"),
            bin_tail: None,
            truth: None,
            scale: 1.0,
            replicates: 1,
            jobs: None,
            chain: ChainConfig::default(),
            map: None,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ricox",
    version,
    about = "Bayesian Poisson intensity estimation with a positive Gaussian prior on values and integrals"
)]
pub struct Cli {
    /// TOML or JSON file with run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Event CSV: header `t` (1-D) or `x,y` (2-D).
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Bin CSV: header `start,end,count` (1-D) or `x0,x1,y0,y1,count` (2-D).
    #[arg(long)]
    pub bins: Option<PathBuf>,
    /// Prediction points CSV, same format as events.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// `a:b`, `a:b,c:d` or `T`.
    #[arg(long)]
    pub domain: Option<String>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long, value_enum)]
    pub hyper: Option<HyperMethod>,
    #[arg(long)]
    pub sampler: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Post-burn-in iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluation points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `start:width`.
    #[arg(long = "bin-tail")]
    pub bin_tail: Option<String>,
    /// `lambda1`, `lambda2` or `constant:RATE`.
    #[arg(long)]
    pub truth: Option<String>,
    /// Multiplier on the truth intensity.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Prior weight of the weighted MAP objective.
    #[arg(long = "map-weight")]
    pub map_weight: Option<f64>,
}

pub fn load_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text)
            .with_context(|| format!("invalid JSON config {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("invalid TOML config {}", path.display()))
    }
}

impl Cli {
    /// Config file (if any) with flags applied on top.
    pub fn resolve(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => load_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$( if let Some(v) = self.$field { c.$field = v.into(); } )*};
        }
        set!(mode, kernel, hyper, seed, out, scale, replicates);
        macro_rules! set_opt {
            ($($field:ident),*) => {$( if self.$field.is_some() { c.$field = self.$field; } )*};
        }
        set_opt!(events, bins, points, domain, epsilon, grid, bin_tail, jobs);
        if let Some(t) = self.truth {
            c.truth = Some(TruthArg::Name(t));
        }
        if let Some(s) = self.sampler {
            c.chain.sampler = match s.to_ascii_lowercase().as_str() {
                "ess" => SamplerKind::Ess,
                "nuts" => SamplerKind::Nuts,
                _ => bail!("unknown sampler `{s}` (expected ess or nuts)"),
            };
        }
        if let Some(v) = self.iters {
            c.chain.n_samples = v;
        }
        if let Some(v) = self.burnin {
            c.chain.n_burnin = v;
        }
        if let Some(v) = self.thin {
            c.chain.thin = v;
        }
        if let Some(w) = self.map_weight {
            c.map.get_or_insert_with(MapConfig::default).c = w;
        }
        c.chain.seed = c.seed;
        c.validate()?;
        Ok(c)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid == Some(0) {
            bail!("grid size must be at least 1");
        }
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if self.jobs == Some(0) {
            bail!("jobs must be at least 1");
        }
        self.chain.validate()?;
        for (name, p) in [
            ("events", &self.events),
            ("bins", &self.bins),
            ("points", &self.points),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    bail!("{name} file {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain> {
        match (&self.domain, &self.truth) {
            (Some(s), _) => parse_domain(s),
            (None, Some(t)) => t
                .default_domain()
                .ok_or_else(|| anyhow!("--domain is required for this truth intensity")),
            (None, None) => bail!("--domain is required"),
        }
    }

    /// Equispaced cell midpoints on each axis.
    pub fn grid_points(&self, domain: &Domain) -> Vec<Point> {
        let n = self.grid.unwrap_or(if domain.dim == 1 { 100 } else { 10 });
        domain.midpoint_grid(n)
    }

    pub fn truth_spec(&self, domain: Domain) -> Result<Option<IntensitySpec>> {
        self.truth
            .as_ref()
            .map(|t| Ok(IntensitySpec::new(t.kind()?, self.scale, domain)?))
            .transpose()
    }

    pub fn kernel(&self, domain: &Domain) -> Result<KernelChoice> {
        self.kernel.parse::<KernelArg>()?.resolve(domain)
    }

    pub fn bin_tail(&self) -> Result<Option<(f64, f64)>> {
        self.bin_tail.as_deref().map(parse_pair).transpose()
    }

    /// Chain settings with the ridge chosen for the domain.
    pub fn chain_for(&self, domain: &Domain) -> ChainConfig {
        let mut chain = self.chain.clone();
        match self.epsilon {
            Some(e) => chain.epsilon = e,
            None if domain.dim == 2 && chain.epsilon == ricox::gmrf::DEFAULT_EPSILON => {
                chain.epsilon = ricox::gmrf::SPATIAL_EPSILON
            }
            None => {}
        }
        chain
    }

    pub fn map_config(&self, domain: &Domain) -> MapConfig {
        let mut m = self
            .map
            .clone()
            .unwrap_or_else(|| MapConfig::for_domain(domain));
        m.de.seed = m.de.seed.wrapping_add(self.seed);
        m
    }
}

/// Kernel as written by the user: a family, optionally with fixed values.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelArg {
    pub family: KernelFamily,
    pub params: Option<Vec<f64>>,
}

/// Resolved kernel: sampled precision, fixed values, or values to estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    Brownian(KernelSpec),
    Fixed(KernelSpec),
    Estimate(KernelFamily),
}

impl FromStr for KernelArg {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n, Some(parse_list(p)?)),
            None => (s, None),
        };
        let family = match name.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "bm" | "brownian" | "brownian-motion" => KernelFamily::BrownianMotion,
            "bs" | "sheet" | "brownian-sheet" => KernelFamily::BrownianSheet,
            "se" | "squared-exponential" => KernelFamily::SquaredExponential,
            "product-se" | "pse" => KernelFamily::ProductSe,
            other => bail!("unknown kernel `{other}` (expected bm, bs, se or product-se)"),
        };
        Ok(KernelArg { family, params })
    }
}

impl KernelArg {
    fn resolve(&self, domain: &Domain) -> Result<KernelChoice> {
        let family = match (self.family, domain.dim) {
            (KernelFamily::BrownianMotion, 2) => KernelFamily::BrownianSheet,
            (KernelFamily::BrownianSheet, 1) => KernelFamily::BrownianMotion,
            (f, _) => f,
        };
        if family.is_brownian() {
            return Ok(KernelChoice::Brownian(family.with_params(&[1.0])));
        }
        match &self.params {
            None => Ok(KernelChoice::Estimate(family)),
            Some(p) => {
                let want = family.n_params(domain.dim);
                if p.len() != want {
                    bail!("kernel needs {want} parameters, got {}", p.len());
                }
                let spec = family.with_params(p);
                spec.validate(domain)?;
                Ok(KernelChoice::Fixed(spec))
            }
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number `{v}`"))
        })
        .collect()
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("expected `a:b`, got `{s}`"))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .with_context(|| format!("bad number `{v}` in `{s}`"))
    };
    Ok((num(a)?, num(b)?))
}

pub fn parse_domain(s: &str) -> Result<Domain> {
    let parts: Vec<&str> = s.split(',').collect();
    let domain = match parts.as_slice() {
        [one] if !one.contains(':') => Domain::interval(
            one.trim()
                .parse()
                .with_context(|| format!("bad domain `{s}`"))?,
        )?,
        [one] => {
            let (a, b) = parse_pair(one)?;
            Domain::interval_range(a, b)?
        }
        [x, y] => Domain::rectangle(parse_pair(x)?, parse_pair(y)?)?,
        _ => bail!("domain must be `a:b` or `a:b,c:d`, got `{s}`"),
    };
    // measure coordinates from the lower corner so origin-anchored kernels apply
    let lo = domain.bounds.lo;
    Ok(domain.with_offset([-lo[0], -lo[1]]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domains() {
        let d = parse_domain("5").unwrap();
        assert_eq!((d.dim, d.measure()), (1, 5.0));
        let d = parse_domain("1960:2020").unwrap();
        assert_eq!(d.offset[0], -1960.0);
        let d = parse_domain("0:1, 0:2").unwrap();
        assert_eq!((d.dim, d.measure()), (2, 2.0));
        assert!(parse_domain("3:1").is_err());
        assert!(parse_domain("0:1,0:1,0:1").is_err());
    }

    #[test]
    fn kernels() {
        let d1 = parse_domain("5").unwrap();
        let d2 = parse_domain("0:1,0:1").unwrap();
        let k = |s: &str, d: &Domain| s.parse::<KernelArg>().unwrap().resolve(d).unwrap();
        assert!(matches!(
            k("bm", &d1),
            KernelChoice::Brownian(KernelSpec::BrownianMotion { .. })
        ));
        assert!(matches!(
            k("bm", &d2),
            KernelChoice::Brownian(KernelSpec::BrownianSheet { .. })
        ));
        assert_eq!(
            k("se", &d1),
            KernelChoice::Estimate(KernelFamily::SquaredExponential)
        );
        assert_eq!(
            k("se:2,0.5", &d1),
            KernelChoice::Fixed(KernelSpec::SquaredExponential {
                amplitude: 2.0,
                inv_length_sq: 0.5
            })
        );
        assert!("se:1".parse::<KernelArg>().unwrap().resolve(&d1).is_err());
        assert!("matern".parse::<KernelArg>().is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "mode = \"simulate\"\nseed = 4\ntruth = \"constant:3\"\ndomain = \"0:2\"\n[chain]\nn_samples = 10\n").unwrap();
        let cli = Cli::parse_from([
            "ricox",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "9",
            "--iters",
            "20",
        ]);
        let c = cli.resolve().unwrap();
        assert_eq!(c.mode, Mode::Simulate);
        assert_eq!((c.seed, c.chain.seed, c.chain.n_samples), (9, 9, 20));
        let spec = c.truth_spec(c.domain().unwrap()).unwrap().unwrap();
        assert_eq!(spec.kind, IntensityKind::Constant { rate: 3.0 });

        let json = dir.path().join("run.json");
        std::fs::write(&json, r#"{"mode": "evaluate", "truth": {"kind": "piecewise", "edges": [0, 1, 2], "rates": [1, 4]}, "domain": "0:2"}"#).unwrap();
        let c = load_file(&json).unwrap();
        assert!(matches!(
            c.truth,
            Some(TruthArg::Kind(IntensityKind::Piecewise { .. }))
        ));
        std::fs::write(&json, r#"{"colour": 1}"#).unwrap();
        assert!(load_file(&json).is_err());
    }
}
