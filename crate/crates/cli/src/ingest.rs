//! Reading events, bins and prediction points from CSV.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::Rng;
use ricox::geometry::check_disjoint;
use ricox::{Bin, Dataset, Domain, Point, Rect};

/// Relative size of the jitter applied to tied coordinates.
pub const TIE_JITTER: f64 = 1e-9;

fn open(path: &Path) -> Result<csv::Reader<Box<dyn Read>>> {
    let file =
        std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(Box::new(file)))
}

fn expect_header<R: Read>(rdr: &mut csv::Reader<R>, name: &str, want: &[&str]) -> Result<()> {
    let got: Vec<String> = rdr
        .headers()
        .with_context(|| format!("{name}: cannot read header"))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    if got != want {
        bail!(
            "{name} line 1: expected header `{}`, found `{}`",
            want.join(","),
            got.join(",")
        );
    }
    Ok(())
}

fn numbers<R: Read>(
    rdr: &mut csv::Reader<R>,
    name: &str,
    width: usize,
) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("{name}: malformed row"))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            bail!(
                "{name} line {line}: expected {width} fields, found {}",
                rec.len()
            );
        }
        let row = rec
            .iter()
            .map(|f| {
                let v: f64 = f
                    .parse()
                    .with_context(|| format!("{name} line {line}: `{f}` is not a number"))?;
                if !v.is_finite() {
                    bail!("{name} line {line}: `{f}` is not finite");
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push((line, row));
    }
    Ok(out)
}

/// `[a, b]` or `[a, b] x [c, d]`.
pub fn describe(domain: &Domain) -> String {
    let b = &domain.bounds;
    (0..domain.dim)
        .map(|a| format!("[{}, {}]", b.lo[a], b.hi[a]))
        .collect::<Vec<_>>()
        .join(" x ")
}

/// Points from a CSV with header `t` (1-D) or `x,y` (2-D), each checked
/// against the domain.
pub fn read_points_from<R: Read>(rdr: R, name: &str, domain: &Domain) -> Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(rdr);
    let header: &[&str] = if domain.dim == 1 { &["t"] } else { &["x", "y"] };
    expect_header(&mut rdr, name, header)?;
    numbers(&mut rdr, name, domain.dim)?
        .into_iter()
        .map(|(line, v)| {
            let p = if domain.dim == 1 {
                Point::d1(v[0])
            } else {
                Point::d2(v[0], v[1])
            };
            if !domain.contains(&p) {
                let coords: Vec<String> = v.iter().map(f64::to_string).collect();
                bail!(
                    "{name} line {line}: point ({}) lies outside the domain {}",
                    coords.join(", "),
                    describe(domain)
                );
            }
            Ok(p)
        })
        .collect()
}

pub fn read_points(path: &Path, domain: &Domain) -> Result<Vec<Point>> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {name}"))?;
    read_points_from(file, &name, domain)
}

/// Bins from a CSV with header `start,end,count` (1-D) or
/// `x0,x1,y0,y1,count` (2-D).
pub fn read_bins(path: &Path, domain: &Domain) -> Result<Vec<Bin>> {
    let name = path.display().to_string();
    let mut rdr = open(path)?;
    let header: &[&str] = if domain.dim == 1 {
        &["start", "end", "count"]
    } else {
        &["x0", "x1", "y0", "y1", "count"]
    };
    expect_header(&mut rdr, &name, header)?;
    let rows = numbers(&mut rdr, &name, header.len())?;
    let mut bins = Vec::with_capacity(rows.len());
    for (line, v) in &rows {
        let region = if domain.dim == 1 {
            Rect::interval(v[0], v[1])
        } else {
            Rect::rectangle((v[0], v[1]), (v[2], v[3]))
        };
        let count = *v.last().expect("nonempty row");
        if count < 0.0 || count.fract() != 0.0 {
            bail!("{name} line {line}: count must be a nonnegative integer, got {count}");
        }
        if (0..domain.dim).any(|a| !(region.hi[a] > region.lo[a])) {
            bail!("{name} line {line}: bin must have positive size");
        }
        domain
            .check_rect(&region)
            .with_context(|| format!("{name} line {line}: bin outside the domain"))?;
        bins.push(Bin {
            region,
            count: count as u64,
        });
    }
    let rects: Vec<Rect> = bins.iter().map(|b| b.region).collect();
    if check_disjoint(&rects, domain.dim).is_err() {
        for i in 0..rects.len() {
            for j in i + 1..rects.len() {
                if rects[i].overlap(&rects[j], domain.dim) > 0.0 {
                    bail!("{name} lines {} and {}: bins overlap", rows[i].0, rows[j].0);
                }
            }
        }
    }
    Ok(bins)
}

/// Move exact duplicates (among events, or onto a prediction point) by a
/// random offset of size `TIE_JITTER..3·TIE_JITTER` times the domain scale,
/// so every location clears the minimum separation. Returns how many moved.
pub fn perturb_ties<R: Rng + ?Sized>(
    events: &mut [Point],
    fixed: &[Point],
    domain: &Domain,
    rng: &mut R,
) -> usize {
    let key = |p: &Point| (p.0[0].to_bits(), p.0[1].to_bits());
    let mut seen: HashSet<(u64, u64)> = fixed.iter().map(key).collect();
    let scale = TIE_JITTER * domain.length_scale();
    let mut placed: Vec<Point> = Vec::new();
    for p in events.iter_mut() {
        if seen.insert(key(p)) {
            continue;
        }
        let original = *p;
        for _ in 0..100 {
            let mut q = original;
            for a in 0..domain.dim {
                let mag = scale * rng.random_range(1.0..3.0);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                q.0[a] += sign * mag;
            }
            let clear = placed.iter().all(|m| m.distance(&q, domain.dim) >= scale);
            if domain.contains(&q) && clear && seen.insert(key(&q)) {
                *p = q;
                break;
            }
        }
        placed.push(*p);
    }
    placed.len()
}

/// Validated dataset from files, with ties perturbed and the evaluation
/// points appended.
pub fn ingest<R: Rng + ?Sized>(
    events_path: &Path,
    bins_path: Option<&Path>,
    domain: Domain,
    eval_points: Vec<Point>,
    rng: &mut R,
) -> Result<Dataset> {
    let mut events = read_points(events_path, &domain)?;
    let bins = bins_path
        .map(|p| read_bins(p, &domain))
        .transpose()?
        .unwrap_or_default();
    let moved = perturb_ties(&mut events, &eval_points, &domain, rng);
    if moved > 0 {
        log::warn!(
            "perturbed {moved} tied event coordinate(s) by about {TIE_JITTER:e} of the domain size"
        );
    }
    Ok(Dataset::new(domain, events, bins, eval_points)?)
}
