//! No-U-Turn sampler with slice-based candidate selection and dual-averaging
//! step-size adaptation.

use rand::Rng;
use rand_distr::StandardNormal;

/// Energy error beyond which a trajectory is declared divergent.
pub const MAX_DELTA_ENERGY: f64 = 1000.0;

/// A differentiable log-density.
pub trait GradientTarget {
    fn dim(&self) -> usize;
    /// Log-density at `z`, writing its gradient into `grad`. May return
    /// `−∞`, in which case `grad` is left unspecified.
    fn log_density_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64;
}

/// One leapfrog step of size `eps`, updating `z`, `r` and `grad` in place and
/// returning the new log-density.
pub fn leapfrog<T: GradientTarget + ?Sized>(
    target: &T,
    z: &mut [f64],
    r: &mut [f64],
    grad: &mut [f64],
    eps: f64,
) -> f64 {
    for (ri, gi) in r.iter_mut().zip(grad.iter()) {
        *ri += 0.5 * eps * gi;
    }
    for (zi, ri) in z.iter_mut().zip(r.iter()) {
        *zi += eps * ri;
    }
    let lp = target.log_density_gradient(z, grad);
    if lp.is_finite() {
        for (ri, gi) in r.iter_mut().zip(grad.iter()) {
            *ri += 0.5 * eps * gi;
        }
    }
    lp
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
struct Phase {
    z: Vec<f64>,
    r: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

impl Phase {
    fn joint(&self) -> f64 {
        if self.logp.is_finite() {
            self.logp - 0.5 * dot(&self.r, &self.r)
        } else {
            f64::NEG_INFINITY
        }
    }
}

struct Tree {
    minus: Phase,
    plus: Phase,
    proposal: Phase,
    n: usize,
    ok: bool,
    alpha: f64,
    n_alpha: usize,
    divergent: bool,
}

fn no_u_turn(minus: &Phase, plus: &Phase) -> bool {
    let mut a = 0.0;
    let mut b = 0.0;
    for i in 0..minus.z.len() {
        let d = plus.z[i] - minus.z[i];
        a += d * minus.r[i];
        b += d * plus.r[i];
    }
    a >= 0.0 && b >= 0.0
}

#[allow(clippy::too_many_arguments)]
fn build_tree<T: GradientTarget + ?Sized, R: Rng + ?Sized>(
    target: &T,
    from: &Phase,
    log_u: f64,
    direction: f64,
    depth: usize,
    eps: f64,
    joint0: f64,
    rng: &mut R,
) -> Tree {
    if depth == 0 {
        let mut p = from.clone();
        p.logp = leapfrog(target, &mut p.z, &mut p.r, &mut p.grad, direction * eps);
        let joint = p.joint();
        let ok = joint > log_u - MAX_DELTA_ENERGY;
        let alpha = if joint.is_finite() {
            (joint - joint0).exp().min(1.0)
        } else {
            0.0
        };
        return Tree {
            minus: p.clone(),
            plus: p.clone(),
            proposal: p,
            n: usize::from(log_u <= joint),
            ok,
            alpha,
            n_alpha: 1,
            divergent: !ok,
        };
    }
    let mut t = build_tree(target, from, log_u, direction, depth - 1, eps, joint0, rng);
    if !t.ok {
        return t;
    }
    let edge = if direction < 0.0 { &t.minus } else { &t.plus };
    let t2 = build_tree(
        target,
        &edge.clone(),
        log_u,
        direction,
        depth - 1,
        eps,
        joint0,
        rng,
    );
    if direction < 0.0 {
        t.minus = t2.minus;
    } else {
        t.plus = t2.plus;
    }
    let total = t.n + t2.n;
    if t2.n > 0 && rng.random::<f64>() * (total as f64) < t2.n as f64 {
        t.proposal = t2.proposal;
    }
    t.alpha += t2.alpha;
    t.n_alpha += t2.n_alpha;
    t.divergent |= t2.divergent;
    t.ok = t2.ok && no_u_turn(&t.minus, &t.plus);
    t.n = total;
    t
}

/// Per-transition diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutsInfo {
    pub depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    /// Mean Metropolis acceptance statistic over the trajectory.
    pub accept_stat: f64,
    pub logp: f64,
}

/// One NUTS transition from `z0` with step size `eps`.
///
/// Subtrees that diverge (energy error above [`MAX_DELTA_ENERGY`], including
/// excursions to `−∞` log-density) contribute no candidates.
pub fn nuts_step<T, R>(
    target: &T,
    z0: &[f64],
    eps: f64,
    max_depth: usize,
    rng: &mut R,
) -> (Vec<f64>, NutsInfo)
where
    T: GradientTarget + ?Sized,
    R: Rng + ?Sized,
{
    let d = z0.len();
    let mut grad = vec![0.0; d];
    let logp = target.log_density_gradient(z0, &mut grad);
    assert!(logp.is_finite(), "NUTS needs a finite starting log-density");
    let r: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let start = Phase {
        z: z0.to_vec(),
        r,
        grad,
        logp,
    };
    let joint0 = start.joint();
    let log_u = joint0 + rng.random::<f64>().ln();
    let mut minus = start.clone();
    let mut plus = start.clone();
    let mut proposal = start;
    let mut n = 1usize;
    let mut depth = 0;
    let mut alpha = 0.0;
    let mut n_alpha = 0;
    let mut divergent = false;
    loop {
        let direction = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let edge = if direction < 0.0 { &minus } else { &plus };
        let t = build_tree(
            target,
            &edge.clone(),
            log_u,
            direction,
            depth,
            eps,
            joint0,
            rng,
        );
        if direction < 0.0 {
            minus = t.minus;
        } else {
            plus = t.plus;
        }
        alpha += t.alpha;
        n_alpha += t.n_alpha;
        divergent |= t.divergent;
        if t.ok && t.n > 0 && rng.random::<f64>() * (n as f64) < t.n as f64 {
            proposal = t.proposal;
        }
        n += t.n;
        depth += 1;
        if !(t.ok && no_u_turn(&minus, &plus)) || depth >= max_depth {
            break;
        }
    }
    let info = NutsInfo {
        depth,
        n_leapfrog: n_alpha,
        divergent,
        accept_stat: if n_alpha > 0 {
            alpha / n_alpha as f64
        } else {
            0.0
        },
        logp: proposal.logp,
    };
    (proposal.z, info)
}

/// Doubling/halving search for a step size with acceptance near one half.
pub fn find_reasonable_step<T, R>(target: &T, z0: &[f64], rng: &mut R) -> f64
where
    T: GradientTarget + ?Sized,
    R: Rng + ?Sized,
{
    let d = z0.len();
    let mut grad0 = vec![0.0; d];
    let lp0 = target.log_density_gradient(z0, &mut grad0);
    let r0: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let joint0 = lp0 - 0.5 * dot(&r0, &r0);
    let trial = |eps: f64| -> f64 {
        let mut z = z0.to_vec();
        let mut r = r0.clone();
        let mut g = grad0.clone();
        let lp = leapfrog(target, &mut z, &mut r, &mut g, eps);
        if lp.is_finite() {
            lp - 0.5 * dot(&r, &r) - joint0
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut eps = 1.0;
    let mut log_ratio = trial(eps);
    let a = if log_ratio > 0.5f64.ln() { 1.0 } else { -1.0 };
    for _ in 0..100 {
        if !(a * log_ratio > -a * std::f64::consts::LN_2) {
            break;
        }
        eps *= 2f64.powf(a);
        log_ratio = trial(eps);
    }
    eps
}

/// Dual-averaging step-size adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    m: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(eps0: f64, target: f64) -> Self {
        DualAveraging {
            target,
            mu: (10.0 * eps0).ln(),
            h_bar: 0.0,
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            m: 0.0,
        }
    }

    /// Step size for the next adaptation iteration.
    pub fn step(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Averaged step size to use after adaptation.
    pub fn final_step(&self) -> f64 {
        if self.m == 0.0 {
            self.step()
        } else {
            self.log_eps_bar.exp()
        }
    }

    pub fn update(&mut self, accept_stat: f64) {
        self.m += 1.0;
        let w = 1.0 / (self.m + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_stat);
        self.log_eps = self.mu - self.m.sqrt() / Self::GAMMA * self.h_bar;
        let k = self.m.powf(-Self::KAPPA);
        self.log_eps_bar = k * self.log_eps + (1.0 - k) * self.log_eps_bar;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `N(0, diag(s²))`.
    struct Diagonal(Vec<f64>);

    impl GradientTarget for Diagonal {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn log_density_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64 {
            let mut lp = 0.0;
            for i in 0..z.len() {
                let p = 1.0 / (self.0[i] * self.0[i]);
                grad[i] = -p * z[i];
                lp -= 0.5 * p * z[i] * z[i];
            }
            lp
        }
    }

    #[test]
    fn leapfrog_conserves_energy() {
        let t = Diagonal(vec![1.0, 0.5, 2.0]);
        let mut z = vec![0.3, -1.0, 2.0];
        let mut r = vec![1.0, 0.2, -0.7];
        let mut g = vec![0.0; 3];
        let lp0 = t.log_density_gradient(&z, &mut g);
        let h0 = -lp0 + 0.5 * dot(&r, &r);
        let mut lp = lp0;
        for _ in 0..100 {
            lp = leapfrog(&t, &mut z, &mut r, &mut g, 1e-3);
        }
        let h1 = -lp + 0.5 * dot(&r, &r);
        assert!((h1 - h0).abs() < 1e-6, "{}", h1 - h0);
    }

    #[test]
    fn gaussian_target_mean() {
        let t = Diagonal(vec![1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut z = vec![0.5, -0.5];
        let mut da = DualAveraging::new(find_reasonable_step(&t, &z, &mut rng), 0.8);
        for _ in 0..1000 {
            let (nz, info) = nuts_step(&t, &z, da.step(), 10, &mut rng);
            da.update(info.accept_stat);
            z = nz;
        }
        let eps = da.final_step();
        let n = 20_000;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            z = nuts_step(&t, &z, eps, 10, &mut rng).0;
            for k in 0..2 {
                sum[k] += z[k];
                sq[k] += z[k] * z[k];
            }
        }
        for k in 0..2 {
            let mean = sum[k] / n as f64;
            let var = sq[k] / n as f64 - mean * mean;
            // NUTS draws on a Gaussian are close to independent; allow 3 SE
            assert!(mean.abs() < 3.0 * (1.0 / n as f64).sqrt(), "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn deterministic_trajectory() {
        let t = Diagonal(vec![1.0, 3.0, 0.2]);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let mut z = vec![0.1, 0.1, 0.1];
            for _ in 0..50 {
                z = nuts_step(&t, &z, 0.1, 10, &mut rng).0;
            }
            z
        };
        assert_eq!(run(), run());
    }

    /// Half-line target `z > 0` with a Gaussian tail.
    struct HalfNormal;

    impl GradientTarget for HalfNormal {
        fn dim(&self) -> usize {
            1
        }
        fn log_density_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64 {
            if z[0] <= 0.0 {
                return f64::NEG_INFINITY;
            }
            grad[0] = -z[0];
            -0.5 * z[0] * z[0]
        }
    }

    #[test]
    fn boundary_crossings_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut z = vec![1.0];
        let mut total = 0.0;
        let n = 20_000;
        for _ in 0..n {
            z = nuts_step(&HalfNormal, &z, 0.3, 8, &mut rng).0;
            assert!(z[0] > 0.0);
            total += z[0];
        }
        let mean = total / n as f64;
        let exact = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - exact).abs() < 0.03, "{mean} vs {exact}");
    }
}
