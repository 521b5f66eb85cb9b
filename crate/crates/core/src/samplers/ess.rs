use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Outcome of one elliptical slice update.
#[derive(Debug, Clone, PartialEq)]
pub struct EssMove {
    pub state: Vec<f64>,
    pub loglik: f64,
    /// Number of bracket shrinks before acceptance.
    pub shrinks: usize,
}

/// One elliptical slice update of `current` under a zero-mean Gaussian prior,
/// given a prior draw `nu`.
///
/// `loglik` receives the candidate on the ellipse `current·cos t + nu·sin t`.
/// Positivity constraints belong inside `loglik` as `−∞` returns.
pub fn ess_step<R, F>(
    current: &[f64],
    current_ll: f64,
    nu: &[f64],
    mut loglik: F,
    rng: &mut R,
) -> EssMove
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    assert!(
        current_ll.is_finite(),
        "elliptical slice sampling needs a finite starting log-likelihood"
    );
    assert_eq!(current.len(), nu.len());
    let log_y = current_ll + rng.random::<f64>().ln();
    let mut angle = rng.random::<f64>() * 2.0 * PI;
    let (mut lo, mut hi) = (angle - 2.0 * PI, angle);
    let mut cand = vec![0.0; current.len()];
    let mut shrinks = 0;
    loop {
        let (s, c) = angle.sin_cos();
        for ((o, x), v) in cand.iter_mut().zip(current).zip(nu) {
            *o = x * c + v * s;
        }
        let ll = loglik(&cand);
        if ll > log_y {
            return EssMove {
                state: cand,
                loglik: ll,
                shrinks,
            };
        }
        if angle < 0.0 {
            lo = angle;
        } else {
            hi = angle;
        }
        shrinks += 1;
        angle = rng.random_range(lo..hi);
        if hi - lo < 1e-300 {
            // the bracket collapsed onto the current state
            return EssMove {
                state: current.to_vec(),
                loglik: current_ll,
                shrinks,
            };
        }
    }
}

/// [`ess_step`] with the prior draw `L z` from a lower Cholesky factor.
pub fn ess_step_chol<R, F>(
    current: &[f64],
    current_ll: f64,
    chol_l: &DMatrix<f64>,
    loglik: F,
    rng: &mut R,
) -> EssMove
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let z = DVector::from_fn(current.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let nu = chol_l * z;
    ess_step(current, current_ll, nu.as_slice(), loglik, rng)
}
