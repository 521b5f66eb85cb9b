use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::gmrf::BmPrecisionBundle;
use crate::model::GammaPrior;

/// Shape and rate of the full conditional of the Brownian precision.
pub fn theta_conditional(
    lam: &DVector<f64>,
    bundle: &BmPrecisionBundle,
    prior: &GammaPrior,
) -> Result<(f64, f64)> {
    let quad = bundle.quadratic_form(lam)?;
    Ok(prior.posterior(bundle.dim(), quad))
}

/// Exact draw of `θ | λ`.
pub fn gibbs_theta<R: Rng + ?Sized>(
    lam: &DVector<f64>,
    bundle: &BmPrecisionBundle,
    prior: &GammaPrior,
    rng: &mut R,
) -> Result<f64> {
    let (shape, rate) = theta_conditional(lam, bundle, prior)?;
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::InvalidArgument(format!("Gamma({shape}, {rate}): {e}")))?;
    Ok(g.sample(rng))
}
