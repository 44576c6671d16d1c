//! Observation models linking latent prevalence to observed counts.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};

use crate::error::{Error, Result};
use crate::params::{ln_choose, ln_gamma, xlogy, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionKind {
    Binomial,
    /// Mean `rho * I`, variance `m + m^2 / phi`.
    NegBinomial,
}

impl FromStr for EmissionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binomial" | "binom" => Ok(EmissionKind::Binomial),
            "negbinomial" | "negative-binomial" | "negbin" | "nb" => Ok(EmissionKind::NegBinomial),
            other => Err(Error::InvalidParameter(format!("unknown emission '{other}'"))),
        }
    }
}

/// Emission distribution together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Emission {
    Binomial { rho: f64 },
    NegBinomial { rho: f64, phi: f64 },
}

impl Emission {
    pub fn new(kind: EmissionKind, rho: f64, phi: Option<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!("rho = {rho}")));
        }
        match kind {
            EmissionKind::Binomial => Ok(Emission::Binomial { rho }),
            EmissionKind::NegBinomial => match phi {
                Some(phi) if phi > 0.0 && phi.is_finite() => Ok(Emission::NegBinomial { rho, phi }),
                other => Err(Error::InvalidParameter(format!("phi = {other:?}"))),
            },
        }
    }

    pub fn from_params(kind: EmissionKind, params: &Params) -> Result<Self> {
        Self::new(kind, params.rho, params.phi)
    }

    pub fn kind(&self) -> EmissionKind {
        match self {
            Emission::Binomial { .. } => EmissionKind::Binomial,
            Emission::NegBinomial { .. } => EmissionKind::NegBinomial,
        }
    }

    /// `log Pr(Y = y | I = infected)`.
    pub fn loglik(&self, y: u64, infected: u64) -> f64 {
        match *self {
            Emission::Binomial { rho } => binomial_logpmf(y, infected, rho),
            Emission::NegBinomial { rho, phi } => negbin_logpmf(y, rho * infected as f64, phi),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, infected: u64, rng: &mut R) -> u64 {
        match *self {
            Emission::Binomial { rho } => Binomial::new(infected, rho)
                .expect("rho validated")
                .sample(rng),
            Emission::NegBinomial { rho, phi } => {
                let mean = rho * infected as f64;
                if mean <= 0.0 {
                    return 0;
                }
                // Gamma-Poisson mixture.
                let lambda = Gamma::new(phi, mean / phi).expect("phi validated").sample(rng);
                if lambda <= 0.0 {
                    0
                } else {
                    Poisson::new(lambda).map(|p| p.sample(rng) as u64).unwrap_or(0)
                }
            }
        }
    }
}

pub fn binomial_logpmf(y: u64, n: u64, p: f64) -> f64 {
    if y > n {
        return f64::NEG_INFINITY;
    }
    ln_choose(n, y) + xlogy(y as f64, p) + xlogy((n - y) as f64, 1.0 - p)
}

/// Negative-binomial log pmf in the mean/overdispersion parameterization.
/// A zero mean is the point mass at zero.
pub fn negbin_logpmf(y: u64, mean: f64, phi: f64) -> f64 {
    if mean <= 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let y_f = y as f64;
    let log_denom = (phi + mean).ln();
    ln_gamma(y_f + phi) - ln_gamma(phi) - crate::params::ln_factorial(y)
        + phi * (phi.ln() - log_denom)
        + y_f * (mean.ln() - log_denom)
}
