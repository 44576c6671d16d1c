//! Subject-level continuous-time Markov chain machinery: rate matrices,
//! transition-probability matrices and path densities.

mod cache;
mod eigen;
mod matrix;

pub use cache::DecompositionCache;
pub use eigen::{eigen_decompose, eigenvalues, Column, EigenSystem, GAP_TOL, MAX_CONDITION};
pub use matrix::{SquareMat, MAX_STATES};

use crate::error::{Error, Result};
use crate::history::Jump;
use crate::model::{ModelSpec, RateForm};
use crate::params::Params;

/// Rate matrix of one subject given the prevalence `i_excluded` among the
/// other subjects.
pub fn subject_rate_matrix(model: &ModelSpec, params: &Params, i_excluded: usize) -> SquareMat {
    let mut q = SquareMat::zeros(model.n_states());
    for tr in &model.transitions {
        let rate = match tr.form {
            RateForm::InfectiveContact => params.beta * i_excluded as f64,
            RateForm::Constant(p) => params.rate(p),
        };
        q[(tr.from, tr.to)] += rate;
        q[(tr.from, tr.from)] -= rate;
    }
    q
}

/// Either a spectral decomposition or, when that is unavailable, the rate
/// matrix itself for the series method.
#[derive(Debug, Clone, PartialEq)]
pub enum Decomposition {
    Spectral { rate: SquareMat, eigen: EigenSystem },
    Series { rate: SquareMat },
}

impl Decomposition {
    pub fn new(rate: &SquareMat) -> Self {
        match eigen_decompose(rate) {
            Ok(eigen) => Decomposition::Spectral { rate: *rate, eigen },
            Err(_) => Decomposition::Series { rate: *rate },
        }
    }

    pub fn rate(&self) -> &SquareMat {
        match self {
            Decomposition::Spectral { rate, .. } | Decomposition::Series { rate } => rate,
        }
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, Decomposition::Spectral { .. })
    }

    /// `P(dt) = exp(dt Q)`, clamped to a stochastic matrix. Transitions the
    /// rate matrix cannot produce are exactly zero.
    pub fn transition_matrix(&self, dt: f64) -> SquareMat {
        let n = self.rate().dim();
        if dt == 0.0 {
            return SquareMat::identity(n);
        }
        let mut p = match self {
            Decomposition::Spectral { eigen, .. } => eigen.exp_raw(dt),
            Decomposition::Series { rate } => expm_series(rate, dt),
        };
        p.mask_unreachable(&self.rate().reachability());
        p.clamp_stochastic();
        p
    }
}

/// `exp(dt Q)` by scaling and squaring a truncated Taylor series.
pub fn expm_series(q: &SquareMat, dt: f64) -> SquareMat {
    let n = q.dim();
    let a = q.scale(dt);
    let norm = a.norm_inf();
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let b = a.scale(0.5f64.powi(squarings as i32));
    let mut sum = SquareMat::identity(n);
    let mut term = SquareMat::identity(n);
    for k in 1..=40 {
        term = (&term * &b).scale(1.0 / k as f64);
        sum = sum.add(&term);
        if term.max_abs() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn transition_matrix(rate: &SquareMat, dt: f64) -> SquareMat {
    Decomposition::new(rate).transition_matrix(dt)
}

/// Ordered product of transition matrices over contiguous subintervals.
/// `breaks` has one more entry than `rates`.
pub fn tpm_product(breaks: &[f64], rates: &[&Decomposition]) -> Result<SquareMat> {
    if breaks.len() != rates.len() + 1 || rates.is_empty() {
        return Err(Error::BrokenPartition { index: 0 });
    }
    if let Some(i) = breaks.windows(2).position(|w| !(w[1] >= w[0])) {
        return Err(Error::BrokenPartition { index: i + 1 });
    }
    let mut p = SquareMat::identity(rates[0].rate().dim());
    for (w, d) in breaks.windows(2).zip(rates) {
        p = &p * &d.transition_matrix(w[1] - w[0]);
    }
    Ok(p)
}

/// Log-density of a path of a homogeneous chain with rate matrix `q` on
/// `[start, end]`: jump log-rates minus integrated exit rates.
pub fn homogeneous_path_loglik(q: &SquareMat, initial: usize, jumps: &[Jump], start: f64, end: f64) -> f64 {
    let exit = |s: usize| -q[(s, s)];
    let mut ll = 0.0;
    let mut cur = initial;
    let mut last = start;
    for j in jumps {
        let rate = q[(cur, j.to)];
        if !(rate > 0.0) || j.to == cur {
            return f64::NEG_INFINITY;
        }
        ll += rate.ln() - exit(cur) * (j.time - last);
        cur = j.to;
        last = j.time;
    }
    ll - exit(cur) * (end - last)
}
