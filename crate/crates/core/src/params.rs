//! Model parameters and their priors.

use crate::error::{Error, Result};
use crate::model::{ModelSpec, RateParam};

/// Rate, emission and initial-state parameters of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Per-contact infectivity rate.
    pub beta: f64,
    /// Progression (SEIR) or immunity-loss (SIRS) rate; unused for SIR.
    pub gamma: Option<f64>,
    /// Recovery rate.
    pub mu: f64,
    /// Detection probability.
    pub rho: f64,
    /// Negative-binomial overdispersion; `None` under binomial emission.
    pub phi: Option<f64>,
    /// Initial-state probabilities, one per model state.
    pub p_init: Vec<f64>,
}

impl Params {
    pub fn rate(&self, p: RateParam) -> f64 {
        match p {
            RateParam::Beta => self.beta,
            RateParam::Gamma => self.gamma.unwrap_or(0.0),
            RateParam::Mu => self.mu,
        }
    }

    pub fn set_rate(&mut self, p: RateParam, value: f64) {
        match p {
            RateParam::Beta => self.beta = value,
            RateParam::Gamma => self.gamma = Some(value),
            RateParam::Mu => self.mu = value,
        }
    }

    /// Basic reproduction number `beta * N / mu`.
    pub fn r0(&self, population: usize) -> f64 {
        self.beta * population as f64 / self.mu
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta = {}", self.beta));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu = {}", self.mu));
        }
        if model.uses_gamma() {
            match self.gamma {
                Some(g) if g >= 0.0 && g.is_finite() => {}
                other => return bad(format!("gamma = {other:?}")),
            }
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho = {}", self.rho));
        }
        if let Some(phi) = self.phi {
            if !(phi > 0.0 && phi.is_finite()) {
                return bad(format!("phi = {phi}"));
            }
        }
        if self.p_init.len() != model.n_states() {
            return bad(format!(
                "p_init has {} entries, model has {} states",
                self.p_init.len(),
                model.n_states()
            ));
        }
        if self.p_init.iter().any(|&p| !(p >= 0.0)) {
            return bad(format!("p_init = {:?}", self.p_init));
        }
        let total: f64 = self.p_init.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("p_init sums to {total}"));
        }
        Ok(())
    }
}

/// Gamma prior in the shape/rate parameterization (mean `shape / rate`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Self {
        GammaPrior { shape, rate }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln()
            - self.rate * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl BetaPrior {
    pub fn new(a: f64, b: f64) -> Self {
        BetaPrior { a, b }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        ln_gamma(self.a + self.b) - ln_gamma(self.a) - ln_gamma(self.b)
            + xlogy(self.a - 1.0, x)
            + xlogy(self.b - 1.0, 1.0 - x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPrior {
    pub alpha: Vec<f64>,
}

impl DirichletPrior {
    pub fn log_density(&self, p: &[f64]) -> f64 {
        if p.len() != self.alpha.len() {
            return f64::NEG_INFINITY;
        }
        let a0: f64 = self.alpha.iter().sum();
        let mut out = ln_gamma(a0);
        for (&a, &x) in self.alpha.iter().zip(p) {
            out += xlogy(a - 1.0, x) - ln_gamma(a);
        }
        out
    }
}

/// Priors for every model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub beta: GammaPrior,
    pub gamma: Option<GammaPrior>,
    pub mu: GammaPrior,
    pub rho: BetaPrior,
    pub phi: Option<GammaPrior>,
    pub p_init: DirichletPrior,
}

impl PriorSpec {
    pub fn rate_prior(&self, p: RateParam) -> Option<GammaPrior> {
        match p {
            RateParam::Beta => Some(self.beta),
            RateParam::Gamma => self.gamma,
            RateParam::Mu => Some(self.mu),
        }
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        let mut all = vec![self.beta.shape, self.beta.rate, self.mu.shape, self.mu.rate];
        all.extend([self.rho.a, self.rho.b]);
        if model.uses_gamma() {
            let g = self.gamma.ok_or_else(|| {
                Error::InvalidParameter(format!("{} needs a gamma prior", model.kind))
            })?;
            all.extend([g.shape, g.rate]);
        }
        if let Some(phi) = self.phi {
            all.extend([phi.shape, phi.rate]);
        }
        all.extend(self.p_init.alpha.iter().copied());
        if self.p_init.alpha.len() != model.n_states() {
            return Err(Error::InvalidParameter(format!(
                "Dirichlet prior has {} entries, model has {} states",
                self.p_init.alpha.len(),
                model.n_states()
            )));
        }
        if all.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::InvalidParameter("hyperparameters must be positive".into()));
        }
        Ok(())
    }

    /// Joint log prior density of `params`.
    pub fn log_density(&self, model: &ModelSpec, params: &Params) -> f64 {
        let mut lp = self.beta.log_density(params.beta) + self.mu.log_density(params.mu);
        if model.uses_gamma() {
            if let (Some(g), Some(x)) = (self.gamma, params.gamma) {
                lp += g.log_density(x);
            }
        }
        lp += self.rho.log_density(params.rho);
        if let (Some(prior), Some(phi)) = (self.phi, params.phi) {
            lp += prior.log_density(phi);
        }
        lp + self.p_init.log_density(&params.p_init)
    }
}

/// `x * ln(y)` with the convention `0 * ln(0) = 0`.
pub fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}
