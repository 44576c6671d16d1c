//! Parameter updates: conjugate draws for rates, detection probability and
//! initial-state probabilities, and a random-walk update of the
//! negative-binomial emission parameters.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01};

use crate::emission::negbin_logpmf;
use crate::error::{Error, Result};
use crate::likelihood::SufficientStats;
use crate::model::ModelSpec;
use crate::params::{BetaPrior, GammaPrior, Params, PriorSpec};
use crate::rwmh::AdaptiveWalk;

/// `ln G` for `G ~ Gamma(shape, 1)`, accurate for very small shapes where
/// `G` itself underflows.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        return g.ln();
    }
    // G(a) = G(a + 1) U^{1/a}.
    let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
    let u: f64 = Open01.sample(rng);
    g.ln() + u.ln() / shape
}

/// Gamma draw in the shape/rate parameterization, kept strictly positive.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    (sample_log_gamma(shape, rng) - rate.ln()).exp().max(f64::MIN_POSITIVE)
}

pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = alpha.iter().map(|&a| sample_log_gamma(a, rng)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let la = sample_log_gamma(a, rng);
    let lb = sample_log_gamma(b, rng);
    // a / (a + b) = 1 / (1 + exp(lb - la)).
    1.0 / (1.0 + (lb - la).exp())
}

/// One draw of every parameter from its prior.
pub fn sample_prior<R: Rng + ?Sized>(priors: &PriorSpec, model: &ModelSpec, rng: &mut R) -> Params {
    let gamma_draw = |g: GammaPrior, rng: &mut R| sample_gamma(g.shape, g.rate, rng);
    let beta = gamma_draw(priors.beta, rng);
    let gamma = if model.uses_gamma() { priors.gamma.map(|g| gamma_draw(g, rng)) } else { None };
    let mu = gamma_draw(priors.mu, rng);
    let rho = sample_beta(priors.rho.a, priors.rho.b, rng);
    let phi = priors.phi.map(|g| gamma_draw(g, rng));
    let p_init = sample_dirichlet(&priors.p_init.alpha, rng);
    Params { beta, gamma, mu, rho, phi, p_init }
}

/// Full conditional of the rate driving transition `k`.
pub fn rate_posterior(prior: GammaPrior, stats: &SufficientStats, k: usize) -> GammaPrior {
    GammaPrior::new(prior.shape + stats.counts[k] as f64, prior.rate + stats.exposure[k])
}

/// Redraws every rate parameter from its Gamma full conditional.
pub fn update_rates<R: Rng + ?Sized>(
    stats: &SufficientStats,
    model: &ModelSpec,
    priors: &PriorSpec,
    params: &mut Params,
    rng: &mut R,
) {
    for (k, tr) in model.transitions.iter().enumerate() {
        let p = tr.form.param();
        let prior = priors.rate_prior(p).expect("validated priors cover every rate");
        let post = rate_posterior(prior, stats, k);
        params.set_rate(p, sample_gamma(post.shape, post.rate, rng));
    }
}

/// Beta full conditional of the detection probability under binomial
/// sampling, given latent prevalence at the observation times.
pub fn rho_posterior(prevalence: &[u64], counts: &[u64], prior: BetaPrior) -> Result<BetaPrior> {
    let (mut a, mut b) = (prior.a, prior.b);
    for (l, (&i, &y)) in prevalence.iter().zip(counts).enumerate() {
        if i < y {
            return Err(Error::InvalidHistory(format!(
                "observation {l}: {y} detected but only {i} infected"
            )));
        }
        a += y as f64;
        b += (i - y) as f64;
    }
    Ok(BetaPrior::new(a, b))
}

pub fn update_rho_binomial<R: Rng + ?Sized>(
    prevalence: &[u64],
    counts: &[u64],
    prior: BetaPrior,
    rng: &mut R,
) -> Result<f64> {
    let post = rho_posterior(prevalence, counts, prior)?;
    Ok(sample_beta(post.a, post.b, rng))
}

pub fn update_p_init<R: Rng + ?Sized>(initial_counts: &[usize], alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let post: Vec<f64> = alpha.iter().zip(initial_counts).map(|(a, &n)| a + n as f64).collect();
    sample_dirichlet(&post, rng)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Log posterior of `(logit rho, log phi)` up to a constant, including the
/// Jacobian of the transformation.
pub fn rho_phi_log_target(
    z: &[f64],
    prevalence: &[u64],
    counts: &[u64],
    rho_prior: BetaPrior,
    phi_prior: GammaPrior,
) -> f64 {
    let rho = expit(z[0]);
    let phi = z[1].exp();
    if !(rho > 0.0 && rho < 1.0 && phi > 0.0 && phi.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let ll: f64 = prevalence
        .iter()
        .zip(counts)
        .map(|(&i, &y)| negbin_logpmf(y, rho * i as f64, phi))
        .sum();
    ll + rho_prior.log_density(rho) + phi_prior.log_density(phi) + (rho * (1.0 - rho)).ln() + z[1]
}

/// One random-walk update of `(rho, phi)` on `(logit rho, log phi)`.
/// Returns whether the move was accepted.
pub fn update_rho_phi_rwmh<R: Rng + ?Sized>(
    prevalence: &[u64],
    counts: &[u64],
    params: &mut Params,
    priors: &PriorSpec,
    walk: &mut AdaptiveWalk,
    rng: &mut R,
) -> Result<bool> {
    let phi_prior = priors
        .phi
        .ok_or_else(|| Error::InvalidParameter("negative-binomial emission needs a phi prior".into()))?;
    let phi = params.phi.ok_or_else(|| Error::InvalidParameter("phi missing".into()))?;
    let cur = [logit(params.rho), phi.ln()];
    let prop = walk.propose(&cur, rng);
    let lt_cur = rho_phi_log_target(&cur, prevalence, counts, priors.rho, phi_prior);
    let lt_new = rho_phi_log_target(&prop, prevalence, counts, priors.rho, phi_prior);
    let u: f64 = rng.random();
    let accept = lt_new > f64::NEG_INFINITY && (lt_cur == f64::NEG_INFINITY || u.ln() < lt_new - lt_cur);
    if accept {
        params.rho = expit(prop[0]);
        params.phi = Some(prop[1].exp());
        walk.record(true, &prop);
    } else {
        walk.record(false, &cur);
    }
    Ok(accept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Event, PopulationHistory};
    use crate::likelihood::sufficient_statistics;
    use crate::params::DirichletPrior;
    use crate::rwmh::RandomWalk;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn mean_sd(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    fn priors() -> PriorSpec {
        PriorSpec {
            beta: GammaPrior::new(0.3, 1000.0),
            gamma: None,
            mu: GammaPrior::new(1.0, 8.0),
            rho: BetaPrior::new(2.0, 7.0),
            phi: Some(GammaPrior::new(1.0, 0.1)),
            p_init: DirichletPrior { alpha: vec![90.0, 2.0, 5.0] },
        }
    }

    #[test]
    fn recovery_posterior_shape_and_rate() {
        // Two recoveries and 10 units of infectious exposure under Gamma(1, 8).
        let h = PopulationHistory::new(
            3,
            (0.0, 6.0),
            vec![1, 1, 2],
            vec![
                Event { time: 4.5, subject: 0, from: 1, to: 2 },
                Event { time: 5.5, subject: 1, from: 1, to: 2 },
            ],
        )
        .unwrap();
        let stats = sufficient_statistics(&h, &crate::model::ModelSpec::sir());
        let post = rate_posterior(GammaPrior::new(1.0, 8.0), &stats, 1);
        assert_eq!(post.shape, 3.0);
        assert_eq!(post.rate, 18.0);
    }

    #[test]
    fn rho_table_substitution() {
        let post = rho_posterior(&[10, 10], &[2, 3], BetaPrior::new(1.0, 1.0)).unwrap();
        assert_eq!((post.a, post.b), (6.0, 16.0));
        assert_eq!(rho_posterior(&[], &[], BetaPrior::new(2.0, 7.0)).unwrap(), BetaPrior::new(2.0, 7.0));
        assert!(rho_posterior(&[1], &[2], BetaPrior::new(1.0, 1.0)).is_err());
    }

    #[test]
    fn rate_posterior_mean() {
        let model = crate::model::ModelSpec::sir();
        let stats = SufficientStats {
            counts: vec![40, 35],
            exposure: vec![120_000.0, 260.0],
            log_contact: 0.0,
            initial: vec![0; 3],
        };
        let pr = priors();
        let mut params = Params { beta: 1.0, gamma: None, mu: 1.0, rho: 0.5, phi: None, p_init: vec![1.0 / 3.0; 3] };
        let mut r = rng(1);
        let reps = 100_000;
        let (mut b, mut m) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
        for _ in 0..reps {
            update_rates(&stats, &model, &pr, &mut params, &mut r);
            b.push(params.beta);
            m.push(params.mu);
        }
        for (draws, a, rate) in [(&b, 0.3 + 40.0, 1000.0 + 120_000.0), (&m, 1.0 + 35.0, 8.0 + 260.0)] {
            let (mean, sd) = mean_sd(draws);
            assert!((mean - a / rate).abs() < 3.0 * sd / (reps as f64).sqrt());
        }
    }

    /// One-sample Kolmogorov-Smirnov distance against a CDF.
    fn ks(mut x: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        x.sort_by(f64::total_cmp);
        let n = x.len() as f64;
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = cdf(v);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn empty_statistics_give_prior_draws() {
        let model = crate::model::ModelSpec::sir();
        let stats = SufficientStats { counts: vec![0, 0], exposure: vec![0.0, 0.0], log_contact: 0.0, initial: vec![0; 3] };
        let pr = priors();
        let mut params = Params { beta: 1.0, gamma: None, mu: 1.0, rho: 0.5, phi: None, p_init: vec![1.0 / 3.0; 3] };
        let mut r = rng(2);
        let reps = 100_000;
        let mut mu = Vec::with_capacity(reps);
        let mut rho = Vec::with_capacity(reps);
        for _ in 0..reps {
            update_rates(&stats, &model, &pr, &mut params, &mut r);
            mu.push(params.mu);
            rho.push(update_rho_binomial(&[], &[], pr.rho, &mut r).unwrap());
        }
        // Gamma(1, 8) is exponential; Beta(2, 7) has a polynomial CDF.
        assert!(ks(mu, |x| 1.0 - (-8.0 * x).exp()) < 0.02);
        let beta27 = |x: f64| {
            // Regularized incomplete beta for integer parameters.
            let mut s = 0.0;
            for j in 2..=8u32 {
                let c = (1..=8u32).product::<u32>() as f64
                    / ((1..=j).product::<u32>() as f64 * (1..=(8 - j)).product::<u32>() as f64);
                s += c * x.powi(j as i32) * (1.0 - x).powi((8 - j) as i32);
            }
            s
        };
        assert!(ks(rho, beta27) < 0.02);
    }

    #[test]
    fn dirichlet_with_tiny_shapes() {
        let mut r = rng(3);
        let alpha = [100.0, 0.1, 0.4, 0.01];
        let reps = 100_000;
        let mut mean = [0.0; 4];
        for _ in 0..reps {
            let p = sample_dirichlet(&alpha, &mut r);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
            for i in 0..4 {
                mean[i] += p[i] / reps as f64;
            }
        }
        let a0: f64 = alpha.iter().sum();
        for i in 0..4 {
            let m = alpha[i] / a0;
            let sd = (m * (1.0 - m) / (a0 + 1.0)).sqrt();
            assert!((mean[i] - m).abs() < 3.0 * sd / (reps as f64).sqrt(), "component {i}");
        }
    }

    #[test]
    fn p_init_posterior() {
        let mut r = rng(4);
        let reps = 100_000;
        let mut mean = [0.0; 3];
        for _ in 0..reps {
            let p = update_p_init(&[3, 1, 0], &[1.0, 1.0, 1.0], &mut r);
            for i in 0..3 {
                mean[i] += p[i] / reps as f64;
            }
        }
        // Dirichlet(4, 2, 1).
        for (i, a) in [4.0f64, 2.0, 1.0].iter().enumerate() {
            let m = a / 7.0;
            let sd = (m * (1.0 - m) / 8.0).sqrt();
            assert!((mean[i] - m).abs() < 3.0 * sd / (reps as f64).sqrt());
        }
    }

    #[test]
    fn zero_variance_walk_stays_put() {
        let pr = priors();
        let mut params = Params { beta: 1.0, gamma: None, mu: 1.0, rho: 0.4, phi: Some(3.0), p_init: vec![1.0 / 3.0; 3] };
        let mut walk = AdaptiveWalk::new(RandomWalk::new(&[0.0; 4], 2).unwrap(), 0.3, 0);
        let mut r = rng(5);
        for _ in 0..20 {
            assert!(update_rho_phi_rwmh(&[10, 20], &[4, 9], &mut params, &pr, &mut walk, &mut r).unwrap());
            assert!((params.rho - 0.4).abs() < 1e-15);
            assert!((params.phi.unwrap() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn emission_constants_cancel() {
        // The ratio with full pmfs equals the ratio after dropping terms that
        // do not involve (rho, phi).
        let pr = priors();
        let prev = [10u64, 25, 3];
        let counts = [2u64, 7, 0];
        let phi_prior = pr.phi.unwrap();
        let z1 = [0.2, 1.1];
        let z2 = [-0.4, 0.3];
        let full = rho_phi_log_target(&z2, &prev, &counts, pr.rho, phi_prior)
            - rho_phi_log_target(&z1, &prev, &counts, pr.rho, phi_prior);
        let reduced = |z: &[f64]| {
            let rho = expit(z[0]);
            let phi = z[1].exp();
            let mut s = 0.0;
            for (&i, &y) in prev.iter().zip(&counts) {
                let m = rho * i as f64;
                let y = y as f64;
                s += crate::params::ln_gamma(y + phi) - crate::params::ln_gamma(phi)
                    + phi * (phi / (phi + m)).ln()
                    + crate::params::xlogy(y, m / (phi + m));
            }
            s + (2.0 - 1.0) * rho.ln() + (7.0 - 1.0) * (1.0 - rho).ln() - 0.1 * phi
                + (rho * (1.0 - rho)).ln()
                + z[1]
        };
        assert!((full - (reduced(&z2) - reduced(&z1))).abs() < 1e-12);
    }
}
