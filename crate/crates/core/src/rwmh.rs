//! Gaussian random-walk Metropolis proposals with pilot-phase adaptation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive semi-definite matrix
/// (row-major, `d x d`). Zero pivots give zero columns.
pub fn cholesky_psd(cov: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    let scale = cov.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    for j in 0..d {
        if (cov[j * d + j] - cov[j * d + j]).is_nan() {
            return Err(Error::NotPositiveDefinite);
        }
        let mut diag = cov[j * d + j];
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if diag < -tol {
            return Err(Error::NotPositiveDefinite);
        }
        if diag <= tol {
            // Degenerate direction: the rest of the column must vanish too.
            for i in j + 1..d {
                let mut s = cov[i * d + j];
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                if s.abs() > 1e-8 * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::NotPositiveDefinite);
                }
            }
            continue;
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let mut s = cov[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = s / ljj;
        }
    }
    for i in 0..d {
        for j in 0..i {
            if (cov[i * d + j] - cov[j * d + i]).abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    Ok(l)
}

/// Random-walk proposal `x + L z` with fixed covariance `L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalk {
    dim: usize,
    chol: Vec<f64>,
}

impl RandomWalk {
    pub fn new(cov: &[f64], dim: usize) -> Result<Self> {
        if cov.len() != dim * dim {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(RandomWalk { dim, chol: cholesky_psd(cov, dim)? })
    }

    pub fn diagonal(sd: &[f64]) -> Result<Self> {
        let d = sd.len();
        let mut cov = vec![0.0; d * d];
        for (i, s) in sd.iter().enumerate() {
            cov[i * d + i] = s * s;
        }
        Self::new(&cov, d)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: &[f64], scale: f64, rng: &mut R) -> Vec<f64> {
        let d = self.dim;
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        (0..d)
            .map(|i| x[i] + scale * (0..=i).map(|k| self.chol[i * d + k] * z[k]).sum::<f64>())
            .collect()
    }
}

/// Random walk whose scale and covariance adapt during a pilot phase and
/// are frozen afterwards.
///
/// During the pilot the log-scale follows a Robbins-Monro recursion toward
/// `target` acceptance and, once enough draws exist, the covariance tracks
/// the empirical covariance of the chain.
#[derive(Debug, Clone)]
pub struct AdaptiveWalk {
    walk: RandomWalk,
    initial: RandomWalk,
    target: f64,
    pilot: u64,
    step: u64,
    log_scale: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    accepted: u64,
    proposed: u64,
}

impl AdaptiveWalk {
    pub fn new(initial: RandomWalk, target: f64, pilot: u64) -> Self {
        let d = initial.dim();
        AdaptiveWalk {
            walk: initial.clone(),
            initial,
            target,
            pilot,
            step: 0,
            log_scale: 0.0,
            mean: vec![0.0; d],
            m2: vec![0.0; d * d],
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn is_adapting(&self) -> bool {
        self.step < self.pilot
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        self.walk.propose(x, self.scale(), rng)
    }

    /// Records the outcome of one proposal and the state after it.
    pub fn record(&mut self, accepted: bool, state: &[f64]) {
        self.proposed += 1;
        self.accepted += accepted as u64;
        if !self.is_adapting() {
            return;
        }
        self.step += 1;
        let n = self.step as f64;
        let d = self.walk.dim();
        let delta: Vec<f64> = (0..d).map(|i| state[i] - self.mean[i]).collect();
        for i in 0..d {
            self.mean[i] += delta[i] / n;
        }
        for i in 0..d {
            for j in 0..d {
                self.m2[i * d + j] += delta[i] * (state[j] - self.mean[j]);
            }
        }
        let gain = 1.0 / n.sqrt().max(1.0);
        self.log_scale += gain * ((accepted as u8 as f64) - self.target);
        self.log_scale = self.log_scale.clamp(-20.0, 10.0);
        let refresh = self.step >= 200 && (self.step % 100 == 0 || self.step == self.pilot);
        if refresh {
            let emp: Vec<f64> = self.m2.iter().map(|x| x / (n - 1.0)).collect();
            let mut cov = emp.clone();
            let mut jitter = 0.0f64;
            for i in 0..d {
                jitter = jitter.max(emp[i * d + i]);
            }
            for i in 0..d {
                cov[i * d + i] += 1e-10 * jitter.max(1e-300);
            }
            // Scale chosen for a Gaussian target, then tuned by log_scale.
            let s2 = 2.38 * 2.38 / d as f64;
            for x in cov.iter_mut() {
                *x *= s2;
            }
            if let Ok(w) = RandomWalk::new(&cov, d) {
                if jitter > 0.0 {
                    if self.walk == self.initial {
                        self.log_scale = 0.0;
                    }
                    self.walk = w;
                }
            }
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.accepted, self.proposed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cholesky_round_trip() {
        let cov = [4.0, 2.0, 0.6, 2.0, 2.0, 0.5, 0.6, 0.5, 3.0];
        let l = cholesky_psd(&cov, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((s - cov[i * 3 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        assert!(cholesky_psd(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
        assert!(cholesky_psd(&[-1.0, 0.0, 0.0, 1.0], 2).is_err());
        assert!(cholesky_psd(&[1.0, 0.5, 0.0, 1.0], 2).is_err());
    }

    #[test]
    fn zero_covariance_never_moves() {
        let w = RandomWalk::new(&[0.0; 4], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(w.propose(&[0.3, -1.0], 1.0, &mut rng), vec![0.3, -1.0]);
        }
    }

    #[test]
    fn adapts_toward_target_acceptance() {
        // Standard normal target in two dimensions.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = AdaptiveWalk::new(RandomWalk::diagonal(&[10.0, 10.0]).unwrap(), 0.234, 20_000);
        let logp = |x: &[f64]| -0.5 * (x[0] * x[0] + x[1] * x[1]);
        let mut x = vec![0.0, 0.0];
        for _ in 0..40_000 {
            let y = a.propose(&x, &mut rng);
            let acc = rng.random::<f64>().ln() < logp(&y) - logp(&x);
            if acc {
                x = y;
            }
            a.record(acc, &x);
        }
        let rate = a.acceptance_rate();
        assert!((0.15..0.5).contains(&rate), "acceptance {rate}");
    }
}
