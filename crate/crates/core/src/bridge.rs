//! Single-subject paths of a homogeneous chain: unconditional forward
//! simulation and endpoint-conditioned bridges.
//!
//! Paths are returned as jump lists with absolute times strictly inside
//! `(start, end)`. Draws whose jump times collapse onto an endpoint or onto
//! each other in floating point are discarded and redrawn.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};

use crate::ctmc::{Decomposition, SquareMat, MAX_STATES};
use crate::error::{Error, Result};
use crate::history::Jump;
use crate::params::ln_gamma;

pub const DEFAULT_RETRY_BUDGET: u64 = 1_000_000;
/// Target mass of the truncated jump-count series.
pub const UNIF_MASS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BridgeSampler {
    ModifiedRejection,
    Uniformization,
}

impl FromStr for BridgeSampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mr" | "modified_rejection" | "modified-rejection" | "rejection" => Ok(BridgeSampler::ModifiedRejection),
            "unif" | "uniformization" => Ok(BridgeSampler::Uniformization),
            other => Err(Error::InvalidParameter(format!("unknown bridge sampler '{other}'"))),
        }
    }
}

/// A chain with rate matrix `rate` started in `from` at `start` and
/// conditioned to be in `to` at `end`.
#[derive(Debug, Clone, Copy)]
pub struct BridgeProblem<'a> {
    pub rate: &'a SquareMat,
    pub start: f64,
    pub end: f64,
    pub from: usize,
    pub to: usize,
    /// `P_{from,to}(end - start)` if already known.
    pub endpoint_prob: Option<f64>,
}

impl<'a> BridgeProblem<'a> {
    pub fn new(rate: &'a SquareMat, start: f64, end: f64, from: usize, to: usize) -> Self {
        BridgeProblem { rate, start, end, from, to, endpoint_prob: None }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    fn endpoint_prob(&self) -> f64 {
        self.endpoint_prob.unwrap_or_else(|| {
            Decomposition::new(self.rate).transition_matrix(self.length())[(self.from, self.to)]
        })
    }
}

fn exit_rate(q: &SquareMat, s: usize) -> f64 {
    -q[(s, s)]
}

/// Picks a destination from `s` with probability proportional to the
/// off-diagonal rates.
fn choose_destination<R: Rng + ?Sized>(q: &SquareMat, s: usize, rng: &mut R) -> usize {
    let total = exit_rate(q, s);
    let mut u = rng.random::<f64>() * total;
    let mut last = s;
    for x in 0..q.dim() {
        if x != s && q[(s, x)] > 0.0 {
            last = x;
            u -= q[(s, x)];
            if u < 0.0 {
                return x;
            }
        }
    }
    last
}

/// Forward-simulates on `[start, end]` from `state`, appending jumps.
fn forward_from<R: Rng + ?Sized>(
    q: &SquareMat,
    mut state: usize,
    mut t: f64,
    end: f64,
    jumps: &mut Vec<Jump>,
    rng: &mut R,
) -> usize {
    loop {
        let rate = exit_rate(q, state);
        if !(rate > 0.0) {
            return state;
        }
        let e: f64 = Exp1.sample(rng);
        t += e / rate;
        if t >= end {
            return state;
        }
        state = choose_destination(q, state, rng);
        jumps.push(Jump { time: t, to: state });
    }
}

fn strictly_inside(jumps: &[Jump], start: f64, end: f64) -> bool {
    let mut last = start;
    for j in jumps {
        if !(j.time > last && j.time < end) {
            return false;
        }
        last = j.time;
    }
    true
}

/// Unconditional path on `[start, end]` from `state` (Gillespie).
pub fn forward_simulate_subject<R: Rng + ?Sized>(
    q: &SquareMat,
    state: usize,
    start: f64,
    end: f64,
    rng: &mut R,
) -> Vec<Jump> {
    let mut jumps = Vec::new();
    loop {
        jumps.clear();
        forward_from(q, state, start, end, &mut jumps, rng);
        if strictly_inside(&jumps, start, end) {
            return jumps;
        }
    }
}

/// Inverse-CDF draw of the first jump time given that a jump happens
/// before `t`, for exit rate `exit`.
pub fn sample_first_jump_conditional(exit: f64, t: f64, u: f64) -> Result<f64> {
    if !(exit > 0.0) {
        return Err(Error::NoExit);
    }
    // -ln(1 - u (1 - e^{-t exit})) / exit, in a cancellation-free form.
    Ok(-(u * (-t * exit).exp_m1()).ln_1p() / exit)
}

/// Modified rejection sampling. Fails with `RetryBudgetExceeded` after
/// `budget` rejected proposals.
pub fn modified_rejection_bridge<R: Rng + ?Sized>(
    p: &BridgeProblem<'_>,
    budget: u64,
    rng: &mut R,
) -> Result<Vec<Jump>> {
    let q = p.rate;
    let (a, b) = (p.from, p.to);
    let len = p.length();
    if a != b && !(p.endpoint_prob() > 0.0) {
        return Err(Error::ImpossibleBridge { from: a, to: b });
    }
    if a == b && !(exit_rate(q, a) > 0.0) {
        return Ok(Vec::new());
    }
    let mut jumps = Vec::new();
    for _ in 0..budget {
        jumps.clear();
        let end_state = if a == b {
            forward_from(q, a, p.start, p.end, &mut jumps, rng)
        } else {
            let u: f64 = Open01.sample(rng);
            let tau = sample_first_jump_conditional(exit_rate(q, a), len, u)?;
            let x = choose_destination(q, a, rng);
            let t = p.start + tau;
            jumps.push(Jump { time: t, to: x });
            forward_from(q, x, t, p.end, &mut jumps, rng)
        };
        if end_state == b && strictly_inside(&jumps, p.start, p.end) {
            return Ok(jumps);
        }
    }
    Err(Error::RetryBudgetExceeded { attempts: budget })
}

/// Uniformization data for one bridge problem.
struct Uniformized {
    mu_star: f64,
    r: SquareMat,
    /// `cols[k][x] = (R^k)_{x, b}`.
    cols: Vec<[f64; MAX_STATES]>,
    /// Unnormalized jump-count weights `Pois(n; mu* T) (R^n)_{ab}`.
    weights: Vec<f64>,
}

fn uniformize(p: &BridgeProblem<'_>) -> Uniformized {
    let q = p.rate;
    let n = q.dim();
    let mu_star = (0..n).map(|s| exit_rate(q, s)).fold(0.0, f64::max);
    let mut r = SquareMat::identity(n);
    if mu_star > 0.0 {
        r = r.add(&q.scale(1.0 / mu_star));
    }
    let lam = mu_star * p.length();
    let target = (1.0 - UNIF_MASS_TOL) * p.endpoint_prob();
    let cap = (10.0 * lam + 50.0).ceil() as usize;
    let mut col = [0.0; MAX_STATES];
    col[p.to] = 1.0;
    let mut cols = vec![col];
    let mut weights = Vec::new();
    let mut cum = 0.0;
    for k in 0..=cap {
        if k > 0 {
            let next = r.mul_vec(&cols[k - 1]);
            cols.push(next);
        }
        let log_pois = if lam > 0.0 {
            -lam + k as f64 * lam.ln() - ln_gamma(k as f64 + 1.0)
        } else if k == 0 {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        let w = log_pois.exp() * cols[k][p.from];
        weights.push(w);
        cum += w;
        if cum >= target && cum > 0.0 {
            break;
        }
        if lam == 0.0 {
            break;
        }
    }
    Uniformized { mu_star, r, cols, weights }
}

/// Jump-count pmf (virtual jumps included) of the uniformized bridge,
/// normalized by `P_ab(T)` and truncated as the sampler truncates it.
pub fn uniformization_jump_pmf(p: &BridgeProblem<'_>) -> Vec<f64> {
    let pab = p.endpoint_prob();
    uniformize(p).weights.iter().map(|w| w / pab).collect()
}

pub fn uniformization_bridge<R: Rng + ?Sized>(p: &BridgeProblem<'_>, rng: &mut R) -> Result<Vec<Jump>> {
    let u = uniformize(p);
    let total: f64 = u.weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ImpossibleBridge { from: p.from, to: p.to });
    }
    if u.mu_star == 0.0 {
        return Ok(Vec::new());
    }
    let len = p.length();
    loop {
        let mut x = rng.random::<f64>() * total;
        let mut count = u.weights.len() - 1;
        for (k, w) in u.weights.iter().enumerate() {
            x -= w;
            if x < 0.0 {
                count = k;
                break;
            }
        }
        let mut times: Vec<f64> = (0..count).map(|_| p.start + rng.random::<f64>() * len).collect();
        times.sort_by(f64::total_cmp);
        let mut jumps = Vec::new();
        let mut state = p.from;
        for (i, &t) in times.iter().enumerate() {
            let rest = &u.cols[count - i - 1];
            let denom = u.cols[count - i][state];
            let mut v = rng.random::<f64>() * denom;
            let mut next = state;
            for y in 0..p.rate.dim() {
                let m = u.r[(state, y)] * rest[y];
                if m > 0.0 {
                    next = y;
                    v -= m;
                    if v < 0.0 {
                        break;
                    }
                }
            }
            if next != state {
                jumps.push(Jump { time: t, to: next });
                state = next;
            }
        }
        if state == p.to && strictly_inside(&jumps, p.start, p.end) {
            return Ok(jumps);
        }
    }
}

/// Draws a bridge with the chosen sampler; modified rejection that runs out
/// of retries hands over to uniformization.
pub fn sample_bridge<R: Rng + ?Sized>(
    p: &BridgeProblem<'_>,
    sampler: BridgeSampler,
    budget: u64,
    rng: &mut R,
) -> Result<Vec<Jump>> {
    match sampler {
        BridgeSampler::Uniformization => uniformization_bridge(p, rng),
        BridgeSampler::ModifiedRejection => match modified_rejection_bridge(p, budget, rng) {
            Err(Error::RetryBudgetExceeded { .. }) => uniformization_bridge(p, rng),
            other => other,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sir_q(bi: f64, mu: f64) -> SquareMat {
        SquareMat::from_rows(&[vec![-bi, bi, 0.0], vec![0.0, -mu, mu], vec![0.0, 0.0, 0.0]])
    }

    fn two_state(l: f64) -> SquareMat {
        SquareMat::from_rows(&[vec![-l, l], vec![l, -l]])
    }

    fn check_path(q: &SquareMat, p: &BridgeProblem<'_>, jumps: &[Jump]) {
        assert!(strictly_inside(jumps, p.start, p.end));
        let mut s = p.from;
        for j in jumps {
            assert!(q[(s, j.to)] > 0.0 && j.to != s);
            s = j.to;
        }
        assert_eq!(s, p.to);
    }

    #[test]
    fn first_jump_formula() {
        let t = sample_first_jump_conditional(1.0, 1.0, 0.5).unwrap();
        assert!((t - 0.379885).abs() < 1e-6);
        assert!((t + (1.0 - 0.5 * (1.0 - (-1.0f64).exp())).ln()).abs() < 1e-15);
        assert!(sample_first_jump_conditional(2.0, 3.0, 1e-12).unwrap() < 1e-10);
        assert!((sample_first_jump_conditional(2.0, 3.0, 1.0 - 1e-15).unwrap() - 3.0).abs() < 1e-6);
        assert!(matches!(sample_first_jump_conditional(0.0, 1.0, 0.5), Err(Error::NoExit)));
    }

    #[test]
    fn absorbing_endpoints_are_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = sir_q(1.0, 2.0);
        let p = BridgeProblem::new(&q, 0.0, 1.0, 2, 2);
        assert!(modified_rejection_bridge(&p, 1, &mut rng).unwrap().is_empty());
        assert!(uniformization_bridge(&p, &mut rng).unwrap().is_empty());
        assert!(forward_simulate_subject(&q, 2, 0.0, 5.0, &mut rng).is_empty());
        let z = SquareMat::zeros(3);
        let p = BridgeProblem::new(&z, 0.0, 1.0, 0, 0);
        assert_eq!(uniformization_jump_pmf(&p), vec![1.0]);
    }

    #[test]
    fn impossible_bridge_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = sir_q(1.0, 2.0);
        let p = BridgeProblem::new(&q, 0.0, 1.0, 2, 0);
        assert!(matches!(modified_rejection_bridge(&p, 10, &mut rng), Err(Error::ImpossibleBridge { .. })));
        assert!(matches!(uniformization_bridge(&p, &mut rng), Err(Error::ImpossibleBridge { .. })));
    }

    #[test]
    fn zero_jumps_impossible_when_endpoints_differ() {
        let q = sir_q(1.0, 2.0);
        let pmf = uniformization_jump_pmf(&BridgeProblem::new(&q, 0.0, 1.0, 0, 2));
        assert_eq!(pmf[0], 0.0);
        assert_eq!(pmf[1], 0.0);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_state_jump_count_series() {
        // Brute-force: R = [[0,1],[1,0]], mu* = 1, so (R^n)_{00} = 1{n even}.
        let q = two_state(1.0);
        let p = BridgeProblem::new(&q, 0.0, 1.0, 0, 0);
        let pmf = uniformization_jump_pmf(&p);
        let p00 = 0.5 * (1.0 + (-2.0f64).exp());
        let mut fact = 1.0;
        for n in 0..=20usize {
            if n > 0 {
                fact *= n as f64;
            }
            let want = if n % 2 == 0 { (-1.0f64).exp() / fact / p00 } else { 0.0 };
            let got = pmf.get(n).copied().unwrap_or(0.0);
            assert!((got - want).abs() < 1e-10, "n = {n}: {got} vs {want}");
        }
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn forward_first_jump_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (lambda, t, reps) = (0.8, 1.5, 100_000);
        let q = SquareMat::from_rows(&[vec![-lambda, lambda], vec![0.0, 0.0]]);
        let hits = (0..reps).filter(|_| !forward_simulate_subject(&q, 0, 0.0, t, &mut rng).is_empty()).count();
        let p = 1.0 - (-lambda * t).exp();
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((hits as f64 / reps as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn forward_end_state_matches_tpm() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = SquareMat::from_rows(&[vec![-0.7, 0.7], vec![1.3, -1.3]]);
        let reps = 100_000;
        let ends = (0..reps)
            .filter(|_| forward_simulate_subject(&q, 0, 2.0, 3.1, &mut rng).last().map_or(0, |j| j.to) == 1)
            .count();
        let p = Decomposition::new(&q).transition_matrix(1.1)[(0, 1)];
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((ends as f64 / reps as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn bridges_are_valid_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let qs = [
            sir_q(1.0, 2.0),
            SquareMat::from_rows(&[vec![-1.0, 1.0, 0.0], vec![0.0, -0.5, 0.5], vec![0.3, 0.0, -0.3]]),
        ];
        for q in &qs {
            for a in 0..3 {
                for b in 0..3 {
                    let p = BridgeProblem::new(q, 1.0, 3.0, a, b);
                    if !(p.endpoint_prob() > 0.0) {
                        continue;
                    }
                    for _ in 0..200 {
                        check_path(q, &p, &modified_rejection_bridge(&p, DEFAULT_RETRY_BUDGET, &mut rng).unwrap());
                        check_path(q, &p, &uniformization_bridge(&p, &mut rng).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn sir_single_jump_bridge_law() {
        // S -> I bridge with I -> R possible: the infection time has density
        // proportional to exp(-bi t) exp(-mu (T - t)).
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (bi, mu, t_len) = (1.0, 2.0, 1.0);
        let q = sir_q(bi, mu);
        let p = BridgeProblem::new(&q, 0.0, t_len, 0, 1);
        let reps = 50_000;
        let mut mean = 0.0;
        for _ in 0..reps {
            let j = modified_rejection_bridge(&p, DEFAULT_RETRY_BUDGET, &mut rng).unwrap();
            assert_eq!(j.len(), 1);
            mean += j[0].time / reps as f64;
        }
        // Density proportional to exp(c t) on [0, 1] with c = mu - bi = 1.
        let c: f64 = mu - bi;
        let want = (c.exp() * (c - 1.0) + 1.0) / (c * (c.exp() - 1.0));
        // c = 1: E[t^2] = (e - 2) / (e - 1).
        let e = 1f64.exp();
        let var = (e - 2.0) / (e - 1.0) - want * want;
        assert!((mean - want).abs() < 3.0 * (var / reps as f64).sqrt());
    }
}
