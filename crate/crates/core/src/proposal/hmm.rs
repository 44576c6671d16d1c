//! Forward filtering, backward sampling of one subject's states at the
//! observation times.

use rand::Rng;

use crate::ctmc::{SquareMat, MAX_STATES};

/// Samples `x_1..x_L` given initial probabilities, per-observation emission
/// log-weights `log_em[l][s]` and transition matrices `trans[l]` from
/// observation `l` to `l + 1`. Returns `None` when the data have zero
/// probability under every state sequence.
pub fn hmm_sample<R: Rng + ?Sized>(
    p_init: &[f64],
    log_em: &[[f64; MAX_STATES]],
    trans: &[SquareMat],
    rng: &mut R,
) -> Option<Vec<usize>> {
    let n = p_init.len();
    let l = log_em.len();
    debug_assert_eq!(trans.len() + 1, l);
    let mut alpha: Vec<[f64; MAX_STATES]> = Vec::with_capacity(l);
    for k in 0..l {
        let prior = if k == 0 {
            let mut v = [0.0; MAX_STATES];
            v[..n].copy_from_slice(p_init);
            v
        } else {
            trans[k - 1].vec_mul(&alpha[k - 1][..n])
        };
        let em = &log_em[k];
        let top = em[..n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return None;
        }
        let mut a = [0.0; MAX_STATES];
        let mut total = 0.0;
        for s in 0..n {
            a[s] = prior[s] * (em[s] - top).exp();
            total += a[s];
        }
        if !(total > 0.0) {
            return None;
        }
        for x in a.iter_mut().take(n) {
            *x /= total;
        }
        alpha.push(a);
    }
    let mut states = vec![0; l];
    states[l - 1] = draw(&alpha[l - 1][..n], rng);
    for k in (0..l - 1).rev() {
        let next = states[k + 1];
        let mut w = [0.0; MAX_STATES];
        for r in 0..n {
            w[r] = alpha[k][r] * trans[k][(r, next)];
        }
        states[k] = draw(&w[..n], rng);
    }
    Some(states)
}

/// Draws an index with probability proportional to `w`.
pub(crate) fn draw<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &x) in w.iter().enumerate() {
        if x > 0.0 {
            last = i;
            u -= x;
            if u < 0.0 {
                return i;
            }
        }
    }
    last
}
