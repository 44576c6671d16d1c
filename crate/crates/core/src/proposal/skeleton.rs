//! States at the breakpoints between two observation times.

use rand::Rng;

use super::hmm::draw;
use crate::ctmc::{SquareMat, MAX_STATES};
use crate::error::{Error, Result};

/// Fills `states[1..m]` given `states[0]` and `states[m]`, where `tpms[k]`
/// is the transition matrix from breakpoint `k` to `k + 1` and
/// `m = tpms.len()`. Monotone models with equal endpoints are constant.
pub fn skeleton_sample<R: Rng + ?Sized>(
    tpms: &[SquareMat],
    states: &mut [usize],
    monotone: bool,
    rng: &mut R,
) -> Result<()> {
    let m = tpms.len();
    debug_assert_eq!(states.len(), m + 1);
    let (first, last) = (states[0], states[m]);
    if m <= 1 {
        return Ok(());
    }
    if monotone && first == last {
        states.fill(first);
        return Ok(());
    }
    let n = tpms[0].dim();
    // v[k][x] is proportional to Pr(X at breakpoint m = last | X at
    // breakpoint k = x); each v[k] is rescaled to avoid underflow.
    let mut v = vec![[0.0; MAX_STATES]; m + 1];
    v[m][last] = 1.0;
    for k in (0..m).rev() {
        v[k] = tpms[k].mul_vec(&v[k + 1][..n]);
        let top = v[k][..n].iter().copied().fold(0.0, f64::max);
        if top > 0.0 {
            for x in v[k].iter_mut() {
                *x /= top;
            }
        }
    }
    for k in 1..m {
        let prev = states[k - 1];
        if !(v[k - 1][prev] > 0.0) {
            return Err(Error::InconsistentSkeleton { from: prev, to: last });
        }
        let mut w = [0.0; MAX_STATES];
        for x in 0..n {
            w[x] = tpms[k - 1][(prev, x)] * v[k][x];
        }
        states[k] = draw(&w[..n], rng);
    }
    if !(tpms[m - 1][(states[m - 1], last)] > 0.0) {
        return Err(Error::InconsistentSkeleton { from: states[m - 1], to: last });
    }
    Ok(())
}
