//! Chain diagnostics and latent-path summaries.

use crate::error::{Error, Result};
use crate::history::PopulationHistory;

pub const MIN_TRACE_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ess {
    pub ess: f64,
    /// The trace never moved; `ess` is then its length.
    pub constant: bool,
}

/// Effective sample size from the initial positive sequence estimator:
/// autocovariances are summed in adjacent pairs until a pair sum is no
/// longer positive.
pub fn ess(trace: &[f64]) -> Result<Ess> {
    let n = trace.len();
    if n < MIN_TRACE_LEN {
        return Err(Error::TraceTooShort { len: n, min: MIN_TRACE_LEN });
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = trace.iter().map(|x| x - mean).collect();
    let acov = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let g0 = acov(0);
    if !(g0 > 0.0) || trace.iter().all(|&x| x == trace[0]) {
        return Ok(Ess { ess: n as f64, constant: true });
    }
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = acov(2 * k) + acov(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    let tau = (-g0 + 2.0 * sum) / g0;
    Ok(Ess { ess: n as f64 / tau.max(1.0 / n as f64), constant: false })
}

/// Empirical quantile of sorted data, inverting the empirical distribution
/// function and averaging at its flat steps (Hyndman and Fan type 2). The
/// median of two values is their midpoint.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let np = q.clamp(0.0, 1.0) * n as f64;
    let j = np.round();
    if (np - j).abs() < 1e-9 * n as f64 {
        let j = j as usize;
        if j == 0 {
            return sorted[0];
        }
        if j >= n {
            return sorted[n - 1];
        }
        return 0.5 * (sorted[j - 1] + sorted[j]);
    }
    sorted[(np.ceil() as usize).clamp(1, n) - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentRow {
    pub time: f64,
    pub state: usize,
    /// One value per requested quantile level.
    pub quantiles: Vec<f64>,
}

/// Pointwise quantiles of compartment counts across snapshots, evaluated
/// at the left limit at each grid time.
pub fn summarize_latent(snapshots: &[&PopulationHistory], grid: &[f64], levels: &[f64]) -> Result<Vec<LatentRow>> {
    let first = snapshots.first().ok_or_else(|| Error::InvalidParameter("no snapshots to summarize".into()))?;
    let k = first.n_states();
    let mut values = vec![vec![Vec::with_capacity(snapshots.len()); k]; grid.len()];
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let sorted_grid: Vec<f64> = order.iter().map(|&i| grid[i]).collect();
    for h in snapshots {
        let counts = h.counts_at_sorted(&sorted_grid)?;
        for (pos, &g) in order.iter().enumerate() {
            for s in 0..k {
                values[g][s].push(counts[pos][s] as f64);
            }
        }
    }
    let mut rows = Vec::with_capacity(grid.len() * k);
    for (g, per_state) in values.iter_mut().enumerate() {
        for (s, v) in per_state.iter_mut().enumerate() {
            v.sort_by(f64::total_cmp);
            rows.push(LatentRow { time: grid[g], state: s, quantiles: levels.iter().map(|&q| quantile_sorted(v, q)).collect() });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::Event;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn iid_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = ess(&x).unwrap();
        assert!(!e.constant);
        assert!((8e3..=1.2e4).contains(&e.ess), "{}", e.ess);
    }

    #[test]
    fn ar1() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = 0.9;
        let n = 100_000;
        let mut x = Vec::with_capacity(n);
        let mut v: f64 = 0.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            v = phi * v + z;
            x.push(v);
        }
        let expected = n as f64 * (1.0 - phi) / (1.0 + phi);
        let e = ess(&x).unwrap().ess;
        assert!((e / expected - 1.0).abs() < 0.25, "{e} vs {expected}");
    }

    #[test]
    fn constant_and_short() {
        let e = ess(&[2.5; 20]).unwrap();
        assert!(e.constant);
        assert_eq!(e.ess, 20.0);
        assert!(matches!(ess(&[1.0; 9]), Err(Error::TraceTooShort { len: 9, min: 10 })));
    }

    #[test]
    fn quantile_conventions() {
        assert_eq!(quantile_sorted(&[3.0], 0.025), 3.0);
        assert_eq!(quantile_sorted(&[1.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 7.0], 0.5), 2.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 7.0], 0.0), 1.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 7.0], 1.0), 7.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 7.0, 9.0], 0.25), 1.5);
    }

    fn history(events: Vec<(f64, u32)>) -> PopulationHistory {
        let ev = events.into_iter().map(|(t, s)| Event { time: t, subject: s, from: 1, to: 2 }).collect();
        PopulationHistory::new(3, (0.0, 10.0), vec![0, 1, 1], ev).unwrap()
    }

    #[test]
    fn single_and_paired_snapshots() {
        let a = history(vec![(2.0, 1)]);
        let b = history(vec![(4.0, 1), (6.0, 2)]);
        let rows = summarize_latent(&[&a], &[1.0, 3.0], &[0.025, 0.5, 0.975]).unwrap();
        assert_eq!(rows.len(), 6);
        let i_at_3 = rows.iter().find(|r| r.time == 3.0 && r.state == 1).unwrap();
        assert_eq!(i_at_3.quantiles, vec![1.0, 1.0, 1.0]);
        let rows = summarize_latent(&[&a, &b], &[5.0, 1.0], &[0.5]).unwrap();
        let i_at_5 = rows.iter().find(|r| r.time == 5.0 && r.state == 1).unwrap();
        // a has one infective at t = 5, b has one as well; t = 1 both have two.
        assert_eq!(i_at_5.quantiles, vec![1.0]);
        let i_at_1 = rows.iter().find(|r| r.time == 1.0 && r.state == 1).unwrap();
        assert_eq!(i_at_1.quantiles, vec![2.0]);
        let rows = summarize_latent(&[&a, &b], &[3.0], &[0.5]).unwrap();
        assert_eq!(rows[1].quantiles, vec![1.5]);
        assert!(summarize_latent(&[], &[1.0], &[0.5]).is_err());
    }

    proptest! {
        #[test]
        fn quantiles_monotone(mut xs in prop::collection::vec(-100.0f64..100.0, 1..40), qs in prop::collection::vec(0.0f64..=1.0, 2..8)) {
            xs.sort_by(f64::total_cmp);
            let mut qs = qs;
            qs.sort_by(f64::total_cmp);
            let vals: Vec<f64> = qs.iter().map(|&q| quantile_sorted(&xs, q)).collect();
            prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(vals.iter().all(|v| *v >= xs[0] && *v <= xs[xs.len() - 1]));
        }

        #[test]
        fn latent_quantiles_monotone(times in prop::collection::vec((0.1f64..9.9, 0.1f64..9.9), 1..12)) {
            let snaps: Vec<PopulationHistory> = times
                .iter()
                .map(|&(a, b)| history(if (a - b).abs() < 1e-9 { vec![(a, 1)] } else { vec![(a, 1), (b, 2)] }))
                .collect();
            let refs: Vec<&PopulationHistory> = snaps.iter().collect();
            let rows = summarize_latent(&refs, &[0.5, 2.0, 5.0, 9.5], &[0.025, 0.25, 0.5, 0.75, 0.975]).unwrap();
            for r in rows {
                prop_assert!(r.quantiles.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
