//! Monte Carlo verification of learned placements.
//!
//! Because the reward of a channel does not depend on what was placed
//! before it, the best configuration under the training reward is simply the
//! `m` channels with the highest expected reward. Exhaustive enumeration and
//! a greedy search on the full Fisher matrix give independent references.
//!
//! All estimators draw sample `i` from seed `derive_seed(seed, i)`, so
//! estimates taken with the same seed share their random numbers.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::env::{derive_seed, sample_context, sample_inputs};
use crate::error::{Error, Result};
use crate::info::{channel_fishers, info_gain, sensitivities, GainMatrix};
use crate::problem::PlacementProblem;

pub const DEFAULT_SAMPLES: usize = 500;

/// Evaluates `f` for sample indices `0..n` with up to `threads` workers,
/// returning results in index order.
pub fn map_samples<T, F>(n: usize, seed: u64, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    if threads <= 1 {
        return (0..n).map(|i| f(derive_seed(seed, i as u64))).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| f(derive_seed(seed, i as u64)))
            .collect()
    })
}

/// Normalized gain matrices of `n_samples` independent episode draws.
pub fn sample_gains(
    problem: &PlacementProblem,
    n_samples: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<GainMatrix>> {
    map_samples(n_samples, seed, threads, |s| Ok(sample_context(problem, s)?.gain))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScoreTable {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
}

impl ChannelScoreTable {
    /// Mean and standard error of every row sum.
    pub fn from_gains(gains: &[GainMatrix]) -> Result<Self> {
        let n = gains.len();
        let first = gains
            .first()
            .ok_or_else(|| Error::InvalidParameter("at least one sample is required".into()))?;
        let n_ch = first.n_channels();
        let sums: Vec<Vec<f64>> = gains.iter().map(GainMatrix::row_sums).collect();
        let mut mean = vec![0.0; n_ch];
        let mut stderr = vec![0.0; n_ch];
        for j in 0..n_ch {
            let m = sums.iter().map(|s| s[j]).sum::<f64>() / n as f64;
            mean[j] = m;
            if n > 1 {
                let var = sums.iter().map(|s| (s[j] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                stderr[j] = (var / n as f64).sqrt();
            }
        }
        Ok(Self {
            mean,
            stderr,
            n_samples: n,
        })
    }

    /// Channel indices by decreasing mean, ties by index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.mean.len()).collect();
        order.sort_by(|&a, &b| self.mean[b].total_cmp(&self.mean[a]).then(a.cmp(&b)));
        order
    }

    /// 1-based rank of every channel.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.mean.len()];
        for (r, c) in self.ranking().into_iter().enumerate() {
            ranks[c] = r + 1;
        }
        ranks
    }
}

pub fn expected_rewards(
    problem: &PlacementProblem,
    n_samples: usize,
    seed: u64,
) -> Result<ChannelScoreTable> {
    expected_rewards_with_threads(problem, n_samples, seed, 1)
}

pub fn expected_rewards_with_threads(
    problem: &PlacementProblem,
    n_samples: usize,
    seed: u64,
    threads: usize,
) -> Result<ChannelScoreTable> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be at least 1".into()));
    }
    ChannelScoreTable::from_gains(&sample_gains(problem, n_samples, seed, threads)?)
}

/// The `m` channels with the highest mean reward, ascending by index.
pub fn top_m_configuration(table: &ChannelScoreTable, m: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = table.ranking().into_iter().take(m).collect();
    chosen.sort_unstable();
    chosen
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Average episode return of placing `config` (discount 1) over `gains`.
pub fn expected_config_reward(gains: &[GainMatrix], config: &[usize]) -> f64 {
    let total: f64 = gains
        .iter()
        .map(|g| config.iter().map(|&c| g.g.row(c).sum()).sum::<f64>())
        .sum();
    total / gains.len() as f64
}

/// Best `m`-configuration by brute force over every subset.
pub fn exhaustive_optimum(gains: &[GainMatrix], m: usize) -> Result<(Vec<usize>, f64)> {
    let n_ch = gains
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one sample is required".into()))?
        .n_channels();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for config in combinations(n_ch, m) {
        let value = expected_config_reward(gains, &config);
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((config, value));
        }
    }
    best.ok_or_else(|| Error::InvalidParameter(format!("no {m}-subset of {n_ch} channels")))
}

/// Greedy selection on the full Fisher matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedySelection {
    /// Channels in selection order.
    pub channels: Vec<usize>,
    /// Expected information gain added by each selection, nats.
    pub marginal_gains: Vec<f64>,
}

/// Sequentially adds the channel with the largest expected increase of the
/// full-matrix information gain, averaging over shared samples.
pub fn greedy_full_fisher(
    problem: &PlacementProblem,
    m: usize,
    n_samples: usize,
    seed: u64,
) -> Result<GreedySelection> {
    greedy_full_fisher_with_threads(problem, m, n_samples, seed, 1)
}

pub fn greedy_full_fisher_with_threads(
    problem: &PlacementProblem,
    m: usize,
    n_samples: usize,
    seed: u64,
    threads: usize,
) -> Result<GreedySelection> {
    let n_ch = problem.n_channels();
    if m > n_ch {
        return Err(Error::InvalidParameter(format!("cannot pick {m} of {n_ch} channels")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be at least 1".into()));
    }
    let noise = problem.noise_variances();
    let fishers: Vec<Vec<DMatrix<f64>>> = map_samples(n_samples, seed, threads, |s| {
        let (theta, excitation) = sample_inputs(problem, s)?;
        Ok(channel_fishers(&sensitivities(problem, &theta, &excitation)?, &noise))
    })?;
    let p0 = problem.prior().covariance();
    let n_theta = problem.n_params();

    let mut current: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n_theta, n_theta); n_samples];
    let mut current_gain = 0.0;
    let mut selection = GreedySelection {
        channels: Vec::with_capacity(m),
        marginal_gains: Vec::with_capacity(m),
    };
    for _ in 0..m {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..n_ch).filter(|c| !selection.channels.contains(c)) {
            let mut total = 0.0;
            for (acc, per_channel) in current.iter().zip(&fishers) {
                total += info_gain(&(acc + &per_channel[c]), &p0)?;
            }
            let mean = total / n_samples as f64;
            if best.is_none_or(|(_, b)| mean > b) {
                best = Some((c, mean));
            }
        }
        let (c, gain) = best.expect("m <= channel count");
        for (acc, per_channel) in current.iter_mut().zip(&fishers) {
            *acc += &per_channel[c];
        }
        selection.channels.push(c);
        selection.marginal_gains.push(gain - current_gain);
        current_gain = gain;
    }
    Ok(selection)
}
