//! Counterfactual fairness metrics: test accuracy, the CF-metric, and the
//! CF-bound.
//!
//! The CF-metric is the maximum over group pairs (r, t) of the mean
//! absolute score difference at quantile-matched counterfactual attributes,
//! `mean_i |p(r, a_M(r, s_i, a_i)) - p(t, a_M(t, s_i, a_i))|`, where the
//! counterfactual attributes come from a marginal-mapping preprocessor
//! fitted on training data so they stay inside the observed range.
//!
//! The CF-bound compares each unit's score with the average score of
//! rank-neighborhood peers in the other groups: for unit i and group s',
//! peers are the group-s' rows whose per-coordinate rank lies within
//! `delta * n_s'` of unit i's rank (rescaled from its own group size), a
//! without-replacement sample of at most `m` of them is score-averaged,
//! and the bound is the maximum absolute deviation over all (i, s').

use crate::data::Dataset;
use crate::error::{FlapError, Result};
use crate::learners::Scorer;
use crate::numerics::{mix_seed, mix64};
use crate::preprocess::{PrepKind, Preprocessor};
use crate::stats::average_ranks;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Tuning knobs of the CF-bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    /// Rank-window width as a fraction of the target group size.
    pub delta: f64,
    /// Cap on the number of sampled neighbors per (unit, group) pair.
    pub neighborhood_cap: usize,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            neighborhood_cap: 50,
            seed: 0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(FlapError::Config(format!(
                "delta must lie in [0, 1], got {}",
                self.delta
            )));
        }
        if self.neighborhood_cap == 0 {
            return Err(FlapError::Config("neighborhood cap must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fraction of test rows where the thresholded score (>= 0.5 reads as
/// decision 1) matches the recorded decision.
pub fn accuracy<S: Scorer + ?Sized>(pred: &S, test: &Dataset) -> f64 {
    let hits = test
        .rows()
        .iter()
        .filter(|r| u8::from(pred.score(r.group, &r.attrs) >= 0.5) == r.decision)
        .count();
    hits as f64 / test.n() as f64
}

/// Accuracy of stochastically drawn decisions (one Bernoulli draw per row).
pub fn drawn_accuracy<S: Scorer + ?Sized>(pred: &S, test: &Dataset, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = test
        .rows()
        .iter()
        .filter(|r| {
            let u: f64 = rng.random();
            u8::from(u < pred.score(r.group, &r.attrs)) == r.decision
        })
        .count();
    hits as f64 / test.n() as f64
}

/// The CF-metric of a predictor on a test set, using a marginal-mapping
/// preprocessor fitted on the training data.
pub fn cf_metric<S: Scorer + ?Sized>(
    pred: &S,
    test: &Dataset,
    prep_m: &Preprocessor,
) -> Result<f64> {
    if prep_m.kind() != PrepKind::MarginalMapping {
        return Err(FlapError::PrepKind(
            "the CF-metric needs a marginal-mapping preprocessor".into(),
        ));
    }
    let k = prep_m.num_groups();
    if k < 2 {
        return Ok(0.0); // no group pair to contrast
    }
    if test.num_groups() > k {
        return Err(FlapError::Value(
            "test set has groups unknown to the preprocessor".into(),
        ));
    }
    // per-row counterfactual scores for every target group, in row order
    let scores: Vec<Vec<f64>> = test
        .rows()
        .par_iter()
        .map(|row| {
            let mut out = Vec::with_capacity(k);
            for target in 0..k {
                let attrs = prep_m
                    .counterfactual_attr(target, row.group, &row.attrs)
                    .expect("groups validated above");
                out.push(pred.score(target, &attrs));
            }
            out
        })
        .collect();
    let n = test.n() as f64;
    let mut best = 0.0f64;
    for r in 0..k {
        for t in (r + 1)..k {
            let sum: f64 = scores.iter().map(|s| (s[r] - s[t]).abs()).sum();
            best = best.max(sum / n);
        }
    }
    Ok(best)
}

/// Per-group, per-coordinate ascending ranks of a dataset's attributes,
/// ties resolved by average rank.
#[derive(Debug, Clone)]
pub struct RankTable {
    /// `ranks[i][j]`: rank of row i's coordinate j within its own group.
    ranks: Vec<Vec<f64>>,
    /// `by_rank[s][j]`: group-s row indices sorted by coordinate-j rank.
    by_rank: Vec<Vec<Vec<usize>>>,
    /// `sorted_ranks[s][j][pos]`: rank of `by_rank[s][j][pos]`.
    sorted_ranks: Vec<Vec<Vec<f64>>>,
    group_rows: Vec<Vec<usize>>,
}

impl RankTable {
    pub fn new(data: &Dataset) -> Self {
        let k = data.num_groups();
        let d = data.dim();
        let mut ranks = vec![vec![0.0; d]; data.n()];
        let mut by_rank = vec![vec![Vec::new(); d]; k];
        let mut sorted_ranks = vec![vec![Vec::new(); d]; k];
        let mut group_rows = vec![Vec::new(); k];
        for s in 0..k {
            let rows: Vec<usize> = data.group_rows(s);
            for j in 0..d {
                let col: Vec<f64> = rows.iter().map(|&i| data.rows()[i].attrs[j]).collect();
                let col_ranks = average_ranks(&col);
                for (pos, &i) in rows.iter().enumerate() {
                    ranks[i][j] = col_ranks[pos];
                }
                let mut order: Vec<usize> = rows.clone();
                order.sort_by(|&a, &b| ranks[a][j].partial_cmp(&ranks[b][j]).unwrap());
                sorted_ranks[s][j] = order.iter().map(|&i| ranks[i][j]).collect();
                by_rank[s][j] = order;
            }
            group_rows[s] = rows;
        }
        Self {
            ranks,
            by_rank,
            sorted_ranks,
            group_rows,
        }
    }

    pub fn rank(&self, row: usize, coord: usize) -> f64 {
        self.ranks[row][coord]
    }

    pub fn group_size(&self, s: usize) -> usize {
        self.group_rows[s].len()
    }
}

/// Group-s' rows whose every coordinate rank lies within `delta * n_s'` of
/// the reference unit's rank, the reference rank being rescaled from the
/// unit's own group size to the target group's.
pub fn rank_neighborhood(
    rt: &RankTable,
    data: &Dataset,
    s_prime: usize,
    unit: usize,
    delta: f64,
) -> Vec<usize> {
    let d = data.dim();
    let n_target = rt.group_size(s_prime) as f64;
    let n_own = rt.group_size(data.rows()[unit].group) as f64;
    let window = delta * n_target;
    if delta >= 1.0 {
        return rt.group_rows[s_prime].clone();
    }
    // candidate range per coordinate is contiguous in rank order; scan the
    // smallest one and verify the rest
    let mut best: Option<(usize, usize, usize)> = None; // (len, coord, lo)
    let mut refs = vec![0.0; d];
    for j in 0..d {
        let reference = rt.rank(unit, j) * n_target / n_own;
        refs[j] = reference;
        let sorted = &rt.sorted_ranks[s_prime][j];
        let lo = sorted.partition_point(|&r| r < reference - window);
        let hi = sorted.partition_point(|&r| r <= reference + window);
        let len = hi - lo;
        if best.map_or(true, |(l, _, _)| len < l) {
            best = Some((len, j, lo));
        }
    }
    let (len, coord, lo) = best.expect("at least one coordinate");
    let mut out = Vec::new();
    'cand: for pos in lo..lo + len {
        let row = rt.by_rank[s_prime][coord][pos];
        for j in 0..d {
            if (rt.ranks[row][j] - refs[j]).abs() > window {
                continue 'cand;
            }
        }
        out.push(row);
    }
    out.sort_unstable();
    out
}

/// Nearest group-s' row by maximum coordinate-rank distance; the fallback
/// when a neighborhood is empty. Ties break to the lowest row index.
fn nearest_by_rank(rt: &RankTable, data: &Dataset, s_prime: usize, unit: usize) -> usize {
    let d = data.dim();
    let n_target = rt.group_size(s_prime) as f64;
    let n_own = rt.group_size(data.rows()[unit].group) as f64;
    let mut best_row = rt.group_rows[s_prime][0];
    let mut best_dist = f64::INFINITY;
    for &row in &rt.group_rows[s_prime] {
        let mut dist = 0.0f64;
        for j in 0..d {
            let reference = rt.rank(unit, j) * n_target / n_own;
            dist = dist.max((rt.ranks[row][j] - reference).abs());
        }
        if dist < best_dist {
            best_dist = dist;
            best_row = row;
        }
    }
    best_row
}

/// Deterministic per-row sampling priority; smaller wins. Shared across
/// units and deltas so that growing neighborhoods draw supersets wherever
/// the cap allows (nested subsampling).
fn priority(seed: u64, s_prime: usize, row: usize) -> u64 {
    mix64(mix_seed(seed, &[s_prime as u64]) ^ row as u64)
}

/// The CF-bound of a predictor over a dataset.
///
/// For each unit i and each other group s', a without-replacement sample
/// of at most `cfg.neighborhood_cap` rank-neighborhood rows is score-
/// averaged under `p(s', .)` and compared with `p(s_i, a_i)`; the bound is
/// the maximum absolute deviation. Deterministic given `cfg.seed`.
pub fn cf_bound<S: Scorer + ?Sized>(pred: &S, data: &Dataset, cfg: &MetricConfig) -> Result<f64> {
    cfg.validate()?;
    let k = data.num_groups();
    if k < 2 {
        return Ok(0.0);
    }
    let rt = RankTable::new(data);
    let bound = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let own_score = pred.score(data.rows()[i].group, &data.rows()[i].attrs);
            let mut worst = 0.0f64;
            for s_prime in 0..k {
                if s_prime == data.rows()[i].group {
                    continue;
                }
                let neighborhood = rank_neighborhood(&rt, data, s_prime, i, cfg.delta);
                let chosen: Vec<usize> = if neighborhood.is_empty() {
                    vec![nearest_by_rank(&rt, data, s_prime, i)]
                } else if neighborhood.len() <= cfg.neighborhood_cap {
                    neighborhood
                } else {
                    let mut keyed: Vec<(u64, usize)> = neighborhood
                        .iter()
                        .map(|&row| (priority(cfg.seed, s_prime, row), row))
                        .collect();
                    keyed.select_nth_unstable(cfg.neighborhood_cap - 1);
                    keyed[..cfg.neighborhood_cap]
                        .iter()
                        .map(|&(_, row)| row)
                        .collect()
                };
                let avg: f64 = chosen
                    .iter()
                    .map(|&row| pred.score(s_prime, &data.rows()[row].attrs))
                    .sum::<f64>()
                    / chosen.len() as f64;
                worst = worst.max((avg - own_score).abs());
            }
            worst
        })
        .reduce(|| 0.0f64, f64::max);
    Ok(bound)
}
