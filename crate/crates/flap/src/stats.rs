//! Statistical utilities: ranks, Kolmogorov-Smirnov distances, chi-square
//! tail probabilities.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Ascending 1-based ranks with ties resolved by average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("non-finite value"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share the same value; average their 1-based ranks
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_sf(stat: f64, df: usize) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("df >= 1");
    (1.0 - dist.cdf(stat)).clamp(0.0, 1.0)
}

/// Kolmogorov-Smirnov distance between a sample and Uniform(0, 1).
pub fn ks_distance_uniform(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let hi = (i + 1) as f64 / n - x;
        let lo = x - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_distance_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = xs[i].min(ys[j]);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Asymptotic two-sided Kolmogorov-Smirnov p-value for the scaled statistic.
///
/// `lambda = d * sqrt(n_eff)` with `n_eff = n*m/(n+m)` for two samples or
/// `n` for one sample.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS test; returns (statistic, asymptotic p-value).
pub fn ks_test_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d = ks_distance_two_sample(a, b);
    let n_eff = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    (d, kolmogorov_sf(d * n_eff.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ranks_handle_ties_with_averages() {
        let r = average_ranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn ranks_on_distinct_values_are_permutation() {
        let r = average_ranks(&[0.3, 0.1, 0.2]);
        assert_eq!(r, vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn chi_square_sf_known_values() {
        // P(chi2_1 > 3.841) ~ 0.05
        assert_relative_eq!(chi_square_sf(3.841_458_8, 1), 0.05, epsilon = 1e-6);
        assert_relative_eq!(chi_square_sf(5.991_464_5, 2), 0.05, epsilon = 1e-6);
        assert_eq!(chi_square_sf(0.0, 3), 1.0);
    }

    #[test]
    fn ks_uniform_distance_of_uniform_grid_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_distance_uniform(&xs) < 1e-3);
    }

    #[test]
    fn ks_two_sample_identical_is_zero() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert_eq!(ks_distance_two_sample(&xs, &xs), 0.0);
    }

    #[test]
    fn ks_two_sample_disjoint_is_one() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = (0..50).map(|i| 1000.0 + i as f64).collect();
        let (d, p) = ks_test_two_sample(&xs, &ys);
        assert_eq!(d, 1.0);
        assert!(p < 1e-10);
    }
}
