//! Small summary statistics for the experiment harness.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, Median, OrderStatistics, RankTieBreaker, Statistics};

pub fn mean(xs: &[f64]) -> f64 {
    xs.mean()
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        0.0
    } else {
        xs.std_dev()
    }
}

pub fn std_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        std_dev(xs) / (xs.len() as f64).sqrt()
    }
}

pub fn median(xs: &[f64]) -> f64 {
    Data::new(xs.to_vec()).median()
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    Data::new(xs.to_vec()).ranks(RankTieBreaker::Average)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    pearson(&ranks(x), &ranks(y))
}

/// Exact one-sided permutation p-value `P(ρ_perm ≥ ρ_obs)` for Spearman's
/// correlation; enumerates all `n!` orderings, so `n ≤ 9`.
pub fn spearman_permutation_p(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    assert!(n == y.len() && (2..=9).contains(&n));
    let rx = ranks(x);
    let ry = ranks(y);
    let observed = pearson(&rx, &ry);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut hits = 0usize;
    let mut total = 0usize;
    loop {
        let py: Vec<f64> = perm.iter().map(|&i| ry[i]).collect();
        total += 1;
        if pearson(&rx, &py) >= observed - 1e-12 {
            hits += 1;
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    hits as f64 / total as f64
}

/// One-sided one-sample t-test of `mean(xs) > 0`: returns `(t, p)`.
pub fn t_test_greater(xs: &[f64]) -> (f64, f64) {
    assert!(xs.len() >= 2);
    let se = std_error(xs);
    let t = mean(xs) / se;
    if !t.is_finite() {
        let p = if mean(xs) > 0.0 { 0.0 } else { 1.0 };
        return (t, p);
    }
    let dist = StudentsT::new(0.0, 1.0, (xs.len() - 1) as f64).expect("df >= 1");
    (t, dist.sf(t))
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((std_dev(&xs) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(median(&xs), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert!((ols_slope(&xs, &[1.0, 3.0, 5.0, 7.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ties_share_ranks() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn spearman_values() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[2.0, 4.0, 8.0, 16.0, 32.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        // d² = (0,0,1,1,0) → 1 − 6·2/(5·24) = 0.9
        assert!((spearman(&x, &[1.0, 2.0, 4.0, 3.0, 5.0]) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn t_test_reference() {
        // scipy.stats.ttest_1samp([1, 2, 3, 4], 0, alternative="greater")
        let (t, p) = t_test_greater(&[1.0, 2.0, 3.0, 4.0]);
        assert!((t - 3.872_983_346_207_417).abs() < 1e-12);
        assert!((p - 0.015_233_145_831_085_489).abs() < 1e-9, "{p}");
        let (_, p) = t_test_greater(&[-1.0, -2.0, -3.0]);
        assert!(p > 0.9);
    }

    #[test]
    fn permutation_p_values() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman_permutation_p(&x, &x) - 1.0 / 120.0).abs() < 1e-15);
        // ρ ≥ 0.9 needs Σd² ≤ 2: identity plus the four adjacent swaps
        let p = spearman_permutation_p(&x, &[1.0, 2.0, 4.0, 3.0, 5.0]);
        assert!((p - 5.0 / 120.0).abs() < 1e-15);
        assert!(spearman_permutation_p(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]) == 1.0);
    }
}
