//! Rank correlations between predicted scores and ground-truth accuracy.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("input contains a non-finite value")]
    NonFinite,
    /// A constant input leaves the correlation undefined.
    #[error("correlation undefined: constant input")]
    Undefined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub kendall_tau: f64,
    pub spearman_rho: f64,
    pub n: usize,
    /// Tied pairs among the first input (predictions).
    pub ties_x: u64,
    /// Tied pairs among the second input (ground truth).
    pub ties_y: u64,
}

impl RankReport {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self, MetricError> {
        Ok(Self {
            kendall_tau: kendall_tau(x, y)?,
            spearman_rho: spearman_rho(x, y)?,
            n: x.len(),
            ties_x: tied_pairs(x),
            ties_y: tied_pairs(y),
        })
    }
}

fn check(x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooShort(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

fn pairs(t: u64) -> u64 {
    t * t.saturating_sub(1) / 2
}

fn tied_pairs(v: &[f64]) -> u64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    run_lengths(&s, |a, b| a == b).map(pairs).sum()
}

fn run_lengths<'a, T>(sorted: &'a [T], eq: impl Fn(&T, &T) -> bool + 'a) -> impl Iterator<Item = u64> + 'a {
    let mut start = 0;
    std::iter::from_fn(move || {
        if start >= sorted.len() {
            return None;
        }
        let mut end = start + 1;
        while end < sorted.len() && eq(&sorted[start], &sorted[end]) {
            end += 1;
        }
        let len = (end - start) as u64;
        start = end;
        Some(len)
    })
}

/// Kendall's tau-b in O(n log n): sort by `(x, y)`, then count the
/// inversions of `y` with a merge sort.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check(x, y)?;
    let n = x.len() as u64;
    let mut xy: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let total = pairs(n);
    let tied_x: u64 = run_lengths(&xy, |a, b| a.0 == b.0).map(pairs).sum();
    let tied_xy: u64 = run_lengths(&xy, |a, b| a.0 == b.0 && a.1 == b.1).map(pairs).sum();

    let mut ys: Vec<f64> = xy.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut ys);
    let tied_y: u64 = run_lengths(&ys, |a, b| a == b).map(pairs).sum();

    if tied_x == total || tied_y == total {
        return Err(MetricError::Undefined);
    }
    let numer = total as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * swaps as f64;
    let denom = ((total - tied_x) as f64 * (total - tied_y) as f64).sqrt();
    Ok((numer / denom).clamp(-1.0, 1.0))
}

/// Bottom-up merge sort returning the number of strict inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    let mut buf = v.to_vec();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if v[j].total_cmp(&v[i]) == Ordering::Less {
                    buf[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + (hi - j)].copy_from_slice(&v[j..hi]);
            lo = hi;
        }
        v.copy_from_slice(&buf);
        width *= 2;
    }
    swaps
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::Undefined);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of mid-ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check(x, y)?;
    pearson(&mid_ranks(x), &mid_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_reversed() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Ok(1.0));
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Ok(-1.0));
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Ok(-1.0));
    }

    #[test]
    fn monotone_transform_spearman() {
        let x = [0.3, -1.0, 2.2, 0.9, 5.0];
        let ex: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
        assert!((spearman_rho(&x, &ex).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_undefined() {
        assert_eq!(kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(MetricError::Undefined));
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]), Err(MetricError::Undefined));
        assert_eq!(spearman_rho(&[4.0, 4.0], &[1.0, 2.0]), Err(MetricError::Undefined));
    }

    #[test]
    fn input_errors() {
        assert_eq!(kendall_tau(&[1.0], &[1.0]), Err(MetricError::TooShort(1)));
        assert_eq!(kendall_tau(&[1.0, 2.0], &[1.0]), Err(MetricError::LengthMismatch(2, 1)));
        assert_eq!(kendall_tau(&[1.0, f64::NAN], &[1.0, 2.0]), Err(MetricError::NonFinite));
    }

    #[test]
    fn hand_counted_ties() {
        // pairs: x ties (0,1); y ties (2,3); C=3, D=1 over the remaining 4
        let x = [1.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 3.0, 3.0];
        let tau = kendall_tau(&x, &y).unwrap();
        // n0=6, n1=1, n2=1; concordant: (0,2),(0,3),(1,2),(1,3) = 4, discordant 0
        assert!((tau - 4.0 / 25.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mid_ranks_average_ties() {
        assert_eq!(mid_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn report_counts_ties() {
        let r = RankReport::new(&[1.0, 1.0, 2.0], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!((r.ties_x, r.ties_y, r.n), (1, 0, 3));
    }
}
