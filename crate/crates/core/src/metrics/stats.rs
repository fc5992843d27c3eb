//! Rank-based tests: Mann-Whitney U and Kruskal-Wallis H.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::MetricsError;

/// Largest per-sample size for which the automatic method uses the exact
/// distribution (tie-free samples only).
pub const EXACT_MAX_PER_GROUP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    Auto,
    Exact,
    /// Normal approximation with tie and continuity corrections.
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MannWhitney {
    /// U of the first sample: pairs `(a_i, b_j)` with `a_i > b_j`, ties counting ½.
    pub u: f64,
    pub p_two_sided: f64,
    pub method: MwuMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub p: f64,
    pub df: usize,
}

/// Midranks (1-based) of the pooled values and the sizes of tied runs.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

fn check_finite(samples: &[&[f64]]) -> Result<(), MetricsError> {
    if samples.iter().flat_map(|s| s.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MetricsError::NonFinite)
    }
}

/// Frequencies of U for tie-free samples of sizes `m` and `n`; index is U.
fn u_frequencies(m: usize, n: usize) -> Vec<u64> {
    // freq[i][j] is the distribution for sizes (i, j); built with
    // f(i, j, u) = f(i-1, j, u-j) + f(i, j-1, u).
    let mut prev_row: Vec<Vec<u64>> = (0..=n).map(|_| vec![1]).collect();
    for i in 1..=m {
        let mut row: Vec<Vec<u64>> = Vec::with_capacity(n + 1);
        row.push(vec![1]);
        for j in 1..=n {
            let mut dist = vec![0u64; i * j + 1];
            for (u, &c) in prev_row[j].iter().enumerate() {
                dist[u + j] += c;
            }
            for (u, &c) in row[j - 1].iter().enumerate() {
                dist[u] += c;
            }
            row.push(dist);
        }
        prev_row = row;
    }
    prev_row.swap_remove(n)
}

fn exact_two_sided(u: f64, m: usize, n: usize) -> f64 {
    let freq = u_frequencies(m, n);
    let total: u64 = freq.iter().sum();
    let u = u.round() as usize;
    let lower: u64 = freq[..=u].iter().sum();
    let upper: u64 = freq[u..].iter().sum();
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, MetricsError> {
    mann_whitney_u_with(a, b, MwuMethod::Auto)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], method: MwuMethod) -> Result<MannWhitney, MetricsError> {
    if a.is_empty() {
        return Err(MetricsError::EmptySample(0));
    }
    if b.is_empty() {
        return Err(MetricsError::EmptySample(1));
    }
    check_finite(&[a, b])?;
    let (m, n) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..m].iter().sum();
    let u = rank_sum_a - (m * (m + 1)) as f64 / 2.0;

    let method = match method {
        MwuMethod::Auto if ties.is_empty() && m <= EXACT_MAX_PER_GROUP && n <= EXACT_MAX_PER_GROUP => MwuMethod::Exact,
        MwuMethod::Auto => MwuMethod::Normal,
        MwuMethod::Exact if !ties.is_empty() => return Err(MetricsError::ExactWithTies),
        other => other,
    };

    let p_two_sided = match method {
        MwuMethod::Exact => exact_two_sided(u, m, n),
        _ => {
            let (mf, nf) = (m as f64, n as f64);
            let total = mf + nf;
            let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (total * (total - 1.0));
            let variance = mf * nf / 12.0 * ((total + 1.0) - tie_term);
            if variance <= 0.0 {
                1.0
            } else {
                let mean = mf * nf / 2.0;
                let z = ((u - mean).abs() - 0.5).max(0.0) / variance.sqrt();
                let normal = Normal::standard();
                (2.0 * normal.sf(z)).min(1.0)
            }
        }
    };
    Ok(MannWhitney { u, p_two_sided, method })
}

/// Kruskal-Wallis H with tie correction; p from the chi-square upper tail.
/// When every observation ties, H is defined as 0 and p as 1.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallis, MetricsError> {
    if groups.len() < 2 {
        return Err(MetricsError::TooFewGroups(groups.len()));
    }
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(MetricsError::EmptySample(i));
    }
    let slices: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
    check_finite(&slices)?;
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let total = pooled.len();
    if total < 3 {
        return Err(MetricsError::TooFewTotal(total));
    }
    let df = groups.len() - 1;
    let (ranks, ties) = midranks(&pooled);
    let nf = total as f64;
    let correction = 1.0 - ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Ok(KruskalWallis { h: 0.0, p: 1.0, df });
    }
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = ((12.0 / (nf * (nf + 1.0)) * sum - 3.0 * (nf + 1.0)) / correction).max(0.0);
    let chi = ChiSquared::new(df as f64).expect("df ≥ 1");
    Ok(KruskalWallis { h, p: chi.sf(h), df })
}
