//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

/// `Pr(lo <= Bin(n, p) <= hi)` by summing the pmf in log space.
pub fn binomial_mass(n: u64, p: f64, lo: u64, hi: u64) -> f64 {
    let ln_fact = |k: u64| (1..=k).map(|v| (v as f64).ln()).sum::<f64>();
    let ln_n = ln_fact(n);
    (lo..=hi)
        .map(|k| {
            let ln_pmf =
                ln_n - ln_fact(k) - ln_fact(n - k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln();
            ln_pmf.exp()
        })
        .sum()
}

/// Counts strictly inside `|k - q n| < eps q n`.
pub fn plausible_count_range(n: u64, q: f64, eps: f64) -> (u64, u64) {
    let (center, slack) = (q * n as f64, eps * q * n as f64);
    let lo = (center - slack).floor() as u64 + 1;
    let hi = (center + slack).ceil() as u64 - 1;
    (lo, hi)
}

/// Conditions the four-cell joint table of `(Y, U)` on `Ỹ = y ⊕ u`.
pub fn joint_table_posterior(pi1: f64, p: [f64; 2]) -> [Option<f64>; 2] {
    let pi = [1.0 - pi1, pi1];
    let mut flipped = [0.0; 2];
    let mut total = [0.0; 2];
    for y in 0..2 {
        for u in 0..2 {
            let mass = pi[y] * if u == 1 { p[y] } else { 1.0 - p[y] };
            total[y ^ u] += mass;
            if u == 1 {
                flipped[y ^ u] += mass;
            }
        }
    }
    [0, 1].map(|k| (total[k] > 0.0).then(|| flipped[k] / total[k]))
}

/// Every labeling a 1-D threshold rule (either orientation) produces on
/// points already sorted by position, without duplicates.
pub fn threshold_labelings(n: usize) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = Vec::new();
    for cut in 0..=n {
        for high in [0u8, 1] {
            let f: Vec<u8> = (0..n).map(|i| if i < cut { 1 - high } else { high }).collect();
            if !out.contains(&f) {
                out.push(f);
            }
        }
    }
    out
}

/// Posterior-expected 0-1 risk: `Σ (1 - q_i) 1{f ≠ ỹ_i} + q_i 1{f = ỹ_i}`.
pub fn hedged_zero_one_risk(f: &[u8], noisy: &[u8], q: &[f64]) -> f64 {
    f.iter()
        .zip(noisy)
        .zip(q)
        .map(|((&f, &y), &q)| if f != y { 1.0 - q } else { q })
        .sum()
}

pub fn zero_one_risk(f: &[u8], labels: &[u8]) -> usize {
    f.iter().zip(labels).filter(|(a, b)| a != b).count()
}

/// Indices of the labelings attaining the minimum of `risk`.
pub fn argmin_set(labelings: &[Vec<u8>], risk: impl Fn(&[u8]) -> f64) -> Vec<usize> {
    let values: Vec<f64> = labelings.iter().map(|f| risk(f)).collect();
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    (0..values.len()).filter(|&k| values[k] <= best + 1e-12).collect()
}

/// Average ranks (ties share the mean rank), 1-based.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && v[order[end + 1]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            out[i] = rank;
        }
        start = end + 1;
    }
    out
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
