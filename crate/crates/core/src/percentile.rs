//! Ascending-rank percentile rule shared by every adaptive threshold.

/// Index `⌈p·n⌉ − 1` into an ascending sort of `n` values (clamped to `0`).
pub fn percentile_index(n: usize, p: f64) -> usize {
    // guard against 0.7·200 landing a hair above 140
    let rank = (p * n as f64 - 1e-9).ceil().max(1.0) as usize;
    rank.min(n) - 1
}

/// The `p`-th percentile of `values` under the `⌈p·n⌉ − 1` rule, or `None`
/// for an empty slice.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[percentile_index(sorted.len(), p)])
}
