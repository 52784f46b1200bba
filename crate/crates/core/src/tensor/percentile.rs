use crate::error::{Error, Result};

/// Nearest-rank percentile: the `ceil(pct/100 * N)`-th smallest value
/// (1-indexed). `pct == 0` returns `-inf`, meaning nothing lies at or below
/// the threshold.
pub fn percentile_threshold(values: &[f32], pct: f64) -> Result<f32> {
    if values.is_empty() {
        return Err(Error::Empty("percentile of an empty set".into()));
    }
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::InvalidArgument(format!(
            "percentile must be in [0, 100], got {pct}"
        )));
    }
    if pct == 0.0 {
        return Ok(f32::NEG_INFINITY);
    }
    let n = values.len();
    // Multiply before dividing so that e.g. 90% of 10 is exactly rank 9.
    let rank = ((pct * n as f64) / 100.0).ceil().clamp(1.0, n as f64) as usize;
    let mut sorted = values.to_vec();
    let (_, nth, _) = sorted.select_nth_unstable_by(rank - 1, f32::total_cmp);
    Ok(*nth)
}
