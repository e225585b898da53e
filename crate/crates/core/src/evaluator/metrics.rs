use crate::error::{Error, Result};

fn check(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::Empty("ranks"));
    }
    if ranks.contains(&0) {
        return Err(Error::OutOfRange("ranks are 1-based".into()));
    }
    Ok(())
}

/// Mean reciprocal rank.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    check(ranks)?;
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of ranks at or below `k`.
pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    check(ranks)?;
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Average precision of a scored list of `(score, is_positive)` pairs,
/// ranked by descending score with ties kept in input order.
pub fn average_precision(scored: &[(f64, bool)]) -> Result<f64> {
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite("average_precision"));
    }
    let positives = scored.iter().filter(|(_, p)| *p).count();
    if positives == 0 {
        return Err(Error::Empty("positive pairs"));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &j) in order.iter().enumerate() {
        if scored[j].1 {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}
