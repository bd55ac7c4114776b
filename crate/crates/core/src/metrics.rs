//! AUC, Brier score and log loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LOGLOSS_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub brier: f64,
    pub logloss: f64,
    pub n_test: usize,
}

fn check(p: &[f64], y: &[u8]) -> Result<()> {
    if p.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} probabilities for {} labels", p.len(), y.len())));
    }
    if p.is_empty() {
        return Err(Error::EmptyData("metrics need at least one prediction".into()));
    }
    if let Some(i) = p.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("prediction {i} is not finite")));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    Ok(())
}

/// Area under the ROC curve via the Mann–Whitney rank statistic; tied
/// scores share their average rank, i.e. count one half.
pub fn auc(p: &[f64], y: &[u8]) -> Result<f64> {
    check(p, y)?;
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(if n_pos == 0 { 0 } else { 1 }));
    }
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_unstable_by(|&a, &b| p[a].total_cmp(&p[b]));
    // Sum of (1-based, tie-averaged) ranks of the positives, doubled to stay
    // in integers.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && p[order[j + 1]] == p[order[i]] {
            j += 1;
        }
        let twice_avg = (i + 1 + j + 1) as u128;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| y[k] == 1).count() as u128;
        twice_rank_sum += twice_avg * pos_in_tie;
        i = j + 1;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2 * np * nn) as f64)
}

/// Mean squared error of the probabilities.
pub fn brier(p: &[f64], y: &[u8]) -> Result<f64> {
    check(p, y)?;
    Ok(p.iter().zip(y).map(|(&pi, &yi)| (pi - yi as f64).powi(2)).sum::<f64>() / p.len() as f64)
}

/// Mean negative log-likelihood with probabilities clipped to
/// `[clip, 1 − clip]`.
pub fn logloss(p: &[f64], y: &[u8], clip: f64) -> Result<f64> {
    check(p, y)?;
    if !(0.0..0.5).contains(&clip) {
        return Err(Error::invalid(format!("clip must lie in [0, 0.5), got {clip}")));
    }
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&pi, &yi)| {
            let q = pi.clamp(clip, 1.0 - clip);
            if yi == 1 {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum();
    Ok(total / p.len() as f64)
}

pub fn evaluate(p: &[f64], y: &[u8]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        auc: auc(p, y)?,
        brier: brier(p, y)?,
        logloss: logloss(p, y, DEFAULT_LOGLOSS_CLIP)?,
        n_test: p.len(),
    })
}

/// O(n²) pairwise AUC, used as an oracle.
pub fn auc_pairwise(p: &[f64], y: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        if y[i] != 1 {
            continue;
        }
        for (j, &pj) in p.iter().enumerate() {
            if y[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if pi > pj {
                wins += 1.0;
            } else if pi == pj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}
