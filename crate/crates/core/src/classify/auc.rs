//! ROC AUC as the Mann-Whitney statistic: the fraction of (positive, negative)
//! pairs ranked correctly, ties counting one half.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AucError {
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("AUC needs at least one positive and one negative example")]
    SingleClass,
}

/// O(n log n) rank-sum computation.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, AucError> {
    if scores.len() != labels.len() {
        return Err(AucError::LengthMismatch(scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(AucError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Walk tie groups in ascending score order. Each positive beats all negatives
    // seen in earlier groups and half of the negatives in its own group.
    let mut negatives_below = 0usize;
    let mut doubled_wins: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        doubled_wins += (pos as u128) * (2 * negatives_below + neg) as u128;
        negatives_below += neg;
        i = j;
    }
    Ok(doubled_wins as f64 / (2.0 * positives as f64 * negatives as f64))
}
