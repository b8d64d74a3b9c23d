//! Accuracy, average precision and ROC AUC for binary scorers.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("no positive labels")]
    NoPositives,
    #[error("both classes are required")]
    SingleClass,
    #[error("score {0} is not a number")]
    NotANumber(usize),
}

fn check(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn check_scores(scores: &[f64]) -> Result<(), MetricsError> {
    match scores.iter().position(|s| s.is_nan()) {
        Some(i) => Err(MetricsError::NotANumber(i)),
        None => Ok(()),
    }
}

/// Fraction correct and its binomial standard error `sqrt(acc(1-acc)/n)`.
pub fn accuracy(predictions: &[bool], labels: &[bool]) -> Result<(f64, f64), MetricsError> {
    check(predictions.len(), labels.len())?;
    let n = labels.len() as f64;
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count() as f64;
    let acc = correct / n;
    Ok((acc, (acc * (1.0 - acc) / n).sqrt()))
}

/// Mean precision at the rank of each positive, ranking by descending
/// score with ties in input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    check(scores.len(), labels.len())?;
    check_scores(scores)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Mann-Whitney form with average ranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    check(scores.len(), labels.len())?;
    check_scores(scores)?;
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Ranks doubled so tied averages stay integral.
    let mut pos_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg2 = (i + 1 + j + 1) as u128;
        pos_rank_sum2 += avg2 * order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        i = j + 1;
    }
    let (p, n) = (p as u128, n as u128);
    let u2 = pos_rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[true, false], &[true, false]).unwrap(), (1.0, 0.0));
        let (acc, se) = accuracy(&[true, true, false, false], &[true, true, false, true]).unwrap();
        assert_eq!(acc, 0.75);
        assert!((se - (0.75f64 * 0.25 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(accuracy(&[], &[]), Err(MetricsError::Empty));
        assert_eq!(accuracy(&[true], &[]), Err(MetricsError::LengthMismatch(1, 0)));
    }

    #[test]
    fn ap_and_auc_examples() {
        let scores = [0.9, 0.8, 0.7];
        let labels = [true, false, true];
        assert!((average_precision(&scores, &labels).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(roc_auc(&scores, &labels).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.4; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert_eq!(average_precision(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.9, 0.1], &[false, false]), Err(MetricsError::NoPositives));
        assert_eq!(roc_auc(&[0.9, 0.1], &[true, true]), Err(MetricsError::SingleClass));
    }
}
