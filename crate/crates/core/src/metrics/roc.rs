use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive. The first point uses +inf.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Cumulative `(threshold, fp, tp)` counts at each distinct score, highest
/// first, preceded by the empty `(inf, 0, 0)` point.
fn cumulative_counts(y_true: &[Label], scores: &[f64]) -> Result<(Vec<(f64, u64, u64)>, u64, u64)> {
    if y_true.len() != scores.len() {
        return Err(Error::Data(format!(
            "{} labels but {} scores",
            y_true.len(),
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Data(format!("score {bad} is not a number")));
    }
    let mut pos = 0u64;
    let mut neg = 0u64;
    for &y in y_true {
        match y {
            1 => pos += 1,
            0 => neg += 1,
            other => return Err(Error::Data(format!("non-binary label {other}"))),
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::Data(
            "ROC is undefined unless both classes are present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(f64::INFINITY, 0, 0)];
    let (mut fp, mut tp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((s, fp, tp));
    }
    Ok((points, pos, neg))
}

/// One point per distinct score (descending) after the `(0, 0)` origin;
/// the last point is always `(1, 1)`.
pub fn roc_curve(y_true: &[Label], scores: &[f64]) -> Result<Vec<RocPoint>> {
    let (counts, pos, neg) = cumulative_counts(y_true, scores)?;
    Ok(counts
        .into_iter()
        .map(|(threshold, fp, tp)| RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        })
        .collect())
}

/// Trapezoidal area under the ROC curve.
///
/// The trapezoids are summed in integer arithmetic (twice the area times
/// `pos * neg`), so the result equals the Mann-Whitney statistic with ties
/// counted as one half, up to a single final division.
pub fn roc_auc(y_true: &[Label], scores: &[f64]) -> Result<f64> {
    let (counts, pos, neg) = cumulative_counts(y_true, scores)?;
    let mut twice_area: u128 = 0;
    for w in counts.windows(2) {
        let (_, fp0, tp0) = w[0];
        let (_, fp1, tp1) = w[1];
        twice_area += (fp1 - fp0) as u128 * (tp0 + tp1) as u128;
    }
    Ok(twice_area as f64 / (2 * pos as u128 * neg as u128) as f64)
}
