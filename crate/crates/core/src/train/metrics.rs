use crate::error::{Error, Result};

/// Mean absolute deviation.
pub fn l1_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::dim("l1_loss", &[pred.len()], &[target.len()]));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("l1_loss"));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Fraction of predictions whose round-half-to-even value equals the target.
pub fn rounded_accuracy(preds: &[f64], targets: &[f64]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let hits = preds
        .iter()
        .zip(targets)
        .filter(|(p, t)| p.round_ties_even() == **t)
        .count();
    hits as f64 / preds.len() as f64
}

/// Row-wise argmax of a `rows × classes` score matrix; ties go to the
/// lowest class.
pub fn argmax_rows(scores: &[f64], classes: usize) -> Vec<usize> {
    scores
        .chunks(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Classification accuracy of `scores` on the given rows.
pub fn class_accuracy(scores: &[f64], classes: usize, rows: &[usize], labels: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let pred = argmax_rows(scores, classes);
    let hits = rows.iter().filter(|&&r| pred[r] == labels[r]).count();
    hits as f64 / rows.len() as f64
}

/// Whether a metric improves by going down (errors) or up (accuracies).
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// Strict improvement of `new` over `best`.
    pub fn improves(self, new: f64, best: f64) -> bool {
        match self {
            Direction::Minimize => new < best,
            Direction::Maximize => new > best,
        }
    }

    pub fn worst(self) -> f64 {
        match self {
            Direction::Minimize => f64::INFINITY,
            Direction::Maximize => f64::NEG_INFINITY,
        }
    }
}
