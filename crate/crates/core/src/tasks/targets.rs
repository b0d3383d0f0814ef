use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Variance,
    Range,
    Maxmin,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "variance" => Ok(Task::Variance),
            "range" => Ok(Task::Range),
            "maxmin" => Ok(Task::Maxmin),
            other => Err(Error::Config(format!(
                "unknown task `{other}` (expected variance, range or maxmin)"
            ))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Variance => "variance",
            Task::Range => "range",
            Task::Maxmin => "maxmin",
        })
    }
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Variance, Task::Range, Task::Maxmin];

    pub fn min_len(self) -> usize {
        match self {
            Task::Maxmin => 2,
            _ => 1,
        }
    }

    pub fn target(self, labels: &[usize]) -> Result<f64> {
        match self {
            Task::Variance => target_variance(labels),
            Task::Range => target_range(labels),
            Task::Maxmin => target_maxmin(labels),
        }
    }

    /// Whether every target is an integer, so rounded accuracy applies.
    pub fn integer_valued(self) -> bool {
        !matches!(self, Task::Variance)
    }
}

/// Population variance `(1/2n²) Σ_{i,j} (y_i − y_j)²`.
///
/// The double sum is exact in integers; only the final division rounds.
pub fn target_variance(labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("target_variance"));
    }
    let n = labels.len() as i128;
    let s: i128 = labels.iter().map(|&y| y as i128).sum();
    let sq: i128 = labels.iter().map(|&y| (y as i128) * (y as i128)).sum();
    // Σ_{i,j} (y_i − y_j)² = 2n Σ y² − 2 (Σ y)²
    let pairs = 2 * n * sq - 2 * s * s;
    Ok(pairs as f64 / (2 * n * n) as f64)
}

pub fn target_range(labels: &[usize]) -> Result<f64> {
    let max = labels.iter().max().ok_or(Error::EmptyInput("target_range"))?;
    let min = labels.iter().min().ok_or(Error::EmptyInput("target_range"))?;
    Ok((max - min) as f64)
}

/// `max_i min_{j≠i} |y_i − y_j|`.
pub fn target_maxmin(labels: &[usize]) -> Result<f64> {
    if labels.len() < 2 {
        return Err(Error::InsufficientLength {
            op: "target_maxmin",
            needed: 2,
            got: labels.len(),
        });
    }
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    // In sorted order the nearest other element is an adjacent one.
    let best = (0..sorted.len())
        .map(|i| {
            let left = (i > 0).then(|| sorted[i] - sorted[i - 1]);
            let right = sorted.get(i + 1).map(|&r| r - sorted[i]);
            left.into_iter().chain(right).min().expect("n ≥ 2")
        })
        .max()
        .expect("n ≥ 2");
    Ok(best as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_examples() {
        assert_eq!(target_variance(&[0, 9]).unwrap(), 20.25);
        assert_eq!(target_variance(&[5, 5, 5]).unwrap(), 0.0);
        assert!(matches!(target_variance(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn range_examples() {
        assert_eq!(target_range(&[3, 7, 1]).unwrap(), 6.0);
        assert_eq!(target_range(&[4]).unwrap(), 0.0);
    }

    #[test]
    fn maxmin_examples() {
        assert_eq!(target_maxmin(&[0, 5, 9]).unwrap(), 5.0);
        assert_eq!(target_maxmin(&[7, 7]).unwrap(), 0.0);
        assert_eq!(target_maxmin(&[0, 1, 2, 9]).unwrap(), 7.0);
        assert!(matches!(
            target_maxmin(&[3]),
            Err(Error::InsufficientLength { needed: 2, got: 1, .. })
        ));
    }

    #[test]
    fn task_names_round_trip() {
        for t in Task::ALL {
            assert_eq!(t.to_string().parse::<Task>().unwrap(), t);
        }
        assert!("median".parse::<Task>().is_err());
    }
}
