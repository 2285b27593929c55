use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::BinaryImage;
use crate::par::Exec;

pub const CLASSES: usize = 6;

/// Rows are the true count `n`, columns the perceived count `m`, both 1..=6.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; CLASSES]; CLASSES],
    pub probs: [[f64; CLASSES]; CLASSES],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; CLASSES]; CLASSES]) -> Result<Self> {
        let mut probs = [[0.0; CLASSES]; CLASSES];
        for (n, row) in counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total == 0 {
                return Err(Error::EmptyClass(n + 1));
            }
            for (p, &c) in probs[n].iter_mut().zip(row) {
                *p = c as f64 / total as f64;
            }
        }
        Ok(Self { counts, probs })
    }

    /// Builds the matrix from `(true, perceived)` counts. Perceived counts
    /// outside 1..=6 are clamped into range.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut counts = [[0; CLASSES]; CLASSES];
        for (n, m) in pairs {
            if !(1..=CLASSES).contains(&n) {
                return Err(Error::InvalidScene(format!(
                    "label {n} outside 1..={CLASSES}"
                )));
            }
            counts[n - 1][m.clamp(1, CLASSES) - 1] += 1;
        }
        Self::from_counts(counts)
    }

    /// `P(m = n | n)`.
    pub fn class_accuracy(&self, n: usize) -> f64 {
        self.probs[n - 1][n - 1]
    }

    /// Mean of the diagonal over the listed true counts.
    pub fn accuracy_over(&self, classes: &[usize]) -> f64 {
        classes.iter().map(|&n| self.class_accuracy(n)).sum::<f64>() / classes.len() as f64
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.accuracy_over(&[1, 2, 3, 4, 5, 6])
    }

    /// `sum_{n,m} P(m|n) (m - n) / 6`: positive means overestimation.
    pub fn signed_mean_error(&self) -> f64 {
        let mut s = 0.0;
        for (n, row) in self.probs.iter().enumerate() {
            for (m, p) in row.iter().enumerate() {
                s += p * (m as f64 - n as f64);
            }
        }
        s / CLASSES as f64
    }

    pub fn to_csv(&self) -> String {
        probs_to_csv(&self.probs)
    }
}

pub fn probs_to_csv(probs: &[[f64; CLASSES]; CLASSES]) -> String {
    let mut out = String::from("n,m1,m2,m3,m4,m5,m6\n");
    for (n, row) in probs.iter().enumerate() {
        out.push_str(&(n + 1).to_string());
        for p in row {
            out.push_str(&format!(",{p:.6}"));
        }
        out.push('\n');
    }
    out
}

/// Parses the six data rows written by [`probs_to_csv`].
pub fn probs_from_csv(text: &str) -> Result<[[f64; CLASSES]; CLASSES]> {
    let mut probs = [[0.0; CLASSES]; CLASSES];
    let rows: Vec<&str> = text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .collect();
    if rows.len() != CLASSES {
        return Err(Error::Config(format!(
            "expected {CLASSES} matrix rows, found {}",
            rows.len()
        )));
    }
    for (n, line) in rows.iter().enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != CLASSES + 1 {
            return Err(Error::Config(format!(
                "row {}: expected {} cells",
                n + 1,
                CLASSES + 1
            )));
        }
        for m in 0..CLASSES {
            probs[n][m] = cells[m + 1].parse().map_err(|_| {
                Error::Config(format!("row {}: bad number {:?}", n + 1, cells[m + 1]))
            })?;
        }
    }
    Ok(probs)
}

/// Runs `model` over every image and tabulates its answers against `labels`.
pub fn evaluate<F>(
    model: F,
    images: &[BinaryImage],
    labels: &[u8],
    exec: Exec,
) -> Result<ConfusionMatrix>
where
    F: Fn(&BinaryImage) -> Result<usize> + Sync + Send,
{
    if images.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    let answers = exec.try_map(images, &model)?;
    ConfusionMatrix::from_pairs(labels.iter().map(|&l| l as usize).zip(answers))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(reps: usize) -> Vec<usize> {
        (0..6 * reps).map(|i| i % 6 + 1).collect()
    }

    #[test]
    fn oracle_gives_identity() {
        let m = ConfusionMatrix::from_pairs(balanced(5).into_iter().map(|n| (n, n))).unwrap();
        assert_eq!(m.mean_accuracy(), 1.0);
        assert_eq!(m.signed_mean_error(), 0.0);
        assert!(m
            .to_csv()
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("1,1.000000,0.000000"));
    }

    #[test]
    fn constant_model_fills_first_column() {
        let m = ConfusionMatrix::from_pairs(balanced(7).into_iter().map(|n| (n, 1))).unwrap();
        assert!((m.mean_accuracy() - 1.0 / 6.0).abs() < 1e-15);
        for row in &m.probs {
            assert_eq!(row[0], 1.0);
        }
        // (0 - 1 - 2 - 3 - 4 - 5) / 6
        assert!((m.signed_mean_error() + 2.5).abs() < 1e-12);
    }

    #[test]
    fn empty_class_is_reported() {
        let pairs = (1..=5).map(|n| (n, n));
        assert!(matches!(
            ConfusionMatrix::from_pairs(pairs),
            Err(Error::EmptyClass(6))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let pairs = balanced(11)
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n, if i % 3 == 0 { n + 1 } else { n }));
        let m = ConfusionMatrix::from_pairs(pairs).unwrap();
        let back = probs_from_csv(&m.to_csv()).unwrap();
        for n in 0..6 {
            for k in 0..6 {
                assert!((back[n][k] - m.probs[n][k]).abs() < 5e-7);
            }
        }
        assert!(probs_from_csv("n\n1,2").is_err());
    }

    #[test]
    fn evaluate_checks_lengths() {
        let imgs = vec![BinaryImage::new(2, 2)];
        assert!(evaluate(|_| Ok(1), &imgs, &[1, 2], Exec::Sequential).is_err());
    }
}
