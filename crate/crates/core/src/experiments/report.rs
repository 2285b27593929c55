use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::confusion::{probs_from_csv, ConfusionMatrix, CLASSES};
use crate::error::{Error, Result};
use crate::image::BinaryImage;

/// Published confusion matrices the battery is compared against, keyed by
/// experiment id.
const REFERENCES: &[(&str, &str)] = &[
    (
        "exp1_wide_circles",
        include_str!("../../assets/reference/exp1_wide_circles.csv"),
    ),
    (
        "exp2_triangles",
        include_str!("../../assets/reference/exp2_triangles.csv"),
    ),
    (
        "exp2_squares",
        include_str!("../../assets/reference/exp2_squares.csv"),
    ),
    (
        "exp3_polarity",
        include_str!("../../assets/reference/exp3_polarity.csv"),
    ),
    (
        "exp4_rings",
        include_str!("../../assets/reference/exp4_rings.csv"),
    ),
    (
        "boundary_iid",
        include_str!("../../assets/reference/boundary_iid.csv"),
    ),
    (
        "boundary_scaled_up",
        include_str!("../../assets/reference/boundary_scaled_up.csv"),
    ),
    (
        "boundary_scaled_down",
        include_str!("../../assets/reference/boundary_scaled_down.csv"),
    ),
];

pub fn reference_ids() -> impl Iterator<Item = &'static str> {
    REFERENCES.iter().map(|(id, _)| *id)
}

pub fn reference_table(id: &str) -> Option<[[f64; CLASSES]; CLASSES]> {
    REFERENCES
        .iter()
        .find(|(k, _)| *k == id)
        .map(|(_, text)| probs_from_csv(text).expect("embedded reference table parses"))
}

/// Identifies a generated test or training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub name: String,
    pub family: String,
    pub global_seed: u64,
    pub images: usize,
    /// SHA-256 over the labels and rendered pixels.
    pub digest: String,
}

impl DatasetRef {
    pub fn new(
        name: &str,
        family: &str,
        global_seed: u64,
        images: &[BinaryImage],
        labels: &[u8],
    ) -> Self {
        Self {
            name: name.to_string(),
            family: family.to_string(),
            global_seed,
            images: images.len(),
            digest: digest_images(images, labels),
        }
    }
}

pub fn digest_images(images: &[BinaryImage], labels: &[u8]) -> String {
    let mut h = Sha256::new();
    for (img, l) in images.iter().zip(labels) {
        h.update([*l]);
        h.update((img.width() as u32).to_le_bytes());
        h.update((img.height() as u32).to_le_bytes());
        h.update(img.pixels());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub seed: u64,
    pub config_hash: String,
    /// SHA-256 of the serialized parameters of the evaluated model, if any.
    pub checkpoint: Option<String>,
    pub datasets: Vec<DatasetRef>,
    pub matrix: ConfusionMatrix,
    pub mean_accuracy: f64,
    pub signed_mean_error: f64,
    #[serde(default)]
    pub stats: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn new(id: &str, seed: u64, config_hash: &str, matrix: ConfusionMatrix) -> Self {
        Self {
            id: id.to_string(),
            seed,
            config_hash: config_hash.to_string(),
            checkpoint: None,
            datasets: Vec::new(),
            mean_accuracy: matrix.mean_accuracy(),
            signed_mean_error: matrix.signed_mean_error(),
            matrix,
            stats: BTreeMap::new(),
        }
    }

    /// Side-by-side CSV of measured and reference probabilities, if a
    /// reference exists for this experiment.
    pub fn comparison_csv(&self) -> Option<String> {
        let reference = reference_table(&self.id)?;
        let mut out = String::from("n,m,measured,reference,difference\n");
        for n in 0..CLASSES {
            for m in 0..CLASSES {
                let (a, b) = (self.matrix.probs[n][m], reference[n][m]);
                out.push_str(&format!("{},{},{a:.6},{b:.6},{:.6}\n", n + 1, m + 1, a - b));
            }
        }
        Some(out)
    }
}

/// Writes `confusion.csv`, `report.json` and, when a reference exists,
/// `comparison.csv` into `dir/<id>/`. Returns the written paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let sub = dir.join(&report.id);
    fs::create_dir_all(&sub).map_err(|e| Error::io_at(&sub, e))?;
    let mut files = vec![
        (sub.join("confusion.csv"), report.matrix.to_csv()),
        (
            sub.join("report.json"),
            serde_json::to_string_pretty(report)? + "\n",
        ),
    ];
    if let Some(cmp) = report.comparison_csv() {
        files.push((sub.join("comparison.csv"), cmp));
    }
    for (path, text) in &files {
        fs::write(path, text).map_err(|e| Error::io_at(path, e))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        let pairs = (0..60).map(|i| (i % 6 + 1, if i % 7 == 0 { 1 } else { i % 6 + 1 }));
        let mut r = ExperimentReport::new(
            "exp1_wide_circles",
            3,
            "abc",
            ConfusionMatrix::from_pairs(pairs).unwrap(),
        );
        r.stats.insert("corr".into(), 0.1 + 0.2);
        r
    }

    #[test]
    fn references_are_well_formed() {
        for id in reference_ids() {
            let t = reference_table(id).unwrap();
            // Published rows are rounded; one triangles row sums to 0.973.
            for row in &t {
                assert!(
                    (row.iter().sum::<f64>() - 1.0).abs() < 0.03,
                    "{id}: {row:?}"
                );
            }
        }
        assert_eq!(reference_table("exp1_wide_circles").unwrap()[4][3], 0.328);
        assert!(reference_table("exp2_pentagons").is_none());
    }

    #[test]
    fn emit_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample();
        let files = emit_report(&r, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        assert_eq!(read_report(&files[1]).unwrap(), r);
        let cmp = fs::read_to_string(&files[2]).unwrap();
        assert!(cmp.contains("\n5,4,0.000000,0.328000,-0.328000\n"));
    }

    #[test]
    fn identity_csv_diagonal() {
        let m = ConfusionMatrix::from_pairs((1..=6).map(|n| (n, n))).unwrap();
        let csv = m.to_csv();
        for (n, line) in csv.lines().skip(1).enumerate() {
            assert_eq!(line.split(',').nth(n + 1).unwrap(), "1.000000");
        }
    }
}
