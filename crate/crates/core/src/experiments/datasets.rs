use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::probes::{normalized_mixed, Probe};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::stimulus::{
    generate_batch, DatasetManifest, Family, NormalizationMode, Representation, StimulusConfig,
};

/// The datasets the battery draws on, addressable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetKind {
    /// Area-normalized white circles: the training distribution.
    Baseline,
    Exp1,
    Exp2 {
        sides: u8,
    },
    Exp3,
    Exp4,
    /// Mixed shapes, styles and polarities, unnormalized regions.
    Mixed,
    /// Edge-normalized mixed scenes as boundary maps.
    Boundary,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 9] = [
        DatasetKind::Baseline,
        DatasetKind::Exp1,
        DatasetKind::Exp2 { sides: 3 },
        DatasetKind::Exp2 { sides: 4 },
        DatasetKind::Exp2 { sides: 5 },
        DatasetKind::Exp3,
        DatasetKind::Exp4,
        DatasetKind::Mixed,
        DatasetKind::Boundary,
    ];
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetKind::Baseline => f.write_str("baseline"),
            DatasetKind::Exp1 => f.write_str("exp1"),
            DatasetKind::Exp2 { sides: 3 } => f.write_str("exp2-triangles"),
            DatasetKind::Exp2 { sides: 4 } => f.write_str("exp2-squares"),
            DatasetKind::Exp2 { sides: 5 } => f.write_str("exp2-pentagons"),
            DatasetKind::Exp2 { sides } => write!(f, "exp2-{sides}"),
            DatasetKind::Exp3 => f.write_str("exp3"),
            DatasetKind::Exp4 => f.write_str("exp4"),
            DatasetKind::Mixed => f.write_str("mixed"),
            DatasetKind::Boundary => f.write_str("boundary"),
        }
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "baseline" => DatasetKind::Baseline,
            "exp1" => DatasetKind::Exp1,
            "exp2" | "exp2-triangles" => DatasetKind::Exp2 { sides: 3 },
            "exp2-squares" => DatasetKind::Exp2 { sides: 4 },
            "exp2-pentagons" => DatasetKind::Exp2 { sides: 5 },
            "exp3" => DatasetKind::Exp3,
            "exp4" => DatasetKind::Exp4,
            "mixed" => DatasetKind::Mixed,
            "boundary" => DatasetKind::Boundary,
            other => {
                let sides = other
                    .strip_prefix("exp2-")
                    .and_then(|v| v.parse::<u8>().ok());
                match sides {
                    Some(sides) if sides >= 3 => DatasetKind::Exp2 { sides },
                    _ => return Err(Error::Config(format!("unknown dataset family {other:?}"))),
                }
            }
        })
    }
}

/// `count` scenes of `kind`, labels cycling 1..=6, as an unwritten manifest.
pub fn build_dataset(
    kind: DatasetKind,
    count: usize,
    cfg: &StimulusConfig,
    seed: u64,
    exec: Exec,
) -> Result<DatasetManifest> {
    let probe = |p: Probe| p.scenes(cfg, count, seed, exec);
    let (specs, norm, repr) = match kind {
        DatasetKind::Baseline => (
            probe(Probe::Iid)?,
            NormalizationMode::AreaIndependent,
            Representation::Region,
        ),
        DatasetKind::Exp1 => (
            probe(Probe::WideCircles)?,
            NormalizationMode::AreaIndependent,
            Representation::Region,
        ),
        DatasetKind::Exp2 { sides } => (
            probe(Probe::Polygons { sides })?,
            NormalizationMode::AreaIndependent,
            Representation::Region,
        ),
        DatasetKind::Exp3 => (
            probe(Probe::Polarity)?,
            NormalizationMode::AreaIndependent,
            Representation::Region,
        ),
        DatasetKind::Exp4 => (
            probe(Probe::Rings)?,
            NormalizationMode::None,
            Representation::Region,
        ),
        DatasetKind::Mixed => (
            generate_batch(Family::Mixed, count, cfg, seed, exec),
            NormalizationMode::None,
            Representation::Region,
        ),
        DatasetKind::Boundary => (
            normalized_mixed(count, cfg, seed, exec)?,
            NormalizationMode::EdgeCountIndependent,
            Representation::Boundary,
        ),
    };
    Ok(DatasetManifest::new(
        kind.to_string(),
        seed,
        norm,
        repr,
        specs,
    ))
}
