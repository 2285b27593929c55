//! On-disk datasets: one binary PGM per scene plus `manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::normalize::NormalizationMode;
use super::raster::rasterize;
use super::scene::{SceneSpec, MAX_COUNT};
use crate::error::{Error, Result};
use crate::image::BinaryImage;
use crate::morpho::to_boundary;
use crate::par::Exec;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;
pub const GENERATOR_VERSION: &str = concat!("numerosity ", env!("CARGO_PKG_VERSION"));

/// How a scene is turned into pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    #[default]
    Region,
    Boundary,
}

impl Representation {
    pub fn render(self, spec: &SceneSpec) -> Result<BinaryImage> {
        let img = rasterize(spec)?;
        Ok(match self {
            Representation::Region => img,
            Representation::Boundary => to_boundary(&img),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub file: String,
    pub label: u8,
    pub spec: SceneSpec,
    /// Hex SHA-256 of the PGM file; filled in by [`write_dataset`].
    #[serde(default)]
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub generator_version: String,
    pub global_seed: u64,
    pub family: String,
    pub normalization: NormalizationMode,
    pub representation: Representation,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn new(
        family: impl Into<String>,
        global_seed: u64,
        normalization: NormalizationMode,
        representation: Representation,
        specs: Vec<SceneSpec>,
    ) -> Self {
        let entries = specs
            .into_iter()
            .enumerate()
            .map(|(i, spec)| DatasetEntry {
                file: format!("{i:06}_n{}.pgm", spec.label),
                label: spec.label,
                spec,
                sha256: String::new(),
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            generator_version: GENERATOR_VERSION.to_string(),
            global_seed,
            family: family.into(),
            normalization,
            representation,
            entries,
        }
    }

    pub fn labels(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn specs(&self) -> Vec<SceneSpec> {
        self.entries.iter().map(|e| e.spec.clone()).collect()
    }

    pub fn render_all(&self, exec: Exec) -> Result<Vec<BinaryImage>> {
        exec.try_map(&self.entries, |e| self.representation.render(&e.spec))
    }
}

/// Images paired with their manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<BinaryImage>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn check_file_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && !name.contains(['/', '\\'])
        && name != "."
        && name != ".."
        && name != MANIFEST_FILE;
    if ok {
        Ok(())
    } else {
        Err(Error::ManifestCorrupt(format!("bad file name {name:?}")))
    }
}

/// Renders every entry, writes the PGMs and a manifest carrying their
/// checksums. Returns the manifest as written.
pub fn write_dataset(
    manifest: &DatasetManifest,
    dir: &Path,
    exec: Exec,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;
    for e in &manifest.entries {
        check_file_name(&e.file)?;
    }
    let hashes = exec.try_map(&manifest.entries, |e| -> Result<String> {
        let bytes = manifest.representation.render(&e.spec)?.to_pgm_bytes();
        let path = dir.join(&e.file);
        fs::write(&path, &bytes).map_err(|err| Error::io_at(&path, err))?;
        Ok(sha256_hex(&bytes))
    })?;
    let mut out = manifest.clone();
    for (e, h) in out.entries.iter_mut().zip(hashes) {
        e.sha256 = h;
    }
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec(&out)?;
    fs::write(&path, json).map_err(|e| Error::io_at(&path, e))?;
    Ok(out)
}

/// Reads only the manifest.
pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::ManifestCorrupt(format!(
                "no {MANIFEST_FILE} in {}",
                dir.display()
            )))
        }
        Err(e) => return Err(Error::io_at(&path, e)),
    };
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::ManifestCorrupt(e.to_string()))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::ManifestCorrupt(format!(
            "schema version {} (expected {SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    for e in &manifest.entries {
        check_file_name(&e.file)?;
        if e.label != e.spec.label || !(1..=MAX_COUNT as u8).contains(&e.label) {
            return Err(Error::ManifestCorrupt(format!(
                "entry {} has label {}",
                e.file, e.label
            )));
        }
    }
    Ok(manifest)
}

/// Reads the manifest and every image, verifying checksums.
pub fn read_dataset(dir: &Path, exec: Exec) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let images = exec.try_map(&manifest.entries, |e| -> Result<BinaryImage> {
        let path = dir.join(&e.file);
        let bytes = fs::read(&path).map_err(|err| Error::io_at(&path, err))?;
        if sha256_hex(&bytes) != e.sha256 {
            return Err(Error::ManifestCorrupt(format!(
                "checksum mismatch for {}",
                e.file
            )));
        }
        BinaryImage::read_pgm(bytes.as_slice())
    })?;
    Ok(Dataset { manifest, images })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::config::StimulusConfig;
    use crate::stimulus::generate::{generate_batch, Family};

    fn small_manifest() -> DatasetManifest {
        let specs = generate_batch(
            Family::Mixed,
            24,
            &StimulusConfig::default(),
            1,
            Exec::default(),
        );
        DatasetManifest::new(
            "mixed",
            1,
            NormalizationMode::None,
            Representation::Region,
            specs,
        )
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let written = write_dataset(&small_manifest(), dir.path(), Exec::default()).unwrap();
        let ds = read_dataset(dir.path(), Exec::default()).unwrap();
        assert_eq!(ds.manifest, written);
        assert_eq!(ds.images, written.render_all(Exec::default()).unwrap());
    }

    #[test]
    fn empty_dir_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_dataset(dir.path(), Exec::default()),
            Err(Error::ManifestCorrupt(_))
        ));
    }

    #[test]
    fn tampered_image_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let written = write_dataset(&small_manifest(), dir.path(), Exec::default()).unwrap();
        let victim = dir.path().join(&written.entries[3].file);
        let mut bytes = fs::read(&victim).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xFF;
        fs::write(&victim, bytes).unwrap();
        assert!(matches!(
            read_dataset(dir.path(), Exec::default()),
            Err(Error::ManifestCorrupt(_))
        ));
    }

    #[test]
    fn missing_image_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let written = write_dataset(&small_manifest(), dir.path(), Exec::default()).unwrap();
        fs::remove_file(dir.path().join(&written.entries[0].file)).unwrap();
        let err = read_dataset(dir.path(), Exec::default()).unwrap_err();
        assert!(err.is_io(), "{err}");
    }

    #[test]
    fn boundary_representation_renders_outlines() {
        let specs = generate_batch(
            Family::Circles,
            6,
            &StimulusConfig::default(),
            2,
            Exec::default(),
        );
        let m = DatasetManifest::new(
            "circles",
            2,
            NormalizationMode::None,
            Representation::Boundary,
            specs,
        );
        let imgs = m.render_all(Exec::default()).unwrap();
        for (img, e) in imgs.iter().zip(&m.entries) {
            assert_eq!(*img, to_boundary(&rasterize(&e.spec).unwrap()));
        }
    }
}
