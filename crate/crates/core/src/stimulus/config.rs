use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scene::Layout;
use crate::error::{Error, Result};

/// Geometry and distribution parameters for scene generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StimulusConfig {
    pub image_size: usize,
    pub layout: Layout,
    /// Uniform radius range of the baseline training families.
    pub baseline_radius: [f64; 2],
    /// Widened range: same width scaled by 1.5.
    pub wide_radius: [f64; 2],
    pub sweep_radius: [f64; 2],
    pub placement_attempts: usize,
    /// Admissible total disk area targets for area normalization.
    pub area_window: [f64; 2],
    /// Admissible boundary pixel targets for edge normalization.
    pub edge_window: [f64; 2],
}

impl Default for StimulusConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            layout: Layout::default(),
            baseline_radius: [4.0, 10.0],
            wide_radius: [3.0, 12.0],
            sweep_radius: [3.0, 24.0],
            placement_attempts: 1000,
            area_window: [250.0, 900.0],
            edge_window: [100.0, 150.0],
        }
    }
}

impl StimulusConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.image_size < 16 {
            return bad("image_size must be at least 16");
        }
        for (name, [lo, hi]) in [
            ("baseline_radius", self.baseline_radius),
            ("wide_radius", self.wide_radius),
            ("sweep_radius", self.sweep_radius),
            ("area_window", self.area_window),
            ("edge_window", self.edge_window),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return bad(&format!("{name} must be an increasing positive range"));
            }
        }
        if self.baseline_radius[0] < super::scene::MIN_SIZE
            || self.wide_radius[0] < super::scene::MIN_SIZE
            || self.sweep_radius[0] < super::scene::MIN_SIZE
        {
            return bad("radius ranges must start at or above the minimum object size");
        }
        if self.placement_attempts == 0 {
            return bad("placement_attempts must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides_and_defaults() {
        let cfg = StimulusConfig::from_toml_str("image_size = 48\nbaseline_radius = [3.0, 8.0]\n")
            .unwrap();
        assert_eq!(cfg.image_size, 48);
        assert_eq!(cfg.baseline_radius, [3.0, 8.0]);
        assert_eq!(cfg.wide_radius, StimulusConfig::default().wide_radius);
        let round = StimulusConfig::from_toml_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(StimulusConfig::from_toml_str("image_size = 4").is_err());
        assert!(StimulusConfig::from_toml_str("baseline_radius = [9.0, 4.0]").is_err());
        assert!(StimulusConfig::from_toml_str("bogus = 1").is_err());
    }
}
