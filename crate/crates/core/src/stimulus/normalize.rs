//! Decorrelating object count from total area or from boundary length.
//!
//! Targets are drawn from the class-pooled empirical distribution of the
//! measured statistic, restricted to a configured window, so after rescaling
//! all classes share one target distribution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::StimulusConfig;
use super::generate::{
    derive_seed, objects_render_cleanly, replace_if_needed, rng_for, sample_scene, Family,
};
use super::raster::rasterize;
use super::scene::{SceneSpec, MIN_SIZE};
use crate::error::{Error, Result};
use crate::morpho::to_boundary;
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    #[default]
    None,
    AreaIndependent,
    EdgeCountIndependent,
}

/// Total boundary pixel count of the rendered scene.
pub fn edge_count(spec: &SceneSpec) -> Result<usize> {
    Ok(to_boundary(&rasterize(spec)?).count_ones())
}

/// Blends `sizes` toward their power mean until the smallest reaches
/// `min_size`, keeping the sum of `size^power` fixed. `None` if even equal
/// sizes would be too small.
pub fn lift_min_size(sizes: &[f64], power: i32, min_size: f64) -> Option<Vec<f64>> {
    let smallest = sizes.iter().copied().fold(f64::INFINITY, f64::min);
    if smallest >= min_size {
        return Some(sizes.to_vec());
    }
    let n = sizes.len() as f64;
    let moment: f64 = sizes.iter().map(|s| s.powi(power)).sum();
    let equal = (moment / n).powf(1.0 / power as f64);
    if equal < min_size {
        return None;
    }
    let blend = |alpha: f64| -> Vec<f64> {
        let raw: Vec<f64> = sizes
            .iter()
            .map(|s| (1.0 - alpha) * s + alpha * equal)
            .collect();
        let m: f64 = raw.iter().map(|s| s.powi(power)).sum();
        let k = (moment / m).powf(1.0 / power as f64);
        raw.into_iter().map(|s| s * k).collect()
    };
    let min_of = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if min_of(&blend(mid)) >= min_size {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(blend(hi))
}

fn with_sizes(spec: &SceneSpec, sizes: &[f64]) -> SceneSpec {
    let mut out = spec.clone();
    for (o, &s) in out.objects.iter_mut().zip(sizes) {
        o.size = s;
    }
    out
}

fn infeasible(target: f64, reason: impl Into<String>) -> Error {
    Error::InfeasibleTarget {
        target,
        reason: reason.into(),
    }
}

fn settle(spec: SceneSpec, cfg: &StimulusConfig, target: f64, salt: u64) -> Result<SceneSpec> {
    let placed =
        replace_if_needed(&spec, cfg, salt).map_err(|e| infeasible(target, e.to_string()))?;
    if !objects_render_cleanly(&placed) {
        return Err(infeasible(target, "an object no longer renders cleanly"));
    }
    Ok(placed)
}

/// Rescales a scene so its total disk area equals `target`.
pub fn scale_to_area(spec: &SceneSpec, target: f64, cfg: &StimulusConfig) -> Result<SceneSpec> {
    let total = spec.total_disk_area();
    if (total - target).abs() <= 1e-9 * target.max(1.0) {
        return Ok(spec.clone());
    }
    let k = (target / total).sqrt();
    let scaled: Vec<f64> = spec.sizes().iter().map(|s| s * k).collect();
    let sizes = lift_min_size(&scaled, 2, MIN_SIZE)
        .ok_or_else(|| infeasible(target, format!("radii fall below {MIN_SIZE} px")))?;
    settle(with_sizes(spec, &sizes), cfg, target, target.to_bits())
}

/// Rescales a scene until its boundary pixel count is within `tolerance`
/// of `target`.
pub fn scale_to_edge_count(
    spec: &SceneSpec,
    target: f64,
    tolerance: f64,
    cfg: &StimulusConfig,
) -> Result<SceneSpec> {
    let base = spec.sizes();
    let mut scale = 1.0;
    let mut best: Option<(f64, SceneSpec)> = None;
    for step in 0..12u64 {
        let scaled: Vec<f64> = base.iter().map(|s| s * scale).collect();
        let Some(sizes) = lift_min_size(&scaled, 1, MIN_SIZE) else {
            return Err(infeasible(
                target,
                format!("sizes fall below {MIN_SIZE} px"),
            ));
        };
        let candidate = settle(
            with_sizes(spec, &sizes),
            cfg,
            target,
            target.to_bits() ^ step,
        )?;
        let c = edge_count(&candidate)? as f64;
        let err = (c - target).abs();
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, candidate));
        }
        if err <= tolerance {
            break;
        }
        scale *= target / c.max(1.0);
    }
    match best {
        Some((err, s)) if err <= tolerance => Ok(s),
        Some((err, _)) => Err(infeasible(
            target,
            format!("closest boundary count misses by {err}"),
        )),
        None => Err(infeasible(target, "no candidate")),
    }
}

fn pooled_targets(values: &[f64], window: [f64; 2], target: f64) -> Result<Vec<f64>> {
    let pool: Vec<f64> = values
        .iter()
        .copied()
        .filter(|v| (window[0]..=window[1]).contains(v))
        .collect();
    if pool.is_empty() {
        return Err(infeasible(
            target,
            "no pooled value falls in the target window",
        ));
    }
    Ok(pool)
}

/// Replacement scenes drawn per target before giving up.
const RESAMPLES: usize = 64;

/// Fits each scene to a target drawn from `pool`. When a scene cannot reach
/// its target, the target is kept and a fresh scene with the same label is
/// drawn from `family`; redrawing the target instead would bias the target
/// distribution per class.
#[allow(clippy::too_many_arguments)]
fn normalize_with<F>(
    specs: &[SceneSpec],
    pool: &[f64],
    family: Family,
    cfg: &StimulusConfig,
    seed: u64,
    stream: u64,
    exec: Exec,
    fit: F,
) -> Result<Vec<SceneSpec>>
where
    F: Fn(&SceneSpec, f64) -> Result<SceneSpec> + Sync + Send,
{
    exec.map_range(specs.len(), |i| {
        let mut rng = rng_for(derive_seed(seed, stream, i as u64));
        let target = pool[rng.random_range(0..pool.len())];
        let mut spec = specs[i].clone();
        let mut last = None;
        for _ in 0..RESAMPLES {
            match fit(&spec, target) {
                Ok(s) => return Ok(s),
                Err(e) => last = Some(e),
            }
            spec = sample_scene(spec.count(), family, cfg, &mut rng);
        }
        Err(last.expect("at least one attempt"))
    })
    .into_iter()
    .collect()
}

/// Area normalization for batches of solid circle scenes. Replacement
/// scenes come from `family`, which must draw solid circles.
pub fn normalize_total_area(
    specs: &[SceneSpec],
    family: Family,
    cfg: &StimulusConfig,
    seed: u64,
    exec: Exec,
) -> Result<Vec<SceneSpec>> {
    if let Some(s) = specs
        .iter()
        .find(|s| !s.objects.iter().all(|o| o.is_solid_circle()))
    {
        return Err(Error::InvalidScene(format!(
            "area normalization needs solid circles; scene {} has other objects",
            s.seed
        )));
    }
    if !matches!(family, Family::Circles | Family::WideCircles) {
        return Err(Error::InvalidScene(format!(
            "area normalization draws replacements from circles, not {}",
            family.name()
        )));
    }
    let totals: Vec<f64> = specs.iter().map(SceneSpec::total_disk_area).collect();
    let pool = pooled_targets(&totals, cfg.area_window, cfg.area_window[0])?;
    normalize_with(specs, &pool, family, cfg, seed, 0xA2EA, exec, |s, t| {
        scale_to_area(s, t, cfg)
    })
}

/// Boundary-count normalization for scenes destined for boundary maps.
/// Replacement scenes come from `family`.
pub fn normalize_edge_count(
    specs: &[SceneSpec],
    family: Family,
    cfg: &StimulusConfig,
    seed: u64,
    exec: Exec,
) -> Result<Vec<SceneSpec>> {
    let counts: Vec<f64> = exec.try_map(specs, |s| edge_count(s).map(|c| c as f64))?;
    let pool = pooled_targets(&counts, cfg.edge_window, cfg.edge_window[0])?;
    normalize_with(specs, &pool, family, cfg, seed, 0xED6E, exec, |s, t| {
        scale_to_edge_count(s, t, edge_tolerance(t), cfg)
    })
}

pub fn edge_tolerance(target: f64) -> f64 {
    (0.015 * target).max(1.0)
}

/// Pearson correlation of two equally long samples.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Overlap coefficient of two histograms over shared bins: sum of bin minima
/// of the normalized histograms.
pub fn histogram_overlap(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let hist = |v: &[f64]| {
        let mut h = vec![0.0; bins];
        for x in v {
            let i = (((x - lo) / width) as usize).min(bins - 1);
            h[i] += 1.0 / v.len() as f64;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    ha.iter().zip(&hb).map(|(p, q)| p.min(*q)).sum()
}
