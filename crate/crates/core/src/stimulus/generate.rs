//! Scene sampling and placement.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::StimulusConfig;
use super::raster::{is_simple_polygon, object_mask};
use super::scene::{Layout, ObjectSpec, Polarity, SceneSpec, ShapeKind, Style, MAX_COUNT};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::topology::{count_components, count_holes};

/// Stimulus families. Each fixes the object kinds, size range, styles and
/// polarities a scene is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Family {
    /// White solid circles on black, baseline radius range.
    Circles,
    /// As `Circles` with the widened radius range.
    WideCircles,
    /// White solid regular polygons on black, baseline radius range.
    Polygons { sides: u8 },
    /// White rings on black, baseline radius range.
    Rings,
    /// Circles, regular 3..6-gons and non-convex simple polygons, each object
    /// solid or outline, whole scene in either polarity.
    Mixed,
    /// Like `Mixed` over the engine sweep size range.
    Sweep,
}

impl Family {
    pub fn name(&self) -> String {
        match self {
            Family::Circles => "circles".into(),
            Family::WideCircles => "wide_circles".into(),
            Family::Polygons { sides } => format!("polygons{sides}"),
            Family::Rings => "rings".into(),
            Family::Mixed => "mixed".into(),
            Family::Sweep => "sweep".into(),
        }
    }
}

/// Derives the seed of item `index` of a stream from a global seed.
pub fn derive_seed(global: u64, stream: u64, index: u64) -> u64 {
    let mut z = global
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random star-shaped polygon with `k` vertices and circumradius 1.
pub fn random_star_polygon<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<[f64; 2]> {
    loop {
        let mut angles: Vec<f64> = (0..k)
            .map(|j| 2.0 * PI * (j as f64 + rng.random_range(-0.3..0.3)) / k as f64)
            .collect();
        angles.sort_by(f64::total_cmp);
        let radii: Vec<f64> = (0..k).map(|_| rng.random_range(0.55..=1.0)).collect();
        let max = radii.iter().copied().fold(0.0, f64::max);
        let verts: Vec<[f64; 2]> = angles
            .iter()
            .zip(&radii)
            .map(|(a, r)| [r / max * a.cos(), r / max * a.sin()])
            .collect();
        if is_simple_polygon(&verts) {
            return verts;
        }
    }
}

fn sample_kind<R: Rng + ?Sized>(family: Family, rng: &mut R) -> ShapeKind {
    match family {
        Family::Circles | Family::WideCircles => ShapeKind::Circle,
        Family::Polygons { sides } => ShapeKind::RegularPolygon { sides },
        Family::Rings => ShapeKind::Ring,
        Family::Mixed | Family::Sweep => match rng.random_range(0..3) {
            0 => ShapeKind::Circle,
            1 => ShapeKind::RegularPolygon {
                sides: rng.random_range(3..=6),
            },
            _ => {
                let k = rng.random_range(5..=8);
                ShapeKind::SimplePolygon {
                    vertices: random_star_polygon(k, rng),
                }
            }
        },
    }
}

fn size_range(family: Family, cfg: &StimulusConfig) -> [f64; 2] {
    match family {
        Family::WideCircles => cfg.wide_radius,
        Family::Sweep => cfg.sweep_radius,
        _ => cfg.baseline_radius,
    }
}

/// Places bounding circles of the given radii by rejection sampling, largest
/// first. Returns `None` when some object finds no spot within `attempts`.
pub fn place<R: Rng + ?Sized>(
    sizes: &[f64],
    image_size: usize,
    layout: &Layout,
    attempts: usize,
    rng: &mut R,
) -> Option<Vec<[f64; 2]>> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].total_cmp(&sizes[a]).then(a.cmp(&b)));
    let mut centers = vec![[0.0; 2]; sizes.len()];
    let mut placed: Vec<usize> = Vec::with_capacity(sizes.len());
    for &i in &order {
        let r = sizes[i];
        let lo = layout.margin + r;
        let hi = image_size as f64 - layout.margin - r;
        if hi < lo {
            return None;
        }
        let mut ok = false;
        for _ in 0..attempts {
            let c = [rng.random_range(lo..=hi), rng.random_range(lo..=hi)];
            if placed
                .iter()
                .all(|&j| layout.separated(c, r, centers[j], sizes[j]))
            {
                centers[i] = c;
                ok = true;
                break;
            }
        }
        if !ok {
            return None;
        }
        placed.push(i);
    }
    Some(centers)
}

/// Each object rasterizes, on its own, to one component; solid ones without holes.
pub fn objects_render_cleanly(spec: &SceneSpec) -> bool {
    spec.objects.iter().all(|o| {
        let mask = object_mask(o, spec.image_size);
        count_components(&mask) == 1 && (o.has_hole_by_design() || count_holes(&mask) == 0)
    })
}

/// Draws one scene of `n` objects from `family`. Deterministic given the rng
/// state. When the drawn sizes cannot be placed they are shrunk by 10% and
/// placement retried. Panics if even minimum-size objects cannot be placed.
pub fn sample_scene<R: Rng + ?Sized>(
    n: usize,
    family: Family,
    cfg: &StimulusConfig,
    rng: &mut R,
) -> SceneSpec {
    assert!(
        (1..=MAX_COUNT).contains(&n),
        "count {n} outside 1..={MAX_COUNT}"
    );
    let seed = rng.next_u64();
    let [rmin, rmax] = size_range(family, cfg);
    let polarity = match family {
        Family::Mixed | Family::Sweep if rng.random_bool(0.5) => Polarity::BlackOnWhite,
        _ => Polarity::WhiteOnBlack,
    };
    loop {
        let mut objects: Vec<ObjectSpec> = (0..n)
            .map(|_| {
                let kind = sample_kind(family, rng);
                let style = match family {
                    Family::Mixed | Family::Sweep if rng.random_bool(0.5) => Style::Outline,
                    _ => Style::Solid,
                };
                ObjectSpec {
                    kind,
                    size: rng.random_range(rmin..=rmax),
                    center: [0.0, 0.0],
                    rotation: rng.random_range(0.0..2.0 * PI),
                    style,
                    polarity,
                }
            })
            .collect();
        let mut sizes: Vec<f64> = objects.iter().map(|o| o.size).collect();
        let mut floor_rounds = 0;
        let centers = loop {
            if let Some(c) = place(
                &sizes,
                cfg.image_size,
                &cfg.layout,
                cfg.placement_attempts,
                rng,
            ) {
                break c;
            }
            if sizes.iter().all(|&s| s <= super::scene::MIN_SIZE) {
                floor_rounds += 1;
                assert!(
                    floor_rounds < 256,
                    "{n} objects of the minimum size do not fit a {0}x{0} image",
                    cfg.image_size
                );
            }
            for s in &mut sizes {
                *s = (*s * 0.9).max(super::scene::MIN_SIZE);
            }
        };
        for ((o, c), s) in objects.iter_mut().zip(centers).zip(sizes) {
            o.center = c;
            o.size = s;
        }
        let spec = SceneSpec {
            label: n as u8,
            objects,
            image_size: cfg.image_size,
            seed,
        };
        if objects_render_cleanly(&spec) {
            return spec;
        }
    }
}

/// `sample_scene` under its conventional name for training data.
pub fn sample_training_scene<R: Rng + ?Sized>(
    n: usize,
    family: Family,
    cfg: &StimulusConfig,
    rng: &mut R,
) -> SceneSpec {
    sample_scene(n, family, cfg, rng)
}

/// `count` scenes with labels cycling 1..=6; scene `i` uses its own derived
/// seed, so output does not depend on `exec`.
pub fn generate_batch(
    family: Family,
    count: usize,
    cfg: &StimulusConfig,
    seed: u64,
    exec: Exec,
) -> Vec<SceneSpec> {
    let stream = family_stream(family);
    exec.map_range(count, |i| {
        let mut rng = rng_for(derive_seed(seed, stream, i as u64));
        sample_scene(i % MAX_COUNT + 1, family, cfg, &mut rng)
    })
}

fn family_stream(family: Family) -> u64 {
    match family {
        Family::Circles => 1,
        Family::WideCircles => 2,
        Family::Polygons { sides } => 100 + sides as u64,
        Family::Rings => 3,
        Family::Mixed => 4,
        Family::Sweep => 5,
    }
}

/// Re-solves placement for fixed sizes, keeping current centres when they are
/// already valid.
pub fn replace_if_needed(spec: &SceneSpec, cfg: &StimulusConfig, salt: u64) -> Result<SceneSpec> {
    if spec.validate(&cfg.layout).is_ok() {
        return Ok(spec.clone());
    }
    let sizes = spec.sizes();
    let mut rng = rng_for(derive_seed(spec.seed, 0xA11CE, salt));
    for _ in 0..4 {
        if let Some(centers) = place(
            &sizes,
            spec.image_size,
            &cfg.layout,
            cfg.placement_attempts,
            &mut rng,
        ) {
            let mut out = spec.clone();
            for (o, c) in out.objects.iter_mut().zip(centers) {
                o.center = c;
            }
            return Ok(out);
        }
    }
    Err(Error::PlacementInfeasible {
        objects: sizes.len(),
        attempts: cfg.placement_attempts,
    })
}

/// Multiplies every object size by `factor`, re-solving placement if the
/// scaled objects collide or leave the margin.
pub fn perturb_scale(spec: &SceneSpec, factor: f64, cfg: &StimulusConfig) -> Result<SceneSpec> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidScene(format!(
            "scale factor {factor} must be positive"
        )));
    }
    if factor == 1.0 {
        return Ok(spec.clone());
    }
    let mut scaled = spec.clone();
    for o in &mut scaled.objects {
        o.size *= factor;
    }
    let out = replace_if_needed(&scaled, cfg, factor.to_bits())?;
    if !objects_render_cleanly(&out) {
        return Err(Error::InvalidScene(format!(
            "an object no longer renders as one clean component at scale {factor}"
        )));
    }
    Ok(out)
}

/// Flips every object's polarity; geometry is untouched.
pub fn swap_polarity(spec: &SceneSpec) -> SceneSpec {
    let mut out = spec.clone();
    for o in &mut out.objects {
        o.polarity = o.polarity.flipped();
    }
    out
}

/// Replaces every object's kind, keeping size, pose, style and polarity.
pub fn replace_kind(spec: &SceneSpec, kind: &ShapeKind) -> SceneSpec {
    let mut out = spec.clone();
    for o in &mut out.objects {
        o.kind = kind.clone();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::raster::{foreground, rasterize};

    fn cfg() -> StimulusConfig {
        StimulusConfig::default()
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_training_scene(3, Family::Circles, &cfg(), &mut rng_for(1));
        let b = sample_training_scene(3, Family::Circles, &cfg(), &mut rng_for(1));
        assert_eq!(a, b);
        assert_eq!(rasterize(&a).unwrap(), rasterize(&b).unwrap());
    }

    #[test]
    fn six_circles_count_six() {
        for seed in 0..50 {
            let spec = sample_scene(6, Family::Circles, &cfg(), &mut rng_for(seed));
            spec.validate(&cfg().layout).unwrap();
            assert_eq!(count_components(&rasterize(&spec).unwrap()), 6);
        }
    }

    #[test]
    fn two_rings_have_two_holes() {
        let spec = sample_scene(2, Family::Rings, &cfg(), &mut rng_for(4));
        let img = rasterize(&spec).unwrap();
        assert_eq!(count_components(&img), 2);
        assert_eq!(count_holes(&img), 2);
    }

    #[test]
    fn mixed_family_draws_varied_objects() {
        let mut kinds = std::collections::HashSet::new();
        let mut styles = std::collections::HashSet::new();
        let mut polarities = std::collections::HashSet::new();
        for seed in 0..60 {
            let spec = sample_scene(5, Family::Mixed, &cfg(), &mut rng_for(seed * 7));
            for o in &spec.objects {
                kinds.insert(o.kind.name());
                styles.insert(o.style);
                polarities.insert(o.polarity);
                assert_ne!(o.kind, ShapeKind::Ring);
            }
            assert!(spec.objects.iter().all(|o| o.polarity == spec.polarity()));
            assert_eq!(count_components(&foreground(&spec)), 5);
        }
        assert_eq!(kinds.len(), 3);
        assert_eq!(styles.len(), 2);
        assert_eq!(polarities.len(), 2);
    }

    #[test]
    fn batch_labels_are_balanced() {
        let batch = generate_batch(Family::Circles, 10_000, &cfg(), 3, Exec::default());
        let mut counts = [0usize; 6];
        for s in &batch {
            counts[s.label as usize - 1] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0 / 6.0).abs() <= 0.02 * 10_000.0 / 6.0);
        }
    }

    #[test]
    fn batch_is_independent_of_execution_mode() {
        let a = generate_batch(Family::Mixed, 60, &cfg(), 9, Exec::Sequential);
        let b = generate_batch(Family::Mixed, 60, &cfg(), 9, Exec::Parallel);
        assert_eq!(a, b);
    }

    #[test]
    fn no_ink_near_the_border() {
        for spec in generate_batch(Family::Sweep, 300, &cfg(), 5, Exec::default()) {
            let img = foreground(&spec);
            let (ones, _) = img.border_ones();
            assert_eq!(ones, 0);
            let n = img.width();
            for i in 0..n {
                assert!(
                    !img.get(1, i) && !img.get(i, 1) && !img.get(n - 2, i) && !img.get(i, n - 2)
                );
            }
        }
    }

    #[test]
    fn scale_identity_and_count_preservation() {
        let c = cfg();
        let spec = sample_scene(4, Family::Circles, &c, &mut rng_for(8));
        assert_eq!(perturb_scale(&spec, 1.0, &c).unwrap(), spec);
        let up = perturb_scale(&spec, 1.5, &c).unwrap();
        assert_eq!(count_components(&rasterize(&up).unwrap()), 4);
        for (a, b) in spec.objects.iter().zip(&up.objects) {
            assert!((b.size - 1.5 * a.size).abs() < 1e-12);
        }
        let down = perturb_scale(&spec, 0.5, &c).unwrap();
        assert_eq!(count_components(&rasterize(&down).unwrap()), 4);
        assert!(perturb_scale(&spec, 0.0, &c).is_err());
        assert!(matches!(
            perturb_scale(&spec, 5.0, &c),
            Err(Error::PlacementInfeasible { .. })
        ));
    }

    #[test]
    fn polarity_swap_is_an_involution_and_complements() {
        let spec = sample_scene(3, Family::Circles, &cfg(), &mut rng_for(2));
        assert_eq!(swap_polarity(&swap_polarity(&spec)), spec);
        let swapped = swap_polarity(&spec);
        assert_eq!(
            rasterize(&swapped).unwrap(),
            rasterize(&spec).unwrap().complement()
        );
        for (a, b) in spec.objects.iter().zip(&swapped.objects) {
            assert_eq!(
                (a.center, a.size, a.rotation),
                (b.center, b.size, b.rotation)
            );
        }
    }
}
