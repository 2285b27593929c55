use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, TrainPlan};
use super::confusion::evaluate;
use super::report::{DatasetRef, ExperimentReport};
use crate::error::{Error, Result};
use crate::image::BinaryImage;
use crate::neuralnet::{
    params_to_bytes, train, History, Network, NetworkSpec, SampleTarget, Samples, TrainConfig,
};
use crate::par::Exec;
use crate::stimulus::{
    derive_seed, edge_count, generate_batch, normalize_edge_count, normalize_total_area,
    objects_render_cleanly, pearson, perturb_scale, replace_kind, swap_polarity, Family,
    Representation, SceneSpec, ShapeKind, StimulusConfig, MAX_COUNT,
};

// Seed streams under the battery's global seed.
const BASELINE: u64 = 0x10;
const BOUNDARY: u64 = 0x11;
const PROBES: u64 = 0x20;
const BOUNDARY_TESTS: u64 = 0x21;

/// Renders scenes and returns images with their labels.
pub fn render_all(
    specs: &[SceneSpec],
    repr: Representation,
    exec: Exec,
) -> Result<(Vec<BinaryImage>, Vec<u8>)> {
    let images = exec.try_map(specs, |s| repr.render(s))?;
    Ok((images, specs.iter().map(|s| s.label).collect()))
}

pub fn to_samples(images: &[BinaryImage], labels: &[u8]) -> Samples {
    let mut s = Samples::default();
    for (img, &l) in images.iter().zip(labels) {
        s.push(img.pixels().to_vec(), SampleTarget::Class(l as usize - 1));
    }
    s
}

pub fn checkpoint_hash(net: &Network<f32>) -> String {
    hex::encode(Sha256::digest(params_to_bytes(net)))
}

/// A trained count classifier together with what it was trained on.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub net: Network<f32>,
    pub representation: Representation,
    pub checkpoint: String,
    pub history: History,
    pub train_set: DatasetRef,
}

impl Classifier {
    /// Perceived count 1..=6 for an image already in this classifier's
    /// representation.
    pub fn count(&self, img: &BinaryImage) -> Result<usize> {
        Ok(self.net.classify(&img.to_f32())? + 1)
    }

    pub fn holdout_accuracy(&self) -> Option<f64> {
        self.history.epochs.last().and_then(|e| e.val_accuracy)
    }
}

/// Trains the default count classifier on rendered scenes.
#[allow(clippy::too_many_arguments)]
pub fn train_classifier(
    name: &str,
    family: &str,
    train_specs: &[SceneSpec],
    val_specs: &[SceneSpec],
    repr: Representation,
    image_size: usize,
    plan: &TrainPlan,
    seed: u64,
    exec: Exec,
    log: &mut dyn FnMut(&str),
) -> Result<Classifier> {
    let (images, labels) = render_all(train_specs, repr, exec)?;
    let train_set = DatasetRef::new(name, family, seed, &images, &labels);
    let data = to_samples(&images, &labels);
    let (vimages, vlabels) = render_all(val_specs, repr, exec)?;
    let val = to_samples(&vimages, &vlabels);
    let mut net = Network::<f32>::new(NetworkSpec::count_classifier(
        image_size,
        derive_seed(seed, 0, 2),
    ))?;
    let cfg = TrainConfig {
        seed: derive_seed(seed, 0, 3),
        ..plan.train.clone()
    };
    let history = train(&mut net, &data, Some(&val), &cfg, exec, |e| {
        log(&format!(
            "  {name} epoch {}: train loss {:.4} acc {:.4}, holdout acc {:.4}",
            e.epoch + 1,
            e.train_loss,
            e.train_accuracy,
            e.val_accuracy.unwrap_or(f64::NAN)
        ))
    })?;
    Ok(Classifier {
        checkpoint: checkpoint_hash(&net),
        net,
        representation: repr,
        history,
        train_set,
    })
}

/// The default count classifier trained on baseline circles.
pub fn train_baseline(
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
    log: &mut dyn FnMut(&str),
) -> Result<Classifier> {
    let s = derive_seed(seed, BASELINE, 0);
    let plan = &cfg.baseline;
    let train_specs = area_normalized(
        Family::Circles,
        plan.train_images,
        &cfg.stimulus,
        derive_seed(s, 0, 0),
        exec,
    )?;
    let val_specs = area_normalized(
        Family::Circles,
        plan.validation_images,
        &cfg.stimulus,
        derive_seed(s, 0, 1),
        exec,
    )?;
    train_classifier(
        "baseline_train",
        "circles/area-normalized",
        &train_specs,
        &val_specs,
        Representation::Region,
        cfg.stimulus.image_size,
        plan,
        s,
        exec,
        log,
    )
}

/// Test-set perturbations applied to a baseline-trained classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "probe")]
pub enum Probe {
    /// Fresh draws from the training distribution.
    Iid,
    WideCircles,
    Polygons {
        sides: u8,
    },
    Polarity,
    Rings,
}

impl Probe {
    /// Experiments 1-4, with experiment 2 split by polygon.
    pub const BATTERY: [Probe; 7] = [
        Probe::Iid,
        Probe::WideCircles,
        Probe::Polygons { sides: 3 },
        Probe::Polygons { sides: 4 },
        Probe::Polygons { sides: 5 },
        Probe::Polarity,
        Probe::Rings,
    ];

    pub fn id(&self) -> String {
        match self {
            Probe::Iid => "baseline_iid".into(),
            Probe::WideCircles => "exp1_wide_circles".into(),
            Probe::Polygons { sides: 3 } => "exp2_triangles".into(),
            Probe::Polygons { sides: 4 } => "exp2_squares".into(),
            Probe::Polygons { sides: 5 } => "exp2_pentagons".into(),
            Probe::Polygons { sides } => format!("exp2_{sides}gons"),
            Probe::Polarity => "exp3_polarity".into(),
            Probe::Rings => "exp4_rings".into(),
        }
    }

    fn index(&self) -> u64 {
        match self {
            Probe::Iid => 0,
            Probe::WideCircles => 1,
            Probe::Polygons { sides } => 10 + *sides as u64,
            Probe::Polarity => 2,
            Probe::Rings => 3,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Probe::Iid | Probe::Polarity => Family::Circles,
            Probe::WideCircles => Family::WideCircles,
            Probe::Polygons { sides } => Family::Polygons { sides: *sides },
            Probe::Rings => Family::Rings,
        }
    }

    /// `per_class` scenes per label. Circle probes are area-normalized like
    /// the training set; shape and polarity probes transform the i.i.d.
    /// scenes, so all three share geometry.
    pub fn test_specs(
        &self,
        stimulus: &StimulusConfig,
        per_class: usize,
        seed: u64,
        exec: Exec,
    ) -> Result<Vec<SceneSpec>> {
        self.scenes(stimulus, per_class * MAX_COUNT, seed, exec)
    }

    /// `n` scenes with labels cycling 1..=6.
    pub fn scenes(
        &self,
        stimulus: &StimulusConfig,
        n: usize,
        seed: u64,
        exec: Exec,
    ) -> Result<Vec<SceneSpec>> {
        let s = derive_seed(seed, PROBES, self.index());
        match *self {
            Probe::Iid => area_normalized(
                Family::Circles,
                n,
                stimulus,
                derive_seed(seed, PROBES, 0),
                exec,
            ),
            Probe::WideCircles => area_normalized(Family::WideCircles, n, stimulus, s, exec),
            Probe::Polygons { sides } => {
                let base = Probe::Iid.scenes(stimulus, n, seed, exec)?;
                let kind = ShapeKind::RegularPolygon { sides };
                let (out, _) = transform_set(
                    &base,
                    |sp| {
                        let t = replace_kind(sp, &kind);
                        if objects_render_cleanly(&t) {
                            Ok(t)
                        } else {
                            Err(Error::InvalidScene(
                                "polygon does not render cleanly".into(),
                            ))
                        }
                    },
                    |round| {
                        area_normalized(
                            Family::Circles,
                            n,
                            stimulus,
                            derive_seed(s, 1, round as u64),
                            exec,
                        )
                    },
                )?;
                Ok(out)
            }
            Probe::Polarity => Ok(Probe::Iid
                .scenes(stimulus, n, seed, exec)?
                .iter()
                .map(swap_polarity)
                .collect()),
            Probe::Rings => Ok(generate_batch(Family::Rings, n, stimulus, s, exec)),
        }
    }
}

/// Circle scenes with total disk area made independent of the count.
pub fn area_normalized(
    family: Family,
    n: usize,
    cfg: &StimulusConfig,
    seed: u64,
    exec: Exec,
) -> Result<Vec<SceneSpec>> {
    let raw = generate_batch(family, n, cfg, derive_seed(seed, 0, 0), exec);
    normalize_total_area(&raw, family, cfg, derive_seed(seed, 0, 1), exec)
}

/// Evaluates `model` on pre-rendered images and wraps the result.
pub fn report_for(
    id: &str,
    model: &Classifier,
    images: &[BinaryImage],
    labels: &[u8],
    dataset: DatasetRef,
    seed: u64,
    config_hash: &str,
    exec: Exec,
) -> Result<ExperimentReport> {
    let matrix = evaluate(|img| model.count(img), images, labels, exec)?;
    let mut r = ExperimentReport::new(id, seed, config_hash, matrix);
    r.checkpoint = Some(model.checkpoint.clone());
    r.datasets = vec![model.train_set.clone(), dataset];
    Ok(r)
}

pub fn run_probe(
    model: &Classifier,
    probe: Probe,
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
) -> Result<ExperimentReport> {
    let specs = probe.test_specs(&cfg.stimulus, cfg.test_per_class, seed, exec)?;
    let (images, labels) = render_all(&specs, model.representation, exec)?;
    let id = probe.id();
    let dataset = DatasetRef::new(&id, &probe.family().name(), seed, &images, &labels);
    report_for(
        &id,
        model,
        &images,
        &labels,
        dataset,
        seed,
        &cfg.hash(),
        exec,
    )
}

pub fn run_experiment_1(
    model: &Classifier,
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
) -> Result<ExperimentReport> {
    run_probe(model, Probe::WideCircles, cfg, seed, exec)
}

/// Triangles, squares and pentagons.
pub fn run_experiment_2(
    model: &Classifier,
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
) -> Result<Vec<ExperimentReport>> {
    (3..=5u8)
        .map(|sides| run_probe(model, Probe::Polygons { sides }, cfg, seed, exec))
        .collect()
}

pub fn run_experiment_3(
    model: &Classifier,
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
) -> Result<ExperimentReport> {
    run_probe(model, Probe::Polarity, cfg, seed, exec)
}

pub fn run_experiment_4(
    model: &Classifier,
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
) -> Result<ExperimentReport> {
    run_probe(model, Probe::Rings, cfg, seed, exec)
}

/// Applies `f` to every scene. A scene that `f` rejects is replaced by the
/// next scene of the same label from `backup` that it accepts. Returns the
/// set and the number of replaced scenes.
pub fn transform_set(
    base: &[SceneSpec],
    f: impl Fn(&SceneSpec) -> Result<SceneSpec>,
    mut backup: impl FnMut(usize) -> Result<Vec<SceneSpec>>,
) -> Result<(Vec<SceneSpec>, usize)> {
    let mut pool: Vec<SceneSpec> = Vec::new();
    let mut cursor = [0usize; MAX_COUNT];
    let mut round = 0;
    let mut replaced = 0;
    let mut out = Vec::with_capacity(base.len());
    for spec in base {
        if let Ok(s) = f(spec) {
            out.push(s);
            continue;
        }
        replaced += 1;
        let label = spec.label as usize;
        loop {
            let c = &mut cursor[label - 1];
            if let Some(i) = (*c..pool.len()).find(|&i| pool[i].label as usize == label) {
                *c = i + 1;
                if let Ok(s) = f(&pool[i]) {
                    out.push(s);
                    break;
                }
                continue;
            }
            if round >= 64 {
                return Err(Error::PlacementInfeasible {
                    objects: label,
                    attempts: round,
                });
            }
            pool.extend(backup(round)?);
            round += 1;
        }
    }
    Ok((out, replaced))
}

/// Rescales every scene by `factor`, replacing scenes that no longer fit.
pub fn scaled_set(
    base: &[SceneSpec],
    factor: f64,
    cfg: &StimulusConfig,
    backup: impl FnMut(usize) -> Result<Vec<SceneSpec>>,
) -> Result<(Vec<SceneSpec>, usize)> {
    transform_set(base, |s| perturb_scale(s, factor, cfg), backup)
}

#[derive(Debug, Clone)]
pub struct BoundaryRegime {
    pub model: Classifier,
    /// corr(n, boundary pixel count) over the normalized training batch.
    pub corr_count_edges: f64,
    pub iid: ExperimentReport,
    pub scaled_up: ExperimentReport,
    pub scaled_down: ExperimentReport,
}

/// Mixed scenes with boundary pixel count made independent of the count.
pub fn normalized_mixed(
    n: usize,
    cfg: &StimulusConfig,
    seed: u64,
    exec: Exec,
) -> Result<Vec<SceneSpec>> {
    let raw = generate_batch(Family::Mixed, n, cfg, derive_seed(seed, 0, 0), exec);
    normalize_edge_count(&raw, Family::Mixed, cfg, derive_seed(seed, 0, 1), exec)
}

/// Retrains on edge-normalized boundary maps of mixed scenes, then tests on
/// fresh normalized scenes as drawn and with every object scaled by 1.5 and
/// by 0.5 before boundary extraction.
pub fn run_boundary_regime(
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
    log: &mut dyn FnMut(&str),
) -> Result<BoundaryRegime> {
    let st = &cfg.stimulus;
    let s = derive_seed(seed, BOUNDARY, 0);
    let plan = &cfg.boundary;
    let train_specs = normalized_mixed(plan.train_images, st, derive_seed(s, 1, 0), exec)?;
    let val_specs = normalized_mixed(plan.validation_images, st, derive_seed(s, 1, 1), exec)?;
    let counts: Vec<f64> = exec.try_map(&train_specs, |sp| edge_count(sp).map(|c| c as f64))?;
    let ns: Vec<f64> = train_specs.iter().map(|sp| f64::from(sp.label)).collect();
    let corr = pearson(&ns, &counts);
    log(&format!(
        "  boundary training batch: corr(n, edge pixels) = {corr:.4}"
    ));
    let model = train_classifier(
        "boundary_train",
        "mixed/edge-normalized",
        &train_specs,
        &val_specs,
        Representation::Boundary,
        st.image_size,
        plan,
        s,
        exec,
        log,
    )?;

    let t = derive_seed(seed, BOUNDARY_TESTS, 0);
    let base = normalized_mixed(
        cfg.test_per_class * MAX_COUNT,
        st,
        derive_seed(t, 0, 0),
        exec,
    )?;
    let hash = cfg.hash();
    let mut reports = Vec::new();
    for (id, factor, salt) in [
        ("boundary_iid", 1.0, 0),
        ("boundary_scaled_up", 1.5, 1),
        ("boundary_scaled_down", 0.5, 2),
    ] {
        let (specs, replaced) = scaled_set(&base, factor, st, |round| {
            normalized_mixed(base.len(), st, derive_seed(t, salt, 1 + round as u64), exec)
        })?;
        let (images, labels) = render_all(&specs, Representation::Boundary, exec)?;
        let dataset = DatasetRef::new(id, "mixed/edge-normalized", t, &images, &labels);
        let mut r = report_for(id, &model, &images, &labels, dataset, seed, &hash, exec)?;
        r.stats.insert("scale_factor".into(), factor);
        r.stats.insert("replaced_scenes".into(), replaced as f64);
        r.stats.insert("train_corr_count_edges".into(), corr);
        reports.push(r);
    }
    let scaled_down = reports.pop().expect("three reports");
    let scaled_up = reports.pop().expect("three reports");
    let iid = reports.pop().expect("three reports");
    Ok(BoundaryRegime {
        model,
        corr_count_edges: corr,
        iid,
        scaled_up,
        scaled_down,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_ids_are_distinct() {
        let mut ids: Vec<String> = Probe::BATTERY.iter().map(Probe::id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), Probe::BATTERY.len());
    }

    #[test]
    fn polarity_probe_inverts_iid_geometry() {
        let st = StimulusConfig::default();
        let iid = Probe::Iid.test_specs(&st, 2, 5, Exec::Sequential).unwrap();
        let inv = Probe::Polarity
            .test_specs(&st, 2, 5, Exec::Sequential)
            .unwrap();
        assert_eq!(iid.len(), 12);
        for (a, b) in iid.iter().zip(&inv) {
            assert_eq!(swap_polarity(a), *b);
        }
    }

    #[test]
    fn shape_probe_keeps_layout() {
        let st = StimulusConfig::default();
        let iid = Probe::Iid.test_specs(&st, 3, 5, Exec::Sequential).unwrap();
        let tri = Probe::Polygons { sides: 3 }
            .test_specs(&st, 3, 5, Exec::Sequential)
            .unwrap();
        for (a, b) in iid.iter().zip(&tri) {
            assert_eq!(a.label, b.label);
            assert!(b
                .objects
                .iter()
                .all(|o| o.kind == ShapeKind::RegularPolygon { sides: 3 }));
        }
        assert!(
            iid.iter()
                .zip(&tri)
                .filter(|(a, b)| a.objects[0].center == b.objects[0].center)
                .count()
                > 12
        );
    }

    #[test]
    fn scaled_set_keeps_labels_and_replaces_infeasible() {
        let st = StimulusConfig::default();
        let base = generate_batch(Family::Circles, 60, &st, 3, Exec::Sequential);
        let (up, replaced) = scaled_set(&base, 1.5, &st, |r| {
            Ok(generate_batch(
                Family::Circles,
                60,
                &st,
                100 + r as u64,
                Exec::Sequential,
            ))
        })
        .unwrap();
        assert!(replaced > 0);
        assert_eq!(
            up.iter().map(|s| s.label).collect::<Vec<_>>(),
            base.iter().map(|s| s.label).collect::<Vec<_>>()
        );
        let (same, none) = scaled_set(&base, 1.0, &st, |_| unreachable!()).unwrap();
        assert_eq!((same, none), (base, 0));
    }
}
