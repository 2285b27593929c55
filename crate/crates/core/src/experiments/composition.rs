//! Subitizing assembled from separately learned parts: a fully
//! convolutional reduction step applied recurrently until the image stops
//! changing, and a fully connected counter reading the fixed point.
//!
//! The reduction step is trained on one prune pass of the template bank.
//! The second half of every cycle applies the same network to the image
//! turned by 180 degrees, which is exactly the reflected pass. A second
//! network of the same architecture learns plain one-layer erosion; iterated
//! to a fixed point that empties every object, so it is trained and scored
//! but not used for counting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{CompositionConfig, ExperimentConfig};
use super::confusion::evaluate;
use super::probes::{checkpoint_hash, render_all, scaled_set, Classifier};
use super::report::{DatasetRef, ExperimentReport};
use crate::error::Result;
use crate::image::BinaryImage;
use crate::morpho::{erode_one_layer, normalize_polarity, prune_pass, KernelBank, Shrinker};
use crate::neuralnet::{
    evaluate_samples, train, Dims, Loss, Network, NetworkSpec, SampleTarget, Samples,
};
use crate::par::Exec;
use crate::stimulus::{
    derive_seed, generate_batch, rasterize, rng_for, Family, Representation, SceneSpec, MAX_COUNT,
};

const STREAM: u64 = 0x60;

/// Which single-step map an atom network learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomTask {
    Erosion,
    Reduction,
}

impl AtomTask {
    pub fn apply(self, img: &BinaryImage, bank: &KernelBank) -> BinaryImage {
        match self {
            AtomTask::Erosion => erode_one_layer(img),
            AtomTask::Reduction => prune_pass(img, bank.kernels()),
        }
    }
}

/// Binarized output of a pixel-logit network.
pub fn apply_atom(net: &Network<f32>, img: &BinaryImage) -> Result<BinaryImage> {
    let z = net.forward_one(&img.to_f32())?;
    let pixels = z.iter().map(|&v| u8::from(v > 0.0)).collect();
    BinaryImage::from_pixels(img.width(), img.height(), pixels)
}

/// Iterates `atom` then its reflected form until a cycle changes nothing or
/// `max_iterations` cycles have run. Returns the final state, the cycles run
/// and whether a fixed point was reached.
pub fn recurrent_reduce(
    img: &BinaryImage,
    max_iterations: usize,
    atom: impl Fn(&BinaryImage) -> Result<BinaryImage>,
) -> Result<(BinaryImage, usize, bool)> {
    let mut cur = img.clone();
    for i in 0..max_iterations {
        let half = atom(&cur)?;
        let next = atom(&half.rotated_180())?.rotated_180();
        if next == cur {
            return Ok((cur, i, true));
        }
        cur = next;
    }
    Ok((cur, max_iterations, false))
}

/// States the reduction loop visits on a scene: every pass of the exact
/// engine, each also turned by 180 degrees.
fn trajectory(img: &BinaryImage, bank: &KernelBank) -> Vec<BinaryImage> {
    let mut states = vec![img.clone()];
    let mut cur = img.clone();
    for _ in 0..64 {
        let half = prune_pass(&cur, bank.kernels());
        let next = prune_pass(&half.rotated_180(), bank.kernels()).rotated_180();
        states.push(half);
        if next == cur {
            break;
        }
        states.push(next.clone());
        cur = next;
    }
    let turned: Vec<BinaryImage> = states.iter().map(BinaryImage::rotated_180).collect();
    states.extend(turned);
    states
}

/// Training crops: windows of engine trajectories on baseline scenes, centred
/// on foreground where possible, mixed with uniform noise crops.
pub fn atom_samples(
    task: AtomTask,
    count: usize,
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
) -> Result<Samples> {
    let c = &cfg.composition;
    let bank = KernelBank::default();
    let scenes = generate_batch(
        Family::Circles,
        count,
        &cfg.stimulus,
        derive_seed(seed, 0, 0),
        exec,
    );
    let crops = exec.try_map_range(count, |i| -> Result<(BinaryImage, BinaryImage)> {
        let mut rng = rng_for(derive_seed(seed, 1, i as u64));
        let crop = if rng.random_bool(c.noise_fraction) {
            let density = rng.random_range(0.2..0.8);
            let mut img = BinaryImage::new(c.crop, c.crop);
            for y in 0..c.crop {
                for x in 0..c.crop {
                    img.set(x, y, rng.random_bool(density));
                }
            }
            img
        } else {
            let states = trajectory(&normalize_polarity(&rasterize(&scenes[i])?), &bank);
            let state = &states[rng.random_range(0..states.len())];
            let ones: Vec<(usize, usize)> = state.ones().collect();
            let span = state.width().saturating_sub(c.crop);
            let (x0, y0) = if ones.is_empty() {
                (rng.random_range(0..=span), rng.random_range(0..=span))
            } else {
                let (x, y) = ones[rng.random_range(0..ones.len())];
                let jitter = |v: usize, r: &mut rand_chacha::ChaCha8Rng| {
                    (v + r.random_range(0..c.crop))
                        .saturating_sub(c.crop)
                        .min(span)
                };
                (jitter(x, &mut rng), jitter(y, &mut rng))
            };
            state.crop(x0, y0, c.crop, c.crop)
        };
        let target = task.apply(&crop, &bank);
        Ok((crop, target))
    })?;
    let mut s = Samples::default();
    for (x, t) in crops {
        s.push(x.pixels().to_vec(), SampleTarget::Mask(t.pixels().to_vec()));
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct TrainedAtom {
    pub task: AtomTask,
    pub net: Network<f32>,
    pub holdout_pixel_accuracy: f64,
    pub checkpoint: String,
}

pub fn train_atom(
    task: AtomTask,
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
    log: &mut dyn FnMut(&str),
) -> Result<TrainedAtom> {
    let c = &cfg.composition;
    let s = derive_seed(seed, STREAM, task as u64);
    let data = atom_samples(task, c.train_crops, cfg, derive_seed(s, 0, 0), exec)?;
    let holdout = atom_samples(task, c.holdout_crops, cfg, derive_seed(s, 0, 1), exec)?;
    let mut net = Network::<f32>::new(NetworkSpec::erosion_atom(
        c.crop,
        c.width,
        c.blocks,
        derive_seed(s, 0, 2),
    ))?;
    let tc = crate::neuralnet::TrainConfig {
        seed: derive_seed(s, 0, 3),
        loss: Loss::PixelBce,
        ..c.atom_train.clone()
    };
    train(&mut net, &data, Some(&holdout), &tc, exec, |e| {
        log(&format!(
            "  {task:?} atom epoch {}: loss {:.5}, holdout pixel acc {:.6}",
            e.epoch + 1,
            e.train_loss,
            e.val_accuracy.unwrap_or(f64::NAN)
        ))
    })?;
    let (_, acc) = evaluate_samples(&net, &holdout, Loss::PixelBce, exec)?;
    Ok(TrainedAtom {
        task,
        checkpoint: checkpoint_hash(&net),
        net,
        holdout_pixel_accuracy: acc,
    })
}

/// Images of `k` isolated pixels, 1 <= k <= 6, no two 8-adjacent.
pub fn isolated_pixel_samples(count: usize, size: usize, seed: u64) -> Samples {
    let mut s = Samples::default();
    for i in 0..count {
        let mut rng = rng_for(derive_seed(seed, 2, i as u64));
        let k = i % MAX_COUNT + 1;
        let mut img = BinaryImage::new(size, size);
        let mut placed: Vec<(usize, usize)> = Vec::new();
        while placed.len() < k {
            let p = (rng.random_range(0..size), rng.random_range(0..size));
            if placed
                .iter()
                .all(|q| p.0.abs_diff(q.0) > 1 || p.1.abs_diff(q.1) > 1)
            {
                img.set(p.0, p.1, true);
                placed.push(p);
            }
        }
        s.push(img.pixels().to_vec(), SampleTarget::Class(k - 1));
    }
    s
}

pub fn train_counter(
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
    log: &mut dyn FnMut(&str),
) -> Result<Network<f32>> {
    let c = &cfg.composition;
    let size = cfg.stimulus.image_size;
    let s = derive_seed(seed, STREAM, 7);
    let data = isolated_pixel_samples(c.counter_images, size, derive_seed(s, 0, 0));
    let holdout =
        isolated_pixel_samples(c.counter_images / 5 + MAX_COUNT, size, derive_seed(s, 0, 1));
    let mut net = Network::<f32>::new(NetworkSpec::counting_head(
        size,
        c.counter_hidden,
        derive_seed(s, 0, 2),
    ))?;
    let tc = crate::neuralnet::TrainConfig {
        seed: derive_seed(s, 0, 3),
        loss: Loss::CrossEntropy,
        ..c.counter_train.clone()
    };
    train(&mut net, &data, Some(&holdout), &tc, exec, |e| {
        log(&format!(
            "  counter epoch {}: loss {:.5}, holdout acc {:.4}",
            e.epoch + 1,
            e.train_loss,
            e.val_accuracy.unwrap_or(f64::NAN)
        ))
    })?;
    Ok(net)
}

/// The composed counter.
#[derive(Debug, Clone)]
pub struct RecurrentCounter {
    /// Reduction atom rebuilt for the full image size.
    pub reducer: Network<f32>,
    pub counter: Network<f32>,
    pub max_iterations: usize,
}

impl RecurrentCounter {
    pub fn new(atom: &Network<f32>, counter: Network<f32>, max_iterations: usize) -> Result<Self> {
        let input = counter.input_dims();
        Ok(Self {
            reducer: atom.with_input(Dims::new(1, input.h, input.w))?,
            counter,
            max_iterations,
        })
    }

    pub fn reduce(&self, img: &BinaryImage) -> Result<(BinaryImage, usize, bool)> {
        recurrent_reduce(&normalize_polarity(img), self.max_iterations, |x| {
            apply_atom(&self.reducer, x)
        })
    }

    pub fn count(&self, img: &BinaryImage) -> Result<usize> {
        let (fixed, _, _) = self.reduce(img)?;
        Ok(self.counter.classify(&fixed.to_f32())? + 1)
    }
}

#[derive(Debug, Clone)]
pub struct CompositionOutcome {
    pub erosion: TrainedAtom,
    pub reduction: TrainedAtom,
    /// Counter accuracy on exact engine fixed points of baseline scenes.
    pub counter_accuracy: f64,
    /// Composed pipeline on each shifted test set.
    pub pipeline: Vec<ExperimentReport>,
    /// The black-box classifier on the identical sets.
    pub black_box: Vec<ExperimentReport>,
}

/// Shape-shifted and scale-shifted region test sets.
pub fn shifted_test_sets(
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
) -> Result<Vec<(String, Vec<SceneSpec>)>> {
    let st = &cfg.stimulus;
    let n = cfg.composition.test_per_class * MAX_COUNT;
    let t = derive_seed(seed, STREAM, 9);
    let mut sets = Vec::new();
    for sides in [3u8, 4] {
        let name = if sides == 3 { "triangles" } else { "squares" };
        sets.push((
            name.to_string(),
            generate_batch(
                Family::Polygons { sides },
                n,
                st,
                derive_seed(t, 0, sides as u64),
                exec,
            ),
        ));
    }
    let base = generate_batch(Family::Circles, n, st, derive_seed(t, 1, 0), exec);
    for (name, factor, salt) in [
        ("circles_scaled_up", 1.5, 2),
        ("circles_scaled_down", 0.5, 3),
    ] {
        let (specs, _) = scaled_set(&base, factor, st, |round| {
            Ok(generate_batch(
                Family::Circles,
                n,
                st,
                derive_seed(t, salt, round as u64),
                exec,
            ))
        })?;
        sets.push((name.to_string(), specs));
    }
    Ok(sets)
}

pub fn run_composition_pipeline(
    cfg: &ExperimentConfig,
    black_box: &Classifier,
    seed: u64,
    exec: Exec,
    log: &mut dyn FnMut(&str),
) -> Result<CompositionOutcome> {
    let c: &CompositionConfig = &cfg.composition;
    let erosion = train_atom(AtomTask::Erosion, cfg, seed, exec, log)?;
    log(&format!(
        "  erosion atom holdout pixel accuracy {:.6}",
        erosion.holdout_pixel_accuracy
    ));
    let reduction = train_atom(AtomTask::Reduction, cfg, seed, exec, log)?;
    log(&format!(
        "  reduction atom holdout pixel accuracy {:.6}",
        reduction.holdout_pixel_accuracy
    ));
    let counter = train_counter(cfg, seed, exec, log)?;

    let shrinker = Shrinker::new(&KernelBank::default());
    let probe = generate_batch(
        Family::Circles,
        c.test_per_class * MAX_COUNT,
        &cfg.stimulus,
        derive_seed(seed, STREAM, 8),
        exec,
    );
    let fixed = exec.try_map(&probe, |s| -> Result<BinaryImage> {
        let img = normalize_polarity(&rasterize(s)?);
        Ok(shrinker.run(&img, 256)?.fixed_point)
    })?;
    let labels: Vec<u8> = probe.iter().map(|s| s.label).collect();
    let counter_matrix = evaluate(
        |img| Ok(counter.classify(&img.to_f32())? + 1),
        &fixed,
        &labels,
        exec,
    )?;
    let counter_accuracy = counter_matrix.mean_accuracy();
    log(&format!(
        "  counter on exact fixed points: {counter_accuracy:.4}"
    ));

    let composed = RecurrentCounter::new(&reduction.net, counter, c.max_iterations)?;
    let hash = cfg.hash();
    let counter_hash = checkpoint_hash(&composed.counter);
    let (mut pipeline, mut bb) = (Vec::new(), Vec::new());
    for (name, specs) in shifted_test_sets(cfg, seed, exec)? {
        let (images, labels) = render_all(&specs, Representation::Region, exec)?;
        let dataset = DatasetRef::new(&name, "shifted", seed, &images, &labels);
        let m = evaluate(|img| composed.count(img), &images, &labels, exec)?;
        let mut r = ExperimentReport::new(&format!("composed_{name}"), seed, &hash, m);
        r.checkpoint = Some(format!("{}+{}", reduction.checkpoint, counter_hash));
        r.datasets = vec![dataset.clone()];
        r.stats.insert(
            "erosion_pixel_accuracy".into(),
            erosion.holdout_pixel_accuracy,
        );
        r.stats.insert(
            "reduction_pixel_accuracy".into(),
            reduction.holdout_pixel_accuracy,
        );
        r.stats
            .insert("counter_fixed_point_accuracy".into(), counter_accuracy);
        let m = evaluate(|img| black_box.count(img), &images, &labels, exec)?;
        let mut b = ExperimentReport::new(&format!("blackbox_{name}"), seed, &hash, m);
        b.checkpoint = Some(black_box.checkpoint.clone());
        b.datasets = vec![black_box.train_set.clone(), dataset];
        log(&format!(
            "  {name}: composed {:.4}, black box {:.4}",
            r.mean_accuracy, b.mean_accuracy
        ));
        pipeline.push(r);
        bb.push(b);
    }
    Ok(CompositionOutcome {
        erosion,
        reduction,
        counter_accuracy,
        pipeline,
        black_box: bb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::count_components;

    #[test]
    fn exact_atom_in_the_loop_is_the_engine() {
        let bank = KernelBank::default();
        let shrinker = Shrinker::new(&bank);
        let st = crate::stimulus::StimulusConfig::default();
        for spec in generate_batch(Family::Mixed, 24, &st, 4, Exec::Sequential) {
            let img = crate::morpho::fill_holes(&normalize_polarity(&rasterize(&spec).unwrap()));
            let (fixed, _, done) =
                recurrent_reduce(&img, 64, |x| Ok(prune_pass(x, bank.kernels()))).unwrap();
            assert!(done);
            assert_eq!(fixed, shrinker.run(&img, 256).unwrap().fixed_point);
            assert_eq!(fixed.count_ones(), count_components(&img));
        }
    }

    #[test]
    fn isolated_pixels_are_counted_correctly() {
        let s = isolated_pixel_samples(30, 16, 1);
        for (x, t) in s.inputs.iter().zip(&s.targets) {
            let img = BinaryImage::from_pixels(16, 16, x.clone()).unwrap();
            assert_eq!(SampleTarget::Class(count_components(&img) - 1), *t);
            assert_eq!(img.count_ones(), count_components(&img));
        }
    }

    #[test]
    fn atom_targets_follow_the_task() {
        let cfg = ExperimentConfig::default();
        let bank = KernelBank::default();
        let s = atom_samples(AtomTask::Reduction, 20, &cfg, 3, Exec::Sequential).unwrap();
        for (x, t) in s.inputs.iter().zip(&s.targets) {
            let img = BinaryImage::from_pixels(24, 24, x.clone()).unwrap();
            let want = prune_pass(&img, bank.kernels());
            assert_eq!(*t, SampleTarget::Mask(want.pixels().to_vec()));
        }
        assert!(s.inputs.iter().any(|x| x.iter().any(|&v| v > 0)));
    }
}
