use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::image::BinaryImage;
use crate::morpho::{shrink, KernelBank};
use crate::neuralnet::{train_rcnn_kernels, RcnnHistory, RcnnInit, RcnnTrainConfig, TrainableRcnn};
use crate::par::Exec;
use crate::stimulus::{derive_seed, generate_batch, rasterize, rng_for, Family, StimulusConfig};

const STREAM: u64 = 0x70;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelStudy {
    pub random: RcnnHistory,
    pub near_solution: RcnnHistory,
    pub epsilon: f64,
    /// Images on which the hard-thresholded reference weights reproduce the
    /// engine's fixed point, out of `equivalence_total`.
    pub equivalence_matches: usize,
    pub equivalence_total: usize,
}

impl KernelStudy {
    pub fn equivalence_passed(&self) -> bool {
        self.equivalence_matches == self.equivalence_total
    }

    /// One row per step: `init,step,loss,distance`. Distance is measured after
    /// the step; the row with step 0 and an empty loss is the starting point.
    pub fn trajectories_csv(&self) -> String {
        let mut out = String::from("init,step,loss,distance\n");
        for (name, h) in [
            ("random", &self.random),
            ("near_solution", &self.near_solution),
        ] {
            out.push_str(&format!("{name},0,,{:.9}\n", h.distance[0]));
            for (i, l) in h.loss.iter().enumerate() {
                out.push_str(&format!(
                    "{name},{},{l:.9},{:.9}\n",
                    i + 1,
                    h.distance[i + 1]
                ));
            }
        }
        out
    }
}

/// Small hole-free circle scenes with their 0-based labels.
pub fn study_images(
    n: usize,
    image_size: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<(BinaryImage, usize)>> {
    let st = StimulusConfig {
        image_size,
        baseline_radius: [3.0, 4.0],
        ..StimulusConfig::default()
    };
    let specs = generate_batch(Family::Circles, n, &st, seed, exec);
    exec.try_map(&specs, |s| Ok((rasterize(s)?, s.label as usize - 1)))
}

/// Hard-threshold equivalence of the reference weights with the engine on
/// uniform-noise images of varying density.
pub fn equivalence_check(bank: &KernelBank, images: usize, seed: u64, exec: Exec) -> Result<usize> {
    let r = TrainableRcnn::from_bank(bank, Default::default());
    let hits = exec.try_map_range(images, |i| -> Result<bool> {
        let mut rng = rng_for(derive_seed(seed, 0, i as u64));
        let (w, h) = (rng.random_range(3..=24), rng.random_range(3..=24));
        let density = rng.random_range(0.1..0.9);
        let mut img = BinaryImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, rng.random_bool(density));
            }
        }
        let limit = w * h + 1;
        Ok(r.hard_shrink(&img, limit) == shrink(&img, bank, limit)?.fixed_point)
    })?;
    Ok(hits.into_iter().filter(|&h| h).count())
}

pub fn run_kernel_learning_study(
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
    log: &mut dyn FnMut(&str),
) -> Result<KernelStudy> {
    let k = &cfg.kernel_study;
    let s = derive_seed(seed, STREAM, 0);
    let bank = KernelBank::default();
    let data = study_images(k.images, k.image_size, derive_seed(s, 0, 0), exec)?;
    let mut run = |init: RcnnInit, salt: u64| -> Result<RcnnHistory> {
        let mut rcnn = TrainableRcnn::init(init, &bank, derive_seed(s, 1, salt), k.rcnn);
        let tc = RcnnTrainConfig {
            optimizer: k.optimizer,
            batch_size: k.batch_size,
            steps: k.steps,
            seed: derive_seed(s, 2, salt),
        };
        let h = train_rcnn_kernels(&mut rcnn, &data, &tc, &bank, exec)?;
        log(&format!(
            "  {init:?}: loss {:.4} -> {:.4}, distance {:.4} -> {:.4}, oscillation {:.3}",
            h.loss.first().copied().unwrap_or(f64::NAN),
            h.loss.last().copied().unwrap_or(f64::NAN),
            h.distance[0],
            h.distance.last().copied().unwrap_or(f64::NAN),
            h.oscillation()
        ));
        Ok(h)
    };
    let random = run(RcnnInit::Random, 0)?;
    let near_solution = run(RcnnInit::NearSolution { epsilon: k.epsilon }, 1)?;
    let matches = equivalence_check(&bank, k.equivalence_images, derive_seed(s, 3, 0), exec)?;
    log(&format!(
        "  hard-threshold equivalence {matches}/{}",
        k.equivalence_images
    ));
    Ok(KernelStudy {
        random,
        near_solution,
        epsilon: k.epsilon,
        equivalence_matches: matches,
        equivalence_total: k.equivalence_images,
    })
}
