//! The shrinking engine as a trainable recurrent network.
//!
//! Six real 3x3 kernels (54 weights) play the role of the template bank; the
//! second half of every cycle uses their point reflections, so weights are
//! tied across both passes. A kernel fires at a pixel when its correlation
//! exceeds `sum(max(w, 0)) - 0.5`, a threshold derived from the weights
//! rather than learned separately. With exact template weights and a hard
//! step this is the engine itself; training replaces the step by a sigmoid
//! of temperature `T`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::network::softmax;
use super::tensor::Tensor;
use super::train::{Optimizer, OptimizerConfig};
use crate::error::{Error, Result};
use crate::image::BinaryImage;
use crate::morpho::{KernelBank, WINDOW};
use crate::par::Exec;
use crate::stimulus::rng_for;

pub const KERNELS: usize = 6;
pub const TAPS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RcnnConfig {
    /// Sigmoid temperature of the soft match.
    pub temperature: f64,
    /// Unrolled cycles.
    pub depth: usize,
    /// Width of the Gaussian count likelihood that turns the surviving mass
    /// into class logits.
    pub count_sigma: f64,
}

impl Default for RcnnConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            depth: 32,
            count_sigma: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum RcnnInit {
    Random,
    /// Reference bank plus Gaussian noise of this standard deviation.
    NearSolution {
        epsilon: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainableRcnn {
    /// Shape `[6, 9]`, row-major 3x3 per kernel.
    pub weights: Tensor<f64>,
    pub config: RcnnConfig,
}

fn bank_weights(bank: &KernelBank) -> Vec<f64> {
    bank.kernels()
        .iter()
        .flat_map(|k| k.weights().iter().map(|&w| f64::from(w)))
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Neighbour indices of every pixel in window order; `usize::MAX` outside.
fn neighbours(w: usize, h: usize) -> Vec<[usize; TAPS]> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut nb = [usize::MAX; TAPS];
            for (slot, (dx, dy)) in nb.iter_mut().zip(WINDOW) {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    *slot = ny as usize * w + nx as usize;
                }
            }
            out.push(nb);
        }
    }
    out
}

/// Tap index of kernel weight `j` in a pass; rotated passes read the weights
/// reversed.
fn tap(j: usize, rotated: bool) -> usize {
    if rotated {
        TAPS - 1 - j
    } else {
        j
    }
}

struct PassTape {
    x: Vec<f64>,
    /// Soft match of every kernel at every pixel, `[pixel * 6 + k]`.
    m: Vec<f64>,
}

impl TrainableRcnn {
    pub fn from_bank(bank: &KernelBank, config: RcnnConfig) -> Self {
        Self {
            weights: Tensor::from_vec(&[KERNELS, TAPS], bank_weights(bank)).expect("6x9"),
            config,
        }
    }

    pub fn init(init: RcnnInit, reference: &KernelBank, seed: u64, config: RcnnConfig) -> Self {
        let mut rng = rng_for(seed);
        let mut net = Self::from_bank(reference, config);
        match init {
            RcnnInit::Random => {
                for w in &mut net.weights.data {
                    *w = rng.random_range(-1.0..1.0);
                }
            }
            RcnnInit::NearSolution { epsilon } => {
                if epsilon > 0.0 {
                    let noise = Normal::new(0.0, epsilon).expect("finite");
                    for w in &mut net.weights.data {
                        *w += noise.sample(&mut rng);
                    }
                }
            }
        }
        net
    }

    pub fn weight_count(&self) -> usize {
        self.weights.len()
    }

    fn kernel(&self, k: usize) -> &[f64] {
        &self.weights.data[k * TAPS..(k + 1) * TAPS]
    }

    pub fn thresholds(&self) -> [f64; KERNELS] {
        std::array::from_fn(|k| self.kernel(k).iter().map(|w| w.max(0.0)).sum::<f64>() - 0.5)
    }

    /// Euclidean distance of the weights to a bank's templates.
    pub fn distance_to(&self, bank: &KernelBank) -> f64 {
        self.weights
            .data
            .iter()
            .zip(bank_weights(bank))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn hard_pass(&self, img: &BinaryImage, rotated: bool) -> BinaryImage {
        let th = self.thresholds();
        let mut out = img.clone();
        for (x, y) in img.ones() {
            let fires = (0..KERNELS).any(|k| {
                let w = self.kernel(k);
                let corr: f64 = WINDOW
                    .iter()
                    .enumerate()
                    .map(|(j, (dx, dy))| {
                        let v = img.at(x as isize + dx, y as isize + dy);
                        if v {
                            w[tap(j, rotated)]
                        } else {
                            0.0
                        }
                    })
                    .sum();
                corr > th[k]
            });
            if fires {
                out.set(x, y, false);
            }
        }
        out
    }

    /// One hard-thresholded cycle: kernels, then their reflections.
    pub fn hard_cycle(&self, img: &BinaryImage) -> BinaryImage {
        self.hard_pass(&self.hard_pass(img, false), true)
    }

    /// Hard cycles until nothing changes or `max_cycles` have run.
    pub fn hard_shrink(&self, img: &BinaryImage, max_cycles: usize) -> BinaryImage {
        let mut cur = img.clone();
        for _ in 0..max_cycles {
            let next = self.hard_cycle(&cur);
            if next == cur {
                break;
            }
            cur = next;
        }
        cur
    }

    fn soft_pass(&self, x: &[f64], nb: &[[usize; TAPS]], rotated: bool) -> (Vec<f64>, Vec<f64>) {
        let th = self.thresholds();
        let t = self.config.temperature;
        let mut out = vec![0.0; x.len()];
        let mut m = vec![0.0; x.len() * KERNELS];
        for (i, taps) in nb.iter().enumerate() {
            let mut keep = 1.0;
            for k in 0..KERNELS {
                let w = self.kernel(k);
                let mut corr = 0.0;
                for (j, &n) in taps.iter().enumerate() {
                    if n != usize::MAX {
                        corr += w[tap(j, rotated)] * x[n];
                    }
                }
                let mk = sigmoid((corr - th[k]) / t);
                m[i * KERNELS + k] = mk;
                keep *= 1.0 - mk;
            }
            out[i] = x[i] * keep;
        }
        (out, m)
    }

    /// Soft survivor mass after `depth` cycles.
    pub fn soft_count(&self, img: &BinaryImage) -> f64 {
        let nb = neighbours(img.width(), img.height());
        let mut x = img.to_f64();
        for _ in 0..self.config.depth {
            for rotated in [false, true] {
                x = self.soft_pass(&x, &nb, rotated).0;
            }
        }
        x.iter().sum()
    }

    fn count_logits(&self, s: f64) -> Vec<f64> {
        let var = self.config.count_sigma * self.config.count_sigma;
        (1..=KERNELS)
            .map(|m| -(s - m as f64).powi(2) / (2.0 * var))
            .collect()
    }

    /// Cross-entropy of the count logits against class `label` (0-based)
    /// and its gradient with respect to the 54 weights.
    pub fn loss_and_grad(&self, img: &BinaryImage, label: usize) -> (f64, Vec<f64>) {
        let nb = neighbours(img.width(), img.height());
        let mut x = img.to_f64();
        let mut tape = Vec::with_capacity(2 * self.config.depth);
        for _ in 0..self.config.depth {
            for rotated in [false, true] {
                let (next, m) = self.soft_pass(&x, &nb, rotated);
                tape.push(PassTape { x, m });
                x = next;
            }
        }
        let s: f64 = x.iter().sum();
        let z = self.count_logits(s);
        let p = softmax(&z);
        let loss = -p[label].max(1e-300).ln();
        let var = self.config.count_sigma * self.config.count_sigma;
        let ds: f64 = (0..KERNELS)
            .map(|m| {
                let target = if m == label { 1.0 } else { 0.0 };
                (p[m] - target) * (-(s - (m + 1) as f64) / var)
            })
            .sum();

        let t = self.config.temperature;
        let mut grad = vec![0.0; KERNELS * TAPS];
        let mut g = vec![ds; x.len()];
        for (step, pass) in tape.iter().enumerate().rev() {
            let rotated = step % 2 == 1;
            let mut gx = vec![0.0; g.len()];
            for (i, taps) in nb.iter().enumerate() {
                let ms = &pass.m[i * KERNELS..(i + 1) * KERNELS];
                let keep: f64 = ms.iter().map(|m| 1.0 - m).product();
                gx[i] += g[i] * keep;
                let dkeep = g[i] * pass.x[i];
                if dkeep == 0.0 {
                    continue;
                }
                for k in 0..KERNELS {
                    let others: f64 = (0..KERNELS)
                        .filter(|&j| j != k)
                        .map(|j| 1.0 - ms[j])
                        .product();
                    let dz = -dkeep * others * ms[k] * (1.0 - ms[k]) / t;
                    if dz == 0.0 {
                        continue;
                    }
                    let w = self.kernel(k);
                    for (j, &n) in taps.iter().enumerate() {
                        if n != usize::MAX {
                            let tj = tap(j, rotated);
                            grad[k * TAPS + tj] += dz * pass.x[n];
                            gx[n] += dz * w[tj];
                        }
                    }
                    // The threshold depends on the positive weights.
                    for (j, &wj) in w.iter().enumerate() {
                        if wj > 0.0 {
                            grad[k * TAPS + j] -= dz;
                        }
                    }
                }
            }
            g = gx;
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcnnTrainConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RcnnHistory {
    pub loss: Vec<f64>,
    /// Distance to the reference bank after each step (entry 0 is the
    /// initial distance).
    pub distance: Vec<f64>,
}

impl RcnnHistory {
    /// Fraction of steps whose loss exceeded the previous step's.
    pub fn oscillation(&self) -> f64 {
        if self.loss.len() < 2 {
            return 0.0;
        }
        let ups = self.loss.windows(2).filter(|w| w[1] > w[0]).count();
        ups as f64 / (self.loss.len() - 1) as f64
    }
}

/// Gradient descent through the unrolled soft computation. Makes no promise
/// of convergence; it records what happens.
pub fn train_rcnn_kernels(
    rcnn: &mut TrainableRcnn,
    data: &[(BinaryImage, usize)],
    cfg: &RcnnTrainConfig,
    reference: &KernelBank,
    exec: Exec,
) -> Result<RcnnHistory> {
    if cfg.batch_size == 0 || data.is_empty() {
        return Err(Error::Config(
            "rcnn training needs data and a positive batch size".into(),
        ));
    }
    let mut opt = Optimizer::new(cfg.optimizer, std::slice::from_ref(&rcnn.weights));
    let mut history = RcnnHistory {
        loss: Vec::with_capacity(cfg.steps),
        distance: vec![rcnn.distance_to(reference)],
    };
    let mut rng = rng_for(cfg.seed);
    for step in 0..cfg.steps {
        let batch: Vec<usize> = (0..cfg.batch_size)
            .map(|_| rng.random_range(0..data.len()))
            .collect();
        let parts = exec.map(&batch, |&i| rcnn.loss_and_grad(&data[i].0, data[i].1));
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; KERNELS * TAPS];
        for (l, g) in parts {
            loss += l / n;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b / n;
            }
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { step, loss });
        }
        rcnn.weights.grad = grad;
        if cfg.optimizer.lr() > 0.0 {
            opt.step(std::slice::from_mut(&mut rcnn.weights));
        }
        history.loss.push(loss);
        history.distance.push(rcnn.distance_to(reference));
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morpho::{KernelBank, Shrinker};

    fn random_image(seed: u64, w: usize, h: usize, density: f64) -> BinaryImage {
        let mut rng = rng_for(seed);
        let mut img = BinaryImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, rng.random_bool(density));
            }
        }
        img
    }

    #[test]
    fn has_54_weights() {
        let r = TrainableRcnn::from_bank(&KernelBank::default(), RcnnConfig::default());
        assert_eq!(r.weight_count(), 54);
    }

    #[test]
    fn hard_reference_cycle_matches_engine() {
        let bank = KernelBank::default();
        let r = TrainableRcnn::from_bank(&bank, RcnnConfig::default());
        let shrinker = Shrinker::new(&bank);
        for seed in 0..200 {
            let img = random_image(seed, 12, 9, 0.55);
            assert_eq!(r.hard_cycle(&img), shrinker.cycle(&img).0, "seed {seed}");
        }
    }

    #[test]
    fn zero_noise_starts_at_reference_and_zero_lr_stays() {
        let bank = KernelBank::default();
        let mut r = TrainableRcnn::init(
            RcnnInit::NearSolution { epsilon: 0.0 },
            &bank,
            1,
            RcnnConfig {
                depth: 4,
                ..Default::default()
            },
        );
        assert_eq!(r.distance_to(&bank), 0.0);
        let data = vec![(random_image(3, 8, 8, 0.3), 1)];
        let cfg = RcnnTrainConfig {
            optimizer: OptimizerConfig::Sgd {
                lr: 0.0,
                momentum: 0.0,
            },
            batch_size: 1,
            steps: 5,
            seed: 0,
        };
        let h = train_rcnn_kernels(&mut r, &data, &cfg, &bank, Exec::Sequential).unwrap();
        assert_eq!(h.loss.len(), 5);
        assert!(h.loss.windows(2).all(|w| w[0] == w[1]));
        assert!(h.distance.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn soft_gradient_matches_finite_differences() {
        let bank = KernelBank::default();
        let cfg = RcnnConfig {
            temperature: 0.7,
            depth: 2,
            count_sigma: 1.0,
        };
        let r = TrainableRcnn::init(RcnnInit::Random, &bank, 5, cfg);
        let img = random_image(7, 6, 5, 0.5);
        let (_, grad) = r.loss_and_grad(&img, 2);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..54 {
            let mut p = r.clone();
            p.weights.data[i] += h;
            let lp = p.loss_and_grad(&img, 2).0;
            p.weights.data[i] -= 2.0 * h;
            let lm = p.loss_and_grad(&img, 2).0;
            let num = (lp - lm) / (2.0 * h);
            let rel = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "{worst}");
    }
}
