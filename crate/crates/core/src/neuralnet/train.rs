use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{Loss, Network, Target};
use super::spec::Dims;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::stimulus::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
        momentum: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }
}

/// First-order optimizer state over a list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    config: OptimizerConfig,
    steps: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig, params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            config,
            steps: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from each tensor's `grad`.
    pub fn step(&mut self, params: &mut [Tensor<T>]) {
        self.steps += 1;
        match self.config {
            OptimizerConfig::Sgd { lr, momentum } => {
                let (lr, mu) = (T::of(lr), T::of(momentum));
                for (t, m) in params.iter_mut().zip(&mut self.m) {
                    for ((w, g), mv) in t.data.iter_mut().zip(&t.grad).zip(m.iter_mut()) {
                        *mv = mu * *mv + *g;
                        *w = *w - lr * *mv;
                    }
                }
            }
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t_f = self.steps as f64;
                let step = lr * (1.0 - beta2.powf(t_f)).sqrt() / (1.0 - beta1.powf(t_f));
                let (b1, b2, eps, step) = (T::of(beta1), T::of(beta2), T::of(eps), T::of(step));
                let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
                for ((t, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
                    for (((w, &g), mv), vv) in t
                        .data
                        .iter_mut()
                        .zip(&t.grad)
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *mv = b1 * *mv + one_b1 * g;
                        *vv = b2 * *vv + one_b2 * g * g;
                        *w = *w - step * *mv / (vv.sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: Loss,
    pub seed: u64,
    /// Stop once validation accuracy reaches this value.
    pub early_stop: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::adam(1e-3),
            batch_size: 64,
            epochs: 30,
            loss: Loss::CrossEntropy,
            seed: 0,
            early_stop: Some(0.995),
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.optimizer.lr() > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleTarget {
    Class(usize),
    Mask(Vec<u8>),
}

impl SampleTarget {
    pub fn as_target(&self) -> Target<'_> {
        match self {
            SampleTarget::Class(c) => Target::Class(*c),
            SampleTarget::Mask(m) => Target::Mask(m),
        }
    }
}

/// Binary-valued training samples; inputs are 0/1 bytes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Samples {
    pub inputs: Vec<Vec<u8>>,
    pub targets: Vec<SampleTarget>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, input: Vec<u8>, target: SampleTarget) {
        self.inputs.push(input);
        self.targets.push(target);
    }

    pub fn input_as<T: Scalar>(&self, i: usize) -> Vec<T> {
        self.inputs[i]
            .iter()
            .map(|&v| if v > 0 { T::one() } else { T::zero() })
            .collect()
    }

    fn check(&self, dims: Dims) -> Result<()> {
        if let Some(bad) = self.inputs.iter().find(|x| x.len() != dims.len()) {
            return Err(Error::ShapeMismatch(format!(
                "sample of {} values, network expects {dims:?}",
                bad.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    /// Mean batch loss of every optimizer step.
    pub step_losses: Vec<f64>,
    pub stopped_early: bool,
}

/// Mean loss and accuracy of `net` over `samples`, forward only.
pub fn evaluate_samples<T: Scalar>(
    net: &Network<T>,
    samples: &Samples,
    loss: Loss,
    exec: Exec,
) -> Result<(f64, f64)> {
    samples.check(net.input_dims())?;
    let (mut loss_sum, mut correct) = (0.0, 0.0);
    for start in (0..samples.len()).step_by(256) {
        let end = (start + 256).min(samples.len());
        let inputs: Vec<Vec<T>> = (start..end).map(|i| samples.input_as(i)).collect();
        let targets: Vec<Target> = samples.targets[start..end]
            .iter()
            .map(SampleTarget::as_target)
            .collect();
        let (l, c) = net.evaluate(&inputs, &targets, loss, exec)?;
        loss_sum += l;
        correct += c;
    }
    let n = samples.len().max(1) as f64;
    Ok((loss_sum / n, correct / n))
}

/// Mini-batch training. Shuffling uses a generator seeded from `cfg.seed`
/// and the epoch, so a run is reproducible bit for bit.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    data: &Samples,
    validation: Option<&Samples>,
    cfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<History> {
    cfg.check()?;
    data.check(net.input_dims())?;
    if data.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut opt = Optimizer::new(cfg.optimizer, &net.params);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_for(
            cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ));
        let (mut loss_sum, mut correct) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<Vec<T>> = batch.iter().map(|&i| data.input_as(i)).collect();
            let targets: Vec<Target> = batch.iter().map(|&i| data.targets[i].as_target()).collect();
            let bg = net.batch_grad(&inputs, &targets, cfg.loss, exec)?;
            let mean = bg.loss_sum / batch.len() as f64;
            if !mean.is_finite() {
                return Err(Error::Divergence {
                    step: history.step_losses.len(),
                    loss: mean,
                });
            }
            for (t, g) in net.params.iter_mut().zip(bg.grads) {
                t.grad = g;
            }
            opt.step(&mut net.params);
            history.step_losses.push(mean);
            loss_sum += bg.loss_sum;
            correct += bg.correct;
        }
        let n = data.len() as f64;
        let (val_loss, val_accuracy) = match validation {
            Some(v) if !v.is_empty() => {
                let (l, a) = evaluate_samples(net, v, cfg.loss, exec)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct / n,
            val_loss,
            val_accuracy,
        };
        on_epoch(&stats);
        history.epochs.push(stats);
        if let (Some(goal), Some(acc)) = (cfg.early_stop, val_accuracy) {
            if acc >= goal {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::spec::{LayerSpec, NetworkSpec};

    fn toy() -> (NetworkSpec, Samples) {
        // Class 0: bright left half; class 1: bright right half.
        let spec = NetworkSpec {
            input: Dims::new(1, 4, 4),
            layers: vec![
                LayerSpec::Conv {
                    size: 3,
                    filters: 2,
                },
                LayerSpec::Relu,
                LayerSpec::Fc { width: 2 },
                LayerSpec::Softmax,
            ],
            init_seed: 1,
        };
        let mut s = Samples::default();
        let mut rng = rng_for(9);
        use rand::Rng;
        for i in 0..64 {
            let class = i % 2;
            let img: Vec<u8> = (0..16)
                .map(|p| {
                    let left = p % 4 < 2;
                    u8::from((left == (class == 0)) || rng.random_bool(0.1))
                })
                .collect();
            s.push(img, SampleTarget::Class(class));
        }
        (spec, s)
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            optimizer: OptimizerConfig::Sgd {
                lr: 0.1,
                momentum: 0.0,
            },
            batch_size: 64,
            epochs,
            loss: Loss::CrossEntropy,
            seed: 3,
            early_stop: None,
        }
    }

    #[test]
    fn loss_trends_down_on_separable_toy() {
        let (spec, data) = toy();
        let mut net = Network::<f64>::new(spec).unwrap();
        let h = train(&mut net, &data, None, &cfg(50), Exec::default(), |_| {}).unwrap();
        let l = &h.step_losses;
        assert_eq!(l.len(), 50);
        let decreases = l.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(decreases >= 45, "{decreases}");
        assert!(l[49] < 0.5 * l[0]);
    }

    #[test]
    fn same_seed_same_history() {
        let (spec, data) = toy();
        let run = || {
            let mut net = Network::<f32>::new(spec.clone()).unwrap();
            let mut c = cfg(3);
            c.batch_size = 8;
            c.optimizer = OptimizerConfig::adam(0.01);
            let h = train(&mut net, &data, Some(&data), &c, Exec::default(), |_| {}).unwrap();
            (h, net.flat_params())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_is_reported() {
        let (spec, data) = toy();
        let mut net = Network::<f32>::new(spec).unwrap();
        net.params[0].data[0] = f32::NAN;
        let err = train(&mut net, &data, None, &cfg(1), Exec::default(), |_| {}).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 0, .. }));
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(1);
        c.batch_size = 0;
        assert!(c.check().is_err());
        c.batch_size = 1;
        c.optimizer = OptimizerConfig::Sgd {
            lr: 0.0,
            momentum: 0.0,
        };
        assert!(c.check().is_err());
    }
}
