use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{Loss, Network, Target};
use crate::error::Result;
use crate::par::Exec;
use crate::stimulus::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    /// (tensor, index, analytic, numeric) of the worst parameter.
    pub worst: (usize, usize, f64, f64),
}

/// Compares backprop against central differences on `samples` randomly
/// chosen parameters. Relative error is `|a - n| / max(|a|, |n|, 1e-10)`.
pub fn gradient_check(
    net: &Network<f64>,
    inputs: &[Vec<f64>],
    targets: &[Target<'_>],
    loss: Loss,
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheck> {
    let analytic = net
        .batch_grad(inputs, targets, loss, Exec::Sequential)?
        .grads;
    let sizes: Vec<usize> = net.params.iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = rng_for(seed);
    let mut probe = net.clone();
    let mut report = GradCheck {
        checked: 0,
        max_rel_error: 0.0,
        worst: (0, 0, 0.0, 0.0),
    };
    for _ in 0..samples {
        let mut flat = rng.random_range(0..total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        let orig = probe.params[t].data[flat];
        probe.params[t].data[flat] = orig + h;
        let plus = probe.loss(inputs, targets, loss)?;
        probe.params[t].data[flat] = orig - h;
        let minus = probe.loss(inputs, targets, loss)?;
        probe.params[t].data[flat] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[t][flat];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-10);
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = (t, flat, a, numeric);
        }
    }
    Ok(report)
}
