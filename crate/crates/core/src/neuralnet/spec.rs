use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Channel-major activation shape of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum LayerSpec {
    /// Stride 1, zero `same` padding; `size` must be odd.
    Conv {
        size: usize,
        filters: usize,
    },
    /// 2x2 window, stride 2.
    MaxPool,
    Relu,
    /// Flattens its input.
    Fc {
        width: usize,
    },
    /// Only valid as the last layer.
    Softmax,
    /// `x + conv(relu(conv(x)))` with channel count preserved.
    Residual {
        size: usize,
    },
    /// Sums each channel over the whole map.
    SumPool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Dims,
    pub layers: Vec<LayerSpec>,
    pub init_seed: u64,
}

impl NetworkSpec {
    /// The subitizing classifier: Conv7-32+pool, Conv5-32+pool, Conv3-64,
    /// Conv3-64, Conv3-128+pool, FC128, FC6, softmax.
    pub fn count_classifier(image_size: usize, init_seed: u64) -> Self {
        use LayerSpec::*;
        Self {
            input: Dims::new(1, image_size, image_size),
            layers: vec![
                Conv {
                    size: 7,
                    filters: 32,
                },
                Relu,
                MaxPool,
                Conv {
                    size: 5,
                    filters: 32,
                },
                Relu,
                MaxPool,
                Conv {
                    size: 3,
                    filters: 64,
                },
                Relu,
                Conv {
                    size: 3,
                    filters: 64,
                },
                Relu,
                Conv {
                    size: 3,
                    filters: 128,
                },
                Relu,
                MaxPool,
                Fc { width: 128 },
                Relu,
                Fc { width: 6 },
                Softmax,
            ],
            init_seed,
        }
    }

    /// Fully convolutional per-pixel predictor: a 3x3 stem, `blocks`
    /// residual blocks of `width` channels and a 1-channel 3x3 logit head.
    pub fn erosion_atom(size: usize, width: usize, blocks: usize, init_seed: u64) -> Self {
        let mut layers = vec![
            LayerSpec::Conv {
                size: 3,
                filters: width,
            },
            LayerSpec::Relu,
        ];
        layers.extend((0..blocks).map(|_| LayerSpec::Residual { size: 3 }));
        layers.push(LayerSpec::Conv {
            size: 3,
            filters: 1,
        });
        Self {
            input: Dims::new(1, size, size),
            layers,
            init_seed,
        }
    }

    /// Counter over a whole image: the pixel sum feeds a small MLP.
    pub fn counting_head(image_size: usize, hidden: usize, init_seed: u64) -> Self {
        Self {
            input: Dims::new(1, image_size, image_size),
            layers: vec![
                LayerSpec::SumPool,
                LayerSpec::Fc { width: hidden },
                LayerSpec::Relu,
                LayerSpec::Fc { width: 6 },
                LayerSpec::Softmax,
            ],
            init_seed,
        }
    }

    /// Same architecture on a different input size (fully convolutional nets).
    pub fn with_input(&self, input: Dims) -> Self {
        Self {
            input,
            ..self.clone()
        }
    }

    /// Activation shapes: input first, then the output of every layer.
    pub fn shapes(&self) -> Result<Vec<Dims>> {
        let mut dims = vec![self.input];
        if self.input.is_empty() {
            return Err(Error::ShapeMismatch("empty input".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let d = *dims.last().expect("non-empty");
            let next = match *layer {
                LayerSpec::Conv { size, filters } => {
                    if size % 2 == 0 || filters == 0 {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {i}: conv needs an odd size and at least one filter"
                        )));
                    }
                    Dims::new(filters, d.h, d.w)
                }
                LayerSpec::MaxPool => {
                    if d.h < 2 || d.w < 2 {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {i}: cannot pool {d:?}"
                        )));
                    }
                    Dims::new(d.c, d.h / 2, d.w / 2)
                }
                LayerSpec::Relu => d,
                LayerSpec::SumPool => Dims::new(d.c, 1, 1),
                LayerSpec::Fc { width } => {
                    if width == 0 {
                        return Err(Error::ShapeMismatch(format!("layer {i}: fc width 0")));
                    }
                    Dims::new(width, 1, 1)
                }
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {i}: softmax must be last"
                        )));
                    }
                    d
                }
                LayerSpec::Residual { size } => {
                    if size % 2 == 0 {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {i}: residual needs an odd size"
                        )));
                    }
                    d
                }
            };
            dims.push(next);
        }
        Ok(dims)
    }

    pub fn output(&self) -> Result<Dims> {
        Ok(*self.shapes()?.last().expect("non-empty"))
    }

    pub fn ends_in_softmax(&self) -> bool {
        self.layers.last() == Some(&LayerSpec::Softmax)
    }

    /// Shapes of all parameter tensors in network order.
    pub fn param_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let dims = self.shapes()?;
        let mut out = Vec::new();
        for (layer, d) in self.layers.iter().zip(&dims) {
            match *layer {
                LayerSpec::Conv { size, filters } => {
                    out.push(vec![filters, d.c, size, size]);
                    out.push(vec![filters]);
                }
                LayerSpec::Fc { width } => {
                    out.push(vec![width, d.len()]);
                    out.push(vec![width]);
                }
                LayerSpec::Residual { size } => {
                    for _ in 0..2 {
                        out.push(vec![d.c, d.c, size, size]);
                        out.push(vec![d.c]);
                    }
                }
                _ => {}
            }
        }
        Ok(out)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum())
    }

    /// Hex SHA-256 over input shape and layers; the init seed is excluded
    /// since it does not change the parameter layout.
    pub fn architecture_hash(&self) -> String {
        let canonical = serde_json::to_vec(&(&self.input, &self.layers)).expect("serializable");
        hex::encode(Sha256::digest(canonical))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifier_shape_algebra() {
        let spec = NetworkSpec::count_classifier(64, 0);
        let dims = spec.shapes().unwrap();
        let pooled: Vec<Dims> = spec
            .layers
            .iter()
            .zip(&dims[1..])
            .filter(|(l, _)| **l == LayerSpec::MaxPool)
            .map(|(_, d)| *d)
            .collect();
        assert_eq!(
            pooled.iter().map(|d| d.h).collect::<Vec<_>>(),
            vec![32, 16, 8]
        );
        let fc_in = dims[spec
            .layers
            .iter()
            .position(|l| matches!(l, LayerSpec::Fc { .. }))
            .unwrap()];
        assert_eq!(fc_in.len(), 8 * 8 * 128);
        assert_eq!(spec.output().unwrap(), Dims::new(6, 1, 1));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = NetworkSpec::count_classifier(64, 0);
        spec.layers.insert(0, LayerSpec::Softmax);
        assert!(matches!(spec.shapes(), Err(Error::ShapeMismatch(_))));
        let even = NetworkSpec {
            input: Dims::new(1, 8, 8),
            layers: vec![LayerSpec::Conv {
                size: 4,
                filters: 2,
            }],
            init_seed: 0,
        };
        assert!(even.shapes().is_err());
    }

    #[test]
    fn hash_ignores_seed_only() {
        let a = NetworkSpec::count_classifier(64, 1);
        assert_eq!(
            a.architecture_hash(),
            NetworkSpec::count_classifier(64, 2).architecture_hash()
        );
        assert_ne!(
            a.architecture_hash(),
            NetworkSpec::count_classifier(32, 1).architecture_hash()
        );
    }

    #[test]
    fn erosion_atom_has_four_blocks_of_two_convs() {
        let spec = NetworkSpec::erosion_atom(24, 16, 4, 0);
        let blocks = spec
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Residual { .. }))
            .count();
        assert_eq!(blocks, 4);
        assert_eq!(spec.output().unwrap(), Dims::new(1, 24, 24));
        assert_eq!(spec.param_shapes().unwrap().len(), 2 + 4 * 4 + 2);
    }
}
