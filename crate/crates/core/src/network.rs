//! Executable sequential networks built from an [`ArchSpec`].
//!
//! Convolutions carry no bias and are followed by ReLU; linear layers carry a
//! bias and are followed by ReLU unless they produce the logits.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::arch::{ArchSpec, LayerKind};
use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv {
        id: String,
        weight: Tensor,
        stride: usize,
        padding: usize,
    },
    Relu,
    Pool {
        kernel: usize,
    },
    Linear {
        id: String,
        weight: Tensor,
        bias: Tensor,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: ArchSpec,
    layers: Vec<Layer>,
}

/// Inputs seen by each layer during a forward pass, for the backward pass.
pub struct Tape {
    inputs: Vec<Tensor>,
}

impl Network {
    /// Builds the network with He-normal conv weights and uniform linear weights.
    pub fn init<R: Rng>(arch: &ArchSpec, rng: &mut R) -> Result<Self> {
        let mut weights = BTreeMap::new();
        for l in &arch.layers {
            match l.kind {
                LayerKind::Conv => {
                    let fan_in = (l.in_channels * l.kernel * l.kernel) as f64;
                    let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
                    let shape = [l.out_channels, l.in_channels, l.kernel, l.kernel];
                    let len = shape.iter().product();
                    let data = (0..len).map(|_| normal.sample(rng)).collect();
                    weights.insert(format!("{}.weight", l.id), Tensor::from_vec(&shape, data)?);
                }
                LayerKind::Linear => {
                    let bound = 1.0 / (l.in_channels as f64).sqrt();
                    let uniform = Uniform::new(-bound, bound).expect("non-empty range");
                    let shape = [l.out_channels, l.in_channels];
                    let data = (0..l.out_channels * l.in_channels)
                        .map(|_| uniform.sample(rng))
                        .collect();
                    weights.insert(format!("{}.weight", l.id), Tensor::from_vec(&shape, data)?);
                    weights.insert(format!("{}.bias", l.id), Tensor::zeros(&[l.out_channels]));
                }
                _ => {}
            }
        }
        Self::from_weights(arch, weights)
    }

    /// Builds the network from named tensors (`<layer>.weight`, `<layer>.bias`).
    pub fn from_weights(arch: &ArchSpec, mut weights: BTreeMap<String, Tensor>) -> Result<Self> {
        arch.validate()?;
        let mut take = |name: String, shape: &[usize]| -> Result<Tensor> {
            let t = weights
                .remove(&name)
                .ok_or_else(|| Error::InvalidArch(format!("missing tensor `{name}`")))?;
            t.expect_shape("load_weights", shape)?;
            Ok(t)
        };
        let mut layers = Vec::new();
        for (i, l) in arch.layers.iter().enumerate() {
            if i > 0 && l.predecessors != [arch.layers[i - 1].id.clone()] {
                return Err(Error::InvalidArch(format!(
                    "`{}` is not a sequential network (layer `{}`)",
                    arch.name, l.id
                )));
            }
            match l.kind {
                LayerKind::Input | LayerKind::Output => {}
                LayerKind::Add => unreachable!("adds have two predecessors"),
                LayerKind::Conv => {
                    let shape = [l.out_channels, l.in_channels, l.kernel, l.kernel];
                    layers.push(Layer::Conv {
                        id: l.id.clone(),
                        weight: take(format!("{}.weight", l.id), &shape)?,
                        stride: l.stride,
                        padding: l.padding,
                    });
                    layers.push(Layer::Relu);
                }
                LayerKind::Pool => layers.push(Layer::Pool { kernel: l.kernel }),
                LayerKind::Linear => {
                    layers.push(Layer::Linear {
                        id: l.id.clone(),
                        weight: take(format!("{}.weight", l.id), &[l.out_channels, l.in_channels])?,
                        bias: take(format!("{}.bias", l.id), &[l.out_channels])?,
                    });
                    if arch.layers[i + 1].kind != LayerKind::Output {
                        layers.push(Layer::Relu);
                    }
                }
            }
        }
        if let Some(extra) = weights.keys().next() {
            return Err(Error::InvalidArch(format!("unexpected tensor `{extra}`")));
        }
        Ok(Self {
            arch: arch.clone(),
            layers,
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        let l = &self.arch.layers[0];
        [l.out_channels, l.out_h, l.out_w]
    }

    pub fn classes(&self) -> usize {
        self.arch.layers.last().map_or(0, |l| l.out_channels)
    }

    /// All parameters by name, in layer order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv { id, weight, .. } => out.push((format!("{id}.weight"), weight)),
                Layer::Linear { id, weight, bias } => {
                    out.push((format!("{id}.weight"), weight));
                    out.push((format!("{id}.bias"), bias));
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv { weight, .. } => out.push(weight),
                Layer::Linear { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn weights(&self) -> BTreeMap<String, Tensor> {
        self.named_params()
            .into_iter()
            .map(|(n, t)| {
                let mut t = t.clone();
                t.clear_grad();
                (n, t)
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn conv_weight(&self, layer: &str) -> Option<&Tensor> {
        self.layers.iter().find_map(|l| match l {
            Layer::Conv { id, weight, .. } if id == layer => Some(weight),
            _ => None,
        })
    }

    pub fn conv_weight_mut(&mut self, layer: &str) -> Option<&mut Tensor> {
        self.layers.iter_mut().find_map(|l| match l {
            Layer::Conv { id, weight, .. } if id == layer => Some(weight),
            _ => None,
        })
    }

    /// Mutable access to any parameter by name.
    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let (layer, kind) = name.rsplit_once('.')?;
        self.layers.iter_mut().find_map(|l| match (l, kind) {
            (Layer::Conv { id, weight, .. }, "weight") if id == layer => Some(weight),
            (Layer::Linear { id, weight, .. }, "weight") if id == layer => Some(weight),
            (Layer::Linear { id, bias, .. }, "bias") if id == layer => Some(bias),
            _ => None,
        })
    }

    fn step(layer: &Layer, x: &Tensor) -> Result<Tensor> {
        match layer {
            Layer::Conv {
                weight,
                stride,
                padding,
                ..
            } => ops::conv2d_forward(x, weight, *stride, *padding),
            Layer::Relu => Ok(ops::relu_forward(x)),
            Layer::Pool { kernel } => ops::avgpool2d_forward(x, *kernel),
            Layer::Linear { weight, bias, .. } => {
                let batch = x.shape()[0];
                let flat = x.clone().reshape(&[batch, x.len() / batch])?;
                ops::linear_forward(&flat, weight, bias)
            }
        }
    }

    /// Logits for a batch of shape [B, C, H, W].
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for l in &self.layers {
            x = Self::step(l, &x)?;
        }
        Ok(x)
    }

    pub fn forward_taped(&self, input: &Tensor) -> Result<(Tensor, Tape)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for l in &self.layers {
            let y = Self::step(l, &x)?;
            inputs.push(std::mem::replace(&mut x, y));
        }
        Ok((x, Tape { inputs }))
    }

    /// Propagates `logit_grad` back through the tape and stores parameter
    /// gradients in each parameter's gradient slot.
    pub fn backward(&mut self, tape: Tape, logit_grad: &Tensor) -> Result<()> {
        let mut g = logit_grad.clone();
        for (l, x) in self.layers.iter_mut().zip(tape.inputs).rev() {
            g = match l {
                Layer::Conv {
                    weight,
                    stride,
                    padding,
                    ..
                } => {
                    let (gx, gw) = ops::conv2d_backward(&g, &x, weight, *stride, *padding)?;
                    weight.set_grad(gw.into_data())?;
                    gx
                }
                Layer::Relu => ops::relu_backward(&g, &x)?,
                Layer::Pool { kernel } => ops::avgpool2d_backward(&g, &x, *kernel)?,
                Layer::Linear { weight, bias, .. } => {
                    let batch = x.shape()[0];
                    let flat = x.clone().reshape(&[batch, x.len() / batch])?;
                    let (gx, gw, gb) = ops::linear_backward(&g, &flat, weight, bias)?;
                    weight.set_grad(gw.into_data())?;
                    bias.set_grad(gb.into_data())?;
                    gx.reshape(x.shape())?
                }
            };
        }
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let expected = self.input_shape();
        if input.shape().len() != 4 || input.shape()[1..] != expected {
            return Err(Error::Dimension {
                op: "network_forward",
                lhs: input.shape().to_vec(),
                rhs: expected.to_vec(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_arch, tinyconvnet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tiny_forward_shape_and_determinism() {
        let arch = tinyconvnet(10);
        let net = Network::init(&arch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let again = Network::init(&arch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(net, again);
        let x = Tensor::filled(&[2, 3, 8, 8], 0.25);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 10]);
        let y2 = net.forward(&x).unwrap();
        assert!(y.data().iter().zip(y2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(net.param_count(), arch.param_count());
    }

    #[test]
    fn residual_archs_are_not_executable() {
        let arch = build_arch("resnet20").unwrap();
        let err = Network::init(&arch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(err.to_string().contains("sequential"));
    }

    #[test]
    fn wrong_input_shape() {
        let net = Network::init(&tinyconvnet(4), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(net.forward(&Tensor::zeros(&[1, 3, 6, 6])).is_err());
    }

    #[test]
    fn missing_or_extra_weights() {
        let arch = tinyconvnet(4);
        let net = Network::init(&arch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut w = net.weights();
        w.remove("fc.bias");
        assert!(Network::from_weights(&arch, w).is_err());
        let mut w = net.weights();
        w.insert("bogus.weight".into(), Tensor::zeros(&[1]));
        assert!(Network::from_weights(&arch, w).is_err());
    }
}
