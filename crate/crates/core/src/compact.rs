//! Offline removal of pruned filters.
//!
//! Every pruned filter must already be exactly zero. Removing such a filter
//! and the matching input slice of each conv or linear consumer (reached
//! directly or through pools) leaves the network function unchanged, since
//! convs carry no bias and ReLU and average pooling map zero channels to zero.
//! Filters whose output reaches a residual add are kept as zero channels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{ArchSpec, LayerKind};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::pruning::FilterMask;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Compacted {
    pub arch: ArchSpec,
    pub network: Network,
    /// Output filters removed from each conv, ascending.
    pub removed: BTreeMap<String, Vec<usize>>,
}

impl Compacted {
    /// One line per parameter whose shape changed.
    pub fn report(&self, original: &Network) -> String {
        let after: BTreeMap<String, Vec<usize>> = self
            .network
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        let mut s = String::new();
        for (name, t) in original.named_params() {
            let new = &after[&name];
            if t.shape() != new.as_slice() {
                writeln!(s, "{name}: {:?} -> {:?}", t.shape(), new).unwrap();
            }
        }
        writeln!(
            s,
            "params: {} -> {}",
            original.param_count(),
            self.network.param_count()
        )
        .unwrap();
        s
    }
}

/// Consumers of `id`'s channels: (pools passed through, conv/linear consumers,
/// reaches an add?).
fn channel_consumers(arch: &ArchSpec, id: &str) -> (Vec<String>, Vec<String>, bool) {
    let mut pools = Vec::new();
    let mut consumers = Vec::new();
    let mut hits_add = false;
    let mut frontier = vec![id.to_string()];
    while let Some(cur) = frontier.pop() {
        for s in arch.successors(&cur) {
            match s.kind {
                LayerKind::Pool => {
                    pools.push(s.id.clone());
                    frontier.push(s.id.clone());
                }
                LayerKind::Conv | LayerKind::Linear => consumers.push(s.id.clone()),
                LayerKind::Add | LayerKind::Output => hits_add = true,
                LayerKind::Input => {}
            }
        }
    }
    (pools, consumers, hits_add)
}

fn keep_rows(t: &Tensor, keep: &[usize]) -> Result<Tensor> {
    let mut shape = t.shape().to_vec();
    shape[0] = keep.len();
    let data = keep.iter().flat_map(|&j| t.row(j).iter().copied()).collect();
    Tensor::from_vec(&shape, data)
}

/// Keeps input-channel groups `keep` along axis 1, where each channel spans
/// `group` contiguous entries.
fn keep_inputs(t: &Tensor, keep: &[usize], group: usize) -> Result<Tensor> {
    let shape = t.shape();
    let rows = shape[0];
    let row_len = t.row_len();
    let mut data = Vec::with_capacity(rows * keep.len() * group);
    for r in 0..rows {
        let row = &t.data()[r * row_len..(r + 1) * row_len];
        for &c in keep {
            data.extend_from_slice(&row[c * group..(c + 1) * group]);
        }
    }
    let mut new_shape = shape.to_vec();
    if new_shape.len() == 4 {
        new_shape[1] = keep.len();
    } else {
        new_shape[1] = keep.len() * group;
    }
    Tensor::from_vec(&new_shape, data)
}

/// Removes every pruned (soft or hard) filter of `net` according to `mask`.
pub fn compact(net: &Network, mask: &FilterMask) -> Result<Compacted> {
    let mut arch = net.arch().clone();
    let mut weights = net.weights();
    let mut removed = BTreeMap::new();

    for lm in &mask.layers {
        let w = net
            .conv_weight(&lm.layer)
            .ok_or_else(|| Error::InvalidArch(format!("mask names unknown conv `{}`", lm.layer)))?;
        if w.shape()[0] != lm.len() {
            return Err(Error::Dimension {
                op: "compact",
                lhs: w.shape().to_vec(),
                rhs: vec![lm.len()],
            });
        }
        let pruned: Vec<usize> = (0..lm.len()).filter(|&j| lm.states[j].is_pruned()).collect();
        if let Some(&j) = pruned.iter().find(|&&j| w.row(j).iter().any(|&v| v != 0.0)) {
            return Err(Error::NotCompactible {
                layer: lm.layer.clone(),
                filter: j,
            });
        }
        if pruned.is_empty() {
            continue;
        }
        let (pools, consumers, hits_add) = channel_consumers(&arch, &lm.layer);
        if hits_add {
            continue;
        }
        let keep: Vec<usize> = (0..lm.len()).filter(|&j| !lm.states[j].is_pruned()).collect();
        let key = format!("{}.weight", lm.layer);
        let t = keep_rows(&weights[&key], &keep)?;
        weights.insert(key, t);
        arch.layer_mut(&lm.layer).expect("conv exists").out_channels = keep.len();
        for p in &pools {
            let l = arch.layer_mut(p).expect("pool exists");
            l.in_channels = keep.len();
            l.out_channels = keep.len();
        }
        for c in &consumers {
            let pred_id = arch.layer(c).expect("consumer exists").predecessors[0].clone();
            let pred = arch.layer(&pred_id).expect("predecessor exists");
            let kind = arch.layer(c).expect("consumer exists").kind;
            let group = if kind == LayerKind::Linear {
                pred.out_h * pred.out_w
            } else {
                arch.layer(c).map(|l| l.kernel * l.kernel).unwrap_or(1)
            };
            let key = format!("{c}.weight");
            let t = keep_inputs(&weights[&key], &keep, group)?;
            weights.insert(key, t);
            let l = arch.layer_mut(c).expect("consumer exists");
            l.in_channels = if kind == LayerKind::Linear {
                keep.len() * group
            } else {
                keep.len()
            };
        }
        removed.insert(lm.layer.clone(), pruned);
    }
    // Output node mirrors the final layer's width, which pruning never touches.
    arch.validate()?;
    let network = Network::from_weights(&arch, weights)?;
    Ok(Compacted {
        arch,
        network,
        removed,
    })
}

/// Copy of `net` with every pruned filter zeroed.
pub fn masked_copy(net: &Network, mask: &FilterMask) -> Result<Network> {
    let mut out = net.clone();
    for lm in &mask.layers {
        let w = out
            .conv_weight_mut(&lm.layer)
            .ok_or_else(|| Error::InvalidArch(format!("mask names unknown conv `{}`", lm.layer)))?;
        for j in (0..lm.len()).filter(|&j| lm.states[j].is_pruned()) {
            w.row_mut(j).fill(0.0);
        }
    }
    Ok(out)
}

/// Largest absolute logit difference between the masked `original` and
/// `compacted` over `n_samples` seeded uniform inputs in [−1, 1].
pub fn verify_equivalence(
    original: &Network,
    mask: &FilterMask,
    compacted: &Network,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let shape = original.input_shape();
    if compacted.input_shape() != shape || compacted.classes() != original.classes() {
        return Err(Error::Dimension {
            op: "verify_equivalence",
            lhs: shape.to_vec(),
            rhs: compacted.input_shape().to_vec(),
        });
    }
    let masked = masked_copy(original, mask)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per: usize = shape.iter().product();
    let data = (0..n_samples * per).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let x = Tensor::from_vec(&[n_samples, shape[0], shape[1], shape[2]], data)?;
    let a = masked.forward(&x)?;
    let b = compacted.forward(&x)?;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::tinyconvnet;
    use crate::pruning::{apply_soft_mask, FilterState, Selection};

    fn net() -> Network {
        Network::init(&tinyconvnet(10), &mut ChaCha8Rng::seed_from_u64(2)).unwrap()
    }

    #[test]
    fn all_active_is_identity() {
        let n = net();
        let c = compact(&n, &FilterMask::new(n.arch())).unwrap();
        assert_eq!(c.network, n);
        assert!(c.removed.is_empty());
    }

    #[test]
    fn half_of_conv2_removed() {
        let mut n = net();
        let mut mask = FilterMask::new(n.arch());
        let sel = Selection {
            hard: (0..8).collect(),
            soft: vec![],
        };
        mask.get_mut("conv2").unwrap().apply_selection(&sel).unwrap();
        apply_soft_mask(n.conv_weight_mut("conv2").unwrap(), &sel, 0.0).unwrap();
        let c = compact(&n, &mask).unwrap();
        assert_eq!(c.network.conv_weight("conv2").unwrap().shape(), &[8, 16, 3, 3]);
        assert_eq!(c.network.conv_weight("conv3").unwrap().shape(), &[32, 8, 3, 3]);
        assert_eq!(c.arch.layer("pool1").unwrap().out_channels, 8);
        assert!(verify_equivalence(&n, &mask, &c.network, 20, 0).unwrap() <= 1e-9);
        assert!(c.report(&n).contains("conv2.weight: [16, 16, 3, 3] -> [8, 16, 3, 3]"));
    }

    #[test]
    fn unsnapped_soft_filter_is_refused() {
        let mut n = net();
        let mut mask = FilterMask::new(n.arch());
        let sel = Selection {
            hard: vec![],
            soft: vec![5],
        };
        mask.get_mut("conv1").unwrap().apply_selection(&sel).unwrap();
        apply_soft_mask(n.conv_weight_mut("conv1").unwrap(), &sel, 0.5).unwrap();
        match compact(&n, &mask) {
            Err(Error::NotCompactible { layer, filter }) => {
                assert_eq!((layer.as_str(), filter), ("conv1", 5));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(mask.get("conv1").unwrap().states[5], FilterState::Soft);
    }

    #[test]
    fn linear_columns_follow_last_conv() {
        let mut n = net();
        let mut mask = FilterMask::new(n.arch());
        let sel = Selection {
            hard: vec![1, 30],
            soft: vec![4],
        };
        mask.get_mut("conv3").unwrap().apply_selection(&sel).unwrap();
        apply_soft_mask(n.conv_weight_mut("conv3").unwrap(), &sel, 0.0).unwrap();
        let c = compact(&n, &mask).unwrap();
        assert_eq!(c.network.weights()["fc.weight"].shape(), &[10, 29]);
        assert!(verify_equivalence(&n, &mask, &c.network, 10, 1).unwrap() <= 1e-9);
    }
}
