//! Multiply-accumulate accounting for pruned architectures.
//!
//! One MAC counts as one FLOP; only conv and linear layers cost anything.
//! Pruning a conv's output channels shrinks that conv and, through channel
//! liveness, the input side of every conv or linear it feeds directly (pools
//! pass liveness through). A residual `add` restores full liveness: pruned
//! channels on a shortcut-coupled output are zero, not removed.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::arch::{ArchSpec, LayerKind, LayerSpec};
use crate::error::{Error, Result};

/// Goal pruning rate per prunable layer id.
pub type PruneRates = BTreeMap<String, f64>;

pub fn uniform_rates(arch: &ArchSpec, rate: f64) -> PruneRates {
    arch.prunable.iter().map(|id| (id.clone(), rate)).collect()
}

/// How a fractional rate turns into a live output-channel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelCounting {
    /// `n − floor(n·P)`: what a real mask keeps, and what compaction produces.
    #[default]
    Integer,
    /// `n·(1−P)`: the expected width, as reported in pruned-FLOPs tables.
    Fractional,
}

/// Number of filters a rate prunes from a layer of `n` filters.
pub fn pruned_count(n: usize, rate: f64) -> usize {
    // Tolerates representation error such as 0.29·100 = 28.999999999999996.
    ((n as f64 * rate) + 1e-9).floor().min(n as f64) as usize
}

pub fn live_count(n: usize, rate: f64) -> usize {
    n - pruned_count(n, rate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlopsReport {
    pub per_layer: Vec<(String, u64)>,
    pub total: u64,
    pub reduction_pct: f64,
}

impl FlopsReport {
    pub fn macs(&self, id: &str) -> Option<u64> {
        self.per_layer.iter().find(|(l, _)| l == id).map(|(_, m)| *m)
    }

    pub fn summary_line(&self) -> String {
        format!("total={} reduction_pct={:.4}", self.total, self.reduction_pct)
    }

    /// `layer,macs` rows followed by the summary line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,macs\n");
        for (id, macs) in &self.per_layer {
            writeln!(s, "{id},{macs}").unwrap();
        }
        writeln!(s, "{}", self.summary_line()).unwrap();
        s
    }
}

pub fn validate_rates(arch: &ArchSpec, rates: &PruneRates) -> Result<()> {
    for (id, &rate) in rates {
        if !arch.is_prunable(id) {
            return Err(Error::InvalidRate {
                layer: id.clone(),
                rate,
                reason: "layer is not prunable",
            });
        }
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidRate {
                layer: id.clone(),
                rate,
                reason: "rate must lie in [0, 1)",
            });
        }
    }
    Ok(())
}

/// Live output channels of every layer, given the live outputs of the convs.
fn live_outputs<'a>(arch: &'a ArchSpec, conv_live: &dyn Fn(&LayerSpec) -> f64) -> HashMap<&'a str, f64> {
    let mut live: HashMap<&str, f64> = HashMap::new();
    for l in &arch.layers {
        let v = match l.kind {
            LayerKind::Input | LayerKind::Add | LayerKind::Linear => l.out_channels as f64,
            LayerKind::Conv => conv_live(l),
            LayerKind::Pool | LayerKind::Output => live[l.predecessors[0].as_str()],
        };
        live.insert(&l.id, v);
    }
    live
}

fn live_input(arch: &ArchSpec, live: &HashMap<&str, f64>, l: &LayerSpec) -> f64 {
    match l.kind {
        LayerKind::Input => l.in_channels as f64,
        LayerKind::Add => l.out_channels as f64,
        LayerKind::Linear => {
            let p = arch.layer(&l.predecessors[0]).expect("validated graph");
            live[p.id.as_str()] * (p.out_h * p.out_w) as f64
        }
        _ => live[l.predecessors[0].as_str()],
    }
}

/// Live input channel count of every layer (features for linear layers) under
/// integer counting.
pub fn liveness_propagate(arch: &ArchSpec, rates: &PruneRates) -> Result<BTreeMap<String, usize>> {
    validate_rates(arch, rates)?;
    let conv_live = |l: &LayerSpec| live_count(l.out_channels, rate_of(rates, &l.id)) as f64;
    let live = live_outputs(arch, &conv_live);
    Ok(arch
        .layers
        .iter()
        .map(|l| (l.id.clone(), live_input(arch, &live, l) as usize))
        .collect())
}

fn rate_of(rates: &PruneRates, id: &str) -> f64 {
    rates.get(id).copied().unwrap_or(0.0)
}

fn macs_with(arch: &ArchSpec, conv_live: &dyn Fn(&LayerSpec) -> f64) -> Vec<(String, f64)> {
    let live = live_outputs(arch, conv_live);
    arch.layers
        .iter()
        .filter_map(|l| {
            let live_in = live_input(arch, &live, l);
            let macs = match l.kind {
                LayerKind::Conv => {
                    live[l.id.as_str()] * live_in * (l.kernel * l.kernel * l.out_h * l.out_w) as f64
                }
                LayerKind::Linear => live_in * l.out_channels as f64,
                _ => return None,
            };
            Some((l.id.clone(), macs))
        })
        .collect()
}

fn report(per_layer: Vec<(String, f64)>, baseline: u64) -> FlopsReport {
    let per_layer: Vec<(String, u64)> = per_layer
        .into_iter()
        .map(|(id, m)| (id, m.round() as u64))
        .collect();
    let total = per_layer.iter().map(|(_, m)| m).sum();
    let reduction_pct = if baseline == 0 {
        0.0
    } else {
        (100.0 * (1.0 - total as f64 / baseline as f64)).clamp(0.0, 100.0)
    };
    FlopsReport {
        per_layer,
        total,
        reduction_pct,
    }
}

fn baseline_total(arch: &ArchSpec) -> u64 {
    macs_with(arch, &|l| l.out_channels as f64)
        .iter()
        .map(|(_, m)| m.round() as u64)
        .sum()
}

/// MAC count of `arch` under `rates`, with integer channel counting.
pub fn count_flops(arch: &ArchSpec, rates: &PruneRates) -> Result<FlopsReport> {
    count_flops_with(arch, rates, ChannelCounting::Integer)
}

pub fn count_flops_with(
    arch: &ArchSpec,
    rates: &PruneRates,
    counting: ChannelCounting,
) -> Result<FlopsReport> {
    validate_rates(arch, rates)?;
    let conv_live = |l: &LayerSpec| {
        let rate = rate_of(rates, &l.id);
        match counting {
            ChannelCounting::Integer => live_count(l.out_channels, rate) as f64,
            ChannelCounting::Fractional => l.out_channels as f64 * (1.0 - rate),
        }
    };
    Ok(report(macs_with(arch, &conv_live), baseline_total(arch)))
}

/// MAC count when the live output width of each listed conv is known exactly
/// (for example from a filter mask). Unlisted convs are fully live.
pub fn count_flops_live(arch: &ArchSpec, live_out: &BTreeMap<String, usize>) -> Result<FlopsReport> {
    for (id, &n) in live_out {
        match arch.layer(id) {
            Some(l) if l.kind == LayerKind::Conv && n <= l.out_channels => {}
            _ => {
                return Err(Error::InvalidArch(format!(
                    "live width {n} does not fit conv `{id}`"
                )))
            }
        }
    }
    let conv_live = |l: &LayerSpec| live_out.get(&l.id).copied().unwrap_or(l.out_channels) as f64;
    Ok(report(macs_with(arch, &conv_live), baseline_total(arch)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_arch, tinyconvnet};

    fn chain(first_n: usize) -> ArchSpec {
        let text = format!(
            "arch chain\nprunable a,b\n\
             layer input kind=input m=3 n=3 s=1 stride=1 padding=0 spatial=32x32 preds=\n\
             layer a kind=conv m=3 n={first_n} s=3 stride=1 padding=1 spatial=32x32 preds=input\n\
             layer b kind=conv m={first_n} n=16 s=3 stride=1 padding=1 spatial=32x32 preds=a\n\
             layer output kind=output m=16 n=16 s=1 stride=1 padding=0 spatial=32x32 preds=b\n"
        );
        ArchSpec::from_text(&text).unwrap()
    }

    #[test]
    fn single_conv_macs() {
        let a = chain(16);
        let r = count_flops(&a, &PruneRates::new()).unwrap();
        assert_eq!(r.macs("a"), Some(442_368));
        assert_eq!(r.macs("a"), Some(16 * 3 * 9 * 1024));
        assert_eq!(r.reduction_pct, 0.0);
    }

    #[test]
    fn direct_conv_edge_transmits_pruning() {
        let a = chain(16);
        let rates: PruneRates = [("a".to_string(), 0.5)].into();
        let live = liveness_propagate(&a, &rates).unwrap();
        assert_eq!(live["b"], 8);
        assert_eq!(live["a"], 3);
    }

    #[test]
    fn add_restores_full_liveness() {
        let a = build_arch("resnet20").unwrap();
        let rates: PruneRates = [("layer1.0.conv2".to_string(), 0.5)].into();
        let live = liveness_propagate(&a, &rates).unwrap();
        assert_eq!(live["layer1.0.add"], 16);
        assert_eq!(live["layer1.1.conv1"], 16);
        let rates: PruneRates = [("layer1.0.conv1".to_string(), 0.5)].into();
        assert_eq!(liveness_propagate(&a, &rates).unwrap()["layer1.0.conv2"], 8);
    }

    #[test]
    fn counting_rules() {
        assert_eq!(pruned_count(64, 0.3), 19);
        assert_eq!(pruned_count(10, 0.3), 3);
        assert_eq!(live_count(16, 0.2), 13);
        assert_eq!(pruned_count(16, 0.0), 0);
    }

    #[test]
    fn rates_on_non_prunable_layers_are_rejected() {
        let a = build_arch("resnet20").unwrap();
        let rates: PruneRates = [("layer2.0.downsample".to_string(), 0.2)].into();
        assert!(matches!(count_flops(&a, &rates), Err(Error::InvalidRate { .. })));
        let rates: PruneRates = [("conv1".to_string(), 1.0)].into();
        assert!(count_flops(&a, &rates).is_err());
    }

    #[test]
    fn linear_input_follows_last_conv() {
        let a = tinyconvnet(10);
        let rates: PruneRates = [("conv3".to_string(), 0.5)].into();
        let r = count_flops(&a, &rates).unwrap();
        assert_eq!(r.macs("fc"), Some(16 * 10));
    }

    #[test]
    fn mask_widths_match_rates() {
        let a = tinyconvnet(10);
        let rates = uniform_rates(&a, 0.4);
        let live: BTreeMap<String, usize> = a
            .prunable
            .iter()
            .map(|id| (id.clone(), live_count(a.layer(id).unwrap().out_channels, 0.4)))
            .collect();
        assert_eq!(count_flops(&a, &rates).unwrap(), count_flops_live(&a, &live).unwrap());
    }

    #[test]
    fn csv_has_summary() {
        let r = count_flops(&chain(4), &PruneRates::new()).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("layer,macs\na,"));
        assert!(csv.trim_end().ends_with("reduction_pct=0.0000"));
        assert!(csv.contains(&format!("total={}", r.total)));
    }
}
