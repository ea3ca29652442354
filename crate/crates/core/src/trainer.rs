//! The soft-to-hard training loop at desk scale.
//!
//! Each epoch runs, in order: schedule update (α, λ_h, per-layer rate), one
//! pass of minibatch SGD with hard filters' gradients masked, then per-layer
//! norm ranking, selection and masking on the freshly updated weights.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{build_arch, ArchSpec};
use crate::checkpoint::Checkpoint;
use crate::compact::{compact, Compacted};
use crate::config::RunConfig;
use crate::data::{make_dataset, SyntheticDataset};
use crate::error::{Error, Result};
use crate::flops::count_flops_live;
use crate::network::Network;
use crate::ops::softmax_cross_entropy;
use crate::pruning::{
    apply_soft_mask, zero_hard_rows, importance, select_filters, FilterMask, FilterState,
    PruneState,
};
use crate::sgd::{Sgd, SgdConfig};

pub const METRICS_HEADER: &str =
    "t,train_loss,test_acc,alpha,lambda_h,rate,hard_counts,soft_counts,masked_flops";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub t: usize,
    pub train_loss: f64,
    pub test_acc: f64,
    pub alpha: f64,
    pub lambda_h: f64,
    /// Per prunable layer, in architecture order.
    pub rates: Vec<f64>,
    pub hard_counts: Vec<usize>,
    pub soft_counts: Vec<usize>,
    pub masked_flops: u64,
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

impl EpochMetrics {
    /// Per-layer columns are `;`-separated.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.t,
            self.train_loss,
            self.test_acc,
            self.alpha,
            self.lambda_h,
            join(&self.rates),
            join(&self.hard_counts),
            join(&self.soft_counts),
            self.masked_flops
        )
    }
}

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        writeln!(s, "{}", r.csv_row()).unwrap();
    }
    s
}

/// Position of the weight tensor of each conv layer in `Network::params_mut` order.
fn param_index(net: &Network, name: &str) -> Option<usize> {
    net.named_params().iter().position(|(n, _)| n == name)
}

fn first_non_finite(net: &Network) -> String {
    net.named_params()
        .into_iter()
        .find(|(_, t)| !t.all_finite())
        .map_or_else(|| "loss".to_string(), |(n, _)| n)
}

/// Hard filters must not drift on momentum accumulated while they were live.
fn zero_hard_velocity(sgd: &mut Sgd, net: &Network, mask: &FilterMask) {
    for lm in &mask.layers {
        let Some(idx) = param_index(net, &format!("{}.weight", lm.layer)) else {
            continue;
        };
        let row = net.conv_weight(&lm.layer).map_or(0, |w| w.row_len());
        if let Some(v) = sgd.velocity_mut(idx) {
            zero_hard_rows(v, row, &lm.states);
        }
    }
}

/// One pass over `data` in seeded random order: forward, backward, gradient
/// mask on hard filters, SGD update. Returns the mean batch loss.
pub fn epoch_train<R: Rng>(
    net: &mut Network,
    data: &SyntheticDataset,
    sgd: &mut Sgd,
    mask: &FilterMask,
    batch_size: usize,
    rng: &mut R,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(batch_size.max(1)) {
        let (x, y) = data.batch(chunk);
        let (logits, tape) = net.forward_taped(&x)?;
        let (loss, grad) = softmax_cross_entropy(&logits, &y)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                epoch: 0,
                layer: first_non_finite(net),
            });
        }
        net.backward(tape, &grad)?;
        for lm in &mask.layers {
            if let Some(w) = net.conv_weight_mut(&lm.layer) {
                let row = w.row_len();
                if let Some(g) = w.grad_mut() {
                    zero_hard_rows(g, row, &lm.states);
                }
            }
        }
        zero_hard_velocity(sgd, net, mask);
        sgd.step(net.params_mut())?;
        total += loss;
        batches += 1;
    }
    // A finite loss can still leave overflowed weights behind.
    if let Some((layer, _)) = net.named_params().into_iter().find(|(_, t)| !t.all_finite()) {
        return Err(Error::NonFinite { epoch: 0, layer });
    }
    Ok(total / batches as f64)
}

/// Accuracy and mean loss of `net` on `data`.
pub fn evaluate(net: &Network, data: &SyntheticDataset, batch_size: usize) -> Result<(f64, f64)> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, y) = data.batch(chunk);
        let logits = net.forward(&x)?;
        let (loss, _) = softmax_cross_entropy(&logits, &y)?;
        loss_sum += loss * chunk.len() as f64;
        let c = logits.shape()[1];
        for (b, &label) in y.iter().enumerate() {
            let row = &logits.data()[b * c..(b + 1) * c];
            let mut best = 0;
            for k in 1..c {
                if row[k] > row[best] {
                    best = k;
                }
            }
            correct += usize::from(best == label);
        }
    }
    let n = data.len() as f64;
    Ok((correct as f64 / n, loss_sum / n))
}

/// Final state of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub arch: ArchSpec,
    pub network: Network,
    pub mask: FilterMask,
    pub state: PruneState,
    pub metrics: Vec<EpochMetrics>,
    pub compacted: Compacted,
    pub config: RunConfig,
}

impl RunOutcome {
    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.metrics)
    }

    /// Output paths are left out of the echoed config so that where a run
    /// writes does not change the checkpoint bytes.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut config = self.config.clone();
        config.metrics_path = None;
        config.checkpoint_path = None;
        Checkpoint {
            arch: self.arch.clone(),
            weights: self.network.weights(),
            mask: self.mask.clone(),
            state: self.state.clone(),
            config_text: config.to_text(),
        }
    }

    pub fn final_accuracy(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.test_acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Train,
    Prune,
    Done,
}

/// Epoch-by-epoch driver; [`run_ghfp`] runs it to completion.
pub struct Trainer {
    cfg: RunConfig,
    arch: ArchSpec,
    network: Network,
    sgd: Sgd,
    mask: FilterMask,
    state: PruneState,
    train: SyntheticDataset,
    test: SyntheticDataset,
    rng: ChaCha8Rng,
    epoch: usize,
    phase: Phase,
    pending_loss: f64,
    metrics: Vec<EpochMetrics>,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let arch = build_arch(&cfg.arch)?;
        let arch = if cfg.dataset.classes != arch.layers.last().map_or(0, |l| l.out_channels) {
            rebuild_with_classes(&cfg.arch, cfg.dataset.classes)?
        } else {
            arch
        };
        let mut sgd_cfg: SgdConfig = cfg.sgd;
        let network = match &cfg.pretrained {
            Some(path) => {
                let ck = Checkpoint::load(path)?;
                if ck.arch != arch {
                    return Err(Error::Config(format!(
                        "pretrained checkpoint {} does not match architecture `{}`",
                        path.display(),
                        arch.name
                    )));
                }
                sgd_cfg.learning_rate /= 10.0;
                Network::from_weights(&arch, ck.weights)?
            }
            None => {
                let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                init_rng.set_stream(4);
                Network::init(&arch, &mut init_rng)?
            }
        };
        let (train, test) = make_dataset(cfg.seed, &cfg.dataset)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(3);
        Ok(Self {
            mask: FilterMask::new(&arch),
            sgd: Sgd::new(sgd_cfg),
            state: PruneState::empty(),
            cfg,
            arch,
            network,
            train,
            test,
            rng,
            epoch: 0,
            phase: Phase::Train,
            pending_loss: 0.0,
            metrics: Vec::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn mask(&self) -> &FilterMask {
        &self.mask
    }

    pub fn state(&self) -> &PruneState {
        &self.state
    }

    pub fn metrics(&self) -> &[EpochMetrics] {
        &self.metrics
    }

    pub fn test_set(&self) -> &SyntheticDataset {
        &self.test
    }

    /// Index of the epoch in progress (or next to run).
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Done
    }

    /// Updates the schedules for the current epoch and trains one pass.
    pub fn train_phase(&mut self) -> Result<f64> {
        if self.phase != Phase::Train {
            return Err(Error::Invariant(format!(
                "train phase requested out of order at epoch {}",
                self.epoch
            )));
        }
        let t = self.epoch;
        let s = &self.cfg.schedule;
        self.state.epoch = t;
        self.state.alpha = s.alpha(t)?;
        self.state.lambda_h = s.lambda_h(t)?;
        self.state.rates = self
            .arch
            .prunable
            .iter()
            .map(|id| Ok((id.clone(), s.rate(id, t)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;

        let loss = epoch_train(
            &mut self.network,
            &self.train,
            &mut self.sgd,
            &self.mask,
            self.cfg.batch_size,
            &mut self.rng,
        )
        .map_err(|e| match e {
            Error::NonFinite { layer, .. } => Error::NonFinite { epoch: t, layer },
            other => other,
        })?;
        self.pending_loss = loss;
        self.phase = Phase::Prune;
        Ok(loss)
    }

    /// Ranks, selects and masks every prunable layer, then evaluates and logs the epoch.
    pub fn finish_epoch(&mut self) -> Result<EpochMetrics> {
        if self.phase != Phase::Prune {
            return Err(Error::Invariant(format!(
                "pruning step requested before training at epoch {}",
                self.epoch
            )));
        }
        let (alpha, lambda_h) = (self.state.alpha, self.state.lambda_h);
        let mut selections = BTreeMap::new();
        for id in &self.arch.prunable {
            let rate = self.state.rates[id];
            let weight = self
                .network
                .conv_weight_mut(id)
                .ok_or_else(|| Error::InvalidArch(format!("no weights for `{id}`")))?;
            let norms = importance(weight, self.cfg.norm);
            if norms.iter().any(|n| !n.is_finite()) {
                return Err(Error::NonFinite {
                    epoch: self.epoch,
                    layer: id.clone(),
                });
            }
            let lm = self.mask.get_mut(id).expect("mask covers prunable layers");
            let sel = select_filters(&norms, &lm.states, rate, lambda_h).map_err(|e| match e {
                Error::Invariant(m) => Error::Invariant(format!("layer `{id}`: {m}")),
                other => other,
            })?;
            lm.apply_selection(&sel)?;
            apply_soft_mask(weight, &sel, alpha)?;
            selections.insert(id.clone(), sel);
        }
        self.state.selections = selections;
        zero_hard_velocity(&mut self.sgd, &self.network, &self.mask);

        let (test_acc, _) = evaluate(&self.network, &self.test, 256)?;
        let live = self
            .mask
            .layers
            .iter()
            .map(|lm| (lm.layer.clone(), lm.len() - lm.pruned_count()))
            .collect();
        let row = EpochMetrics {
            t: self.epoch,
            train_loss: self.pending_loss,
            test_acc,
            alpha,
            lambda_h,
            rates: self.arch.prunable.iter().map(|id| self.state.rates[id]).collect(),
            hard_counts: self.mask.layers.iter().map(|l| l.count(FilterState::Hard)).collect(),
            soft_counts: self.mask.layers.iter().map(|l| l.count(FilterState::Soft)).collect(),
            masked_flops: count_flops_live(&self.arch, &live)?.total,
        };
        self.metrics.push(row.clone());
        self.epoch += 1;
        self.phase = if self.epoch == self.cfg.epochs() {
            Phase::Done
        } else {
            Phase::Train
        };
        Ok(row)
    }

    pub fn step_epoch(&mut self) -> Result<EpochMetrics> {
        self.train_phase()?;
        self.finish_epoch()
    }

    /// Runs the remaining epochs and compacts the final model.
    pub fn run(mut self) -> Result<RunOutcome> {
        while !self.is_finished() {
            self.step_epoch()?;
        }
        let compacted = compact(&self.network, &self.mask)?;
        Ok(RunOutcome {
            arch: self.arch,
            network: self.network,
            mask: self.mask,
            state: self.state,
            metrics: self.metrics,
            compacted,
            config: self.cfg,
        })
    }
}

fn rebuild_with_classes(name: &str, classes: usize) -> Result<ArchSpec> {
    use crate::arch::{resnet, tinyconvnet, vgg16};
    Ok(match name {
        "tinyconvnet" => tinyconvnet(classes),
        "vgg16" => vgg16(classes),
        "resnet20" => resnet(20, classes),
        "resnet56" => resnet(56, classes),
        "resnet110" => resnet(110, classes),
        _ => return build_arch(name),
    })
}

/// Runs the full schedule and writes the metrics CSV and checkpoint when the
/// config names paths for them.
pub fn run_ghfp(cfg: &RunConfig) -> Result<RunOutcome> {
    let outcome = Trainer::new(cfg.clone())?.run()?;
    if let Some(p) = &cfg.metrics_path {
        write_file(p, outcome.metrics_csv().as_bytes())?;
    }
    if let Some(p) = &cfg.checkpoint_path {
        outcome.checkpoint().save(p)?;
    }
    Ok(outcome)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetConfig;
    use crate::pruning::Mode;

    fn small(mode: Mode, rate: f64, epochs: usize) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.schedule = crate::pruning::ScheduleConfig::for_mode(mode, rate, epochs);
        cfg.dataset = DatasetConfig {
            n_train: 256,
            n_test: 64,
            ..DatasetConfig::default()
        };
        cfg
    }

    #[test]
    fn phases_must_run_in_order() {
        let mut t = Trainer::new(small(Mode::Ghfp, 0.4, 3)).unwrap();
        assert!(t.finish_epoch().is_err());
        t.train_phase().unwrap();
        assert!(t.train_phase().is_err());
        t.finish_epoch().unwrap();
        assert_eq!(t.epoch(), 1);
    }

    #[test]
    fn metrics_rows_follow_the_header() {
        let out = run_ghfp(&small(Mode::Ghfp, 0.4, 3)).unwrap();
        let csv = out.metrics_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(METRICS_HEADER));
        let last: Vec<&str> = lines.last().unwrap().split(',').collect();
        assert_eq!(last.len(), 9);
        assert_eq!(last[0], "2");
        // Final epoch: λ_h = 1, rate = goal → floor(0.4·n) hard filters per layer.
        assert_eq!(last[6], "6;6;12");
        assert_eq!(last[7], "0;0;0");
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let t = Trainer::new(small(Mode::Ghfp, 0.0, 2)).unwrap();
        let mut net = t.network().clone();
        let mut sgd = Sgd::new(SgdConfig {
            learning_rate: 0.0,
            momentum: 0.9,
            weight_decay: 5e-4,
        });
        let (_, eval_loss) = evaluate(&net, &t.train, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let loss = epoch_train(&mut net, &t.train, &mut sgd, t.mask(), 64, &mut rng).unwrap();
        assert_eq!(net.weights(), t.network().weights());
        assert!((loss - eval_loss).abs() < 1e-12, "{loss} vs {eval_loss}");
    }
}
