use std::collections::BTreeMap;

use prunekit::arch::{build_arch, ArchSpec};
use prunekit::config::RunConfig;
use prunekit::data::{make_dataset, templates, DatasetConfig};
use prunekit::network::Network;
use prunekit::ops::softmax_cross_entropy;
use prunekit::pruning::{FilterMask, FilterState, Mode, ScheduleConfig};
use prunekit::sgd::{Sgd, SgdConfig};
use prunekit::trainer::{epoch_train, Trainer};
use prunekit::{Error, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(mode: Mode, rate: f64, epochs: usize) -> RunConfig {
    RunConfig {
        seed: 3,
        schedule: ScheduleConfig::for_mode(mode, rate, epochs),
        dataset: DatasetConfig {
            n_train: 256,
            n_test: 64,
            ..DatasetConfig::default()
        },
        ..RunConfig::default()
    }
}

#[test]
fn zero_rate_matches_plain_sgd_bitwise() {
    let cfg = small(Mode::Ghfp, 0.0, 3);
    let mut tr = Trainer::new(cfg.clone()).unwrap();
    while !tr.is_finished() {
        tr.step_epoch().unwrap();
    }

    let arch = build_arch("tinyconvnet").unwrap();
    let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
    init.set_stream(4);
    let mut net = Network::init(&arch, &mut init).unwrap();
    let (train, _) = make_dataset(cfg.seed, &cfg.dataset).unwrap();
    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle.set_stream(3);
    let mut sgd = Sgd::new(cfg.sgd);
    let mask = FilterMask::new(&arch);
    for _ in 0..3 {
        epoch_train(&mut net, &train, &mut sgd, &mask, cfg.batch_size, &mut shuffle).unwrap();
    }

    let a = tr.network().weights();
    let b = net.weights();
    for (name, t) in &a {
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(t), bits(&b[name]), "{name}");
    }
}

#[test]
fn hfp_selected_filters_never_change() {
    let mut tr = Trainer::new(small(Mode::Hfp, 0.5, 6)).unwrap();
    let mut frozen: BTreeMap<(String, usize), Vec<u64>> = BTreeMap::new();
    while !tr.is_finished() {
        tr.step_epoch().unwrap();
        for lm in &tr.mask().layers {
            let w = tr.network().conv_weight(&lm.layer).unwrap();
            for i in lm.indices(FilterState::Hard) {
                let now: Vec<u64> = w.row(i).iter().map(|v| v.to_bits()).collect();
                let before = frozen.entry((lm.layer.clone(), i)).or_insert_with(|| now.clone());
                assert_eq!(before, &now, "{}[{i}] moved at epoch {}", lm.layer, tr.epoch());
            }
            assert_eq!(lm.count(FilterState::Soft), 0);
        }
    }
    assert!(!frozen.is_empty());
}

#[test]
fn loss_halves_within_ten_epochs() {
    let cfg = RunConfig {
        schedule: ScheduleConfig::for_mode(Mode::Ghfp, 0.0, 10),
        ..RunConfig::default()
    };
    let mut tr = Trainer::new(cfg).unwrap();
    while !tr.is_finished() {
        tr.step_epoch().unwrap();
    }
    let m = tr.metrics();
    assert!(m[9].train_loss <= 0.5 * m[0].train_loss, "{} -> {}", m[0].train_loss, m[9].train_loss);
}

#[test]
fn nearest_template_oracle_is_accurate() {
    let cfg = DatasetConfig::default();
    for seed in 0..4 {
        let t = templates(seed, &cfg);
        let (_, test) = make_dataset(seed, &cfg).unwrap();
        let correct = (0..test.len())
            .filter(|&i| {
                let x = test.image(i);
                let dist = |c: &Vec<f64>| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let best = (0..t.len())
                    .min_by(|&a, &b| dist(&t[a]).total_cmp(&dist(&t[b])))
                    .unwrap();
                best == test.labels[i]
            })
            .count();
        let acc = correct as f64 / test.len() as f64;
        assert!(acc >= 0.95, "seed {seed}: {acc}");
    }
}

#[test]
fn datasets_are_reproducible_and_noise_free_at_zero_sigma() {
    let cfg = DatasetConfig {
        n_train: 50,
        n_test: 20,
        ..DatasetConfig::default()
    };
    let (a, _) = make_dataset(9, &cfg).unwrap();
    let (b, _) = make_dataset(9, &cfg).unwrap();
    assert_eq!(a.images, b.images);
    assert_eq!(a.labels, b.labels);

    let quiet = DatasetConfig { noise_std: 0.0, ..cfg };
    let (train, _) = make_dataset(9, &quiet).unwrap();
    let t = templates(9, &quiet);
    for i in 0..train.len() {
        assert_eq!(train.image(i), &t[train.labels[i]][..]);
    }
}

#[test]
fn exploding_learning_rate_aborts_with_epoch() {
    let mut cfg = small(Mode::Ghfp, 0.0, 3);
    cfg.sgd.learning_rate = 1e12;
    let err = Trainer::new(cfg).unwrap().run().unwrap_err();
    match &err {
        Error::NonFinite { epoch, layer } => assert!(*epoch < 3 && !layer.is_empty()),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("epoch"));
}

fn linear_arch() -> ArchSpec {
    ArchSpec::from_text(
        "arch lin\nprunable \n\
         layer input kind=input m=2 n=2 s=1 stride=1 padding=0 spatial=1x1 preds=\n\
         layer fc kind=linear m=2 n=2 s=1 stride=1 padding=0 spatial=1x1 preds=input\n\
         layer output kind=output m=2 n=2 s=1 stride=1 padding=0 spatial=1x1 preds=fc\n",
    )
    .unwrap()
}

#[test]
fn one_step_on_hand_sized_linear_model() {
    // W = 0, b = 0, x = (1, 2), label 0: logits (0,0), dL/dz = (−½, ½).
    // One step at lr 0.1 gives W = [[.05,.1],[−.05,−.1]], b = (.05,−.05), so z = (.3,−.3).
    let arch = linear_arch();
    let weights = BTreeMap::from([
        ("fc.weight".to_string(), Tensor::zeros(&[2, 2])),
        ("fc.bias".to_string(), Tensor::zeros(&[2])),
    ]);
    let mut net = Network::from_weights(&arch, weights).unwrap();
    let x = Tensor::from_vec(&[1, 2, 1, 1], vec![1.0, 2.0]).unwrap();
    let (z, tape) = net.forward_taped(&x).unwrap();
    let (loss0, g) = softmax_cross_entropy(&z, &[0]).unwrap();
    assert!((loss0 - 2f64.ln()).abs() < 1e-15);
    net.backward(tape, &g).unwrap();
    let mut sgd = Sgd::new(SgdConfig {
        learning_rate: 0.1,
        momentum: 0.9,
        weight_decay: 0.0,
    });
    sgd.step(net.params_mut()).unwrap();

    let (loss1, _) = softmax_cross_entropy(&net.forward(&x).unwrap(), &[0]).unwrap();
    let want = (1.0 + (-0.6f64).exp()).ln();
    assert!((loss1 - want).abs() < 1e-12, "{loss1} vs {want}");
}

#[test]
fn metrics_counts_follow_mask() {
    let mut tr = Trainer::new(small(Mode::SoftAndHard(0.5), 0.5, 4)).unwrap();
    while !tr.is_finished() {
        let row = tr.step_epoch().unwrap();
        let hard: Vec<usize> = tr.mask().layers.iter().map(|l| l.count(FilterState::Hard)).collect();
        let soft: Vec<usize> = tr.mask().layers.iter().map(|l| l.count(FilterState::Soft)).collect();
        assert_eq!(row.hard_counts, hard);
        assert_eq!(row.soft_counts, soft);
        assert_eq!(row.lambda_h, 0.5);
    }
}
