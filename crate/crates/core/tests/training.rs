use chrono::NaiveDate;
use hlstm_core::dataset::{generate_synthetic, GridDataset, PixelSeries, PixelTimeSet, SyntheticConfig};
use hlstm_core::kernel::{gaussian, seeded_rng, Matrix};
use hlstm_core::lstm::{DropoutSpec, DropoutVariant};
use hlstm_core::training::*;
use proptest::prelude::*;

fn grid(n_days: usize, pixels: Vec<(Vec<[f64; 2]>, Vec<f64>)>) -> GridDataset {
    let cols = pixels.len();
    GridDataset {
        rows: 1,
        cols,
        start_date: NaiveDate::from_ymd_opt(2010, 1, 1).unwrap(),
        n_days,
        forcing_names: vec!["a".into(), "b".into()],
        attribute_names: vec![],
        pixels: pixels
            .into_iter()
            .enumerate()
            .map(|(k, (forcing, target))| PixelSeries {
                id: format!("p{k}"),
                row: 0,
                col: k,
                forcing: Matrix::from_vec(n_days, 2, forcing.into_iter().flatten().collect()).unwrap(),
                lsm: None,
                attributes: vec![],
                mask: target.iter().map(|v| v.is_finite()).collect(),
                target,
                region: None,
                truth: None,
            })
            .collect(),
    }
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let mut rng = seeded_rng(17);
    let (b, rho) = (3, 6);
    let pred = Matrix::from_vec(b, rho, (0..b * rho).map(|_| gaussian(&mut rng, 0.3, 0.1)).collect()).unwrap();
    let target = Matrix::from_vec(b, rho, (0..b * rho).map(|_| gaussian(&mut rng, 0.3, 0.1)).collect()).unwrap();
    let mask = Matrix::from_vec(b, rho, (0..b * rho).map(|k| ((k * 7) % 3 != 0) as u8 as f64).collect()).unwrap();
    for norm in [LossNormalization::SequenceLength, LossNormalization::ObservedCount] {
        let (_, grad) = masked_loss(&pred, &target, &mask, norm).unwrap();
        let h = 1e-6;
        for k in 0..b * rho {
            let mut up = pred.clone();
            up.as_mut_slice()[k] += h;
            let mut down = pred.clone();
            down.as_mut_slice()[k] -= h;
            let fd = (masked_loss(&up, &target, &mask, norm).unwrap().0 - masked_loss(&down, &target, &mask, norm).unwrap().0)
                / (2.0 * h);
            let a = grad.as_slice()[k];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-6, "element {k}: {a} vs {fd}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn masked_targets_have_no_influence(seed in 0u64..1000, t in 0usize..8, bump in -5.0f64..5.0) {
        let mut rng = seeded_rng(seed);
        let pred: Vec<f64> = (0..8).map(|_| gaussian(&mut rng, 0.0, 1.0)).collect();
        let target: Vec<f64> = (0..8).map(|_| gaussian(&mut rng, 0.0, 1.0)).collect();
        let mut mask = vec![1.0; 8];
        mask[t] = 0.0;
        let (l0, g0) = instance_loss(&pred, &target, &mask, LossNormalization::SequenceLength);
        let mut poked = target.clone();
        poked[t] += bump;
        let (l1, g1) = instance_loss(&pred, &poked, &mask, LossNormalization::SequenceLength);
        prop_assert_eq!(l0.to_bits(), l1.to_bits());
        prop_assert!(g0.iter().zip(&g1).all(|(a, b)| a.to_bits() == b.to_bits()));
        poked[t] = f64::NAN;
        let (l2, _) = instance_loss(&pred, &poked, &mask, LossNormalization::SequenceLength);
        prop_assert_eq!(l0.to_bits(), l2.to_bits());
    }

    #[test]
    fn clipped_norm_within_bound(seed in 0u64..1000, scale in 1e-3f64..1e4, limit in 0.1f64..10.0) {
        let mut g = hlstm_core::lstm::init_weights(3, 4, 1, seed).unwrap();
        g.scale(scale);
        clip_gradients(&mut g, limit);
        prop_assert!(g.l2_norm() <= limit + 1e-12);
    }
}

fn sixteen_pixel_set() -> TrainingSet {
    TrainingSet {
        ids: (0..16).map(|k| format!("p{k}")).collect(),
        inputs: (0..16).map(|_| Matrix::zeros(30, 1)).collect(),
        targets: (0..16).map(|_| vec![0.2; 30]).collect(),
        masks: (0..16).map(|_| vec![1.0; 30]).collect(),
    }
}

#[test]
fn batch_sampling_is_uniform_over_pixels() {
    let set = sixteen_pixel_set();
    let mut rng = seeded_rng(3);
    let mut counts = [0usize; 16];
    for _ in 0..100 {
        let b = sample_batch(&set, 100, 10, &mut rng).unwrap();
        for id in &b.pixel_ids {
            counts[id[1..].parse::<usize>().unwrap()] += 1;
        }
        assert!(b.starts.iter().all(|&s| s + 10 <= 30));
    }
    for c in counts {
        assert!((550..=700).contains(&c), "count {c}");
    }
}

#[test]
fn batch_sampling_is_deterministic() {
    let set = sixteen_pixel_set();
    let a = sample_batch(&set, 20, 12, &mut seeded_rng(8)).unwrap();
    let b = sample_batch(&set, 20, 12, &mut seeded_rng(8)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_pixel_batch() {
    let mut set = sixteen_pixel_set();
    set.ids.truncate(1);
    set.inputs.truncate(1);
    set.targets.truncate(1);
    set.masks.truncate(1);
    let b = sample_batch(&set, 1, 30, &mut seeded_rng(0)).unwrap();
    assert_eq!(b.pixel_ids, vec!["p0".to_string()]);
    assert!(sample_batch(&set, 1, 31, &mut seeded_rng(0)).is_err());
}

#[test]
fn unobserved_set_is_degenerate() {
    let mut set = sixteen_pixel_set();
    set.masks.iter_mut().for_each(|m| m.iter_mut().for_each(|v| *v = 0.0));
    assert!(matches!(sample_batch(&set, 4, 5, &mut seeded_rng(0)), Err(hlstm_core::Error::DegenerateBatch)));
}

fn quick_config() -> TrainingConfig {
    TrainingConfig {
        hidden_size: 8,
        unroll_length: 60,
        batch_size: 8,
        epochs: 200,
        batches_per_epoch: Some(1),
        learning_rate: 0.01,
        dropout: DropoutSpec::NONE,
        spinup_days: 0,
        seed: 4,
        ..Default::default()
    }
}

#[test]
fn learns_a_constant() {
    let n = 120;
    let ds = grid(
        n,
        (0..2).map(|k| (vec![[k as f64, 1.0 + k as f64]; n], vec![0.3; n])).collect(),
    );
    let train = PixelTimeSet::new(vec![0, 1], 0..n);
    let (model, history) = train_lstm(&ds, &train, &quick_config(), None).unwrap();
    for k in 0..2 {
        let pred = model.predict_pixel(&ds.pixels[k], n).unwrap();
        assert!(rmse(&pred, &vec![0.3; n]) < 0.005, "rmse {}", rmse(&pred, &vec![0.3; n]));
    }
    assert_eq!(history.records.len(), 200);
}

fn driven_series(n: usize, phase: f64) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut state = 0.0;
    let mut forcing = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for t in 0..n {
        let u = (2.0 * std::f64::consts::PI * t as f64 / 45.0 + phase).sin();
        state = 0.8 * state + 0.2 * u;
        forcing.push([u, (2.0 * std::f64::consts::PI * t as f64 / 365.0).cos()]);
        target.push(0.3 + 0.1 * state);
    }
    (forcing, target)
}

#[test]
fn learns_a_forcing_driven_signal() {
    let n = 3 * 365;
    let ds = grid(n, (0..4).map(|k| driven_series(n, k as f64)).collect());
    let train = PixelTimeSet::new(vec![0, 1, 2, 3], 0..730);
    let config = TrainingConfig {
        hidden_size: 16,
        unroll_length: 120,
        batch_size: 8,
        epochs: 300,
        batches_per_epoch: Some(1),
        learning_rate: 0.01,
        dropout: DropoutSpec::NONE,
        spinup_days: 30,
        seed: 1,
        ..Default::default()
    };
    let (model, _) = train_lstm(&ds, &train, &config, None).unwrap();
    for k in 0..4 {
        let pred = model.predict_pixel(&ds.pixels[k], n).unwrap();
        let r = pearson(&pred[730..], &ds.pixels[k].target[730..]);
        assert!(r > 0.95, "pixel {k}: R {r}");
    }
}

#[test]
fn training_is_deterministic() {
    let ds = generate_synthetic(&SyntheticConfig {
        rows: 2,
        cols: 2,
        years: 1,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let train = PixelTimeSet::new(vec![0, 1, 2, 3], 0..365);
    let config = TrainingConfig {
        epochs: 5,
        dropout: DropoutSpec::new(DropoutVariant::RecurrentConstant, 0.5).unwrap(),
        ..quick_config()
    };
    let (a, ha) = train_lstm(&ds, &train, &config, None).unwrap();
    let (b, hb) = train_lstm(&ds, &train, &config, None).unwrap();
    assert_eq!(a, b);
    let la: Vec<u64> = ha.records.iter().map(|r| r.loss.to_bits()).collect();
    let lb: Vec<u64> = hb.records.iter().map(|r| r.loss.to_bits()).collect();
    assert_eq!(la, lb);
    // evaluation is mask-free and repeatable
    let p1 = a.predict_pixel(&ds.pixels[0], ds.n_days).unwrap();
    let p2 = a.predict_pixel(&ds.pixels[0], ds.n_days).unwrap();
    assert_eq!(p1, p2);
}

#[test]
fn loss_never_jumps_on_smoke_data() {
    let ds = generate_synthetic(&SyntheticConfig {
        rows: 3,
        cols: 3,
        years: 2,
        noise: hlstm_core::dataset::NoiseKind::White { sigma: 0.04 },
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    let train = PixelTimeSet::new((0..9).collect(), 0..730);
    let config = TrainingConfig {
        epochs: 60,
        unroll_length: 120,
        dropout: DropoutSpec::default(),
        ..quick_config()
    };
    let (_, history) = train_lstm(&ds, &train, &config, None).unwrap();
    for w in history.records.windows(2) {
        assert!(w[1].loss <= 10.0 * w[0].loss, "{} -> {}", w[0].loss, w[1].loss);
    }
}

#[test]
fn checkpoints_are_written() {
    let n = 80;
    let ds = grid(n, (0..2).map(|k| (vec![[k as f64, 0.0]; n], vec![0.2; n])).collect());
    let dir = tempfile::tempdir().unwrap();
    let config = TrainingConfig {
        epochs: 4,
        checkpoint_every: 2,
        unroll_length: 40,
        ..quick_config()
    };
    train_lstm(&ds, &PixelTimeSet::new(vec![0, 1], 0..n), &config, Some(dir.path())).unwrap();
    for e in [2, 4] {
        let c = hlstm_core::ModelContainer::load(&dir.path().join(format!("checkpoint_{e:05}.json"))).unwrap();
        assert!(c.as_lstm().is_some());
    }
}

#[test]
fn config_json_uses_field_names() {
    let c: TrainingConfig = serde_json::from_str(r#"{"hidden_size": 12, "optimizer": "sgd"}"#).unwrap();
    assert_eq!(c.hidden_size, 12);
    assert_eq!(c.optimizer, OptimizerKind::Sgd);
    assert_eq!(c.unroll_length, 365);
    assert!(serde_json::from_str::<TrainingConfig>(r#"{"hidden": 12}"#).is_err());
}

#[test]
fn unroll_longer_than_training_window_rejected() {
    let n = 50;
    let ds = grid(n, (0..2).map(|k| (vec![[k as f64, 0.0]; n], vec![0.2; n])).collect());
    let config = TrainingConfig {
        unroll_length: 51,
        ..quick_config()
    };
    assert!(train_lstm(&ds, &PixelTimeSet::new(vec![0, 1], 0..n), &config, None).is_err());
}
