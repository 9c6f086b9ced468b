mod common;

use common::{numeric_grads, rand_tensor, rng, to_f64, worst_rel_err};
use lunet::nn::Param;
use lunet::synth::ellipse_slices;
use lunet::trainer::*;
use lunet::volume::{split_dataset, SliceDataset};
use lunet::*;
use rand::Rng;

fn tiny_data(seed: u64) -> SliceDataset {
    split_dataset(ellipse_slices(6, 16, 16, 0.45, 0.05, seed).unwrap(), 0.34, seed).unwrap()
}

fn tiny_unet() -> UNet<f32> {
    UNet::build(UNetConfig { base_filters: 2, filter_step: 2, depth: 2, input_hw: (16, 16), ..Default::default() })
        .unwrap()
}

#[test]
fn bce_matches_direct_formula() {
    let mut rg = rng(4);
    let p = rand_tensor::<f64>(&mut rg, &[2, 1, 5, 5], 0.01, 0.99);
    let y = Tensor::<f64>::from_fn(&[2, 1, 5, 5], |_| rg.gen_bool(0.5) as u8 as f64);
    let direct = -p
        .data()
        .iter()
        .zip(y.data())
        .map(|(&p, &y)| if y == 1.0 { p.ln() } else { (1.0 - p).ln() })
        .sum::<f64>()
        / 50.0;
    let (loss, _) = bce_loss(&p, &y).unwrap();
    assert!((loss - direct).abs() < 1e-12);
}

#[test]
fn bce_gradient_matches_finite_differences() {
    let mut rg = rng(5);
    let p = rand_tensor::<f64>(&mut rg, &[1, 1, 6, 6], 0.05, 0.95);
    let y = Tensor::<f64>::from_fn(&[1, 1, 6, 6], |_| rg.gen_bool(0.5) as u8 as f64);
    let (_, g) = bce_loss(&p, &y).unwrap();
    // a single-element "output" holding the loss turns numeric_grads into dL/dp
    let num = numeric_grads(std::slice::from_ref(&p), &[1.0], |i| Tensor::full(&[1], bce_loss(&i[0], &y).unwrap().0));
    assert!(worst_rel_err(&[(to_f64(&g), num[0].clone())]) < 1e-5);
}

#[test]
fn bce_saturated_prediction_stays_finite() {
    let p = Tensor::<f32>::new(&[2], vec![0.0, 1.0]).unwrap();
    let y = Tensor::<f32>::new(&[2], vec![1.0, 0.0]).unwrap();
    let (loss, g) = bce_loss(&p, &y).unwrap();
    assert!((loss - (1e-7f64).ln().abs()).abs() < 1e-6);
    assert!(g.data().iter().all(|v| v.is_finite()));
    assert!(g.data()[0] < 0.0 && g.data()[1] > 0.0);
}

#[test]
fn adam_first_steps_by_hand() {
    let mut p = Param::new("w", Tensor::<f64>::full(&[1], 1.0));
    let mut state = AdamState::new(AdamHyper::default());
    let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.1);
    let (mut m, mut v, mut w) = (0.0, 0.0, 1.0);
    for (t, g) in [(1, 0.5), (2, -2.0), (3, 0.25)] {
        p.grad = Tensor::full(&[1], g);
        state.step(&mut [&mut p], lr).unwrap();
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        w -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        assert!((p.value.data()[0] - w).abs() < 1e-15, "step {t}");
    }
}

#[test]
fn steps_are_global_and_logged_once_each() {
    let ds = tiny_data(1);
    let n_train = ds.count(lunet::volume::Split::Train);
    let cfg = TrainConfig { epochs: 3, batch_size: 3, learning_rate: 1e-3, ..Default::default() };
    let mut sink = MemorySink::default();
    let mut csv = CsvSink::new(Vec::new(), Some(Vec::new()));
    train(&mut tiny_unet(), &ds, &cfg, &mut [&mut sink, &mut csv]).unwrap();
    let per_epoch = n_train.div_ceil(3);
    assert_eq!(sink.steps.len(), 3 * per_epoch);
    assert!(sink.steps.iter().enumerate().all(|(i, s)| s.step == i + 1 && s.epoch == i / per_epoch + 1));
    assert_eq!(sink.epochs.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
    let (steps, epochs) = csv.into_inner();
    let parsed = read_step_log(steps.as_slice()).unwrap();
    assert_eq!(parsed.len(), sink.steps.len());
    let epochs = String::from_utf8(epochs.unwrap()).unwrap();
    assert!(epochs.starts_with(EPOCH_CSV_HEADER));
    assert_eq!(epochs.lines().count(), 4);
}

#[test]
fn stops_after_patience_epochs_without_improvement() {
    let ds = tiny_data(2);
    // no later epoch can beat the first by a margin this large
    let cfg = TrainConfig { epochs: 20, early_stop_patience: 3, early_stop_min_delta: 1e9, ..Default::default() };
    let out = train(&mut tiny_unet(), &ds, &cfg, &mut []).unwrap();
    // epoch 1 improves on infinity, the next three do not
    assert_eq!(out.epochs_run, 4);
    assert!(out.stopped_early);
}

#[test]
fn best_validation_snapshot_is_restored() {
    let ds = tiny_data(3);
    let cfg = TrainConfig { epochs: 6, learning_rate: 3e-3, batch_size: 2, ..Default::default() };
    let mut m = tiny_unet();
    let out = train(&mut m, &ds, &cfg, &mut []).unwrap();
    let idx = ds.indices(lunet::volume::Split::Test);
    let (_, r) = evaluate(&mut m, &ds, &idx, cfg.batch_size, 0.5, ClassMode::TwoClass).unwrap();
    assert_eq!(r.mean_iou, out.best_val_iou);
    assert_eq!(out.history[out.best_epoch - 1].val_iou, out.best_val_iou);
}

#[test]
fn nan_weights_report_divergence() {
    let ds = tiny_data(4);
    let mut m = tiny_unet();
    m.head_mut().bias.value.data_mut()[0] = f32::NAN;
    let err = train(&mut m, &ds, &TrainConfig::default(), &mut []).unwrap_err();
    assert!(matches!(err, Error::DivergedLoss { epoch: 1, step: 1 }), "{err:?}");
}

#[test]
fn invalid_config_is_refused() {
    let ds = tiny_data(5);
    for cfg in [
        TrainConfig { batch_size: 0, ..Default::default() },
        TrainConfig { epochs: 0, ..Default::default() },
        TrainConfig { learning_rate: -1.0, ..Default::default() },
    ] {
        assert!(matches!(train(&mut tiny_unet(), &ds, &cfg, &mut []), Err(Error::InvalidConfig(_))));
    }
}
