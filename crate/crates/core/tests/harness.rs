use std::collections::BTreeSet;

use bfftrack::baselines::{RecurrentConfig, RecurrentKind, RecurrentModel};
use bfftrack::channel::Point;
use bfftrack::estimator::{Estimator, IoSpec};
use bfftrack::harness::*;
use bfftrack::trajectory::{InputMode, MotionKind, SequenceSample};
use bfftrack::transformer::{ModelConfig, TransformerModel};
use bfftrack::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample(group: usize, observed: Vec<Point>, target: Point) -> SequenceSample {
    SequenceSample {
        traj_id: group,
        group_id: group,
        start: 0,
        observed,
        fingerprints: None,
        target,
        rollout_targets: vec![target],
    }
}

/// Constant-velocity walks with random heading and speed.
fn walks(n: usize, t_obs: usize, group0: usize, seed: u64) -> Vec<SequenceSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let p0 = Point::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let v: f64 = rng.random_range(0.5..3.0);
            let at = |k: usize| Point::new(p0.x + v * a.cos() * k as f64, p0.y + v * a.sin() * k as f64);
            sample(group0 + i, (0..t_obs).map(at).collect(), at(t_obs))
        })
        .collect()
}

fn tiny_transformer(t_obs: usize, seed: u64) -> TransformerModel {
    let cfg = ModelConfig {
        d_model: 16,
        h: 2,
        d_ff: 32,
        n_enc_layers: 1,
        n_dec_layers: 1,
        t_obs,
        io: IoSpec::position(),
        ..ModelConfig::default()
    };
    TransformerModel::new(cfg, seed).unwrap()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs_max: epochs,
        batch_size: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn train_config_defaults() {
    let c = TrainConfig::default();
    assert_eq!((c.epochs_max, c.batch_size, c.patience), (100, 64, 10));
    assert_eq!(c.learning_rate, 1e-3);
    assert_eq!(c.dropout, 0.01);
    assert!(TrainConfig { batch_size: 0, ..c.clone() }.validate().is_err());
    assert!(TrainConfig { learning_rate: -1.0, ..c }.validate().is_err());
}

#[test]
fn percentile_examples() {
    assert_eq!(percentile(&[0.0, 10.0], 95.0).unwrap(), 9.5);
    let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
    assert!((percentile(&hundred, 95.0).unwrap() - 95.05).abs() < 1e-12);
    for q in [1.0, 50.0, 99.9] {
        assert_eq!(percentile(&[4.25], q).unwrap(), 4.25);
    }
    assert!(matches!(percentile(&[], 50.0), Err(Error::Domain(_))));
    assert!(percentile(&[1.0], 0.0).is_err());
    assert!(percentile(&[1.0], 100.0).is_err());
}

proptest! {
    #[test]
    fn percentile_ignores_order(mut xs in prop::collection::vec(0.0f64..100.0, 1..40), q in 0.5f64..99.5, seed in 0u64..1000) {
        let a = percentile(&xs, q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(xs.as_mut_slice(), &mut rng);
        prop_assert_eq!(a, percentile(&xs, q).unwrap());
        let med = percentile(&xs, 50.0).unwrap();
        prop_assert!(percentile(&xs, 95.0).unwrap() >= med);
    }
}

#[test]
fn persistence_examples() {
    let still = vec![Point::new(3.0, -2.0); 5];
    assert_eq!(persistence_baseline(&still).unwrap().distance(Point::new(3.0, -2.0)), 0.0);
    let v = 1.5;
    let walk: Vec<Point> = (0..6).map(|k| Point::new(v * k as f64, 0.0)).collect();
    let next = Point::new(v * 6.0, 0.0);
    assert_eq!(persistence_baseline(&walk).unwrap().distance(next), v);
    let p = persistence_baseline(&walk).unwrap();
    assert!(walk.contains(&p));
    assert!(persistence_baseline(&[]).is_err());
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let data = walks(20, 4, 0, 1);
    let mut m = tiny_transformer(4, 3);
    let before = m.params().clone();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..quick(3)
    };
    train(&mut m, &data, &[], &cfg).unwrap();
    for ((_, _, a), (_, _, b)) in before.iter().zip(m.params().iter()) {
        assert_eq!(a, b);
    }
}

#[test]
fn training_is_deterministic() {
    let data = walks(24, 4, 0, 2);
    let val = walks(8, 4, 100, 3);
    let run = || {
        let mut m = tiny_transformer(4, 5);
        let r = train(&mut m, &data, &val, &quick(4)).unwrap();
        (r.history, m.predict(&data.iter().collect::<Vec<_>>()).unwrap())
    };
    let (h1, p1) = run();
    let (h2, p2) = run();
    assert_eq!(h1, h2);
    assert_eq!(p1, p2);
}

#[test]
fn training_reduces_loss() {
    let data = walks(32, 5, 0, 4);
    let mut m = tiny_transformer(5, 6);
    let r = train(&mut m, &data, &[], &quick(10)).unwrap();
    assert!(r.final_loss < r.initial_loss, "{} !< {}", r.final_loss, r.initial_loss);
    assert_eq!(r.history.len(), 10);
}

#[test]
fn early_stopping_keeps_best_validation_parameters() {
    let data = walks(32, 4, 0, 7);
    let val = walks(8, 4, 50, 8);
    let mut m = tiny_transformer(4, 9);
    let cfg = TrainConfig {
        patience: 2,
        ..quick(40)
    };
    let r = train(&mut m, &data, &val, &cfg).unwrap();
    let best = r.history.iter().map(|h| h.val_avg_error.unwrap()).fold(f64::INFINITY, f64::min);
    let now = mean(&prediction_errors(&m, &val, 64).unwrap());
    assert_eq!(now, best);
    assert_eq!(r.history[r.best_epoch - 1].val_avg_error, Some(best));
}

#[test]
fn nan_loss_is_a_training_error() {
    let mut data = walks(8, 4, 0, 10);
    data[3].target = Point::new(f64::NAN, 0.0);
    data[3].rollout_targets[0] = data[3].target;
    let mut m = tiny_transformer(4, 11);
    match train(&mut m, &data, &[], &quick(2)) {
        Err(Error::Training(msg)) => assert!(msg.contains("step"), "{msg}"),
        other => panic!("expected a training error, got {other:?}"),
    }
}

#[test]
fn overlapping_groups_are_refused() {
    let data = walks(8, 4, 0, 12);
    let val = walks(4, 4, 6, 13);
    let mut m = tiny_transformer(4, 14);
    assert!(matches!(train(&mut m, &data, &val, &quick(1)), Err(Error::Config(_))));

    let groups: BTreeSet<usize> = data.iter().map(|s| s.group_id).collect();
    assert!(matches!(evaluate(None, &val, &groups), Err(Error::Config(_))));
    assert!(evaluate(None, &walks(4, 4, 50, 15), &groups).is_ok());
    assert!(matches!(evaluate(None, &[], &groups), Err(Error::Config(_))));
}

#[test]
fn metric_examples() {
    let test = walks(10, 3, 0, 16);
    let exact: Vec<f64> = test.iter().map(|s| s.target.distance(s.target)).collect();
    assert_eq!(summarize(&exact).unwrap(), (0.0, 0.0));
    let shifted: Vec<f64> = test
        .iter()
        .map(|s| Point::new(s.target.x + 0.6, s.target.y + 0.8).distance(s.target))
        .collect();
    let (avg, p95) = summarize(&shifted).unwrap();
    assert!((avg - 1.0).abs() < 1e-12 && (p95 - 1.0).abs() < 1e-12);
}

#[test]
fn report_csv_round_trip() {
    let mut report = MetricsReport::default();
    let mut raw = RawErrors::default();
    for (i, model) in ModelKind::ALL.iter().enumerate() {
        let errors: Vec<f64> = (0..5).map(|k| 0.1 * k as f64 + 1.0 / 3.0 + i as f64).collect();
        let row = metrics_row(*model, MotionKind::Vehicle, 7, &errors, None, None, 0.125).unwrap();
        push_cell(&mut report, &mut raw, row, &errors);
    }
    let back = MetricsReport::from_csv(&report.to_csv()).unwrap();
    assert_eq!(back, report);
    assert!(report.to_csv().starts_with(REPORT_HEADER));
    let raw_back = RawErrors::from_csv(&raw.to_csv()).unwrap();
    assert_eq!(raw_back, raw);
    assert!(raw.to_csv().starts_with(RAW_HEADER));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    report.write(&path).unwrap();
    assert_eq!(MetricsReport::read(&path).unwrap(), report);
    assert!(MetricsReport::from_csv("model,oops\n").is_err());
}

#[test]
fn memorizes_a_small_set() {
    let data = walks(32, 5, 0, 17);
    let cfg = ModelConfig {
        t_obs: 5,
        io: IoSpec::position(),
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let mut m = TransformerModel::new(cfg, 18).unwrap();
    let cfg = TrainConfig {
        epochs_max: 200,
        batch_size: 8,
        dropout: 0.0,
        ..TrainConfig::default()
    };
    train(&mut m, &data, &[], &cfg).unwrap();
    let avg = mean(&prediction_errors(&m, &data, 64).unwrap());
    assert!(avg < 0.1, "train avg error {avg}");
}

#[test]
fn recurrent_models_train() {
    let data = walks(32, 5, 0, 19);
    for kind in [RecurrentKind::Rnn, RecurrentKind::Lstm] {
        let mut m = RecurrentModel::new(RecurrentConfig::new(kind, 16, IoSpec::position(), 5), 20).unwrap();
        let r = train(&mut m, &data, &[], &quick(10)).unwrap();
        assert!(r.final_loss < r.initial_loss);
    }
}

fn tiny_experiment(mode: InputMode) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.seed = 99;
    c.traj_count = 40;
    c.group_size = 4;
    c.input_mode = mode;
    c.d_model = 8;
    c.heads = 2;
    c.d_ff = 16;
    c.n_enc_layers = 1;
    c.n_dec_layers = 1;
    c.train.epochs_max = 1;
    c.max_train_windows = 32;
    c
}

#[test]
fn sweep_emits_every_cell() {
    let exp = Experiment::build(tiny_experiment(InputMode::Position)).unwrap();
    let (report, raw) = sweep_sequence_lengths(&exp).unwrap();
    assert_eq!(report.rows.len(), 72);
    for model in ModelKind::ALL {
        for profile in MotionKind::ALL {
            for t in 3..=11 {
                let row = report.find(model.as_str(), profile.as_str(), t).expect("row");
                let errs = raw.cell(model.as_str(), profile.as_str(), t);
                assert_eq!(errs.len(), row.n_eval);
                assert!((mean(&errs) - row.avg_error_m).abs() < 1e-12);
                assert!((percentile(&errs, 95.0).unwrap() - row.p95_error_m).abs() < 1e-12);
                assert!(errs.iter().all(|&e| e >= 0.0));
            }
        }
    }
    let lstm = report.find("lstm", "pedestrian", 7).unwrap().param_count;
    let tf = report.find("transformer", "pedestrian", 7).unwrap().param_count;
    assert!((lstm as f64 / tf as f64 - 1.0).abs() < 0.5, "{lstm} vs {tf}");
    assert_eq!(report.find("persistence", "vehicle", 7).unwrap().param_count, 0);
}

#[test]
fn pipeline_is_deterministic() {
    let run = || {
        let exp = Experiment::build(tiny_experiment(InputMode::Fingerprint)).unwrap();
        let mut report = MetricsReport::default();
        let mut raw = RawErrors::default();
        for model in [ModelKind::Transformer, ModelKind::Lstm] {
            let out = exp.run_cell(MotionKind::Pedestrian, model, 4).unwrap();
            push_cell(&mut report, &mut raw, out.row, &out.errors);
        }
        (report, raw)
    };
    let (r1, e1) = run();
    let (r2, e2) = run();
    assert!(r1.same_metrics(&r2));
    assert_eq!(e1, e2);
}

#[test]
fn checkpoints_reload_and_reject_other_models() {
    let exp = Experiment::build(tiny_experiment(InputMode::Position)).unwrap();
    let out = exp.run_cell(MotionKind::Vehicle, ModelKind::Transformer, 5).unwrap();
    let model = out.model.unwrap();
    let w = exp.windows(MotionKind::Vehicle, 5).unwrap();
    let groups: BTreeSet<usize> = w.train.iter().map(|s| s.group_id).collect();
    let ck = checkpoint_of(model.as_ref(), &groups, &Default::default());
    assert_eq!(checkpoint_train_groups(&ck).unwrap(), groups);

    let back = exp.load_model(&ck, MotionKind::Vehicle, ModelKind::Transformer, 5).unwrap();
    let (errors, _) = evaluate(Some(back.as_ref()), &w.test, &groups).unwrap();
    assert_eq!(errors, out.errors);
    assert!(matches!(
        exp.load_model(&ck, MotionKind::Vehicle, ModelKind::Rnn, 5),
        Err(Error::Version(_))
    ));
    assert!(matches!(
        exp.load_model(&ck, MotionKind::Vehicle, ModelKind::Transformer, 6),
        Err(Error::Version(_))
    ));
}

fn overfit(m: &mut dyn Estimator, s: &SequenceSample, epochs: usize) {
    let cfg = TrainConfig {
        epochs_max: epochs,
        batch_size: 1,
        dropout: 0.0,
        ..TrainConfig::default()
    };
    train(m, std::slice::from_ref(s), &[], &cfg).unwrap();
}

#[test]
fn overfit_single_sequence() {
    let s = sample(
        0,
        vec![Point::new(3.0, 4.0), Point::new(4.1, 4.6), Point::new(5.0, 5.5), Point::new(5.7, 6.7)],
        Point::new(6.9, 7.2),
    );
    let cfg = ModelConfig {
        dropout: 0.0,
        ..tiny_transformer(4, 21).config().clone()
    };
    let mut m = TransformerModel::new(cfg, 21).unwrap();
    overfit(&mut m, &s, 1500);
    let p = m.predict_next(&s).unwrap();
    assert!(p.distance(s.target) < 1e-3, "transformer off by {}", p.distance(s.target));
    for kind in [RecurrentKind::Rnn, RecurrentKind::Lstm] {
        let mut m = RecurrentModel::new(RecurrentConfig::new(kind, 16, IoSpec::position(), 4), 22).unwrap();
        overfit(&mut m, &s, 1500);
        let p = m.recurrent_predict(&s).unwrap();
        assert!(p.distance(s.target) < 1e-3, "{kind} off by {}", p.distance(s.target));
    }
}

#[test]
fn stationary_rollout_stays_put() {
    let here = Point::new(-12.0, 30.0);
    let s = SequenceSample {
        rollout_targets: vec![here; 3],
        ..sample(0, vec![here; 5], here)
    };
    let cfg = ModelConfig {
        horizon: 3,
        dropout: 0.0,
        ..tiny_transformer(5, 23).config().clone()
    };
    let mut m = TransformerModel::new(cfg, 23).unwrap();
    overfit(&mut m, &s, 800);
    for p in m.rollout(&s, 3).unwrap() {
        assert!(p.distance(here) < 1e-2, "{p:?}");
    }
}
