use bfftrack::baselines::{lstm_step, rnn_step, CellWeights, RecurrentConfig, RecurrentKind, RecurrentModel};
use bfftrack::channel::Point;
use bfftrack::estimator::{Estimator, IoSpec};
use bfftrack::tensor::{grad_check, grad_check_params, Graph, Tensor, Var};
use bfftrack::trajectory::SequenceSample;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(s: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(s)
}

fn weights<'g>(g: &'g Graph, d: usize, h: usize, gates: usize, seed: u64) -> CellWeights<'g> {
    let mut r = rng(seed);
    CellWeights {
        w_x: g.constant(Tensor::uniform(&[d, gates * h], 0.5, &mut r)),
        w_h: g.constant(Tensor::uniform(&[h, gates * h], 0.5, &mut r)),
        b: g.constant(Tensor::uniform(&[gates * h], 0.5, &mut r)),
    }
}

#[test]
fn rnn_step_examples() {
    let g = Graph::new();
    let z = |s: &[usize]| g.constant(Tensor::zeros(s));
    let w = CellWeights { w_x: z(&[3, 4]), w_h: z(&[4, 4]), b: z(&[4]) };
    let h = rnn_step(z(&[2, 3]), z(&[2, 4]), w).unwrap();
    assert!(h.value().data().iter().all(|v| *v == 0.0));

    let mut w = weights(&g, 3, 4, 1, 1);
    w.w_h = z(&[4, 4]);
    let x = g.constant(Tensor::randn(&[2, 3], &mut rng(2)));
    let a = rnn_step(x, g.constant(Tensor::randn(&[2, 4], &mut rng(3))), w).unwrap();
    let b = rnn_step(x, g.constant(Tensor::randn(&[2, 4], &mut rng(4))), w).unwrap();
    assert_eq!(a.value().data(), b.value().data());
}

#[test]
fn lstm_step_examples() {
    let g = Graph::new();
    let z = |s: &[usize]| g.constant(Tensor::zeros(s));
    let w = CellWeights { w_x: z(&[3, 16]), w_h: z(&[4, 16]), b: z(&[16]) };
    let c = Tensor::randn(&[2, 4], &mut rng(5));
    let (_, ct) = lstm_step(z(&[2, 3]), z(&[2, 4]), g.constant(c.clone()), w).unwrap();
    for (a, b) in ct.value().data().iter().zip(c.data()) {
        assert!((a - 0.5 * b).abs() < 1e-15);
    }

    // Forget bias +20: the cell keeps its memory.
    let mut w = weights(&g, 3, 4, 4, 6);
    let mut bias = (*w.b.value()).clone();
    bias.data_mut()[4..8].fill(20.0);
    w.w_x = g.constant({
        let mut t = (*w.w_x.value()).clone();
        for r in 0..3 {
            t.data_mut()[r * 16 + 4..r * 16 + 8].fill(0.0);
        }
        t
    });
    w.w_h = g.constant({
        let mut t = (*w.w_h.value()).clone();
        for r in 0..4 {
            t.data_mut()[r * 16 + 4..r * 16 + 8].fill(0.0);
        }
        t
    });
    w.b = g.constant(bias);
    let x = g.constant(Tensor::randn(&[2, 3], &mut rng(7)));
    let hp = g.constant(Tensor::randn(&[2, 4], &mut rng(8)));
    let (_, ct) = lstm_step(x, hp, g.constant(c.clone()), w).unwrap();
    // i⊙g recomputed directly.
    let z = x.matmul(w.w_x).unwrap().add(hp.matmul(w.w_h).unwrap()).unwrap().add_broadcast(w.b).unwrap();
    let zv = z.value();
    for r in 0..2 {
        for j in 0..4 {
            let i = 1.0 / (1.0 + (-zv.at(&[r, j])).exp());
            let gg = zv.at(&[r, 8 + j]).tanh();
            assert!((ct.value().at(&[r, j]) - (c.at(&[r, j]) + i * gg)).abs() < 1e-8);
        }
    }
}

fn unrolled<'g>(x: Var<'g>, kind: RecurrentKind, w: CellWeights<'g>) -> bfftrack::Result<Var<'g>> {
    let g = x.graph();
    let (b, t, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let h = w.w_h.shape()[0];
    let mut hs = g.constant(Tensor::zeros(&[b, h]));
    let mut cs = g.constant(Tensor::zeros(&[b, h]));
    for k in 0..t {
        let xt = x.slice_rows(k, 1)?.reshape(&[b, d])?;
        match kind {
            RecurrentKind::Rnn => hs = rnn_step(xt, hs, w)?,
            RecurrentKind::Lstm => (hs, cs) = lstm_step(xt, hs, cs, w)?,
        }
    }
    Ok(hs.sum())
}

#[test]
fn ten_step_unroll_gradients() {
    for (kind, gates) in [(RecurrentKind::Rnn, 1), (RecurrentKind::Lstm, 4)] {
        let x = Tensor::randn(&[2, 10, 3], &mut rng(9));
        let e = grad_check(
            |v| {
                let w = weights(v.graph(), 3, 4, gates, 10);
                unrolled(v, kind, w)
            },
            &x,
        )
        .unwrap();
        assert!(e < 1e-5, "{kind} inputs {e}");

        let mut store = bfftrack::tensor::ParamStore::new();
        let mut r = rng(11);
        let wx = store.add("wx", Tensor::uniform(&[3, gates * 4], 0.5, &mut r)).unwrap();
        let wh = store.add("wh", Tensor::uniform(&[4, gates * 4], 0.5, &mut r)).unwrap();
        let b = store.add("b", Tensor::uniform(&[gates * 4], 0.5, &mut r)).unwrap();
        let e = grad_check_params(&store, |g, st| {
            let w = CellWeights { w_x: g.param(st, wx), w_h: g.param(st, wh), b: g.param(st, b) };
            unrolled(g.constant(x.clone()), kind, w)
        })
        .unwrap();
        assert!(e < 1e-5, "{kind} weights {e}");
    }
}

fn line(t_obs: usize, k: f64) -> SequenceSample {
    let pts: Vec<Point> = (0..=t_obs).map(|i| Point::new(k * i as f64, 2.0 - i as f64)).collect();
    SequenceSample {
        traj_id: 0,
        group_id: 0,
        start: 0,
        observed: pts[..t_obs].to_vec(),
        fingerprints: None,
        target: pts[t_obs],
        rollout_targets: vec![pts[t_obs]],
    }
}

#[test]
fn model_gradients_and_counts() {
    for kind in [RecurrentKind::Rnn, RecurrentKind::Lstm] {
        let mut cfg = RecurrentConfig::new(kind, 5, IoSpec::position(), 3);
        cfg.n_layers = 2;
        let m = RecurrentModel::new(cfg.clone(), 1).unwrap();
        assert_eq!(m.count_params(), cfg.param_count());
        let g = if kind == RecurrentKind::Rnn { 1 } else { 4 };
        assert_eq!(cfg.param_count(), g * 5 * (5 + 2 + 1) + g * 5 * (5 + 5 + 1) + 2 * 5 + 2);
        let samples = [line(3, 0.5), line(3, -1.0)];
        let refs: Vec<&SequenceSample> = samples.iter().collect();
        let x = cfg.io.inputs(&refs).unwrap();
        let y = cfg.io.targets(&refs, 1).unwrap();
        let e = grad_check_params(m.params(), |g, st| {
            RecurrentModel::from_params(cfg.clone(), st)?.loss_on(g, &x, &y)
        })
        .unwrap();
        assert!(e < 1e-4, "{kind} {e}");
        let a = m.predict(&refs).unwrap();
        assert_eq!(a, m.predict(&refs).unwrap());
        assert_eq!(a[1], m.recurrent_predict(&samples[1]).unwrap());
    }
    let io = IoSpec::position();
    let rnn = RecurrentConfig::new(RecurrentKind::Rnn, 32, io, 7).param_count();
    let lstm = RecurrentConfig::new(RecurrentKind::Lstm, 32, io, 7).param_count();
    assert!(rnn < lstm);
    let matched = RecurrentConfig::matched(RecurrentKind::Lstm, io, 7, 100_000);
    let ratio = matched.param_count() as f64 / 100_000.0;
    assert!((0.9..1.1).contains(&ratio));
}

#[test]
fn single_step_equals_cell_plus_head() {
    let cfg = RecurrentConfig::new(RecurrentKind::Rnn, 6, IoSpec::position(), 1);
    let m = RecurrentModel::new(cfg.clone(), 3).unwrap();
    let s = line(1, 2.0);
    let p = m.recurrent_predict(&s).unwrap();
    let g = Graph::new();
    let pm = |n: &str| g.param(m.params(), m.param_id(n).unwrap());
    let w = CellWeights { w_x: pm("layer.0.w_x"), w_h: pm("layer.0.w_h"), b: pm("layer.0.b") };
    let x = g.constant(cfg.io.inputs(&[&s]).unwrap().reshape(&[1, 2]).unwrap());
    let h = rnn_step(x, g.constant(Tensor::zeros(&[1, 6])), w).unwrap();
    let u = h.matmul(pm("head.w")).unwrap().add_broadcast(pm("head.b")).unwrap().value();
    let last = s.last_observed();
    assert!((p.x - (last.x + 10.0 * u.data()[0])).abs() < 1e-12);
    assert!((p.y - (last.y + 10.0 * u.data()[1])).abs() < 1e-12);
}

proptest! {
    #[test]
    fn lstm_cell_state_bound(seed in 0u64..1000, scale in 0.1f64..5.0) {
        let g = Graph::new();
        let mut r = rng(seed);
        let w = CellWeights {
            w_x: g.constant(Tensor::uniform(&[3, 16], scale, &mut r)),
            w_h: g.constant(Tensor::uniform(&[4, 16], scale, &mut r)),
            b: g.constant(Tensor::uniform(&[16], scale, &mut r)),
        };
        let c = Tensor::uniform(&[2, 4], 3.0, &mut r);
        let (_, ct) = lstm_step(
            g.constant(Tensor::randn(&[2, 3], &mut r)),
            g.constant(Tensor::uniform(&[2, 4], 1.0, &mut r)),
            g.constant(c.clone()),
            w,
        ).unwrap();
        for (a, b) in ct.value().data().iter().zip(c.data()) {
            prop_assert!(a.abs() <= b.abs() + 1.0 + 1e-12);
        }
    }
}
