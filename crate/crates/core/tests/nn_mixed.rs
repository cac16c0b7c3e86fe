mod common;

use common::{pow2, rational_value, Q};
use positnn::nn::{
    build_lenet5, cross_entropy, scale_gradients, Activation, Ctx, Layer, Linear, Sequential, Sgd, StagePrecisions,
};
use positnn::quire::Quire;
use positnn::tensor::{Numeric, Tensor};
use positnn::{PositConfig, PositValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn posit(n: u32, es: u32) -> Numeric {
    Numeric::Posit(PositConfig::of(n, es))
}

fn random(shape: &[usize], seed: u64, kind: Numeric) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..shape.iter().product()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &v, kind).unwrap()
}

fn mixed() -> StagePrecisions {
    let mut p = StagePrecisions::uniform(posit(8, 2), true);
    p.backward = posit(10, 2);
    p.gradient = posit(12, 2);
    p.optimizer = posit(16, 2);
    p.loss = posit(10, 2);
    p.quire.optimizer = false;
    p
}

fn all_in_sync(net: &Sequential, prec: &StagePrecisions) -> bool {
    net.named_params().iter().all(|(_, p)| p.in_sync(prec))
}

fn train_step(net: &mut Sequential, x: &Tensor, y: &[usize], prec: &StagePrecisions) -> f64 {
    let ctx = Ctx::new(*prec);
    let logits = net.forward(x, &ctx).unwrap();
    let loss = cross_entropy(&logits, y, prec.loss, prec.quire.loss).unwrap();
    net.backward(&loss.grad, &ctx).unwrap();
    Sgd::new(0.05, 0.9).step(net.params_mut(), prec).unwrap();
    loss.value
}

#[test]
fn copies_track_the_master_after_construction_steps_and_load() {
    let prec = mixed();
    let mut net = build_lenet5(&prec, Activation::Tanh, 3);
    assert!(all_in_sync(&net, &prec));
    let x = random(&[4, 1, 28, 28], 1, Numeric::F64);
    for step in 0..3 {
        train_step(&mut net, &x, &[0, 3, 7, 9], &prec);
        assert!(all_in_sync(&net, &prec), "out of sync after step {step}");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pnn");
    net.save(&path).unwrap();
    let mut fresh = build_lenet5(&prec, Activation::Tanh, 99);
    fresh.load(&path, &prec).unwrap();
    assert!(all_in_sync(&fresh, &prec));
    assert_eq!(fresh.to_bytes(), net.to_bytes());
}

/// `Linear` forward, backward and two momentum steps written out with
/// scalar posit operations only.
fn scalar_linear_reference(
    cfg: PositConfig,
    quire: bool,
    x: &[Vec<PositValue>],
    w: &mut [Vec<PositValue>],
    b: &mut [PositValue],
    dy: &[Vec<PositValue>],
) -> Vec<Vec<PositValue>> {
    let dot = |terms: &[(PositValue, PositValue)], bias: Option<PositValue>| -> PositValue {
        if quire {
            let mut q = Quire::new(cfg);
            for &(a, c) in terms {
                q.add_product(a, c).unwrap();
            }
            if let Some(c) = bias {
                q.add_posit(c).unwrap();
            }
            q.to_posit()
        } else {
            let mut acc = cfg.zero();
            for &(a, c) in terms {
                acc = acc + a * c;
            }
            bias.map_or(acc, |c| acc + c)
        }
    };
    let one = cfg.one();
    let y: Vec<Vec<PositValue>> = x
        .iter()
        .map(|xr| w.iter().zip(b.iter()).map(|(wr, &bo)| dot(&xr.iter().copied().zip(wr.iter().copied()).collect::<Vec<_>>(), Some(bo))).collect())
        .collect();
    let lr = PositValue::from_f64(0.25, cfg);
    let mu = PositValue::from_f64(0.5, cfg);
    let (outs, ins) = (w.len(), w[0].len());
    let mut vw = vec![vec![cfg.zero(); ins]; outs];
    let mut vb = vec![cfg.zero(); outs];
    for step in 0..2 {
        for o in 0..outs {
            for i in 0..ins {
                let g = dot(&(0..x.len()).map(|s| (dy[s][o], x[s][i])).collect::<Vec<_>>(), None);
                vw[o][i] = if step == 0 { g } else { mu * vw[o][i] + g };
                w[o][i] = w[o][i] - lr * vw[o][i];
            }
            let g = dot(&(0..x.len()).map(|s| (dy[s][o], one)).collect::<Vec<_>>(), None);
            vb[o] = if step == 0 { g } else { mu * vb[o] + g };
            b[o] = b[o] - lr * vb[o];
        }
    }
    y
}

#[test]
fn equal_stage_formats_reduce_to_a_single_precision_run() {
    for quire in [false, true] {
        let cfg = PositConfig::of(10, 1);
        let kind = Numeric::Posit(cfg);
        let prec = StagePrecisions::uniform(kind, quire);
        let (batch, ins, outs) = (5, 7, 3);
        let xt = random(&[batch, ins], 10, kind);
        let wt = random(&[outs, ins], 11, kind);
        let bt = random(&[outs], 12, kind);
        let dyt = random(&[batch, outs], 13, kind);
        let rows = |t: &Tensor, r: usize, c: usize| -> Vec<Vec<PositValue>> {
            (0..r).map(|i| (0..c).map(|j| t.posit(&[i, j]).unwrap()).collect()).collect()
        };
        let mut w = rows(&wt, outs, ins);
        let mut b: Vec<PositValue> = (0..outs).map(|j| bt.posit(&[j]).unwrap()).collect();
        let want_y = scalar_linear_reference(cfg, quire, &rows(&xt, batch, ins), &mut w, &mut b, &rows(&dyt, batch, outs));

        let mut layer = Linear::from_tensors(wt, bt, &prec).unwrap();
        let ctx = Ctx::new(prec);
        let y0 = layer.forward(&xt, &ctx).unwrap();
        for step in 0..2 {
            if step > 0 {
                layer.forward(&xt, &ctx).unwrap();
            }
            layer.backward(&dyt, &ctx, false).unwrap();
            Sgd::new(0.25, 0.5).step(layer.params_mut(), &prec).unwrap();
        }
        assert_eq!(rows(&y0, batch, outs), want_y, "forward, quire {quire}");
        assert_eq!(rows(layer.weight().master(), outs, ins), w, "weights, quire {quire}");
        let got_b: Vec<PositValue> = (0..outs).map(|j| layer.bias().master().posit(&[j]).unwrap()).collect();
        assert_eq!(got_b, b, "bias, quire {quire}");
    }
}

#[test]
fn posit32_linear_is_within_a_millionth_of_float64() {
    let p32 = StagePrecisions::uniform(posit(32, 2), true);
    let f64p = StagePrecisions::uniform(Numeric::F64, false);
    let w = random(&[4, 6], 20, Numeric::F64);
    let b = random(&[4], 21, Numeric::F64);
    let x = random(&[8, 6], 22, Numeric::F64);
    let mut lp = Linear::from_tensors(w.convert(p32.optimizer), b.convert(p32.optimizer), &p32).unwrap();
    let mut lf = Linear::from_tensors(w, b, &f64p).unwrap();
    let yp = lp.forward(&x, &Ctx::new(p32).eval()).unwrap().to_f64_vec();
    let yf = lf.forward(&x, &Ctx::new(f64p).eval()).unwrap().to_f64_vec();
    for (a, e) in yp.iter().zip(&yf) {
        assert!((a - e).abs() <= 1e-6 * e.abs().max(1e-3), "{a} vs {e}");
    }
}

#[test]
fn posit32_lenet_tracks_the_float64_loss() {
    let p32 = StagePrecisions::uniform(posit(32, 2), true);
    let f64p = StagePrecisions::uniform(Numeric::F64, false);
    let mut np = build_lenet5(&p32, Activation::Tanh, 5);
    let mut nf = build_lenet5(&f64p, Activation::Tanh, 5);
    let batches =
        [(random(&[6, 1, 28, 28], 30, Numeric::F64), vec![1, 2, 3, 4, 5, 6]), (random(&[6, 1, 28, 28], 31, Numeric::F64), vec![0, 9, 8, 7, 6, 5])];
    for step in 0..4 {
        let (x, y) = &batches[step % 2];
        let lp = train_step(&mut np, x, y, &p32);
        let lf = train_step(&mut nf, x, y, &f64p);
        assert!((lp - lf).abs() < 1e-3, "step {step}: posit32 {lp} vs float64 {lf}");
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn tiny_model(prec: &StagePrecisions) -> Sequential {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut net = Sequential::new();
    net.push("fc1", Linear::new(4, 3, prec, &mut rng));
    net.push("fc2", Linear::new(3, 2, prec, &mut rng));
    net
}

#[test]
fn tiny_checkpoint_checksum_is_stable() {
    let prec = StagePrecisions::uniform(posit(8, 2), true);
    let bytes = tiny_model(&prec).to_bytes();
    assert_eq!(&bytes[..4], b"PNN1");
    assert_eq!(fnv1a(&bytes), GOLDEN_TINY_CHECKSUM, "checksum {:#018x}", fnv1a(&bytes));
}

const GOLDEN_TINY_CHECKSUM: u64 = 0x61ed_5c33_3cb0_724f;

#[test]
fn mismatched_or_truncated_checkpoints_are_rejected() {
    let p8 = StagePrecisions::uniform(posit(8, 2), true);
    let p16 = StagePrecisions::uniform(posit(16, 1), false);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.pnn");
    tiny_model(&p8).save(&path).unwrap();

    let err = tiny_model(&p16).load(&path, &p16).unwrap_err().to_string();
    assert!(err.contains("8:2") && err.contains("16:1"), "{err}");

    let mut same = tiny_model(&p8);
    same.load(&path, &p8).unwrap();
    assert_eq!(same.to_bytes(), std::fs::read(&path).unwrap());

    let bytes = std::fs::read(&path).unwrap();
    for cut in [3, 10, bytes.len() - 1] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        assert!(tiny_model(&p8).load(&path, &p8).is_err(), "cut at {cut}");
    }
}

/// Representable scaled values always come back. The converse fails: a
/// scale that lengthens the regime can drop fraction bits, and tiny values
/// can come back even though the intermediate was rounded.
#[test]
fn scaling_round_trips_whenever_the_scaled_value_is_representable() {
    let cfg = PositConfig::of(8, 2);
    let kind = Numeric::Posit(cfg);
    let values: Vec<Q> = (0..256u64).filter_map(|b| rational_value(8, 2, b)).collect();
    let words: Vec<u64> = (0..256u64).filter(|&b| b != cfg.nar_bits()).collect();
    let t = Tensor::from_words(&[words.len()], words.clone(), kind).unwrap();
    assert_eq!(scale_gradients(&t, 0), t);
    let mut lost = 0;
    for s in -12..=12 {
        let back = scale_gradients(&scale_gradients(&t, s), -s);
        for (i, &w) in words.iter().enumerate() {
            let x = rational_value(8, 2, w).unwrap();
            if values.contains(&(x * pow2(s as i64))) {
                assert_eq!(back.words()[i], w, "pattern {w:#04x}, scale 2^{s}");
            } else {
                lost += (back.words()[i] != w) as usize;
            }
        }
    }
    assert!(lost > 0);
    // 1.125 · 2^8 needs a fraction bit the longer regime no longer has
    let x = Tensor::from_f64(&[1], &[1.125], kind).unwrap();
    assert_eq!(scale_gradients(&scale_gradients(&x, 8), -8).get_f64(&[0]), 1.0);
    // 2^20 · 2^8 saturates at maxpos 2^24 and comes back as 2^16
    let big = Tensor::from_f64(&[1], &[2f64.powi(20)], kind).unwrap();
    assert_eq!(scale_gradients(&big, 8).words()[0], cfg.maxpos_bits());
    assert_eq!(scale_gradients(&scale_gradients(&big, 8), -8).get_f64(&[0]), 2f64.powi(16));
}
