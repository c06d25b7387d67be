mod common;

use common::{random_triplet, rng};
use rand::Rng;
use weavenet_core::data::PatchTriplet;
use weavenet_core::train::{batch_loss_and_grads, dataset_loss, loss, AdamState};
use weavenet_core::{DeinterlaceNet, NetConfig, Shape, Tensor, TrainConfig, Trainer};

fn small_net(seed: u64) -> DeinterlaceNet<f32> {
    DeinterlaceNet::init(
        NetConfig {
            trunk_channels: 6,
            branch_channels: 4,
            ..NetConfig::default()
        },
        seed,
    )
}

/// Squared-difference TV by direct summation.
fn tv_loop(img: &[f64], w: usize, h: usize) -> f64 {
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = img[y * w + x];
            if x + 1 < w {
                total += (img[y * w + x + 1] - v).powi(2);
            }
            if y + 1 < h {
                total += (img[(y + 1) * w + x] - v).powi(2);
            }
        }
    }
    total
}

/// Per-item loss built row by row from the raw triplet buffers.
fn loss_loop(pa: &[f64], pb: &[f64], item: &PatchTriplet, tv: f64) -> f64 {
    let n = item.size;
    let data: f64 = pa
        .iter()
        .zip(&item.target_even_t)
        .chain(pb.iter().zip(&item.target_odd_t1))
        .map(|(p, &t)| (p - t as f64).powi(2))
        .sum();
    let mut frame_t = vec![0.0; n * n];
    let mut frame_t1 = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let known = item.input[y * n + x] as f64;
            let half = (y / 2) * n + x;
            if y % 2 == 0 {
                frame_t[y * n + x] = known;
                frame_t1[y * n + x] = pb[half];
            } else {
                frame_t[y * n + x] = pa[half];
                frame_t1[y * n + x] = known;
            }
        }
    }
    data + tv * (tv_loop(&frame_t, n, n) + tv_loop(&frame_t1, n, n))
}

fn half_tensor(values: &[f64], n: usize) -> Tensor<f64> {
    Tensor::from_vec(Shape::new(1, 1, n / 2, n), values.to_vec()).unwrap()
}

#[test]
fn loss_is_zero_for_perfect_predictions_without_tv() {
    let mut r = rng(1);
    let item = random_triplet(&mut r, 8);
    let pa = item.target_even_t_tensor::<f64>();
    let pb = item.target_odd_t1_tensor::<f64>();
    assert_eq!(loss(&pa, &pb, &item, 0.0).unwrap(), 0.0);
    let tv = 0.3;
    let want = loss_loop(pa.data(), pb.data(), &item, tv);
    let got = loss(&pa, &pb, &item, tv).unwrap();
    assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{got} vs {want}");
    assert!(got > 0.0);
}

#[test]
fn loss_matches_loop_oracle_on_random_predictions() {
    let mut r = rng(2);
    for size in [2, 4, 8, 16] {
        for _ in 0..10 {
            let item = random_triplet(&mut r, size);
            let half = size * size / 2;
            let pa: Vec<f64> = (0..half).map(|_| r.gen_range(-0.5..1.5)).collect();
            let pb: Vec<f64> = (0..half).map(|_| r.gen_range(-0.5..1.5)).collect();
            let tv = r.gen_range(0.0..2.0);
            let got = loss(&half_tensor(&pa, size), &half_tensor(&pb, size), &item, tv).unwrap();
            let want = loss_loop(&pa, &pb, &item, tv);
            assert!(
                (got - want).abs() <= 1e-9 * want.max(1.0),
                "size {size}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn loss_rejects_mismatched_predictions() {
    let mut r = rng(3);
    let item = random_triplet(&mut r, 8);
    let wrong = Tensor::<f64>::zeros(Shape::new(1, 1, 4, 6));
    assert!(loss(&wrong, &item.target_odd_t1_tensor(), &item, 0.0).is_err());
}

fn one_param_step(g: f32) -> f32 {
    let mut net = small_net(0);
    let before = net.params()[0].data()[0];
    let grads: Vec<Tensor<f32>> = net.params().iter().map(|p| Tensor::from_fn(p.shape(), |_| g)).collect();
    let config = TrainConfig::default();
    AdamState::new(&net).apply(&mut net, &grads, &config);
    net.params()[0].data()[0] - before
}

#[test]
fn adam_first_step_moves_by_lr_against_the_gradient() {
    let lr = TrainConfig::default().learning_rate as f32;
    for g in [-2.0f32, 0.5] {
        let moved = one_param_step(g);
        assert!((moved + lr * g.signum()).abs() < 1e-6, "g={g}: moved {moved}");
    }
}

#[test]
fn adam_zero_gradient_leaves_parameters_unchanged() {
    let mut net = small_net(4);
    let before = net.clone();
    let zeros: Vec<Tensor<f32>> = net.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
    let config = TrainConfig::default();
    let mut adam = AdamState::new(&net);
    for _ in 0..100 {
        adam.apply(&mut net, &zeros, &config);
    }
    assert_eq!(net.params(), before.params());
}

#[test]
fn adam_minimizes_a_scalar_quadratic() {
    let mut net = small_net(5);
    for p in net.params_mut() {
        p.data_mut().fill(0.0);
    }
    let config = TrainConfig {
        learning_rate: 0.1,
        ..TrainConfig::default()
    };
    let mut adam = AdamState::new(&net);
    for _ in 0..50 {
        let grads: Vec<Tensor<f32>> = net.params().iter().map(|p| p.map(|w| 2.0 * (w - 3.0))).collect();
        adam.apply(&mut net, &grads, &config);
    }
    let w = net.params()[0].data()[0];
    assert!((w - 3.0).abs() < 0.5, "w = {w}");
}

#[test]
fn small_learning_rate_probe_decreases_monotonically() {
    let mut r = rng(6);
    let items: Vec<PatchTriplet> = (0..6).map(|_| random_triplet(&mut r, 8)).collect();
    let config = TrainConfig {
        learning_rate: 1e-4,
        batch_size: items.len(),
        epochs: 10,
        seed: 6,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(small_net(6), config);
    let mut last = dataset_loss(&t.net, &items, config.tv_weight).unwrap();
    for step in 0..10 {
        t.train_epoch(&items, &[]).unwrap();
        let now = dataset_loss(&t.net, &items, config.tv_weight).unwrap();
        assert!(now < last, "step {step}: {now} >= {last}");
        last = now;
    }
}

#[test]
fn history_matches_epochs_completed() {
    let mut r = rng(7);
    let items: Vec<PatchTriplet> = (0..5).map(|_| random_triplet(&mut r, 4)).collect();
    let config = TrainConfig {
        epochs: 3,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(small_net(7), config);
    t.fit::<weavenet_core::train::TrainError>(&items[..4], &items[4..], |_, _| Ok(()))
        .unwrap();
    assert_eq!(t.history.len(), 3);
    assert!(t.history.iter().all(|s| s.val_loss.is_some() && s.seconds >= 0.0));
    assert_eq!(t.history.iter().map(|s| s.epoch).collect::<Vec<_>>(), [1, 2, 3]);
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn loss_does_not_depend_on_thread_count() {
    let mut r = rng(8);
    let items: Vec<PatchTriplet> = (0..7).map(|_| random_triplet(&mut r, 8)).collect();
    let refs: Vec<&PatchTriplet> = items.iter().collect();
    let net = small_net(8);
    let run = |threads| in_pool(threads, || batch_loss_and_grads(&net, &refs, 0.1).unwrap());
    let (l1, g1) = run(1);
    for threads in [2, 4] {
        let (l, g) = run(threads);
        assert!((l - l1).abs() <= 1e-5 * l1.abs(), "{threads} threads: {l} vs {l1}");
        for (a, b) in g.iter().zip(&g1) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-5 * y.abs().max(1.0));
            }
        }
    }
    let train = |threads| {
        in_pool(threads, || {
            let config = TrainConfig {
                epochs: 2,
                batch_size: 3,
                ..TrainConfig::default()
            };
            let mut t = Trainer::new(small_net(9), config);
            t.fit::<weavenet_core::train::TrainError>(&items, &[], |_, _| Ok(()))
                .unwrap();
            t.net
        })
    };
    assert_eq!(train(1), train(3));
}
