use odvsr::models::{build, count_params, Network, ARCHITECTURES};
use odvsr::tensor::{Tape, Tensor, Var};
use odvsr::train::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tensor(dims: [usize; 4], seed: u64) -> Tensor<f32> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(dims, |_| r.random_range(0.0..1.0)).unwrap()
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut p = tensor([1, 1, 3, 3], 1);
    let before = p.clone();
    let g = Tensor::zeros(p.dims()).unwrap();
    let mut state = AdamState::new([&p]).unwrap();
    adam_step(&mut [&mut p], &[g], &mut state, 0.1).unwrap();
    assert_eq!(p, before);
    assert_eq!(state.step, 1);
}

#[test]
fn adam_first_step_is_lr_times_sign() {
    let mut p = Tensor::<f64>::from_vec([1, 1, 1, 4], vec![0.0, 1.0, -2.0, 3.0]).unwrap();
    let before = p.clone();
    let g = Tensor::from_vec([1, 1, 1, 4], vec![0.5, -3.0, 1e-3, -1e2]).unwrap();
    let mut state = AdamState::new([&p]).unwrap();
    let lr = 0.01;
    adam_step(&mut [&mut p], &[g.clone()], &mut state, lr).unwrap();
    for i in 0..4 {
        let step = p.data()[i] - before.data()[i];
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let expected = -lr * g.data()[i] / (g.data()[i].abs() + 1e-8);
        assert!((step - expected).abs() < 1e-12, "{step} vs {expected}");
        assert!((step.abs() - lr).abs() < 1e-7);
    }
}

#[test]
fn adam_moves_monotonically_against_a_fixed_gradient() {
    let mut p = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![0.0, 0.0, 0.0]).unwrap();
    let g = Tensor::from_vec([1, 1, 1, 3], vec![2.0, -1.0, 0.3]).unwrap();
    let mut state = AdamState::new([&p]).unwrap();
    let mut last = p.clone();
    for _ in 0..5 {
        adam_step(&mut [&mut p], &[g.clone()], &mut state, 0.1).unwrap();
        for i in 0..3 {
            let d = p.data()[i] - last.data()[i];
            assert!(d * g.data()[i] < 0.0);
            // bounded update in the early steps
            assert!(d.abs() <= 0.1 * (1.0 + 1e-6));
        }
        last = p.clone();
    }
}

#[test]
fn adam_rejects_shape_mismatch() {
    let mut p = tensor([1, 1, 2, 2], 2);
    let mut state = AdamState::new([&p]).unwrap();
    let g = Tensor::zeros([1, 1, 2, 3]).unwrap();
    assert!(adam_step(&mut [&mut p], &[g], &mut state, 0.1).is_err());
    assert!(adam_step(&mut [&mut p], &[], &mut state, 0.1).is_err());
}

#[test]
fn patches_are_aligned() {
    let frame = tensor([1, 3, 512, 512], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let p = sample_patch(&frame, 4, 64, &mut rng).unwrap();
        assert_eq!(p.lr.dims(), [1, 3, 64, 64]);
        assert_eq!(p.hr.dims(), [1, 3, 256, 256]);
        assert_eq!(p.hr_top % 4, 0);
        assert_eq!(p.hr_left % 4, 0);
        assert_eq!(p.hr.at([0, 1, 7, 9]), frame.at([0, 1, p.hr_top + 7, p.hr_left + 9]));
    }
    assert!(sample_patch(&frame, 4, 129, &mut rng).is_err());
}

#[test]
fn patch_sequence_is_seeded() {
    let frame = tensor([1, 3, 64, 64], 5);
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..20)
            .map(|_| {
                let p = sample_patch(&frame, 2, 8, &mut rng).unwrap();
                (p.hr_top, p.hr_left)
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(9), draw(9));
    assert_ne!(draw(9), draw(10));
}

#[test]
fn patch_offsets_are_uniform() {
    // 10 wide at x2 with 3-pixel LR patches: LR offsets 0, 1, 2
    let frame = tensor([1, 1, 10, 10], 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = [0usize; 3];
    let draws = 10_000;
    for _ in 0..draws {
        let p = sample_patch(&frame, 2, 3, &mut rng).unwrap();
        counts[p.hr_left / 2] += 1;
    }
    let expected = draws as f64 / 3.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99th percentile of chi-square with 2 degrees of freedom
    assert!(chi2 < 9.21034, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn flips_and_rotations() {
    let x = tensor([2, 3, 4, 6], 8);
    assert_eq!(hflip(&hflip(&x)), x);
    assert_eq!(vflip(&vflip(&x)), x);
    assert_eq!(rot90(&rot90(&x)), hflip(&vflip(&x)));
    let r = rot90(&x);
    assert_eq!(r.dims(), [2, 3, 6, 4]);
    assert_eq!(rot90(&rot90(&r)).dims(), r.dims());
    assert_eq!(rot90(&rot90(&rot90(&r))), x);
}

#[test]
fn mixup_endpoints_and_range() {
    let a = tensor([1, 3, 4, 4], 9);
    let b = tensor([1, 3, 4, 4], 10);
    assert_eq!(mix(&a, &b, 1.0).unwrap(), a);
    assert_eq!(mix(&a, &b, 0.0).unwrap(), b);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sum = 0.0;
    for _ in 0..2000 {
        let (_, l) = mixup((&a, &a), (&b, &b), 1.2, &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&l));
        sum += l;
    }
    // symmetric Beta has mean 1/2
    assert!((sum / 2000.0 - 0.5).abs() < 0.03);
}

#[test]
fn augmentation_keeps_alignment() {
    let frame = tensor([1, 3, 48, 48], 12);
    let config = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..32 {
        let p = sample_patch(&frame, 4, 8, &mut rng).unwrap();
        let (lr, hr) = augment(p.lr, p.hr, &mut rng, &config);
        assert_eq!(lr.dims(), [1, 3, 8, 8]);
        assert_eq!(hr.dims(), [1, 3, 32, 32]);
        // the transformed LR is still the reduction of the transformed HR
        let again = odvsr::models::bicubic_downscale(&hr, 4).unwrap();
        let worst = lr.zip_map(&again, |a, b| (a - b).abs()).unwrap().max_abs();
        assert!(worst < 1e-5, "{worst}");
    }
}

fn tiny_athena() -> Network<f32> {
    Network::new(build("athena", 2).unwrap(), 3).unwrap()
}

#[test]
fn zero_learning_rate_keeps_the_loss_constant() {
    let frame = tensor([1, 3, 16, 16], 14);
    let mut net = tiny_athena();
    let config = TrainConfig {
        lr: 0.0,
        batch: 1,
        patch: 8,
        iterations: 5,
        flip: false,
        rotate: false,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &[frame], &config).unwrap();
    assert_eq!(report.losses.len(), 5);
    assert!(report.losses.iter().all(|&l| l == report.losses[0]));
}

#[test]
fn step_decay_schedule_is_recorded() {
    let frame = tensor([1, 3, 16, 16], 15);
    let mut net = tiny_athena();
    let config = TrainConfig {
        lr: 1e-3,
        schedule: Schedule::StepDecay { every: 50, factor: 0.1 },
        batch: 1,
        patch: 4,
        iterations: 120,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &[frame], &config).unwrap();
    for (i, &r) in report.lrs.iter().enumerate() {
        let expected = 1e-3 * 0.1f64.powi((i / 50) as i32);
        assert!((r - expected).abs() < 1e-18, "iteration {i}: {r}");
    }
    assert_eq!(report.lrs[49], 1e-3);
    assert!((report.lrs[50] - 1e-4).abs() < 1e-18);
}

#[test]
fn training_is_bitwise_reproducible() {
    let frames = vec![tensor([1, 3, 32, 32], 16), tensor([1, 3, 32, 32], 17)];
    let config = TrainConfig {
        lr: 1e-3,
        batch: 2,
        patch: 8,
        iterations: 6,
        mixup: true,
        lr_noise: 0.01,
        seed: 5,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = tiny_athena();
        let r = train(&mut net, &frames, &config).unwrap();
        (r, net.params().cloned().collect::<Vec<_>>())
    };
    let (ra, pa) = run();
    let (rb, pb) = run();
    assert_eq!(ra, rb);
    assert_eq!(pa, pb);
    let other = TrainConfig { seed: 6, ..config.clone() };
    let mut net = tiny_athena();
    assert_ne!(train(&mut net, &frames, &other).unwrap().losses, ra.losses);
}

#[test]
fn every_loss_trains() {
    let frames = vec![synthetic_frame(32, 32, 1).unwrap()];
    for loss in ["charbonnier", "charbonnier+fft", "ws-weighted-l1"] {
        let mut net = tiny_athena();
        let config = TrainConfig {
            loss: loss.parse().unwrap(),
            lr: 2e-3,
            batch: 2,
            patch: 8,
            iterations: 30,
            ..TrainConfig::default()
        };
        let r = train(&mut net, &frames, &config).unwrap();
        assert!(r.losses.iter().all(|l| l.is_finite()));
        assert!(r.mean_loss(25..30) < r.mean_loss(0..5), "{loss}: {:?}", r.losses);
    }
    assert!("l2".parse::<LossKind>().is_err());
}

#[test]
fn invalid_training_setups() {
    let frame = tensor([1, 3, 16, 16], 18);
    let mut net = tiny_athena();
    let base = TrainConfig {
        patch: 4,
        iterations: 1,
        ..TrainConfig::default()
    };
    assert!(train(&mut net, &[], &base).is_err());
    for bad in [
        TrainConfig { batch: 0, ..base.clone() },
        TrainConfig { lr: -1.0, ..base.clone() },
        TrainConfig { lr: f64::NAN, ..base.clone() },
        TrainConfig { patch: 9, ..base.clone() },
        TrainConfig {
            schedule: Schedule::StepDecay { every: 0, factor: 0.1 },
            ..base.clone()
        },
    ] {
        assert!(train(&mut net, &[frame.clone()], &bad).is_err(), "{bad:?}");
    }
}

#[test]
fn loss_trace_csv() {
    let report = TrainReport {
        losses: vec![0.5, 0.25],
        lrs: vec![1e-3, 1e-4],
    };
    let mut out = Vec::new();
    report.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next(), Some("iteration,lr,loss"));
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("1,1e-4,0.25"));
}

#[test]
fn synthetic_frames_are_valid_and_seeded() {
    let a = synthetic_frame(40, 80, 3).unwrap();
    assert_eq!(a.dims(), [1, 3, 40, 80]);
    assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(a, synthetic_frame(40, 80, 3).unwrap());
    assert_ne!(a, synthetic_frame(40, 80, 4).unwrap());
}

#[test]
fn every_parameter_receives_gradient() {
    for name in ARCHITECTURES {
        let net = Network::<f64>::new(build(name, 2).unwrap(), 21).unwrap();
        let mut tape = Tape::new();
        let leaves = net.leaves(&mut tape);
        let x = Var::constant(tensor([1, 3, 16, 16], 22).cast::<f64>());
        let y = Var::constant(tensor([1, 3, 32, 32], 23).cast::<f64>());
        let out = net.forward_with(&mut tape, &leaves, &x).unwrap();
        let loss = tape.charbonnier(&out, &y, 1e-3).unwrap();
        let grads = tape.backward(&loss).unwrap();
        for (leaf, spec) in leaves.iter().zip(net.param_specs()) {
            let g = grads.get_or_zeros(leaf).unwrap();
            assert!(g.max_abs() > 0.0, "{name}: {} gets no gradient", spec.name);
        }
    }
}

#[test]
fn optimizer_state_matches_parameter_count() {
    for name in ARCHITECTURES {
        for scale in [2, 4] {
            let spec = build(name, scale).unwrap();
            let net = Network::<f32>::new(spec.clone(), 0).unwrap();
            let state = AdamState::new(net.params()).unwrap();
            let moments: usize = state.m.iter().map(|t| t.len()).sum();
            assert_eq!(moments, count_params(&spec), "{name} x{scale}");
            assert_eq!(moments, net.num_params());
        }
    }
}
