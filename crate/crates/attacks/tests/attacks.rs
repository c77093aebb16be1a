use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use zcp_attacks::{
    apgd, attack, clean_accuracy, fgsm, pgd, pgd_observed, robust_accuracy, square,
    AttackConfig, AttackError, AttackKind, BALL_TOL,
};
use zcp_core::{ArchEncoding, Frozen, MacroConfig, Mlp, Network, OpId, Tensor};

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn gaussian(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
}

fn tiny_net() -> Mlp {
    Mlp::new([1, 4, 4], &[16, 12, 3], true, true, 7).unwrap()
}

fn desk_macro() -> MacroConfig {
    MacroConfig {
        stem_channels: 2,
        input_resolution: 4,
        num_classes: 3,
        ..MacroConfig::default()
    }
}

const EPS: f64 = 8.0 / 255.0;

fn linf(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn zero_epsilon_is_identity() {
    let net = tiny_net();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = uniform(&[5, 1, 4, 4], &mut rng);
    let y = vec![0, 1, 2, 0, 1];
    for kind in AttackKind::ALL {
        let cfg = AttackConfig::new(kind, 0.0).with_iters(20);
        let adv = attack(&net, &x, &y, &cfg).unwrap();
        assert_eq!(adv.adversarial.data(), x.data(), "{kind}");
        let ra = robust_accuracy(&net, &x, &y, &cfg).unwrap();
        assert_eq!(ra, clean_accuracy(&net, &x, &y).unwrap(), "{kind}");
    }
}

#[test]
fn fgsm_on_linear_binary_model_follows_weight_signs() {
    // Two logits: the loss gradient for label y points along w_other − w_y.
    let w = Tensor::from_vec(&[2, 4], vec![0.5, -1.0, 2.0, 0.0, -0.3, 0.7, 1.0, 0.2]).unwrap();
    let net = Mlp::from_layers([1, 2, 2], vec![(w.clone(), None)], false).unwrap();
    let x = Tensor::full(&[2, 1, 2, 2], 0.5);
    let eps = 0.01;
    let adv = fgsm(&net, &x, &[0, 1], eps).unwrap();
    for (s, y) in [(0usize, 0usize), (1, 1)] {
        for j in 0..4 {
            let diff = w.data()[(1 - y) * 4 + j] - w.data()[y * 4 + j];
            let want = 0.5 + eps * diff.signum();
            assert_eq!(adv.adversarial.data()[s * 4 + j], want);
        }
    }
}

#[test]
fn one_step_pgd_equals_fgsm() {
    let net = tiny_net();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = uniform(&[6, 1, 4, 4], &mut rng);
    let y = vec![0, 1, 2, 2, 1, 0];
    let cfg = AttackConfig::new(AttackKind::Pgd, EPS).with_iters(1).with_alpha(0.05);
    let p = pgd(&net, &x, &y, &cfg).unwrap();
    let f = fgsm(&net, &x, &y, EPS).unwrap();
    assert_eq!(p.adversarial.data(), f.adversarial.data());
}

#[test]
fn pgd_iterates_stay_in_the_ball() {
    let net = tiny_net();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = uniform(&[4, 1, 4, 4], &mut rng);
    let x0 = x.data().to_vec();
    let cfg = AttackConfig::new(AttackKind::Pgd, EPS).with_alpha(0.004);
    let mut steps = 0;
    pgd_observed(&net, &x, &[0, 1, 2, 0], &cfg, |_, it| {
        steps += 1;
        for (a, b) in it.iter().zip(&x0) {
            assert!((a - b).abs() <= EPS + BALL_TOL && (0.0..=1.0).contains(a));
        }
        Ok(())
    })
    .unwrap();
    assert_eq!(steps, 40);
}

#[test]
fn pgd_beats_fgsm() {
    let net = tiny_net();
    let mut wins = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let x = uniform(&[1, 1, 4, 4], &mut rng);
        let y = vec![rng.random_range(0..3)];
        let p = pgd(&net, &x, &y, &AttackConfig::new(AttackKind::Pgd, EPS)).unwrap();
        let f = fgsm(&net, &x, &y, EPS).unwrap();
        wins += (p.loss[0] >= f.loss[0]) as usize;
    }
    println!("pgd loss >= fgsm loss on {wins}/100");
    assert!(wins >= 90, "{wins}");
}

#[test]
fn apgd_beats_pgd() {
    let net = tiny_net();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let x = uniform(&[200, 1, 4, 4], &mut rng);
    let y: Vec<usize> = (0..200).map(|_| rng.random_range(0..3)).collect();
    let a = apgd(&net, &x, &y, &AttackConfig::new(AttackKind::Apgd, EPS).with_iters(40)).unwrap();
    let p = pgd(&net, &x, &y, &AttackConfig::new(AttackKind::Pgd, EPS)).unwrap();
    let wins = a.loss.iter().zip(&p.loss).filter(|(a, p)| a >= p).count();
    println!("apgd loss >= pgd loss on {wins}/200");
    assert!(wins >= 120, "{wins}");
}

#[test]
fn square_stops_on_misclassified_samples() {
    let net = tiny_net();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = uniform(&[8, 1, 4, 4], &mut rng);
    let clean = clean_accuracy(&net, &x, &[0; 8]).unwrap();
    assert!(clean < 1.0);
    let adv = square(&net, &x, &[0; 8], &AttackConfig::new(AttackKind::Square, EPS).with_iters(200))
        .unwrap();
    let (z, _) = {
        let mut tape = zcp_core::Tape::<f64>::new();
        let v = tape.constant(x.clone());
        let out = zcp_core::Classifier::logits(&net, &mut tape, v).unwrap();
        (tape.value(out).data().to_vec(), 3)
    };
    for s in 0..8 {
        let row = &z[s * 3..s * 3 + 3];
        if row[1].max(row[2]) > row[0] {
            assert_eq!(adv.queries[s], 1);
            assert!(adv.success[s]);
            assert_eq!(&adv.adversarial.data()[s * 16..s * 16 + 16], &x.data()[s * 16..s * 16 + 16]);
        }
    }
}

#[test]
fn square_margin_is_monotone_and_gradient_free() {
    let net = Network::from_index(3000, desk_macro(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reference = uniform(&[8, 3, 4, 4], &mut rng);
    let frozen = Frozen::new(&net, &reference).unwrap();
    let x = uniform(&[6, 3, 4, 4], &mut rng);
    let y = vec![0, 1, 2, 0, 1, 2];
    let cfg = AttackConfig::new(AttackKind::Square, EPS).with_iters(300);
    let adv = square(&frozen, &x, &y, &cfg).unwrap();
    assert_eq!(adv.backward_calls, 0);
    for t in &adv.margin_trace {
        assert!(t.windows(2).all(|w| w[1] < w[0]));
    }
    assert!(adv.queries.iter().all(|&q| (1..=300 + 1).contains(&q)));
    let p = pgd(&frozen, &x, &y, &AttackConfig::new(AttackKind::Pgd, EPS)).unwrap();
    assert!(p.backward_calls > 0);
}

/// Minimum margin over the corners of the clipped ε-box, by enumeration.
fn corner_optimum(w: &[f64], b: &[f64], x: &[f64], y: usize, eps: f64) -> bool {
    let d = x.len();
    (0..1usize << d).any(|mask| {
        let pt: Vec<f64> = (0..d)
            .map(|j| {
                let s = if mask >> j & 1 == 1 { eps } else { -eps };
                (x[j] + s).clamp(0.0, 1.0)
            })
            .collect();
        let z: Vec<f64> = (0..3)
            .map(|k| b[k] + (0..d).map(|j| w[k * d + j] * pt[j]).sum::<f64>())
            .collect();
        (0..3).any(|k| k != y && z[k] > z[y])
    })
}

#[test]
fn square_matches_corner_search_on_linear_models() {
    let eps = 0.3;
    let (mut sq, mut brute) = (0, 0);
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = gaussian(&[3, 4], &mut rng);
        let b = gaussian(&[3], &mut rng);
        let net = Mlp::from_layers([1, 2, 2], vec![(w.clone(), Some(b.clone()))], false).unwrap();
        let x = uniform(&[1, 1, 2, 2], &mut rng);
        let y = rng.random_range(0..3);
        let adv = square(&net, &x, &[y], &AttackConfig::new(AttackKind::Square, eps).with_iters(500).with_seed(seed))
            .unwrap();
        sq += adv.success[0] as usize;
        brute += corner_optimum(w.data(), b.data(), x.data(), y, eps) as usize;
    }
    println!("square success {sq}/100, corner optimum {brute}/100");
    assert!(sq <= brute);
    assert!(brute - sq <= 5, "{sq} vs {brute}");
}

#[test]
fn attacks_are_deterministic() {
    let net = tiny_net();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = uniform(&[4, 1, 4, 4], &mut rng);
    let y = vec![2, 1, 0, 1];
    for kind in AttackKind::ALL {
        let cfg = AttackConfig::new(kind, EPS).with_iters(30).with_seed(9);
        let a = attack(&net, &x, &y, &cfg).unwrap();
        let b = attack(&net, &x, &y, &cfg).unwrap();
        assert_eq!(a.adversarial.data(), b.adversarial.data(), "{kind}");
    }
}

#[test]
fn constant_network_keeps_base_rate() {
    let net = Network::new(ArchEncoding::uniform(OpId::Zero), desk_macro(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let reference = uniform(&[4, 3, 4, 4], &mut rng);
    let frozen = Frozen::new(&net, &reference).unwrap();
    let x = uniform(&[9, 3, 4, 4], &mut rng);
    let y = vec![0, 1, 2, 0, 1, 2, 0, 0, 1];
    let base = clean_accuracy(&frozen, &x, &y).unwrap();
    assert!([0.0, 2.0 / 9.0, 3.0 / 9.0, 4.0 / 9.0].contains(&base), "{base}");
    for kind in AttackKind::ALL {
        let cfg = AttackConfig::new(kind, EPS).with_iters(20);
        assert_eq!(robust_accuracy(&frozen, &x, &y, &cfg).unwrap(), base, "{kind}");
    }
}

#[test]
fn empty_dataset_is_an_error() {
    let net = tiny_net();
    let x = Tensor::zeros(&[1, 1, 4, 4]);
    let cfg = AttackConfig::new(AttackKind::Fgsm, EPS);
    assert_eq!(robust_accuracy(&net, &x, &[], &cfg).unwrap_err(), AttackError::Empty);
}

#[test]
fn forty_pgd_steps_no_more_accurate_than_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let reference = uniform(&[8, 3, 4, 4], &mut rng);
    let x = uniform(&[16, 3, 4, 4], &mut rng);
    let y: Vec<usize> = (0..16).map(|i| i % 3).collect();
    let mut ok = 0;
    let nets = 20;
    for i in 0..nets {
        let arch = rng.random_range(0..15_625);
        let net = Network::from_index(arch, desk_macro(), i).unwrap();
        let frozen = Frozen::new(&net, &reference).unwrap();
        let one = AttackConfig::new(AttackKind::Pgd, EPS).with_iters(1);
        let forty = AttackConfig::new(AttackKind::Pgd, EPS);
        let a1 = robust_accuracy(&frozen, &x, &y, &one).unwrap();
        let a40 = robust_accuracy(&frozen, &x, &y, &forty).unwrap();
        ok += (a40 <= a1) as usize;
    }
    println!("pgd-40 <= pgd-1 robust accuracy on {ok}/{nets} nets");
    assert!(ok * 10 >= nets as usize * 9, "{ok}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_attack_respects_ball_and_range(
        seed in 0u64..10_000,
        eps in 0.0f64..0.2,
        kind in prop::sample::select(AttackKind::ALL.to_vec()),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new([1, 3, 3], &[9, 6, 3], true, true, seed).unwrap();
        let x = uniform(&[3, 1, 3, 3], &mut rng);
        let y: Vec<usize> = (0..3).map(|_| rng.random_range(0..3)).collect();
        let cfg = AttackConfig::new(kind, eps).with_iters(15).with_seed(seed);
        let adv = attack(&net, &x, &y, &cfg).unwrap();
        prop_assert!(linf(&adv.adversarial, &x) <= eps + BALL_TOL);
        prop_assert!(adv.adversarial.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
