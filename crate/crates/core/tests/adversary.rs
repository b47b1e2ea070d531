use lfgp_core::adversary::{airl_reward, DiscriminatorBank, GradientPenalty, PenaltyTarget};
use lfgp_core::buffers::Batch;
use lfgp_core::ndgrad::{Graph, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut impl Rng, rows: usize, obs: usize, act: usize, shift: f64) -> Batch {
    let mut m = |c: usize| {
        Matrix::from_vec(
            rows,
            c,
            (0..rows * c)
                .map(|_| rng.gen_range(-1.0..1.0) + shift)
                .collect(),
        )
    };
    Batch {
        s: m(obs),
        a: m(act),
        s_next: m(obs),
        terminal: vec![false; rows],
        from_expert: vec![false; rows],
    }
}

fn loss_at(
    bank: &DiscriminatorBank,
    p: &Batch,
    e: &[Batch],
    gp: GradientPenalty,
    seed: u64,
) -> f64 {
    let mut g = Graph::new();
    let b = bank.spec.bind(&mut g, &bank.params).unwrap();
    let (_, stats) = bank
        .loss(&mut g, &b, p, e, gp, &mut ChaCha8Rng::seed_from_u64(seed))
        .unwrap();
    stats.loss
}

#[test]
fn joint_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for target in [PenaltyTarget::Probability, PenaltyTarget::Logit] {
        let mut bank = DiscriminatorBank::new(3, 2, &[6, 5], 3, &mut rng).unwrap();
        let p = random_batch(&mut rng, 4, 3, 2, 0.0);
        let e: Vec<Batch> = (0..3)
            .map(|k| random_batch(&mut rng, 4, 3, 2, 0.3 * k as f64))
            .collect();
        let gp = GradientPenalty {
            lambda: 10.0,
            target,
        };
        bank.compute_gradients(&p, &e, gp, &mut ChaCha8Rng::seed_from_u64(99))
            .unwrap();
        let analytic = bank.params.grads.clone();
        let h = 1e-5;
        for i in 0..bank.params.len() {
            let orig = bank.params.values[i];
            bank.params.values[i] = orig + h;
            let lp = loss_at(&bank, &p, &e, gp, 99);
            bank.params.values[i] = orig - h;
            let lm = loss_at(&bank, &p, &e, gp, 99);
            bank.params.values[i] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let rel =
                (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
            assert!(
                rel <= 1e-4,
                "{target:?} param {i}: {} vs {numeric}",
                analytic[i]
            );
        }
    }
}

#[test]
fn swapping_batches_reverses_the_update_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bank = DiscriminatorBank::new(2, 1, &[8, 8], 1, &mut rng).unwrap();
    // zero output layer: every logit starts at exactly 0
    let n = bank.params.len();
    bank.params.values[n - 9..]
        .iter_mut()
        .for_each(|v| *v = 0.0);
    let policy = random_batch(&mut rng, 16, 2, 1, -0.5);
    let expert = random_batch(&mut rng, 16, 2, 1, 0.5);
    let gp = GradientPenalty {
        lambda: 0.0,
        ..Default::default()
    };
    let mut a = bank.clone();
    a.compute_gradients(&policy, std::slice::from_ref(&expert), gp, &mut rng)
        .unwrap();
    let mut b = bank.clone();
    b.compute_gradients(&expert, std::slice::from_ref(&policy), gp, &mut rng)
        .unwrap();
    for (x, y) in a.params.grads.iter().zip(&b.params.grads) {
        assert!((x + y).abs() < 1e-12);
    }
    // one small gradient step moves probe logits in opposite directions
    let probe = random_batch(&mut rng, 8, 2, 1, 0.0);
    let step = |bank: &mut DiscriminatorBank| {
        for (v, g) in bank.params.values.iter_mut().zip(&bank.params.grads) {
            *v -= 1e-3 * g;
        }
        bank.logits(&probe.s, &probe.a).unwrap()
    };
    let za = step(&mut a);
    let zb = step(&mut b);
    for (x, y) in za.data().iter().zip(zb.data()) {
        assert!(x * y <= 0.0);
    }
}

#[test]
fn expert_probability_rises_with_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut bank = DiscriminatorBank::new(2, 1, &[16, 16], 1, &mut rng).unwrap();
    let adam = lfgp_core::ndgrad::AdamConfig::new(3e-3, 0.0);
    let mut last = Default::default();
    for _ in 0..300 {
        let p = random_batch(&mut rng, 32, 2, 1, -0.5);
        let e = random_batch(&mut rng, 32, 2, 1, 0.5);
        last = bank
            .update(&p, &[e], GradientPenalty::default(), &adam, 10.0, &mut rng)
            .unwrap();
    }
    let stats: lfgp_core::adversary::DiscriminatorStats = last;
    assert!(stats.expert_d > 0.6 && stats.policy_d < 0.4, "{stats:?}");
}

proptest! {
    #[test]
    fn airl_reward_equals_logit_and_is_monotone(z in -20.0f64..20.0, dz in 1e-6f64..5.0) {
        prop_assert_eq!(airl_reward(z), z);
        prop_assert!(airl_reward((z + dz).min(20.0)) >= airl_reward(z));
    }
}
