use lfgp_core::buffers::{
    sample_discriminator_batch, sample_policy_batch, ExpertBuffer, ExpertMix, ReplayBuffer,
    Transition,
};
use lfgp_core::envs::TaskId;
use lfgp_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn tr(tag: f64) -> Transition {
    Transition {
        s: vec![tag, 0.0],
        a: vec![tag],
        s_next: vec![tag, 1.0],
        terminal: false,
    }
}

fn replay(n: usize) -> ReplayBuffer {
    let mut r = ReplayBuffer::new(n);
    for i in 0..n {
        r.push(tr(i as f64));
    }
    r
}

fn expert(task: TaskId, regular: usize, finals: usize) -> ExpertBuffer {
    let mut e = ExpertBuffer::new(task, 2, 1);
    e.push_trajectory((0..regular).map(|i| tr(1000.0 + i as f64)).collect())
        .unwrap();
    e.augment_final_pairs(finals, &[vec![-1.0, -1.0]]).unwrap();
    e
}

fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let expect = total as f64 / counts.len() as f64;
    let stat = counts
        .iter()
        .map(|&c| (c as f64 - expect).powi(2) / expect)
        .sum();
    let critical = ChiSquared::new((counts.len() - 1) as f64)
        .unwrap()
        .inverse_cdf(0.999);
    (stat, critical)
}

#[test]
fn expert_share_matches_binomial() {
    let r = replay(500);
    let experts = vec![expert(TaskId::Reach, 100, 0), expert(TaskId::Lift, 100, 0)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batches = 10_000;
    let mut total = 0usize;
    for _ in 0..batches {
        let mut mix = ExpertMix::new(0.1, 1.0);
        let b = sample_policy_batch(&r, &experts, 256, &mut mix, &mut rng).unwrap();
        total += b.from_expert.iter().filter(|&&e| e).count();
    }
    let mean = total as f64 / batches as f64;
    // standard error of the mean of Binomial(256, 0.1) over 10k batches
    let se = (256.0 * 0.1 * 0.9 / batches as f64).sqrt();
    assert!((mean - 25.6).abs() <= 3.0 * se, "mean {mean}");
}

#[test]
fn zero_proportion_uses_replay_only() {
    let r = replay(10);
    let experts = vec![expert(TaskId::Reach, 10, 0)];
    let mut mix = ExpertMix::off();
    let b = sample_policy_batch(
        &r,
        &experts,
        512,
        &mut mix,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    assert!(b.from_expert.iter().all(|&e| !e));
}

#[test]
fn decay_follows_the_geometric_formula() {
    let r = replay(4);
    let mut mix = ExpertMix::new(0.1, 0.99999);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        sample_policy_batch(&r, &[], 1, &mut mix, &mut rng).unwrap();
    }
    let closed = 0.1 * 0.99999f64.powi(1000);
    assert!((mix.proportion - closed).abs() < 1e-15);
}

#[test]
fn empty_replay_is_a_warmup_error() {
    let r = ReplayBuffer::new(8);
    let mut mix = ExpertMix::new(0.1, 1.0);
    let err = sample_policy_batch(&r, &[], 4, &mut mix, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(matches!(err, Err(Error::Warmup(_))));
}

#[test]
fn final_pair_bias_fraction() {
    let e = expert(TaskId::Stack, 1000, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = sample_discriminator_batch(&e, 10_000, 0.95, &mut rng).unwrap();
    let finals = b.terminal.iter().filter(|&&t| t).count() as f64 / 10_000.0;
    assert!((0.94..=0.96).contains(&finals), "{finals}");

    let only = sample_discriminator_batch(&e, 1000, 1.0, &mut rng).unwrap();
    assert!(only.a.data().iter().all(|&a| a == 0.0));

    let none = expert(TaskId::Stack, 50, 0);
    assert!(matches!(
        sample_discriminator_batch(&none, 4, 0.95, &mut rng),
        Err(Error::Config(_))
    ));
}

#[test]
fn strata_are_sampled_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // replay stratum
    let r = replay(50);
    let mut counts = vec![0u64; 50];
    let mut mix = ExpertMix::off();
    for _ in 0..100 {
        let b = sample_policy_batch(&r, &[], 1000, &mut mix, &mut rng).unwrap();
        for row in 0..b.len() {
            counts[b.s.get(row, 0) as usize] += 1;
        }
    }
    let (stat, crit) = chi_square_uniform(&counts);
    assert!(stat < crit, "replay chi2 {stat} >= {crit}");

    // regular and final strata of an expert buffer
    let mut e = ExpertBuffer::new(TaskId::Reach, 2, 1);
    e.push_trajectory((0..40).map(|i| tr(i as f64)).collect())
        .unwrap();
    let finals: Vec<Vec<f64>> = (0..20).map(|i| vec![100.0 + i as f64, 0.0]).collect();
    e.augment_final_pairs(20, &finals).unwrap();
    let b = sample_discriminator_batch(&e, 200_000, 0.5, &mut rng).unwrap();
    let mut reg = vec![0u64; 40];
    let mut fin = vec![0u64; 20];
    for row in 0..b.len() {
        let tag = b.s.get(row, 0);
        if tag >= 100.0 {
            fin[(tag - 100.0) as usize] += 1;
        } else {
            reg[tag as usize] += 1;
        }
    }
    for counts in [reg, fin] {
        let (stat, crit) = chi_square_uniform(&counts);
        assert!(stat < crit, "expert chi2 {stat} >= {crit}");
    }
}

proptest! {
    #[test]
    fn fifo_drops_exactly_the_oldest(capacity in 1usize..64, extra in 0usize..64) {
        let mut r = ReplayBuffer::new(capacity);
        for i in 0..capacity + extra {
            r.push(tr(i as f64));
        }
        let kept: Vec<usize> = r.iter().map(|t| t.s[0] as usize).collect();
        let expect: Vec<usize> = (extra..capacity + extra).collect();
        prop_assert_eq!(kept, expect);
    }

    #[test]
    fn subsample_count_matches_ceiling(lens in prop::collection::vec(1usize..120, 1..5), stride in 1usize..30) {
        let mut e = ExpertBuffer::new(TaskId::Reach, 2, 1);
        for (k, &len) in lens.iter().enumerate() {
            e.push_trajectory((0..len).map(|i| tr((k * 1000 + i) as f64)).collect()).unwrap();
        }
        e.augment_final_pairs(7, &[vec![0.0, 0.0]]).unwrap();
        let sub = e.subsample(stride).unwrap();
        let expect: usize = lens.iter().map(|l| l.div_ceil(stride)).sum();
        prop_assert_eq!(sub.regular_len(), expect);
        prop_assert_eq!(sub.final_pair_indices().len(), 7);
    }
}

#[test]
fn hundred_step_trajectory_stride_twenty() {
    let mut e = ExpertBuffer::new(TaskId::Reach, 2, 1);
    e.push_trajectory((0..100).map(|i| tr(i as f64)).collect())
        .unwrap();
    assert_eq!(e.subsample(20).unwrap().len(), 5);
}
