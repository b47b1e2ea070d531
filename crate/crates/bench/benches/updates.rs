use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lfgp_core::adversary::{DiscriminatorBank, GradientPenalty, RewardForm};
use lfgp_core::buffers::{sample_policy_batch, Batch, ExpertMix, ReplayBuffer, Transition};
use lfgp_core::envs::{BlockWorld, EnvConfig, ACTION_DIM, OBS_DIM};
use lfgp_core::intentions::{
    pi_update, q_update, IntentionPolicy, QBank, SacConfig, TemperatureSet,
};
use lfgp_core::ndgrad::{AdamConfig, Matrix};

const TASKS: usize = 6;
const BATCH: usize = 64;
const HIDDEN: [usize; 2] = [64, 64];

fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Replay filled with uniform-action interaction.
fn replay(rng: &mut ChaCha8Rng) -> ReplayBuffer {
    let mut env = BlockWorld::new(EnvConfig::default()).unwrap();
    let mut buf = ReplayBuffer::new(4096);
    let mut obs = env.reset(rng);
    for i in 0..4096 {
        if i % 60 == 0 {
            obs = env.reset(rng);
        }
        let a: Vec<f64> = (0..ACTION_DIM).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let out = env.step(&a).unwrap();
        buf.push(Transition {
            s: obs,
            a,
            s_next: out.obs.clone(),
            terminal: false,
        });
        obs = out.obs;
    }
    buf
}

fn batch(replay: &ReplayBuffer, rng: &mut ChaCha8Rng) -> Batch {
    sample_policy_batch(replay, &[], BATCH, &mut ExpertMix::off(), rng).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = random_matrix(&mut rng, BATCH, 64);
    let b = random_matrix(&mut rng, 64, 64);
    c.bench_function("matmul 64x64x64", |bench| {
        bench.iter(|| Matrix::matmul(black_box(&a), black_box(&b), false, false))
    });
}

fn env_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut env = BlockWorld::new(EnvConfig::default()).unwrap();
    env.reset(&mut rng);
    let a = [0.3, -0.2, 0.5];
    c.bench_function("env step", |bench| {
        bench.iter(|| {
            let out = env.step(black_box(&a)).unwrap();
            if out.obs[1] > 0.14 {
                env.reset(&mut rng);
            }
        })
    });
}

fn discriminator(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let replay = replay(&mut rng);
    let mut disc = DiscriminatorBank::new(OBS_DIM, ACTION_DIM, &HIDDEN, TASKS, &mut rng).unwrap();
    let policy = batch(&replay, &mut rng);
    let experts: Vec<Batch> = (0..TASKS).map(|_| batch(&replay, &mut rng)).collect();
    let adam = AdamConfig::new(3e-4, 1e-2);
    c.bench_function("discriminator update", |bench| {
        bench.iter(|| {
            disc.update(
                &policy,
                &experts,
                GradientPenalty::default(),
                &adam,
                10.0,
                &mut rng,
            )
            .unwrap()
        })
    });
    c.bench_function("discriminator rewards", |bench| {
        bench.iter(|| {
            disc.rewards(&policy.s, &policy.a, RewardForm::Airl)
                .unwrap()
        })
    });
}

fn sac(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let replay = replay(&mut rng);
    let mut policy = IntentionPolicy::new(OBS_DIM, ACTION_DIM, &HIDDEN, TASKS, &mut rng).unwrap();
    let mut qbank = QBank::new(OBS_DIM, ACTION_DIM, &HIDDEN, TASKS, &mut rng).unwrap();
    let temps = TemperatureSet::new(TASKS, 1e-2, -(ACTION_DIM as f64));
    let cfg = SacConfig {
        gamma: 0.99,
        tau: 1e-4,
        policy_lr: 3e-4,
        q_lr: 3e-4,
        alpha_lr: 3e-4,
        policy_weight_decay: 1e-2,
        q_weight_decay: 1e-2,
        max_grad_norm: 10.0,
        initial_alpha: 1e-2,
        target_entropy: -(ACTION_DIM as f64),
    };
    let b = batch(&replay, &mut rng);
    let rewards = random_matrix(&mut rng, BATCH, TASKS);
    c.bench_function("q update", |bench| {
        bench.iter(|| q_update(&mut qbank, &policy, &temps, &rewards, &b, &cfg, &mut rng).unwrap())
    });
    c.bench_function("policy update", |bench| {
        bench.iter(|| pi_update(&mut policy, &qbank, &temps, &b.s, &cfg, &mut rng).unwrap())
    });
    let obs = b.s.row_slice(0).to_vec();
    c.bench_function("sample action", |bench| {
        bench.iter(|| {
            policy
                .sample_action(0, black_box(&obs), true, &mut rng)
                .unwrap()
        })
    });
}

criterion_group!(benches, matmul, env_step, discriminator, sac);
criterion_main!(benches);
