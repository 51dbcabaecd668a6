use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use mate_core::autodiff::{Graph, GruCell, ParamStore, Tensor};
use mate_core::envs::LayoutRegistry;
use mate_core::maa2c::{A2cConfig, Learner};
use mate_core::mate::{MateConfig, Paradigm};
use mate_core::posg::{EnvKind, TaskSet, TaskSpec, VecEnv};
use mate_core::rng;

fn task_set(kind: EnvKind, layout: &str) -> TaskSet {
    TaskSet::new(vec![TaskSpec::new(kind, layout, 2)], &LayoutRegistry::builtin()).unwrap()
}

fn env_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("vec_env_step");
    for (kind, layout) in [(EnvKind::Lbf, "10x10"), (EnvKind::Bpush, "small"), (EnvKind::Rware, "tiny"), (EnvKind::Mpe, "spread")] {
        let (mut env, _) = VecEnv::new(task_set(kind, layout), LayoutRegistry::builtin(), 10, 0).unwrap();
        let n_actions = env.task_set().n_actions();
        let mut t = 0usize;
        group.bench_function(format!("{kind}-{layout}"), |b| {
            b.iter(|| {
                t += 1;
                let acts: Vec<Vec<usize>> = (0..10).map(|k| vec![(t + k) % n_actions, (t * 3 + k) % n_actions]).collect();
                env.step(&acts).unwrap()
            })
        });
    }
    group.finish();
}

fn gru_forward_backward(c: &mut Criterion) {
    let mut r = rng::stream(0, 1);
    let mut store = ParamStore::new();
    let cell = GruCell::new(&mut store, "gru", 128, 128, &mut r);
    c.bench_function("gru_128_batch10_t5", |b| {
        b.iter(|| {
            let mut g = Graph::new(&store);
            let x = g.constant(Tensor::filled(10, 128, 0.1)).unwrap();
            let mut h = g.constant(Tensor::zeros(10, 128)).unwrap();
            for _ in 0..5 {
                h = cell.step(&mut g, x, h).unwrap();
            }
            let l = g.sum(h).unwrap();
            g.backward(l).unwrap()
        })
    });
}

fn train_iterations(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_iteration");
    group.sample_size(20);
    for paradigm in [Paradigm::None, Paradigm::Ind, Paradigm::Mix] {
        group.bench_function(format!("bpush-small-{paradigm}"), |b| {
            b.iter_batched(
                || {
                    let set = task_set(EnvKind::Bpush, "small");
                    let mut l = Learner::new(paradigm, 2, set.obs_size(), set.n_actions(), A2cConfig::default(), MateConfig::default(), 0).unwrap();
                    l.attach(set, LayoutRegistry::builtin(), 0).unwrap();
                    l
                },
                |mut l| {
                    l.train_iteration().unwrap();
                    l
                },
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, env_steps, gru_forward_backward, train_iterations);
criterion_main!(benches);
