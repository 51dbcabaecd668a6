//! End-to-end acceptance checks, one PASS/FAIL line per criterion on
//! stdout. `MATE_ACCEPTANCE=1,4` restricts the run to the listed criteria.
//!
//! Criteria 5 and 6 train for millions of env steps; expect the full suite
//! to take the better part of an hour on one core.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::Rng;

use mate_core::autodiff::{Adam, AdamConfig, Dense, Graph, GruCell, ParamId, ParamStore, Tensor, Var};
use mate_core::envs::bpush::{BpushState, BpushWorld};
use mate_core::envs::lbf::{LbfWorld, PICK};
use mate_core::envs::mpe::MpeWorld;
use mate_core::envs::{Cell, Direction, GridLayout, LayoutRegistry, World};
use mate_core::harness::{self, RunOptions};
use mate_core::maa2c::{A2cConfig, Learner};
use mate_core::mate::{kl_std_normal, EmbeddingSource, MateBatchStep, MateConfig, MateNets, TaskEmbedding};
use mate_core::rng::{self, StreamRng};
use mate_core::{EnvKind, Paradigm, RunConfig, TaskSet, TaskSpec};

type Outcome = (bool, String);

fn random_tensor(r: &mut StreamRng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect())
}

/// Worst relative error between reverse-mode and central-difference
/// gradients over every scalar of `ids`.
fn fd_worst(store: &mut ParamStore, ids: &[ParamId], loss: &dyn Fn(&mut Graph<'_>) -> Var) -> f64 {
    let analytic = {
        let mut g = Graph::new(store);
        let root = loss(&mut g);
        g.backward(root).unwrap()
    };
    let eval = |s: &ParamStore| {
        let mut g = Graph::new(s);
        let root = loss(&mut g);
        g.value(root).item()
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for &id in ids {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + h;
            let up = eval(store);
            store.get_mut(id).data_mut()[i] = orig - h;
            let down = eval(store);
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let exact = analytic.get(id).map_or(0.0, |g| g.data()[i]);
            worst = worst.max((numeric - exact).abs() / numeric.abs().max(exact.abs()).max(1e-6));
        }
    }
    worst
}

fn weighted_sum(g: &mut Graph<'_>, y: Var, weights: &Tensor) -> Var {
    let k = g.constant(weights.clone()).unwrap();
    let p = g.mul(y, k).unwrap();
    g.sum(p).unwrap()
}

fn gradient_checks() -> Outcome {
    const INSTANCES: u64 = 20;
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |k: &'static str, v: f64| {
        let e = worst.entry(k).or_insert(0.0);
        *e = e.max(v);
    };
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, 100);

        let mut store = ParamStore::new();
        let (inp, out, b) = (r.random_range(1..6), r.random_range(1..6), r.random_range(1..4));
        let fc = Dense::new(&mut store, "fc", inp, out, &mut r);
        let x = random_tensor(&mut r, b, inp);
        let k = random_tensor(&mut r, b, out);
        let ids: Vec<ParamId> = store.ids().collect();
        note(
            "dense",
            fd_worst(&mut store, &ids, &|g| {
                let x = g.constant(x.clone()).unwrap();
                let y = fc.forward(g, x).unwrap();
                weighted_sum(g, y, &k)
            }),
        );

        let mut store = ParamStore::new();
        let (inp, hid) = (r.random_range(1..5), r.random_range(1..5));
        let cell = GruCell::new(&mut store, "gru", inp, hid, &mut r);
        let xs: Vec<Tensor> = (0..3).map(|_| random_tensor(&mut r, 2, inp)).collect();
        let h0 = random_tensor(&mut r, 2, hid);
        let k = random_tensor(&mut r, 2, hid);
        let ids: Vec<ParamId> = store.ids().collect();
        note(
            "gru",
            fd_worst(&mut store, &ids, &|g| {
                let mut h = g.constant(h0.clone()).unwrap();
                for x in &xs {
                    let x = g.constant(x.clone()).unwrap();
                    h = cell.step(g, x, h).unwrap();
                }
                weighted_sum(g, h, &k)
            }),
        );

        // Policy head: logits -> log-softmax -> chosen log-probabilities
        // plus an entropy term through softmax.
        let mut store = ParamStore::new();
        let n_act = r.random_range(2..7);
        let head = Dense::new(&mut store, "head", 4, n_act, &mut r);
        let x = random_tensor(&mut r, 3, 4);
        let actions: Vec<usize> = (0..3).map(|_| r.random_range(0..n_act)).collect();
        let ids: Vec<ParamId> = store.ids().collect();
        note(
            "softmax head",
            fd_worst(&mut store, &ids, &|g| {
                let x = g.constant(x.clone()).unwrap();
                let logits = head.forward(g, x).unwrap();
                let lp = g.log_softmax(logits).unwrap();
                let p = g.softmax(logits).unwrap();
                let picked = g.pick(lp, &actions).unwrap();
                let a = g.sum(picked).unwrap();
                let plp = g.mul(p, lp).unwrap();
                let ent = g.sum(plp).unwrap();
                let ent = g.scale(ent, 0.3).unwrap();
                g.add(a, ent).unwrap()
            }),
        );

        let paradigm = [Paradigm::Ind, Paradigm::Cen, Paradigm::Mix][seed as usize % 3];
        let (n, obs, acts) = (2, 3, 3);
        let cfg = MateConfig {
            encoder_hidden: 5,
            decoder_hidden: 6,
            ..MateConfig::default()
        };
        let mut store = ParamStore::new();
        let nets = MateNets::new(&mut store, paradigm, n, obs, acts, cfg, &mut r);
        let enc_in = if paradigm == Paradigm::Cen { n * (obs + acts + 1) } else { obs + acts + 1 };
        let b = 3;
        let inputs: Vec<Vec<Tensor>> = (0..2).map(|_| (0..nets.encoders.len()).map(|_| random_tensor(&mut r, b, enc_in)).collect()).collect();
        let steps: Vec<MateBatchStep> = (0..2)
            .map(|_| MateBatchStep {
                joint_obs: random_tensor(&mut r, b, n * obs),
                joint_actions: random_tensor(&mut r, b, n * acts),
                target: random_tensor(&mut r, b, n * obs + n),
            })
            .collect();
        let ids = nets.params();
        note(
            "encoder/decoder",
            fd_worst(&mut store, &ids, &|g| {
                let mut noise = rng::stream(seed, 101);
                let mut hidden: Vec<Var> = (0..nets.encoders.len()).map(|_| g.constant(Tensor::zeros(b, 5)).unwrap()).collect();
                let mut total = None;
                for (xs, step) in inputs.iter().zip(&steps) {
                    let xs: Vec<Var> = xs.iter().map(|x| g.constant(x.clone()).unwrap()).collect();
                    let outs = nets.encode(g, &xs, &hidden).unwrap();
                    hidden = outs.iter().map(|o| o.hidden).collect();
                    let l = nets.step_loss(g, &outs, step, &mut noise).unwrap();
                    total = Some(match total {
                        None => l,
                        Some(t) => g.add(t, l).unwrap(),
                    });
                }
                total.unwrap()
            }),
        );
    }
    let pass = worst.values().all(|&w| w < 1e-4);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    (pass, format!("{INSTANCES} instances each; worst rel. err: {detail}"))
}

/// KL(N(mu, s^2) || N(0, 1)) by composite Simpson over mu +- 12 s.
fn kl_quadrature(mu: f64, s: f64) -> f64 {
    let n = 20_000;
    let (a, b) = (mu - 12.0 * s, mu + 12.0 * s);
    let h = (b - a) / n as f64;
    let f = |x: f64| {
        let z = (x - mu) / s;
        let q = (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        q * (-s.ln() - 0.5 * z * z + 0.5 * x * x)
    };
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn kl_oracle() -> Outcome {
    let mut r = rng::stream(7, 200);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mu = r.random_range(-3.0..3.0);
        let s = r.random_range(0.1..5.0);
        let closed = kl_std_normal(&TaskEmbedding::new(vec![mu], vec![s], EmbeddingSource::Agent(0)).unwrap()).unwrap();
        worst = worst.max((closed - kl_quadrature(mu, s)).abs());
    }
    let mut sum_err: f64 = 0.0;
    for _ in 0..20 {
        let mu: Vec<f64> = (0..3).map(|_| r.random_range(-3.0..3.0)).collect();
        let s: Vec<f64> = (0..3).map(|_| r.random_range(0.1..5.0)).collect();
        let joint = kl_std_normal(&TaskEmbedding::new(mu.clone(), s.clone(), EmbeddingSource::Centralised).unwrap()).unwrap();
        let parts: f64 = mu.iter().zip(&s).map(|(&m, &sd)| kl_quadrature(m, sd)).sum();
        sum_err = sum_err.max((joint - parts).abs());
    }
    (worst < 1e-6 && sum_err < 1e-6, format!("1-d max err {worst:.1e}, d=3 max err {sum_err:.1e}"))
}

/// Two one-step tasks with identical observations and actions; only the
/// reward differs. The encoder sees (o, a, r); the decoder must predict
/// the next observation and the reward.
fn mate_loss_decreases() -> Outcome {
    let (n, obs, acts, b) = (2, 4, 3, 16);
    let cfg = MateConfig::default();
    let mut r = rng::stream(11, 300);
    let mut store = ParamStore::new();
    let nets = MateNets::new(&mut store, Paradigm::Ind, n, obs, acts, cfg.clone(), &mut r);
    let o: Vec<f64> = (0..obs).map(|_| r.random_range(0.0..1.0)).collect();
    let next: Vec<f64> = (0..obs).map(|_| r.random_range(0.0..1.0)).collect();
    let actions = [1usize, 2];
    let reward = |row: usize| if row < b / 2 { 1.0 } else { -1.0 };
    let enc_inputs: Vec<Tensor> = (0..n)
        .map(|i| {
            let mut data = Vec::new();
            for row in 0..b {
                data.extend(&o);
                data.extend((0..acts).map(|k| if k == actions[i] { 1.0 } else { 0.0 }));
                data.push(reward(row));
            }
            Tensor::from_vec(b, obs + acts + 1, data)
        })
        .collect();
    let mut jo = Vec::new();
    let mut ja = Vec::new();
    let mut tg = Vec::new();
    for row in 0..b {
        for _ in 0..n {
            jo.extend(&o);
            tg.extend(&next);
        }
        for &a in &actions {
            ja.extend((0..acts).map(|k| if k == a { 1.0 } else { 0.0 }));
        }
        tg.extend([reward(row); 2]);
    }
    let step = MateBatchStep {
        joint_obs: Tensor::from_vec(b, n * obs, jo),
        joint_actions: Tensor::from_vec(b, n * acts, ja),
        target: Tensor::from_vec(b, n * obs + n, tg),
    };
    let hidden = cfg.encoder_hidden;
    let loss = |store: &ParamStore, noise: &mut StreamRng| -> (f64, Option<mate_core::autodiff::Gradients>) {
        let mut g = Graph::new(store);
        let xs: Vec<Var> = enc_inputs.iter().map(|x| g.constant(x.clone()).unwrap()).collect();
        let hs: Vec<Var> = (0..n).map(|_| g.constant(Tensor::zeros(b, hidden)).unwrap()).collect();
        let outs = nets.encode(&mut g, &xs, &hs).unwrap();
        let l = nets.step_loss(&mut g, &outs, &step, noise).unwrap();
        (g.value(l).item(), Some(g.backward(l).unwrap()))
    };
    let averaged = |store: &ParamStore| {
        let mut noise = rng::stream(12, 301);
        (0..50).map(|_| loss(store, &mut noise).0).sum::<f64>() / 50.0
    };
    let initial = averaged(&store);
    let ids = nets.params();
    let mut opt = Adam::new(AdamConfig::new(cfg.lr, cfg.adam_eps), &store, ids.clone());
    let mut noise = rng::stream(13, 302);
    for _ in 0..2000 {
        let (_, grads) = loss(&store, &mut noise);
        let mut grads = grads.unwrap();
        grads.clip_norm(&ids, cfg.max_grad_norm);
        opt.update(&mut store, &grads);
    }
    let last = averaged(&store);
    (last < 0.5 * initial, format!("loss {initial:.4} -> {last:.4} ({:.1}%)", 100.0 * last / initial))
}

fn beacon_task(goal: (usize, usize)) -> TaskSpec {
    TaskSpec::new(EnvKind::Beacon, "5x5", 2)
        .with_param("goal_row", goal.0 as f64)
        .with_param("goal_col", goal.1 as f64)
}

/// Two-cluster Lloyd iterations from a farthest-point start; returns the
/// fraction of rows whose cluster's majority label matches their own.
fn two_means_purity(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let far = (0..rows.len()).max_by(|&i, &j| d2(&rows[i], &rows[0]).total_cmp(&d2(&rows[j], &rows[0]))).unwrap();
    let mut centres = [rows[0].clone(), rows[far].clone()];
    let mut assign = vec![0usize; rows.len()];
    for _ in 0..100 {
        for (a, row) in assign.iter_mut().zip(rows) {
            *a = usize::from(d2(row, &centres[1]) < d2(row, &centres[0]));
        }
        for (k, centre) in centres.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = rows.iter().zip(&assign).filter(|(_, &a)| a == k).map(|(r, _)| r).collect();
            if !members.is_empty() {
                for (j, c) in centre.iter_mut().enumerate() {
                    *c = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
                }
            }
        }
    }
    let mut correct = 0;
    for k in 0..2 {
        let mut counts = [0usize; 2];
        for (&a, &l) in assign.iter().zip(labels) {
            if a == k {
                counts[l] += 1;
            }
        }
        correct += counts[0].max(counts[1]);
    }
    correct as f64 / rows.len() as f64
}

fn task_identification() -> Outcome {
    let layouts = LayoutRegistry::builtin();
    let tasks = TaskSet::new(vec![beacon_task((0, 0)), beacon_task((4, 4))], &layouts).unwrap();
    let mut learner = Learner::new(Paradigm::Ind, 2, tasks.obs_size(), tasks.n_actions(), A2cConfig::default(), MateConfig::default(), 21).unwrap();
    learner.attach(tasks.clone(), layouts.clone(), 21).unwrap();
    while learner.timesteps < 50_000 {
        learner.train_iteration().unwrap();
    }
    let traces = learner.trace_embeddings(tasks, layouts, 100, 9_999).unwrap();
    let mut last: BTreeMap<usize, (usize, usize, Vec<f64>)> = BTreeMap::new();
    for tr in traces {
        let mu: Vec<f64> = tr.embeddings.iter().flat_map(|e| e.mu.clone()).collect();
        let e = last.entry(tr.episode).or_insert((0, tr.task_index, Vec::new()));
        if tr.t >= e.0 {
            *e = (tr.t, tr.task_index, mu);
        }
    }
    let rows: Vec<Vec<f64>> = last.values().map(|v| v.2.clone()).collect();
    let labels: Vec<usize> = last.values().map(|v| v.1).collect();
    let purity = two_means_purity(&rows, &labels);
    let split = labels.iter().filter(|&&l| l == 0).count();
    (
        purity >= 0.9,
        format!("{} steps, purity {:.1}% over {} episodes ({split}/{} per task)", learner.timesteps, 100.0 * purity, rows.len(), rows.len() - split),
    )
}

fn lbf_sanity() -> Outcome {
    let layouts = LayoutRegistry::builtin();
    let task = TaskSpec::new(EnvKind::Lbf, "6x6", 2).with_param("n_food", 2.0);
    let tasks = TaskSet::new(vec![task], &layouts).unwrap();
    let mut passed = 0;
    let mut notes = Vec::new();
    for seed in 0..5 {
        let mut learner = Learner::new(Paradigm::None, 2, tasks.obs_size(), tasks.n_actions(), A2cConfig::default(), MateConfig::default(), seed).unwrap();
        learner.attach(tasks.clone(), layouts.clone(), seed).unwrap();
        let mut window = std::collections::VecDeque::new();
        let mut reached = None;
        while learner.timesteps < 1_000_000 {
            for e in learner.train_iteration().unwrap().episodes {
                window.push_back(e.team_return);
                if window.len() > 100 {
                    window.pop_front();
                }
            }
            if window.len() == 100 && window.iter().sum::<f64>() / 100.0 >= 0.6 {
                reached = Some(learner.timesteps);
                break;
            }
        }
        match reached {
            Some(t) => {
                passed += 1;
                notes.push(format!("seed {seed}: {t}"));
            }
            None => notes.push(format!("seed {seed}: not reached ({:.2})", window.iter().sum::<f64>() / window.len().max(1) as f64)),
        }
    }
    (passed >= 3, format!("{passed}/5 seeds reach 0.6 (mean of last 100 episodes); {}", notes.join(", ")))
}

const BPUSH_CONFIG: &str = r#"
n_train = 500000
n_test = 500000

[[train.tasks]]
env = "bpush"
layout = "small"
n_agents = 2

[[test.tasks]]
env = "bpush"
layout = "small"
n_agents = 2
params = { penalty = 0.01 }
"#;

fn adaptation_direction() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { timestamp: false };
    let mut wins = 0;
    let mut notes = Vec::new();
    for seed in 0..5u64 {
        let mut finals = Vec::new();
        let mut trained = Vec::new();
        for paradigm in [Paradigm::Mix, Paradigm::None] {
            let mut cfg = RunConfig::from_toml_str(BPUSH_CONFIG).unwrap();
            cfg.seed = seed;
            cfg.paradigm = paradigm;
            cfg.out = dir.path().join(format!("{paradigm:?}-{seed}-train"));
            let train = harness::run_train(&cfg, opts).unwrap();
            trained.push(train.final_return.unwrap_or(f64::NAN));
            cfg.out = dir.path().join(format!("{paradigm:?}-{seed}-test"));
            let test = harness::run_finetune(&cfg, &train.checkpoint, opts).unwrap();
            finals.push(test.final_return.unwrap_or(f64::NEG_INFINITY));
        }
        if finals[0] > finals[1] {
            wins += 1;
        }
        notes.push(format!(
            "seed {seed}: mix {:.4} vs none {:.4} (end of training {:.4} / {:.4})",
            finals[0], finals[1], trained[0], trained[1]
        ));
    }
    (wins >= 3, format!("mix ahead on {wins}/5 seeds; {}", notes.join(", ")))
}

fn env_conformance() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let layouts = LayoutRegistry::builtin();
    for (id, n) in [("tiny", 2), ("wide-left", 3), ("corridor-6", 6)] {
        let task = TaskSpec::new(EnvKind::Rware, id, n);
        let mut world = World::build(&task, &layouts).unwrap();
        world.reset(&mut rng::stream(1, 1));
        check(world.obs_size() == 131 && world.observe().agent(0).len() == 131, "rware observation length");
    }

    let bpush = |penalty: f64, goal: i32| {
        let task = TaskSpec::new(EnvKind::Bpush, "small", 2).with_param("penalty", penalty);
        let mut w = BpushWorld::new(&task, &GridLayout::open(8, 8)).unwrap();
        w.set_state(BpushState {
            agents: vec![Cell::new(5, 3), Cell::new(5, 4)],
            box_cells: vec![Cell::new(4, 3), Cell::new(4, 4)],
            direction: Direction::North,
            goal_line: goal,
        });
        w
    };
    let (n, e) = (Direction::North.index(), Direction::East.index());
    check(bpush(0.01, 0).step(&[n, n]).rewards == vec![0.1, 0.1], "bpush joint push +0.1");
    let out = bpush(0.01, 3).step(&[n, n]);
    check(out.terminal && out.rewards.iter().all(|&x| (x - 1.1).abs() < 1e-12), "bpush goal +1");
    check(bpush(0.01, 0).step(&[n, e]).rewards == vec![-0.01, 0.0], "bpush failed push -0.01");
    check(bpush(0.0, 0).step(&[n, e]).rewards == vec![0.0, 0.0], "bpush no penalty in plain task");
    check(bpush(0.01, 0).step(&[e, e]).rewards == vec![0.0, 0.0], "bpush no penalty when nobody pushes");

    let lbf = |penalty: f64| {
        let task = TaskSpec::new(EnvKind::Lbf, "5x5", 2).with_param("n_food", 1.0).with_param("penalty", penalty);
        let mut w = LbfWorld::new(&task, (5, 5)).unwrap();
        w.set_state(vec![(Cell::new(1, 2), 1), (Cell::new(4, 4), 1)], vec![(Cell::new(2, 2), 2)]);
        w
    };
    check(lbf(0.1).step(&[PICK, 0]).rewards == vec![-0.1, 0.0], "lbf failed pick -0.1");
    check(lbf(0.0).step(&[PICK, 0]).rewards == vec![0.0, 0.0], "lbf no penalty by default");
    check(lbf(0.1).step(&[0, 0]).rewards == vec![0.0, 0.0], "lbf no penalty without a pick");

    for pen in [1.0, 5.0, 50.0] {
        let mut w = MpeWorld::new(&TaskSpec::new(EnvKind::Mpe, "spread", 3).with_param("collision_penalty", pen)).unwrap();
        w.landmarks = vec![[0.0, 0.0], [0.1, 0.0], [0.9, 0.9]];
        w.positions = w.landmarks.clone();
        check(w.step(&[0, 0, 0]).rewards == vec![-pen; 3], "mpe collision penalty");
        w.positions = vec![[-0.9, -0.9], [0.0, 0.9], [0.9, 0.9]];
        w.landmarks = w.positions.clone();
        check(w.step(&[0, 0, 0]).rewards == vec![0.0; 3], "mpe no collision no penalty");
    }
    (failures.is_empty(), if failures.is_empty() { "all events exact".into() } else { failures.join("; ") })
}

fn metrics_checks() -> Outcome {
    let iqm = harness::iqm(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    let mut r = rng::stream(3, 400);
    let ci = harness::stratified_bootstrap_ci(&[vec![0.42, 1.0]], 10_000, 0.95, &mut r).unwrap();
    let mut worst: f64 = 0.0;
    for pass in 0..1000 {
        let mut store = ParamStore::new();
        let n = 2 + pass % 4;
        let nets = MateNets::new(&mut store, Paradigm::Mix, n, 5, 3, MateConfig::default(), &mut rng::stream(pass as u64 / 100, 401));
        let mut g = Graph::new(&store);
        let scale = 10f64.powf(r.random_range(-1.0..2.0));
        let mut obs = random_tensor(&mut r, 4, n * 5);
        obs.data_mut().iter_mut().for_each(|v| *v *= scale);
        let obs = g.constant(obs).unwrap();
        let w = nets.mix_weights(&mut g, obs).unwrap().unwrap();
        for row in 0..4 {
            let v = g.value(w).row(row);
            if v.iter().any(|&x| x < 0.0) {
                worst = f64::INFINITY;
            }
            worst = worst.max((v.iter().sum::<f64>() - 1.0).abs());
        }
    }
    let pass = iqm == 2.5 && ci == vec![(0.42, 0.42), (1.0, 1.0)] && worst <= 1e-6;
    (pass, format!("iqm {iqm}, single-seed CI {ci:?}, max |sum w - 1| {worst:.1e}"))
}

const DETERMINISM_CONFIG: &str = r#"
paradigm = "mix"
seed = 5
n_train = 1000

[a2c]
policy_hidden = 16
critic_hidden = 16

[mate]
encoder_hidden = 8
decoder_hidden = 8

[[train.tasks]]
env = "bpush"
layout = "small"
n_agents = 2
"#;

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let mut cfg = RunConfig::from_toml_str(DETERMINISM_CONFIG).unwrap();
        cfg.out = dir.path().join(format!("run{run}"));
        let s = harness::run_train(&cfg, RunOptions { timestamp: false }).unwrap();
        bytes.push(std::fs::read(s.metrics).unwrap());
    }
    let rows = bytes[0].iter().filter(|&&b| b == b'\n').count();
    (bytes[0] == bytes[1] && rows > 1, format!("{} bytes, {rows} lines, identical: {}", bytes[0].len(), bytes[0] == bytes[1]))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient correctness", gradient_checks),
        ("KL oracle", kl_oracle),
        ("MATE loss halves", mate_loss_decreases),
        ("task identification", task_identification),
        ("MARL sanity (LBF 6x6)", lbf_sanity),
        ("adaptation direction (BPUSH)", adaptation_direction),
        ("environment conformance", env_conformance),
        ("metrics", metrics_checks),
        ("determinism", determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("MATE_ACCEPTANCE").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = run();
        let verdict = if pass { "PASS" } else { "FAIL" };
        let mut out = std::io::stdout().lock();
        writeln!(out, "criterion {id} {name}: {verdict} [{:.0}s] {detail}", start.elapsed().as_secs_f64()).unwrap();
        out.flush().unwrap();
        if !pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
