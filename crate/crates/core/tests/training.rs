mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roleplay::envs::{EnvConfig, MatrixConfig};
use roleplay::evaluation::pretrain_config;
use roleplay::policy::ActMode;
use roleplay::predictor::{fit_predictor, dataset_accuracy, PredictorDataset};
use roleplay::roles::RoleSpace;
use roleplay::training::*;

fn targets_for(buffers: &[&TrialBuffer]) -> Vec<Targets> {
    batch_targets(buffers, 0.99, 0.95, 1.0).unwrap()
}

#[test]
fn first_minibatch_ratio_is_one() {
    let env = common::matrix_env();
    let space = RoleSpace::svo8();
    let net = common::net_for(&env, &space, 3);
    let bufs = common::selfplay(&net, &env, &space, 6, 3, 5);
    let refs: Vec<&TrialBuffer> = bufs.iter().collect();
    let tg = targets_for(&refs);
    let mut learner = Learner::new(net, ChaCha8Rng::seed_from_u64(0));
    let stats = ppo_update(&mut learner, &refs, &tg, &PpoConfig::default()).unwrap();
    assert!(stats.first_ratio_deviation < 1e-9, "{}", stats.first_ratio_deviation);
}

#[test]
fn replay_reproduces_rollout_log_probs() {
    let env = common::matrix_env();
    let space = RoleSpace::svo8();
    let net = common::net_for(&env, &space, 4);
    let bufs = common::selfplay(&net, &env, &space, 4, 3, 9);
    let refs: Vec<&TrialBuffer> = bufs.iter().collect();
    let evals = evaluate_batch(&net, &refs).unwrap();
    for (b, e) in bufs.iter().zip(&evals) {
        for t in 0..b.len() {
            assert!((b.logp[t] - e.logp[t]).abs() < 1e-9);
            assert!((b.values[t] - e.values[t]).abs() < 1e-9);
        }
    }
}

#[test]
fn batch_rows_do_not_interact() {
    let env = common::matrix_env();
    let space = RoleSpace::svo8();
    let net = common::net_for(&env, &space, 5);
    let bufs = common::selfplay(&net, &env, &space, 5, 2, 1);
    let all: Vec<&TrialBuffer> = bufs.iter().collect();
    let together = evaluate_batch(&net, &all).unwrap();
    for (i, b) in bufs.iter().enumerate() {
        let alone = evaluate_batch(&net, &[b]).unwrap();
        assert_eq!(alone[0].logp, together[i].logp);
        assert_eq!(alone[0].hidden, together[i].hidden);
    }
}

#[test]
fn recurrence_is_causal() {
    let env = common::matrix_env();
    let space = RoleSpace::svo8();
    let net = common::net_for(&env, &space, 6);
    let bufs = common::selfplay(&net, &env, &space, 1, 2, 2);
    let mut edited = bufs[0].clone();
    let t = 6;
    let w = edited.input_len;
    for x in &mut edited.inputs[t * w..(t + 1) * w] {
        *x += 0.5;
    }
    let a = evaluate_batch(&net, &[&bufs[0]]).unwrap().remove(0);
    let b = evaluate_batch(&net, &[&edited]).unwrap().remove(0);
    assert_eq!(a.logp[..t], b.logp[..t]);
    assert_eq!(a.hidden[..t], b.hidden[..t]);
    assert_ne!(a.hidden[t], b.hidden[t]);
}

#[test]
fn predictor_loss_leaves_policy_parameters_alone() {
    let env = common::matrix_env();
    let space = RoleSpace::svo8();
    let net = common::net_for(&env, &space, 7);
    let bufs = common::selfplay(&net, &env, &space, 4, 2, 3);
    let refs: Vec<&TrialBuffer> = bufs.iter().collect();
    let tg = targets_for(&refs);
    let run = |train_predictor: bool| {
        let mut l = Learner::new(net.clone(), ChaCha8Rng::seed_from_u64(1));
        let cfg = PpoConfig {
            train_predictor,
            epochs: 1,
            ..PpoConfig::default()
        };
        ppo_update(&mut l, &refs, &tg, &cfg).unwrap();
        l.net
    };
    let with = run(true);
    let without = run(false);
    for &id in with.policy_ids() {
        assert_eq!(with.store.get(id), without.store.get(id));
    }
    assert!(with.predictor_ids().iter().any(|&id| with.store.get(id) != without.store.get(id)));
}

fn bandit_config(seed: u64) -> TrainConfig {
    // arm 0 pays 1, arm 1 pays 0.5, whatever the other agent does
    let env = EnvConfig {
        name: "matrix".into(),
        matrix: MatrixConfig {
            preset: "custom".into(),
            horizon: 1,
            actions: vec![2, 2],
            payoffs: vec![vec![1.0, 1.0, 0.5, 0.5], vec![1.0, 0.5, 1.0, 0.5]],
            observe_actions: true,
        },
        ..EnvConfig::default()
    };
    let mut cfg = pretrain_config(&env, RewardVariant::Selfish, &TrainConfig::default()).unwrap();
    cfg.seed = seed;
    cfg.iterations = 200;
    cfg.lr = 1e-3;
    cfg
}

#[test]
fn two_armed_bandit_is_learned() {
    for seed in 0..3 {
        let cfg = bandit_config(seed);
        let out = train(&cfg, None).unwrap();
        let last = out.metrics.last().unwrap();
        // raw reward is 1 on the good arm and 0.5 on the other
        let p_good = (last.mean_raw_reward - 0.5) / 0.5;
        assert!(p_good > 0.9, "seed {seed}: p(good arm) = {p_good}");
    }
}

#[test]
fn predictor_separates_a_scripted_partner() {
    use roleplay::evaluation::ScriptedPartner;
    let env = common::matrix_env();
    let space = RoleSpace::svo8();
    let net = common::net_for(&env, &space, 8);
    // the partner's class is the signature it always plays
    let partners = [
        ScriptedPartner::AlwaysShare,
        ScriptedPartner::AlwaysSpite,
        ScriptedPartner::AlwaysTake,
        ScriptedPartner::AlwaysGive,
    ];
    let collect = |seed: u64, n: usize| {
        let plans: Vec<TrialPlan<'_>> = (0..n)
            .map(|t| TrialPlan {
                seats: vec![
                    Controller::Net(NetSeat {
                        net: &net,
                        role: space.roles()[t % 8].clone(),
                        mode: ActMode::Sample,
                        predict: true,
                        shaper: roleplay::roles::Shaper::Svo { w: 0.3 },
                        remap: Vec::new(),
                    }),
                    Controller::Scripted(partners[t % 4]),
                ],
                true_roles: vec![Some(t % 8), Some(t % 4)],
                rng: trial_rng(seed, t as u64),
            })
            .collect();
        let recs = run_trials(&env, plans, RolloutOptions { episodes: 2, reset_hidden_each_episode: false }).unwrap();
        let bufs: Vec<TrialBuffer> = recs.into_iter().map(|r| r.buffers.into_iter().next().unwrap().unwrap()).collect();
        let refs: Vec<&TrialBuffer> = bufs.iter().collect();
        let full = PredictorDataset::from_buffers(&net, &refs).unwrap();
        // drop the first step of each trial: nothing has been observed yet
        let steps = bufs[0].len();
        let keep: Vec<usize> = (0..full.len()).filter(|i| i % steps != 0).collect();
        let pick = |t: &roleplay::numgrad::Tensor2D| {
            roleplay::numgrad::Tensor2D::from_rows(&keep.iter().map(|&i| t.row(i).to_vec()).collect::<Vec<_>>()).unwrap()
        };
        PredictorDataset {
            hidden: pick(&full.hidden),
            roles: pick(&full.roles),
            labels: full.labels.iter().map(|l| keep.iter().map(|&i| l[i]).collect()).collect(),
        }
    };
    let train_set = collect(1, 32);
    let held_out = collect(2, 16);
    let mut learner = Learner::new(net.clone(), ChaCha8Rng::seed_from_u64(0));
    let losses = fit_predictor(&mut learner, &train_set, 300, 1e-2).unwrap();
    assert!(losses.last().unwrap() < &losses[0]);
    let acc = dataset_accuracy(&learner.net, &held_out).unwrap();
    assert!(acc > 0.95, "held-out accuracy {acc}");
}

#[test]
fn predictor_loss_falls_monotonically_on_a_fixed_set() {
    let env = common::matrix_env();
    let space = RoleSpace::svo8();
    let net = common::net_for(&env, &space, 9);
    let bufs = common::selfplay(&net, &env, &space, 16, 2, 4);
    let refs: Vec<&TrialBuffer> = bufs.iter().collect();
    let data = PredictorDataset::from_buffers(&net, &refs).unwrap();
    let mut learner = Learner::new(net, ChaCha8Rng::seed_from_u64(0));
    let losses = fit_predictor(&mut learner, &data, 100, 1e-3).unwrap();
    for w in losses.windows(2) {
        // plateaus may wobble in the last digits
        assert!(w[1] <= w[0] + 1e-6 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
    }
    assert!(losses[99] < losses[0] - 0.05);
}

#[test]
fn prosocial_shaped_reward_is_the_team_total() {
    let cfg = pretrain_config(&EnvConfig::named("matrix"), RewardVariant::Prosocial, &TrainConfig::default()).unwrap();
    let env = cfg.env.build().unwrap();
    let space = cfg.role_space().unwrap();
    let learner = new_learner(&cfg, &env, &space).unwrap();
    let seat = |_: usize| {
        Controller::Net(NetSeat {
            net: &learner.net,
            role: space.roles()[0].clone(),
            mode: ActMode::Sample,
            predict: false,
            shaper: cfg.shaper(&space),
            remap: Vec::new(),
        })
    };
    let plan = TrialPlan {
        seats: vec![seat(0), seat(1)],
        true_roles: vec![Some(0), Some(0)],
        rng: trial_rng(3, 0),
    };
    let rec = run_trial(&env, plan, RolloutOptions { episodes: 1, reset_hidden_each_episode: false }).unwrap();
    let m = 2.0;
    let bufs: Vec<&TrialBuffer> = rec.buffers.iter().flatten().collect();
    for t in 0..bufs[0].len() {
        let shaped: f64 = bufs.iter().map(|b| b.shaped[t]).sum();
        let raw: f64 = bufs[0].rewards_at(t).iter().sum();
        assert!((shaped - m * raw).abs() < 1e-12);
    }
}
