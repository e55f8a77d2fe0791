#![allow(dead_code)]

use roleplay::envs::{AnyEnv, EnvConfig, Environment};
use roleplay::policy::{ActMode, Architecture, PolicyNet};
use roleplay::roles::{RoleSpace, Shaper};
use roleplay::training::{run_trials, trial_rng, Controller, NetSeat, RolloutOptions, TrialBuffer, TrialPlan};

/// O(T²) advantage oracle: the discounted sum of TD residuals, cut after
/// the first terminal step.
pub fn gae_oracle(r: &[f64], v: &[f64], terminal: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let delta = |k: usize| {
        let next = if terminal[k] {
            0.0
        } else if k + 1 == n {
            bootstrap
        } else {
            v[k + 1]
        };
        r[k] + gamma * next - v[k]
    };
    (0..n)
        .map(|t| {
            let mut acc = 0.0;
            let mut w = 1.0;
            for k in t..n {
                acc += w * delta(k);
                if terminal[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            acc
        })
        .collect()
}

pub fn matrix_env() -> AnyEnv {
    EnvConfig::named("matrix").build().unwrap()
}

pub fn net_for(env: &AnyEnv, space: &RoleSpace, seed: u64) -> PolicyNet {
    let spec = env.spec();
    let arch = Architecture::mini(spec.obs_len, spec.max_actions(), space.len(), spec.num_agents - 1);
    PolicyNet::new(arch, seed)
}

/// Self-play trials of `net`, role pairs cycling through the space.
pub fn selfplay(net: &PolicyNet, env: &AnyEnv, space: &RoleSpace, trials: usize, episodes: usize, seed: u64) -> Vec<TrialBuffer> {
    let k = space.len();
    let shaper = Shaper::Svo { w: roleplay::roles::DEFAULT_W };
    let plans: Vec<TrialPlan<'_>> = (0..trials)
        .map(|t| {
            let roles = [t % k, (t / k + 1) % k];
            TrialPlan {
                seats: roles
                    .iter()
                    .map(|&r| {
                        Controller::Net(NetSeat {
                            net,
                            role: space.roles()[r].clone(),
                            mode: ActMode::Sample,
                            predict: true,
                            shaper: shaper.clone(),
                            remap: Vec::new(),
                        })
                    })
                    .collect(),
                true_roles: roles.iter().map(|&r| Some(r)).collect(),
                rng: trial_rng(seed, t as u64),
            }
        })
        .collect();
    let opts = RolloutOptions {
        episodes,
        reset_hidden_each_episode: false,
    };
    run_trials(env, plans, opts)
        .unwrap()
        .into_iter()
        .flat_map(|rec| rec.buffers.into_iter().flatten())
        .collect()
}
