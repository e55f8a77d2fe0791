//! Trial-based meta-training: role sampling, shaped rollouts, GAE and PPO,
//! predictor updates, metrics and checkpoints.

mod buffer;
mod gae;
mod ppo;
mod rollout;

pub use buffer::TrialBuffer;
pub use gae::compute_gae;
pub use ppo::{evaluate_batch, ppo_update, Evaluation, Learner, PpoConfig, PpoStats, RunningStat, Targets};
pub use rollout::{run_trial, run_trials, Controller, NetSeat, RolloutOptions, TrialPlan, TrialRecord};

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{AnyEnv, EnvConfig, EnvError, Environment};
use crate::numgrad::{CellActivation, Checkpoint, NumError};
use crate::policy::{ActMode, Architecture, PolicyNet};
use crate::roles::{RoleError, RoleKind, RoleSpace, RoleSpaceConfig, Shaper, EVENT_REWARDS};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Role(#[from] RoleError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which reward each agent optimizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    /// ψ of the agent's sampled role.
    #[default]
    Role,
    Selfish,
    Prosocial,
    InequityAverse,
}

impl RewardVariant {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "role" => Some(Self::Role),
            "selfish" => Some(Self::Selfish),
            "prosocial" => Some(Self::Prosocial),
            "inequity_averse" | "inequity-averse" => Some(Self::InequityAverse),
            _ => None,
        }
    }
}

/// Training hyperparameters. `env`, `roles`, `seed` and `workers` live at
/// the top of a run config and are filled in by the caller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(skip)]
    pub env: EnvConfig,
    #[serde(skip)]
    pub roles: RoleSpaceConfig,
    #[serde(skip)]
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
    /// Episodes per trial (L).
    pub trial_length: usize,
    pub trials_per_iteration: usize,
    pub iterations: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    /// Trial streams per minibatch.
    pub minibatch: usize,
    pub lr: f64,
    pub predictor_lr: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// Own-reward weight in the SVO ψ.
    pub w: f64,
    pub reward: RewardVariant,
    pub alpha: f64,
    pub beta: f64,
    /// Replace the beam action with stay (CleanUp and Harvest only).
    pub remap_attack: bool,
    pub no_predictor: bool,
    pub no_meta: bool,
    /// Divide shaped rewards by the running std of discounted returns
    /// before computing advantages and value targets.
    pub reward_norm: bool,
    /// Truncated BPTT window in steps; 0 spans the whole trial.
    pub bptt_window: usize,
    /// Write a checkpoint every N iterations; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub preset: String,
    pub activation: CellActivation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            roles: RoleSpaceConfig {
                name: "svo8".into(),
                ..RoleSpaceConfig::default()
            },
            seed: 0,
            workers: 1,
            trial_length: 10,
            trials_per_iteration: 16,
            iterations: 100,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch: 8,
            lr: 3e-4,
            predictor_lr: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            w: crate::roles::DEFAULT_W,
            reward: RewardVariant::Role,
            alpha: 5.0,
            beta: 0.05,
            remap_attack: false,
            no_predictor: false,
            no_meta: false,
            reward_norm: true,
            bptt_window: 0,
            checkpoint_every: 0,
            preset: "mini".into(),
            activation: CellActivation::Silu,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if self.clip <= 0.0 {
            return bad("clip must be positive");
        }
        if self.trial_length == 0 {
            return bad("trial_length must be at least 1");
        }
        if self.trials_per_iteration == 0 || self.minibatch == 0 {
            return bad("trials_per_iteration and minibatch must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        Ok(())
    }

    /// Episodes per trial after ablations.
    pub fn episodes(&self) -> usize {
        if self.no_meta {
            1
        } else {
            self.trial_length
        }
    }

    /// Trials per iteration after ablations. Without meta-learning each
    /// trial is a single episode, so the count is scaled up to keep the
    /// number of environment steps per update unchanged.
    pub fn trials(&self) -> usize {
        if self.no_meta {
            self.trials_per_iteration * self.trial_length
        } else {
            self.trials_per_iteration
        }
    }

    pub fn role_space(&self) -> Result<RoleSpace, TrainError> {
        Ok(RoleSpace::from_config(&self.roles)?)
    }

    pub fn shaper(&self, space: &RoleSpace) -> Shaper {
        match self.reward {
            RewardVariant::Role => match space.roles().first().map(|r| &r.kind) {
                Some(RoleKind::EventPrefs(_)) => Shaper::Event { rewards: EVENT_REWARDS },
                _ => Shaper::Svo { w: self.w },
            },
            RewardVariant::Selfish => Shaper::Raw,
            RewardVariant::Prosocial => Shaper::Prosocial,
            RewardVariant::InequityAverse => Shaper::InequityAverse {
                alpha: self.alpha,
                beta: self.beta,
            },
        }
    }

    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            clip: self.clip,
            epochs: self.epochs,
            minibatch: self.minibatch,
            lr: self.lr,
            predictor_lr: self.predictor_lr,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            max_grad_norm: self.max_grad_norm,
            bptt_window: self.bptt_window,
            train_predictor: !self.no_predictor,
        }
    }

    pub fn architecture(&self, env: &AnyEnv, space: &RoleSpace) -> Result<Architecture, TrainError> {
        let spec = env.spec();
        let mut arch = Architecture::mini(spec.obs_len, spec.max_actions(), space.len(), spec.num_agents - 1)
            .with_preset(&self.preset)?;
        arch.activation = self.activation;
        Ok(arch)
    }
}

/// Beam action of an environment, if it has one.
pub fn attack_action(env: &AnyEnv) -> Option<usize> {
    match env {
        AnyEnv::Harvest(_) => Some(crate::envs::harvest::BEAM),
        AnyEnv::CleanUp(_) => Some(crate::envs::cleanup::BEAM),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleMetrics {
    pub role: usize,
    pub label: String,
    /// Agent-trials that played this role.
    pub count: usize,
    pub mean_raw_reward: Option<f64>,
    pub mean_shaped_reward: Option<f64>,
    /// Final-episode accuracy of predictions about agents holding this role.
    pub predictor_accuracy: Option<f64>,
}

/// One metrics log line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub env_steps: usize,
    pub mean_raw_reward: f64,
    pub mean_shaped_reward: f64,
    pub predictor_accuracy: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub predictor_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub roles: Vec<RoleMetrics>,
}

pub struct TrainOutcome {
    pub learner: Learner,
    pub metrics: Vec<IterationMetrics>,
    pub checkpoints: Vec<PathBuf>,
}

const SHUFFLE_STREAM: u64 = u64::MAX;

/// The RNG stream for the `index`-th trial of a run.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

/// Builds the plans for one iteration: roles for every agent and the
/// trial's RNG stream.
fn plan_trials<'a>(
    cfg: &TrainConfig,
    net: &'a PolicyNet,
    space: &RoleSpace,
    shaper: &Shaper,
    remap: &[(usize, usize)],
    m: usize,
    iteration: usize,
) -> Result<Vec<TrialPlan<'a>>, TrainError> {
    let n = cfg.trials();
    (0..n)
        .map(|k| {
            let mut rng = trial_rng(cfg.seed, (iteration * n + k) as u64);
            let roles = space.sample(m, &mut rng)?;
            let true_roles = roles.iter().map(|r| Some(r.class_index)).collect();
            let seats = roles
                .into_iter()
                .map(|role| {
                    Controller::Net(NetSeat {
                        net,
                        role,
                        mode: ActMode::Sample,
                        predict: !cfg.no_predictor,
                        shaper: shaper.clone(),
                        remap: remap.to_vec(),
                    })
                })
                .collect();
            Ok(TrialPlan { seats, true_roles, rng })
        })
        .collect()
}

/// Runs plans in contiguous chunks on `workers` threads. Results are in plan
/// order and identical for any worker count.
pub fn run_parallel(
    env: &AnyEnv,
    plans: Vec<TrialPlan<'_>>,
    opts: RolloutOptions,
    workers: usize,
) -> Result<Vec<TrialRecord>, TrainError> {
    if workers <= 1 || plans.len() <= 1 {
        return run_trials(env, plans, opts);
    }
    let per = plans.len().div_ceil(workers);
    let mut chunks: Vec<Vec<TrialPlan<'_>>> = Vec::new();
    let mut it = plans.into_iter().peekable();
    while it.peek().is_some() {
        chunks.push(it.by_ref().take(per).collect());
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| s.spawn(move || run_trials(env, chunk, opts)))
            .collect();
        let mut out = Vec::new();
        for h in handles {
            out.extend(h.join().expect("rollout worker panicked")?);
        }
        Ok(out)
    })
}

/// Discounted return accumulated forward through each buffer, the quantity
/// whose spread sets the reward scale.
pub fn running_returns(buffers: &[&TrialBuffer], gamma: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for b in buffers {
        let mut g = 0.0;
        for &r in &b.shaped {
            g = g * gamma + r;
            out.push(g);
        }
    }
    out
}

/// GAE targets for complete buffers on rewards multiplied by `scale`, with
/// advantages normalized over the batch.
pub fn batch_targets(buffers: &[&TrialBuffer], gamma: f64, lambda: f64, scale: f64) -> Result<Vec<Targets>, TrainError> {
    let mut targets = Vec::with_capacity(buffers.len());
    for b in buffers {
        let mut terminal = vec![false; b.len()];
        if let Some(last) = terminal.last_mut() {
            *last = true;
        }
        let rewards: Vec<f64> = b.shaped.iter().map(|r| r * scale).collect();
        let (advantages, returns) = compute_gae(&rewards, &b.values, &terminal, 0.0, gamma, lambda)?;
        targets.push(Targets { advantages, returns });
    }
    let n: usize = targets.iter().map(|t| t.advantages.len()).sum();
    if n > 1 {
        let mean = targets.iter().flat_map(|t| &t.advantages).sum::<f64>() / n as f64;
        let var = targets.iter().flat_map(|t| &t.advantages).map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt().max(1e-8);
        for t in &mut targets {
            for a in &mut t.advantages {
                *a = (*a - mean) / sd;
            }
        }
    }
    Ok(targets)
}

fn summarize(
    iteration: usize,
    records: &[TrialRecord],
    space: &RoleSpace,
    stats: &PpoStats,
) -> IterationMetrics {
    let k = space.len();
    let mut count = vec![0usize; k];
    let mut raw = vec![0.0; k];
    let mut shaped = vec![0.0; k];
    let mut episodes = vec![0usize; k];
    let mut hits = vec![0usize; k];
    let mut seen = vec![0usize; k];
    let (mut all_raw, mut all_shaped, mut all_eps) = (0.0, 0.0, 0usize);
    let (mut all_hits, mut all_seen) = (0usize, 0usize);
    let mut steps = 0;
    for rec in records {
        for b in rec.buffers.iter().flatten() {
            let c = b.role.class_index;
            count[c] += 1;
            raw[c] += b.raw.iter().sum::<f64>();
            shaped[c] += b.shaped.iter().sum::<f64>();
            episodes[c] += b.episodes;
            all_raw += b.raw.iter().sum::<f64>();
            all_shaped += b.shaped.iter().sum::<f64>();
            all_eps += b.episodes;
            steps += b.len();
            let last = b.episode_range(b.episodes - 1);
            for t in last {
                for (p, truth) in b.predicted_at(t).iter().zip(&b.others_true) {
                    if let Some(c) = *truth {
                        seen[c] += 1;
                        all_seen += 1;
                        if *p == c {
                            hits[c] += 1;
                            all_hits += 1;
                        }
                    }
                }
            }
        }
    }
    let ratio = |a: f64, b: usize| (b > 0).then(|| a / b as f64);
    IterationMetrics {
        iteration,
        env_steps: steps,
        mean_raw_reward: ratio(all_raw, all_eps).unwrap_or(0.0),
        mean_shaped_reward: ratio(all_shaped, all_eps).unwrap_or(0.0),
        predictor_accuracy: ratio(all_hits as f64, all_seen),
        policy_loss: stats.policy_loss,
        value_loss: stats.value_loss,
        entropy: stats.entropy,
        predictor_loss: stats.predictor_loss,
        approx_kl: stats.approx_kl,
        clip_fraction: stats.clip_fraction,
        grad_norm: stats.grad_norm,
        roles: (0..k)
            .map(|c| RoleMetrics {
                role: c,
                label: space.label(c).to_string(),
                count: count[c],
                mean_raw_reward: ratio(raw[c], episodes[c]),
                mean_shaped_reward: ratio(shaped[c], episodes[c]),
                predictor_accuracy: ratio(hits[c] as f64, seen[c]),
            })
            .collect(),
    }
}

/// Checkpoint of a learner with run metadata, optimizer and shuffle-RNG state.
pub fn learner_checkpoint(learner: &Learner, cfg: &TrainConfig, space: &RoleSpace, iteration: usize) -> Checkpoint {
    let mut ck = learner.net.to_checkpoint();
    ck.metadata.insert("env".into(), cfg.env.name.clone());
    ck.metadata.insert("role_space".into(), space.name.clone());
    ck.metadata.insert("roles".into(), serde_json::to_string(space).expect("role space serializes"));
    ck.metadata.insert(
        "shaper".into(),
        serde_json::to_string(&cfg.shaper(space)).expect("shaper serializes"),
    );
    ck.metadata.insert("trial_length".into(), cfg.episodes().to_string());
    ck.metadata.insert("env_config".into(), serde_json::to_string(&cfg.env).expect("env config serializes"));
    ck.metadata.insert("preset".into(), cfg.preset.clone());
    ck.metadata.insert("iteration".into(), iteration.to_string());
    ck.metadata.insert("seed".into(), cfg.seed.to_string());
    ck.metadata.insert(
        "reward".into(),
        serde_json::to_value(cfg.reward).expect("variant serializes").as_str().unwrap_or("").to_string(),
    );
    ck.rng = Some(serde_json::to_value(&learner.rng).expect("rng serializes"));
    ck.optimizer = Some(serde_json::json!({
        "policy": learner.policy_opt,
        "predictor": learner.predictor_opt,
        "returns": learner.returns,
    }));
    ck
}

/// A trained policy with the role space and settings it was trained under.
#[derive(Clone, Debug)]
pub struct TrainedPolicy {
    pub net: PolicyNet,
    pub space: RoleSpace,
    pub env: EnvConfig,
    pub trial_length: usize,
    pub reward: RewardVariant,
    /// Reward the policy optimized; evaluation feeds it back as the
    /// previous-reward input so inputs match training.
    pub shaper: Shaper,
}

impl TrainedPolicy {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TrainError> {
        let net = PolicyNet::from_checkpoint(ck)?;
        let meta = |key: &str| {
            ck.metadata
                .get(key)
                .ok_or_else(|| TrainError::Config(format!("checkpoint metadata lacks {key:?}")))
        };
        let bad = |e: serde_json::Error| TrainError::Config(format!("checkpoint metadata: {e}"));
        let space: RoleSpace = serde_json::from_str(meta("roles")?).map_err(bad)?;
        let env: EnvConfig = serde_json::from_str(meta("env_config")?).map_err(bad)?;
        let trial_length = meta("trial_length")?
            .parse()
            .map_err(|_| TrainError::Config("checkpoint trial_length is not a number".into()))?;
        let reward = RewardVariant::parse(meta("reward")?)
            .ok_or_else(|| TrainError::Config("checkpoint reward variant unknown".into()))?;
        let shaper: Shaper = serde_json::from_str(meta("shaper")?).map_err(bad)?;
        if space.len() != net.arch.num_roles {
            return Err(TrainError::Config("role space does not match network".into()));
        }
        Ok(Self {
            net,
            space,
            env,
            trial_length,
            reward,
            shaper,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn from_learner(learner: &Learner, cfg: &TrainConfig) -> Result<Self, TrainError> {
        let space = cfg.role_space()?;
        Ok(Self {
            net: learner.net.clone(),
            shaper: cfg.shaper(&space),
            space,
            env: cfg.env.clone(),
            trial_length: cfg.episodes(),
            reward: cfg.reward,
        })
    }
}

/// Fresh learner for a config: network initialized from the seed.
pub fn new_learner(cfg: &TrainConfig, env: &AnyEnv, space: &RoleSpace) -> Result<Learner, TrainError> {
    let arch = cfg.architecture(env, space)?;
    let net = PolicyNet::new(arch, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    Ok(Learner::new(net, rng))
}

/// One training iteration on an existing learner.
pub fn train_iteration(
    learner: &mut Learner,
    cfg: &TrainConfig,
    env: &AnyEnv,
    space: &RoleSpace,
    iteration: usize,
) -> Result<IterationMetrics, TrainError> {
    let m = env.spec().num_agents;
    let shaper = cfg.shaper(space);
    let remap: Vec<(usize, usize)> = match (cfg.remap_attack, attack_action(env)) {
        (true, Some(a)) => vec![(a, 0)],
        _ => Vec::new(),
    };
    let opts = RolloutOptions {
        episodes: cfg.episodes(),
        reset_hidden_each_episode: cfg.no_meta,
    };
    let records = {
        let plans = plan_trials(cfg, &learner.net, space, &shaper, &remap, m, iteration)?;
        run_parallel(env, plans, opts, cfg.workers)?
    };
    let buffers: Vec<&TrialBuffer> = records.iter().flat_map(|r| r.buffers.iter().flatten()).collect();
    let scale = if cfg.reward_norm {
        learner.returns.update(&running_returns(&buffers, cfg.gamma));
        1.0 / learner.returns.std().max(1e-8)
    } else {
        1.0
    };
    let targets = batch_targets(&buffers, cfg.gamma, cfg.lambda, scale)?;
    let stats = ppo_update(learner, &buffers, &targets, &cfg.ppo())?;
    Ok(summarize(iteration, &records, space, &stats))
}

/// Full training run. With `out`, writes `metrics.jsonl` (one line per
/// iteration) and checkpoints into the directory.
pub fn train(cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome, TrainError> {
    train_with(cfg, out, |_| {})
}

/// [`train`] with a callback after every iteration.
pub fn train_with(
    cfg: &TrainConfig,
    out: Option<&Path>,
    mut on_iteration: impl FnMut(&IterationMetrics),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let env = cfg.env.build()?;
    let space = cfg.role_space()?;
    let mut learner = new_learner(cfg, &env, &space)?;
    let mut log = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join("metrics.jsonl");
            Some((BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?), path))
        }
        None => None,
    };
    let mut metrics = Vec::with_capacity(cfg.iterations);
    let mut checkpoints = Vec::new();
    for it in 0..cfg.iterations {
        let row = train_iteration(&mut learner, cfg, &env, &space, it)?;
        on_iteration(&row);
        if let (Some((w, path)), Some(dir)) = (log.as_mut(), out) {
            let line = serde_json::to_string(&row).expect("metrics serialize");
            writeln!(w, "{line}").map_err(io_err(path))?;
            w.flush().map_err(io_err(path))?;
            let every = cfg.checkpoint_every;
            if every > 0 && (it + 1) % every == 0 {
                let p = dir.join(format!("checkpoint_{:05}.json", it + 1));
                learner_checkpoint(&learner, cfg, &space, it + 1).save(&p)?;
                checkpoints.push(p);
            }
        }
        metrics.push(row);
    }
    if let Some(dir) = out {
        let p = dir.join("checkpoint_final.json");
        learner_checkpoint(&learner, cfg, &space, cfg.iterations).save(&p)?;
        checkpoints.push(p);
    }
    Ok(TrainOutcome {
        learner,
        metrics,
        checkpoints,
    })
}
