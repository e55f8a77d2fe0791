//! Zero-shot cross-play: scripted and pretrained partners, role-vs-role
//! matrices, behavioural counters and result export.
//!
//! Every number produced here is computed from raw environment rewards.

mod export;
mod scripted;

pub use export::{
    export_run, read_records, role_matrix_csv, spotlight_csv, summarize_records, summary_json, write_results_csv,
    EpisodeRecord, ResultRow, RESULTS_HEADER,
};
pub use scripted::ScriptedPartner;

pub use crate::roles::inequity_shaped;

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{AnyEnv, EnvConfig, EventCounts, EventKind};
use crate::policy::ActMode;
use crate::roles::RoleSpace;
use crate::training::{
    attack_action, run_parallel, train, Controller, NetSeat, RewardVariant, RolloutOptions, TrainConfig, TrainError,
    TrainOutcome, TrainedPolicy, TrialPlan, TrialRecord,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unknown scripted partner {0:?}")]
    UnknownPartner(String),
    #[error("environment mismatch: {0}")]
    Mismatch(String),
    #[error("bad record at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("invalid evaluation request: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// A partner description as it appears in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartnerSpec {
    Scripted { name: String },
    /// A self-play checkpoint trained under one of the baseline rewards.
    Pretrained { checkpoint: PathBuf, variant: RewardVariant },
    /// A role-conditioned checkpoint playing a fixed role index.
    RolePolicy { checkpoint: PathBuf, role: usize },
}

/// A partner ready to play.
#[derive(Clone, Debug)]
pub enum Partner {
    Scripted(ScriptedPartner),
    Policy {
        policy: TrainedPolicy,
        role: usize,
        /// Actions remapped before reaching the environment.
        remap: Vec<(usize, usize)>,
        label: String,
    },
}

impl Partner {
    pub fn load(spec: &PartnerSpec, env: &AnyEnv) -> Result<Self, EvalError> {
        Ok(match spec {
            PartnerSpec::Scripted { name } => Partner::Scripted(ScriptedPartner::for_env(name, env)?),
            PartnerSpec::Pretrained { checkpoint, variant } => {
                let policy = TrainedPolicy::load(checkpoint)?;
                Partner::Policy {
                    remap: pretrain_remap(env, *variant),
                    label: format!("pretrained_{}", variant_name(*variant)),
                    policy,
                    role: 0,
                }
            }
            PartnerSpec::RolePolicy { checkpoint, role } => {
                let policy = TrainedPolicy::load(checkpoint)?;
                if *role >= policy.space.len() {
                    return Err(EvalError::Invalid(format!("role index {role} outside the checkpoint's space")));
                }
                Partner::Policy {
                    label: policy.space.label(*role).to_string(),
                    policy,
                    role: *role,
                    remap: Vec::new(),
                }
            }
        })
    }

    pub fn label(&self) -> String {
        match self {
            Partner::Scripted(p) => p.name().to_string(),
            Partner::Policy { label, .. } => label.clone(),
        }
    }
}

pub fn variant_name(v: RewardVariant) -> &'static str {
    match v {
        RewardVariant::Role => "role",
        RewardVariant::Selfish => "selfish",
        RewardVariant::Prosocial => "prosocial",
        RewardVariant::InequityAverse => "inequity_averse",
    }
}

fn pretrain_remap(env: &AnyEnv, variant: RewardVariant) -> Vec<(usize, usize)> {
    match (env, variant, attack_action(env)) {
        (AnyEnv::CleanUp(_), RewardVariant::Selfish | RewardVariant::InequityAverse, Some(a)) => vec![(a, 0)],
        _ => Vec::new(),
    }
}

/// Self-play training of a baseline partner under one of the baseline
/// rewards: a single role, no predictor and no trial recurrence. On CleanUp
/// the selfish and inequity-averse variants have the beam replaced by stay.
pub fn pretrain_partner(env: &EnvConfig, variant: RewardVariant, base: &TrainConfig) -> Result<TrainOutcome, EvalError> {
    pretrain_partner_to(env, variant, base, None)
}

pub fn pretrain_config(env: &EnvConfig, variant: RewardVariant, base: &TrainConfig) -> Result<TrainConfig, EvalError> {
    if variant == RewardVariant::Role {
        return Err(EvalError::Invalid("pretraining needs a baseline reward variant".into()));
    }
    let mut cfg = base.clone();
    cfg.env = env.clone();
    cfg.roles = crate::roles::RoleSpaceConfig {
        name: "svo".into(),
        angles: Some(vec![0.0]),
        ..Default::default()
    };
    cfg.reward = variant;
    cfg.no_predictor = true;
    cfg.no_meta = true;
    cfg.remap_attack = !pretrain_remap(&env.build().map_err(TrainError::from)?, variant).is_empty();
    Ok(cfg)
}

pub fn pretrain_partner_to(
    env: &EnvConfig,
    variant: RewardVariant,
    base: &TrainConfig,
    out: Option<&std::path::Path>,
) -> Result<TrainOutcome, EvalError> {
    let cfg = pretrain_config(env, variant, base)?;
    Ok(train(&cfg, out)?)
}

/// How evaluation episodes are generated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub episodes: usize,
    /// Episodes per trial; the focal agent's memory persists within a trial.
    pub trial_length: usize,
    pub seed: u64,
    pub mode: ActMode,
    pub workers: usize,
}

impl EvalOptions {
    pub fn new(episodes: usize, trial_length: usize, seed: u64) -> Self {
        Self {
            episodes,
            trial_length: trial_length.max(1),
            seed,
            mode: ActMode::Sample,
            workers: 1,
        }
    }
}

/// Outcome of one focal-role versus partner evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossPlayResult {
    pub partner: String,
    pub role: String,
    pub episodes: usize,
    /// Raw return of every agent, per episode; the focal agent is agent 0.
    pub episode_rewards: Vec<Vec<f64>>,
    /// Focal agent's event counts per episode.
    pub episode_events: Vec<EventCounts>,
    pub collective_mean: f64,
    pub collective_std: f64,
    pub individual_mean: f64,
    pub partner_mean: f64,
    /// Mean focal event counts per episode, in `EventKind::ALL` order.
    pub events_mean: Vec<f64>,
}

impl CrossPlayResult {
    fn from_episodes(
        partner: String,
        role: String,
        episode_rewards: Vec<Vec<f64>>,
        episode_events: Vec<EventCounts>,
    ) -> Self {
        let n = episode_rewards.len().max(1) as f64;
        let collective: Vec<f64> = episode_rewards.iter().map(|r| r.iter().sum()).collect();
        let collective_mean = collective.iter().sum::<f64>() / n;
        let collective_std = (collective.iter().map(|c| (c - collective_mean).powi(2)).sum::<f64>() / n).sqrt();
        let individual_mean = episode_rewards.iter().map(|r| r[0]).sum::<f64>() / n;
        let partner_mean = episode_rewards
            .iter()
            .map(|r| if r.len() > 1 { r[1..].iter().sum::<f64>() / (r.len() - 1) as f64 } else { 0.0 })
            .sum::<f64>()
            / n;
        let events_mean = (0..EventKind::COUNT)
            .map(|k| episode_events.iter().map(|e| f64::from(e[k])).sum::<f64>() / n)
            .collect();
        Self {
            partner,
            role,
            episodes: episode_rewards.len(),
            episode_rewards,
            episode_events,
            collective_mean,
            collective_std,
            individual_mean,
            partner_mean,
            events_mean,
        }
    }

    pub fn event_mean(&self, kind: EventKind) -> f64 {
        self.events_mean[kind.index()]
    }

    /// Per-episode records for the raw log.
    pub fn records(&self, kind: &str) -> Vec<EpisodeRecord> {
        self.episode_rewards
            .iter()
            .zip(&self.episode_events)
            .enumerate()
            .map(|(e, (r, ev))| EpisodeRecord {
                kind: kind.to_string(),
                partner: self.partner.clone(),
                role: self.role.clone(),
                episode: e,
                rewards: r.clone(),
                events: *ev,
            })
            .collect()
    }
}

/// RNG stream for trial `t` of evaluation pairing `key`.
pub fn eval_rng(seed: u64, key: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0000_0000_0000);
    rng.set_stream((key << 24) | t);
    rng
}

fn trial_count(episodes: usize, trial_length: usize) -> usize {
    episodes.div_ceil(trial_length)
}

/// Flattens trial records into exactly `episodes` per-episode rows.
fn collect_episodes(records: Vec<TrialRecord>, episodes: usize) -> (Vec<Vec<f64>>, Vec<EventCounts>) {
    let mut rewards = Vec::with_capacity(episodes);
    let mut events = Vec::with_capacity(episodes);
    for rec in records {
        for (r, ev) in rec.episode_raw.into_iter().zip(rec.episode_events) {
            if rewards.len() < episodes {
                rewards.push(r);
                events.push(ev[0]);
            }
        }
    }
    (rewards, events)
}

fn focal_seat(policy: &TrainedPolicy, role: usize, mode: ActMode) -> Result<Controller<'_>, EvalError> {
    let emb = policy
        .space
        .decode(role)
        .ok_or_else(|| EvalError::Invalid(format!("role index {role} outside the space")))?
        .clone();
    Ok(Controller::Net(NetSeat {
        net: &policy.net,
        role: emb,
        mode,
        predict: true,
        shaper: policy.shaper.clone(),
        remap: Vec::new(),
    }))
}

fn partner_seat(partner: &Partner, mode: ActMode) -> Result<(Controller<'_>, Option<usize>), EvalError> {
    Ok(match partner {
        Partner::Scripted(p) => (Controller::Scripted(*p), None),
        Partner::Policy {
            policy, role, remap, ..
        } => {
            let emb = policy
                .space
                .decode(*role)
                .ok_or_else(|| EvalError::Invalid(format!("partner role {role} outside its space")))?
                .clone();
            (
                Controller::Net(NetSeat {
                    net: &policy.net,
                    role: emb,
                    mode,
                    predict: policy.reward == RewardVariant::Role,
                    shaper: policy.shaper.clone(),
                    remap: remap.clone(),
                }),
                Some(*role),
            )
        }
    })
}

/// Focal policy in role `role` (agent 0) against `partner` in every other seat.
pub fn crossplay(
    policy: &TrainedPolicy,
    role: usize,
    partner: &Partner,
    env: &AnyEnv,
    opts: &EvalOptions,
) -> Result<CrossPlayResult, EvalError> {
    let m = crate::envs::Environment::spec(env).num_agents;
    let same_space = matches!(partner, Partner::Policy { policy: p, .. } if p.space == policy.space);
    let trials = trial_count(opts.episodes, opts.trial_length);
    let mut plans = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut seats = vec![focal_seat(policy, role, opts.mode)?];
        let mut true_roles = vec![Some(role)];
        for _ in 1..m {
            let (seat, r) = partner_seat(partner, opts.mode)?;
            seats.push(seat);
            true_roles.push(if same_space { r } else { None });
        }
        plans.push(TrialPlan {
            seats,
            true_roles,
            rng: eval_rng(opts.seed, role as u64, t as u64),
        });
    }
    let ro = RolloutOptions {
        episodes: opts.trial_length,
        reset_hidden_each_episode: false,
    };
    let records = run_parallel(env, plans, ro, opts.workers)?;
    let (rewards, events) = collect_episodes(records, opts.episodes);
    Ok(CrossPlayResult::from_episodes(
        partner.label(),
        policy.space.label(role).to_string(),
        rewards,
        events,
    ))
}

/// Mean raw episode reward of role `i` (agent 0) paired with role `j`
/// (every other agent), plus the per-pair results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleMatrix {
    pub labels: Vec<String>,
    pub episodes_per_pair: usize,
    /// `means[i][j]`.
    pub means: Vec<Vec<f64>>,
    pub pairs: Vec<Vec<CrossPlayResult>>,
}

impl RoleMatrix {
    /// Labels of the four ring roles singled out in behavioural summaries:
    /// Competitive, Individualistic, Prosocial, Altruistic.
    pub const SPOTLIGHT: [&'static str; 4] = ["Competitive", "Individualistic", "Prosocial", "Altruistic"];

    pub fn spotlight_rows(&self) -> Vec<usize> {
        Self::SPOTLIGHT
            .iter()
            .filter_map(|s| self.labels.iter().position(|l| l == s))
            .collect()
    }
}

/// Every role against every role with the same checkpoint. The diagonal
/// pairs two independent instances of one role.
pub fn role_matrix(
    policy: &TrainedPolicy,
    env: &AnyEnv,
    episodes_per_pair: usize,
    opts: &EvalOptions,
) -> Result<RoleMatrix, EvalError> {
    let k = policy.space.len();
    let m = crate::envs::Environment::spec(env).num_agents;
    let trials = trial_count(episodes_per_pair, opts.trial_length);
    let mut plans = Vec::with_capacity(k * k * trials);
    for i in 0..k {
        for j in 0..k {
            for t in 0..trials {
                let mut seats = vec![focal_seat(policy, i, opts.mode)?];
                let mut true_roles = vec![Some(i)];
                for _ in 1..m {
                    seats.push(focal_seat(policy, j, opts.mode)?);
                    true_roles.push(Some(j));
                }
                plans.push(TrialPlan {
                    seats,
                    true_roles,
                    rng: eval_rng(opts.seed, (i * k + j) as u64, t as u64),
                });
            }
        }
    }
    let ro = RolloutOptions {
        episodes: opts.trial_length,
        reset_hidden_each_episode: false,
    };
    let mut records = run_parallel(env, plans, ro, opts.workers)?.into_iter();
    let mut means = vec![vec![0.0; k]; k];
    let mut pairs = Vec::with_capacity(k);
    for (i, row) in means.iter_mut().enumerate() {
        let mut out = Vec::with_capacity(k);
        for (j, cell) in row.iter_mut().enumerate() {
            let chunk: Vec<TrialRecord> = records.by_ref().take(trials).collect();
            let (rewards, events) = collect_episodes(chunk, episodes_per_pair);
            let res = CrossPlayResult::from_episodes(
                policy.space.label(j).to_string(),
                policy.space.label(i).to_string(),
                rewards,
                events,
            );
            *cell = res.individual_mean;
            out.push(res);
        }
        pairs.push(out);
    }
    Ok(RoleMatrix {
        labels: policy.space.labels().to_vec(),
        episodes_per_pair,
        means,
        pairs,
    })
}

/// Cross-play of one focal role against every partner in a list.
pub fn crossplay_all(
    policy: &TrainedPolicy,
    roles: &[usize],
    partners: &[Partner],
    env: &AnyEnv,
    opts: &EvalOptions,
) -> Result<Vec<CrossPlayResult>, EvalError> {
    let mut out = Vec::with_capacity(roles.len() * partners.len());
    for p in partners {
        for &r in roles {
            out.push(crossplay(policy, r, p, env, opts)?);
        }
    }
    Ok(out)
}

/// The role space a policy was trained with, for callers that only hold a path.
pub fn space_of(policy: &TrainedPolicy) -> &RoleSpace {
    &policy.space
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Environment, KitchenConfig, KitchenMini};

    #[test]
    fn unknown_partner_is_rejected() {
        assert!(matches!(ScriptedPartner::from_name("teleporter"), Err(EvalError::UnknownPartner(_))));
        let env = EnvConfig::named("matrix").build().unwrap();
        assert!(matches!(ScriptedPartner::for_env("always_clean", &env), Err(EvalError::Mismatch(_))));
    }

    #[test]
    fn deliver_soup_never_places_onions() {
        let mut env = AnyEnv::Kitchen(KitchenMini::new(KitchenConfig::default()).unwrap());
        let mut a = ScriptedPartner::PlaceOnion;
        let mut b = ScriptedPartner::DeliverSoup;
        let mut delivered = 0;
        for seed in 0..5 {
            env.reset(seed);
            for _ in 0..100 {
                let acts = [a.act(&env, 0), b.act(&env, 1)];
                let res = env.step(&acts).unwrap();
                assert_eq!(res.events[1][EventKind::PlaceInPot.index()], 0);
                delivered += res.events[1][EventKind::Delivery.index()];
            }
        }
        assert!(delivered > 0, "the pair should serve at least one soup");
    }

    #[test]
    fn scripted_partners_are_deterministic() {
        let env = EnvConfig::named("cleanup").build().unwrap();
        let run = || {
            let mut e = env.clone();
            e.reset(9);
            let mut p = [ScriptedPartner::AlwaysClean, ScriptedPartner::AlwaysHarvest];
            let mut acts = Vec::new();
            for _ in 0..50 {
                let a = [p[0].act(&e, 0), p[1].act(&e, 1)];
                acts.push(a);
                e.step(&a).unwrap();
            }
            acts
        };
        assert_eq!(run(), run());
    }
}
