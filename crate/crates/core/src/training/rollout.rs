use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{TrainError, TrialBuffer};
use crate::envs::{AnyEnv, Environment, EventCounts, EventKind};
use crate::evaluation::ScriptedPartner;
use crate::numgrad::{argmax, softmax_logits, Tensor2D};
use crate::policy::{choose, ActMode, PolicyInput, PolicyNet};
use crate::roles::{RoleEmbedding, Shaper};

/// A seat driven by a policy network.
#[derive(Clone, Debug)]
pub struct NetSeat<'a> {
    pub net: &'a PolicyNet,
    pub role: RoleEmbedding,
    pub mode: ActMode,
    /// Feed the predictor's previous-step guess; otherwise the uniform mixture.
    pub predict: bool,
    pub shaper: Shaper,
    /// Actions replaced before they reach the environment, as `(from, to)`.
    pub remap: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub enum Controller<'a> {
    Net(NetSeat<'a>),
    Scripted(ScriptedPartner),
}

/// One trial to roll out: a controller per agent, the role label of each
/// agent for predictor scoring, and the trial's private RNG stream.
pub struct TrialPlan<'a> {
    pub seats: Vec<Controller<'a>>,
    pub true_roles: Vec<Option<usize>>,
    pub rng: ChaCha8Rng,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RolloutOptions {
    pub episodes: usize,
    /// Clear recurrent state between episodes (only meaningful without meta-learning).
    pub reset_hidden_each_episode: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    /// One buffer per network-driven seat.
    pub buffers: Vec<Option<TrialBuffer>>,
    /// Raw return per episode per agent.
    pub episode_raw: Vec<Vec<f64>>,
    pub episode_events: Vec<Vec<EventCounts>>,
}

struct SeatState {
    h: Vec<f64>,
    prev_action: Option<usize>,
    prev_reward: f64,
    zhat: Vec<Option<usize>>,
}

impl SeatState {
    fn fresh(net: &PolicyNet) -> Self {
        Self {
            h: vec![0.0; net.arch.cell],
            prev_action: None,
            prev_reward: 0.0,
            zhat: vec![None; net.arch.num_others],
        }
    }
}

struct Live<'a> {
    plan: TrialPlan<'a>,
    env: AnyEnv,
    obs: Vec<Vec<f64>>,
    states: Vec<Option<SeatState>>,
    record: TrialRecord,
}

/// Rolls out a single trial.
pub fn run_trial(env: &AnyEnv, plan: TrialPlan<'_>, opts: RolloutOptions) -> Result<TrialRecord, TrainError> {
    Ok(run_trials(env, vec![plan], opts)?.pop().expect("one trial"))
}

/// Rolls out several trials in lockstep, batching network seats that share a
/// network into one forward pass per step.
///
/// Every trial draws environment seeds and actions only from its own RNG, and
/// the forward pass is row-independent, so results do not depend on which
/// trials are batched together.
pub fn run_trials(env: &AnyEnv, plans: Vec<TrialPlan<'_>>, opts: RolloutOptions) -> Result<Vec<TrialRecord>, TrainError> {
    let spec = env.spec().clone();
    let m = spec.num_agents;
    let horizon = spec.horizon;
    let mut live: Vec<Live<'_>> = Vec::with_capacity(plans.len());
    for plan in plans {
        if plan.seats.len() != m || plan.true_roles.len() != m {
            return Err(TrainError::Config(format!("trial plan must have {m} seats")));
        }
        let mut buffers = Vec::with_capacity(m);
        let mut states = Vec::with_capacity(m);
        for (i, seat) in plan.seats.iter().enumerate() {
            match seat {
                Controller::Net(s) => {
                    if s.net.arch.obs_len != spec.obs_len || s.net.arch.num_others != m - 1 {
                        return Err(TrainError::Config(format!(
                            "network for seat {i} does not fit environment {}",
                            spec.name
                        )));
                    }
                    let others = (0..m).filter(|&j| j != i).map(|j| plan.true_roles[j]).collect();
                    buffers.push(Some(TrialBuffer::new(
                        i,
                        m,
                        opts.episodes,
                        horizon,
                        s.net.input_len(),
                        s.role.clone(),
                        others,
                    )));
                    states.push(Some(SeatState::fresh(s.net)));
                }
                Controller::Scripted(_) => {
                    buffers.push(None);
                    states.push(None);
                }
            }
        }
        live.push(Live {
            plan,
            env: env.clone(),
            obs: Vec::new(),
            states,
            record: TrialRecord {
                buffers,
                episode_raw: Vec::with_capacity(opts.episodes),
                episode_events: Vec::with_capacity(opts.episodes),
            },
        });
    }

    // Group (trial, seat) pairs by network identity.
    let mut groups: Vec<(&PolicyNet, Vec<(usize, usize)>)> = Vec::new();
    for (k, l) in live.iter().enumerate() {
        for (i, seat) in l.plan.seats.iter().enumerate() {
            if let Controller::Net(s) = seat {
                match groups.iter_mut().find(|(n, _)| std::ptr::eq(*n, s.net)) {
                    Some((_, rows)) => rows.push((k, i)),
                    None => groups.push((s.net, vec![(k, i)])),
                }
            }
        }
    }

    for episode in 0..opts.episodes {
        for l in &mut live {
            let seed: u64 = l.plan.rng.gen();
            l.obs = l.env.reset(seed);
            if episode > 0 && opts.reset_hidden_each_episode {
                for (st, seat) in l.states.iter_mut().zip(&l.plan.seats) {
                    if let (Some(st), Controller::Net(s)) = (st, seat) {
                        *st = SeatState::fresh(s.net);
                    }
                }
            }
            l.record.episode_raw.push(vec![0.0; m]);
            l.record.episode_events.push(vec![[0; EventKind::COUNT]; m]);
        }
        for t in 0..horizon {
            // Forward pass per network group.
            let mut outputs: Vec<Vec<Option<(Vec<f64>, f64, Vec<f64>, Vec<f64>)>>> =
                live.iter().map(|_| (0..m).map(|_| None).collect()).collect();
            let mut inputs_used: Vec<Vec<Option<Vec<f64>>>> =
                live.iter().map(|_| vec![None; m]).collect();
            for (net, rows) in &groups {
                let layout = net.arch.layout();
                let mut x = Tensor2D::zeros(rows.len(), layout.len());
                let mut h = Tensor2D::zeros(rows.len(), net.arch.cell);
                for (r, &(k, i)) in rows.iter().enumerate() {
                    let l = &live[k];
                    let st = l.states[i].as_ref().expect("net seat state");
                    let Controller::Net(seat) = &l.plan.seats[i] else { unreachable!() };
                    let inp = PolicyInput {
                        obs: l.obs[i].clone(),
                        role: seat.role.class_index,
                        zhat: st.zhat.clone(),
                        prev_action: st.prev_action,
                        prev_reward: st.prev_reward,
                        boundary: t == 0,
                    };
                    inp.write_into(&layout, x.row_mut(r))?;
                    h.row_mut(r).copy_from_slice(&st.h);
                }
                let out = net.act_batch(&x, &h)?;
                for (r, &(k, i)) in rows.iter().enumerate() {
                    outputs[k][i] = Some((
                        out.hidden.row(r).to_vec(),
                        out.values[r],
                        out.logits.row(r).to_vec(),
                        out.pred_logits.row(r).to_vec(),
                    ));
                    inputs_used[k][i] = Some(x.row(r).to_vec());
                }
            }

            for (k, l) in live.iter_mut().enumerate() {
                let mut actions = vec![0usize; m];
                let mut env_actions = vec![0usize; m];
                let mut logps = vec![0.0; m];
                for i in 0..m {
                    match &mut l.plan.seats[i] {
                        Controller::Net(seat) => {
                            let (_, _, logits, _) = outputs[k][i].as_ref().expect("forward ran");
                            let probs = softmax_logits(logits);
                            let a = choose(&probs, &mut l.plan.rng, seat.mode);
                            actions[i] = a;
                            logps[i] = probs[a].ln();
                            env_actions[i] = seat.remap.iter().find(|(f, _)| *f == a).map_or(a, |&(_, to)| to);
                        }
                        Controller::Scripted(p) => {
                            let a = p.act(&l.env, i);
                            actions[i] = a;
                            env_actions[i] = a;
                        }
                    }
                }
                let res = l.env.step(&env_actions)?;
                for i in 0..m {
                    l.record.episode_raw[episode][i] += res.rewards[i];
                    for (c, e) in l.record.episode_events[episode][i].iter_mut().zip(&res.events[i]) {
                        *c += e;
                    }
                }
                for i in 0..m {
                    let Controller::Net(seat) = &l.plan.seats[i] else { continue };
                    let (hidden, value, _, pred) = outputs[k][i].take().expect("forward ran");
                    let k_roles = seat.net.arch.num_roles;
                    let predicted: Vec<usize> = pred.chunks(k_roles).map(argmax).collect();
                    let shaped = seat.shaper.shape(&seat.role.kind, &res.rewards, i, &res.events[i]);
                    if !shaped.is_finite() || !value.is_finite() {
                        return Err(TrainError::NonFinite(format!("seat {i} at step {t}")));
                    }
                    let buf = l.record.buffers[i].as_mut().expect("net seat buffer");
                    buf.inputs.extend_from_slice(inputs_used[k][i].as_ref().expect("input row"));
                    buf.actions.push(actions[i]);
                    buf.logp.push(logps[i]);
                    buf.values.push(value);
                    buf.raw.push(res.rewards[i]);
                    buf.raw_all.extend_from_slice(&res.rewards);
                    buf.shaped.push(shaped);
                    buf.events.push(res.events[i]);
                    buf.episode_start.push(t == 0);
                    buf.predicted.extend_from_slice(&predicted);
                    let st = l.states[i].as_mut().expect("net seat state");
                    st.h = hidden;
                    st.prev_action = Some(actions[i]);
                    st.prev_reward = shaped;
                    if seat.predict {
                        st.zhat = predicted.into_iter().map(Some).collect();
                    }
                }
                l.obs = res.observations;
            }
        }
    }
    Ok(live.into_iter().map(|l| l.record).collect())
}
