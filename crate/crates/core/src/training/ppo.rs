use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrainError, TrialBuffer};
use crate::numgrad::{Adam, AdamConfig, Gradients, NodeId, Tape, Tensor2D};
use crate::policy::PolicyNet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    /// Trial streams per minibatch.
    pub minibatch: usize,
    pub lr: f64,
    pub predictor_lr: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// Steps per truncated backpropagation window; 0 spans the whole trial.
    pub bptt_window: usize,
    pub train_predictor: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            epochs: 4,
            minibatch: 8,
            lr: 3e-4,
            predictor_lr: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            bptt_window: 0,
            train_predictor: true,
        }
    }
}

/// Loss terms averaged over every sample and minibatch of an update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub predictor_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    /// Largest `|ratio − 1|` in the first minibatch of the first epoch.
    pub first_ratio_deviation: f64,
}

/// Running mean and variance (parallel-merge form).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStat {
    pub count: f64,
    pub mean: f64,
    pub var: f64,
}

impl RunningStat {
    pub fn update(&mut self, xs: &[f64]) {
        if xs.is_empty() {
            return;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let total = self.count + n;
        let delta = mean - self.mean;
        self.var = (self.var * self.count + var * n + delta * delta * self.count * n / total) / total;
        self.mean += delta * n / total;
        self.count = total;
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

/// A network with its two optimizers, the minibatch shuffling stream and
/// the running statistics of discounted shaped returns used to scale rewards.
#[derive(Clone, Debug)]
pub struct Learner {
    pub net: PolicyNet,
    pub policy_opt: Adam,
    pub predictor_opt: Adam,
    pub rng: ChaCha8Rng,
    pub returns: RunningStat,
}

impl Learner {
    pub fn new(net: PolicyNet, rng: ChaCha8Rng) -> Self {
        let policy_opt = Adam::new(&net.store, net.policy_ids(), AdamConfig::default());
        let predictor_opt = Adam::new(&net.store, net.predictor_ids(), AdamConfig::default());
        Self {
            net,
            policy_opt,
            predictor_opt,
            rng,
            returns: RunningStat::default(),
        }
    }
}

/// Per-sample targets for one buffer.
pub struct Targets {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Default)]
struct Sums {
    policy: f64,
    value: f64,
    entropy: f64,
    predictor: f64,
    kl: f64,
    clipped: f64,
    max_dev: f64,
}

/// Clipped-surrogate update over complete trial buffers.
///
/// Every minibatch re-runs the recurrence from a zero hidden state at the
/// start of each trial with the current parameters.
pub fn ppo_update(
    learner: &mut Learner,
    buffers: &[&TrialBuffer],
    targets: &[Targets],
    cfg: &PpoConfig,
) -> Result<PpoStats, TrainError> {
    if buffers.is_empty() {
        return Ok(PpoStats::default());
    }
    let steps = buffers[0].len();
    if buffers.iter().any(|b| !b.is_complete() || b.len() != steps) || targets.len() != buffers.len() {
        return Err(TrainError::Config("ppo_update needs complete, equal-length buffers".into()));
    }
    let mut order: Vec<usize> = (0..buffers.len()).collect();
    let mb = cfg.minibatch.max(1);
    let mut total = Sums::default();
    let mut norm_sum = 0.0;
    let mut updates = 0usize;
    let mut samples = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut learner.rng);
        for (c, chunk) in order.chunks(mb).enumerate() {
            let bufs: Vec<&TrialBuffer> = chunk.iter().map(|&i| buffers[i]).collect();
            let tg: Vec<&Targets> = chunk.iter().map(|&i| &targets[i]).collect();
            let (mut grads, sums) = minibatch_gradients(&learner.net, &bufs, &tg, cfg)?;
            if epoch == 0 && c == 0 {
                total.max_dev = sums.max_dev;
            }
            if !grads.is_finite() {
                return Err(TrainError::NonFinite(format!("gradient at epoch {epoch}, minibatch {c}")));
            }
            let n = (bufs.len() * steps) as f64;
            total.policy += sums.policy;
            total.value += sums.value;
            total.entropy += sums.entropy;
            total.predictor += sums.predictor;
            total.kl += sums.kl;
            total.clipped += sums.clipped;
            samples += n as usize;
            norm_sum += grads.clip_global_norm(learner.net.policy_ids(), cfg.max_grad_norm);
            learner.policy_opt.step(&mut learner.net.store, &grads, cfg.lr)?;
            if cfg.train_predictor {
                grads.clip_global_norm(learner.net.predictor_ids(), cfg.max_grad_norm);
                learner.predictor_opt.step(&mut learner.net.store, &grads, cfg.predictor_lr)?;
            }
            updates += 1;
        }
    }
    let s = samples.max(1) as f64;
    Ok(PpoStats {
        policy_loss: total.policy / s,
        value_loss: total.value / s,
        entropy: total.entropy / s,
        predictor_loss: total.predictor / s,
        approx_kl: total.kl / s,
        clip_fraction: total.clipped / s,
        grad_norm: norm_sum / updates.max(1) as f64,
        first_ratio_deviation: total.max_dev,
    })
}

fn column(values: impl Iterator<Item = f64>) -> Tensor2D {
    Tensor2D::column_vector(values.collect())
}

fn minibatch_gradients(
    net: &PolicyNet,
    bufs: &[&TrialBuffer],
    targets: &[&Targets],
    cfg: &PpoConfig,
) -> Result<(Gradients, Sums), TrainError> {
    let b = bufs.len();
    let steps = bufs[0].len();
    let n = (b * steps) as f64;
    let k = net.arch.num_roles;
    let others = net.arch.num_others;
    let labels: Option<Vec<Vec<usize>>> = (0..others)
        .map(|j| bufs.iter().map(|buf| buf.others_true[j]).collect::<Option<Vec<usize>>>())
        .collect();
    let predictor_on = cfg.train_predictor && labels.is_some() && others > 0;
    let window = if cfg.bptt_window == 0 { steps } else { cfg.bptt_window };
    let input_len = net.input_len();

    let mut grads = Gradients::zeros_like(&net.store);
    let mut sums = Sums::default();
    let mut h_val = Tensor2D::zeros(b, net.arch.cell);
    let mut start = 0;
    while start < steps {
        let end = (start + window).min(steps);
        let mut tape = Tape::new(&net.store);
        let mut h = tape.constant(h_val.clone());
        let mut loss: Option<NodeId> = None;
        for t in start..end {
            let mut x = Tensor2D::zeros(b, input_len);
            for (r, buf) in bufs.iter().enumerate() {
                x.row_mut(r).copy_from_slice(buf.input_row(t));
            }
            let xn = tape.constant(x);
            let s = net.step_nodes(&mut tape, h, xn)?;
            h = s.h;

            let actions: Vec<usize> = bufs.iter().map(|buf| buf.actions[t]).collect();
            let lsm = tape.log_softmax(s.logits);
            let lp = tape.gather(lsm, &actions)?;
            let old = tape.constant(column(bufs.iter().map(|buf| buf.logp[t])));
            let diff = tape.sub(lp, old)?;
            let ratio = tape.exp(diff);
            let adv = tape.constant(column(targets.iter().map(|tg| tg.advantages[t])));
            let s1 = tape.mul(ratio, adv)?;
            let rc = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
            let s2 = tape.mul(rc, adv)?;
            let surr = tape.minimum(s1, s2)?;

            let ret = tape.constant(column(targets.iter().map(|tg| tg.returns[t])));
            let dv = tape.sub(s.value, ret)?;
            let sq = tape.square(dv);

            let p = tape.exp(lsm);
            let plogp = tape.mul(p, lsm)?;
            let neg_ent = tape.row_sum(plogp);

            // Per-row loss: −surr + c_v·(v − R)² − c_e·H.
            let a = tape.scale(surr, -1.0);
            let bterm = tape.scale(sq, cfg.value_coef);
            let cterm = tape.scale(neg_ent, cfg.entropy_coef);
            let ab = tape.add(a, bterm)?;
            let rows = tape.add(ab, cterm)?;
            let total = tape.sum(rows);
            let mut step_loss = tape.scale(total, 1.0 / n);

            for r in 0..b {
                let rv = tape.value(ratio).get(r, 0);
                let d = tape.value(diff).get(r, 0);
                sums.kl -= d;
                sums.max_dev = sums.max_dev.max((rv - 1.0).abs());
                if (rv - 1.0).abs() > cfg.clip {
                    sums.clipped += 1.0;
                }
                sums.policy -= tape.value(surr).get(r, 0);
                sums.value += tape.value(sq).get(r, 0);
                sums.entropy -= tape.value(neg_ent).get(r, 0);
            }

            if predictor_on {
                let labels = labels.as_ref().expect("checked");
                for (j, lab) in labels.iter().enumerate() {
                    let lj = tape.slice_cols(s.pred, j * k, k)?;
                    let lsj = tape.log_softmax(lj);
                    let g = tape.gather(lsj, lab)?;
                    let gs = tape.sum(g);
                    sums.predictor -= tape.value(gs).scalar().expect("scalar") / others as f64;
                    let term = tape.scale(gs, -1.0 / (n * others as f64));
                    step_loss = tape.add(step_loss, term)?;
                }
            }
            loss = Some(match loss {
                None => step_loss,
                Some(l) => tape.add(l, step_loss)?,
            });
        }
        h_val = tape.value(h).clone();
        let loss = loss.expect("nonempty window");
        if !tape.value(loss).is_finite() {
            return Err(TrainError::NonFinite(format!("loss in steps {start}..{end}")));
        }
        grads.accumulate(&tape.backward(loss)?);
        start = end;
    }
    Ok((grads, sums))
}

/// Log-probabilities, values, entropies and predictor logits from re-running
/// the network over each buffer from a zero hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub logp: Vec<f64>,
    pub values: Vec<f64>,
    pub entropies: Vec<f64>,
    pub pred_logits: Vec<Vec<f64>>,
    /// Recurrent state after each step.
    pub hidden: Vec<Vec<f64>>,
}

/// Batched re-evaluation of complete buffers; rows never interact.
pub fn evaluate_batch(net: &PolicyNet, buffers: &[&TrialBuffer]) -> Result<Vec<Evaluation>, TrainError> {
    if buffers.is_empty() {
        return Ok(Vec::new());
    }
    let steps = buffers[0].len();
    if buffers.iter().any(|b| !b.is_complete() || b.len() != steps) {
        return Err(TrainError::Config("evaluate_batch needs complete, equal-length buffers".into()));
    }
    let b = buffers.len();
    let mut out: Vec<Evaluation> = (0..b)
        .map(|_| Evaluation {
            logp: Vec::with_capacity(steps),
            values: Vec::with_capacity(steps),
            entropies: Vec::with_capacity(steps),
            pred_logits: Vec::with_capacity(steps),
            hidden: Vec::with_capacity(steps),
        })
        .collect();
    let mut h = Tensor2D::zeros(b, net.arch.cell);
    for t in 0..steps {
        let mut x = Tensor2D::zeros(b, net.input_len());
        for (r, buf) in buffers.iter().enumerate() {
            x.row_mut(r).copy_from_slice(buf.input_row(t));
        }
        let step = net.act_batch(&x, &h)?;
        for (r, (ev, buf)) in out.iter_mut().zip(buffers).enumerate() {
            let probs = crate::numgrad::softmax_logits(step.logits.row(r));
            ev.logp.push(probs[buf.actions[t]].ln());
            ev.values.push(step.values[r]);
            ev.entropies.push(crate::policy::entropy(&probs));
            ev.pred_logits.push(step.pred_logits.row(r).to_vec());
            ev.hidden.push(step.hidden.row(r).to_vec());
        }
        h = step.hidden;
    }
    Ok(out)
}
