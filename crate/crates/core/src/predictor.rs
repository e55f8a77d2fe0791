//! The role predictor: a one-hidden-layer head on the detached recurrent
//! state plus the agent's own role, with one K-way classifier per other agent.

use crate::envs::{AnyEnv, Environment};
use crate::numgrad::{argmax, softmax_logits, NodeId, NumError, Tape, Tensor2D};
use crate::policy::PolicyNet;
use crate::training::{evaluate_batch, run_parallel, Controller, Learner, NetSeat, RolloutOptions, TrainError, TrainedPolicy, TrialBuffer, TrialPlan};
use crate::evaluation::{eval_rng, EvalOptions};

/// Logits per other agent and the argmax class of each (ties to the lowest index).
pub fn predict(net: &PolicyNet, hidden: &[f64], z_self: usize) -> Result<(Vec<Vec<f64>>, Vec<usize>), NumError> {
    let k = net.arch.num_roles;
    if z_self >= k {
        return Err(NumError::Shape(format!("own role {z_self} outside {k} roles")));
    }
    let mut onehot = vec![0.0; k];
    onehot[z_self] = 1.0;
    let logits = net.predictor_logits(&Tensor2D::row_vector(hidden.to_vec()), &Tensor2D::row_vector(onehot))?;
    let per: Vec<Vec<f64>> = logits.row(0).chunks(k).map(<[f64]>::to_vec).collect();
    let classes = per.iter().map(|l| argmax(l)).collect();
    Ok((per, classes))
}

/// Mean cross-entropy of K-way `logits` rows against `labels`.
pub fn predictor_loss(logits: &[Vec<f64>], labels: &[usize]) -> Result<f64, NumError> {
    if logits.len() != labels.len() {
        return Err(NumError::Shape(format!("{} logit rows, {} labels", logits.len(), labels.len())));
    }
    if logits.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (row, &y) in logits.iter().zip(labels) {
        if y >= row.len() {
            return Err(NumError::Usage(format!("class {y} outside {} classes", row.len())));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(total / logits.len() as f64)
}

/// Supervised data for the predictor head: detached hidden states, own-role
/// one-hots and the true class of every other agent.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorDataset {
    pub hidden: Tensor2D,
    pub roles: Tensor2D,
    /// `labels[j][n]`: class of other agent `j` at sample `n`.
    pub labels: Vec<Vec<usize>>,
}

impl PredictorDataset {
    /// Every step of every buffer, with hidden states recomputed by `net`.
    /// Buffers whose partners have no role label are skipped.
    pub fn from_buffers(net: &PolicyNet, buffers: &[&TrialBuffer]) -> Result<Self, TrainError> {
        let labelled: Vec<&TrialBuffer> = buffers
            .iter()
            .copied()
            .filter(|b| b.others_true.iter().all(Option::is_some))
            .collect();
        let evals = evaluate_batch(net, &labelled)?;
        let k = net.arch.num_roles;
        let others = net.arch.num_others;
        let mut hidden = Vec::new();
        let mut roles = Vec::new();
        let mut labels = vec![Vec::new(); others];
        for (b, ev) in labelled.iter().zip(&evals) {
            for h in &ev.hidden {
                hidden.push(h.clone());
                let mut r = vec![0.0; k];
                r[b.role.class_index] = 1.0;
                roles.push(r);
                for (j, t) in b.others_true.iter().enumerate() {
                    labels[j].push(t.expect("filtered"));
                }
            }
        }
        Ok(Self {
            hidden: Tensor2D::from_rows(&hidden)?,
            roles: Tensor2D::from_rows(&roles)?,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.hidden.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn dataset_loss(net: &PolicyNet, tape: &mut Tape<'_>, data: &PredictorDataset) -> Result<NodeId, NumError> {
    let k = net.arch.num_roles;
    let logits = net.predictor_nodes(tape, &data.hidden, &data.roles)?;
    let n = data.len() as f64;
    let others = data.labels.len() as f64;
    let mut loss: Option<NodeId> = None;
    for (j, lab) in data.labels.iter().enumerate() {
        let lj = tape.slice_cols(logits, j * k, k)?;
        let ls = tape.log_softmax(lj);
        let g = tape.gather(ls, lab)?;
        let s = tape.sum(g);
        let term = tape.scale(s, -1.0 / (n * others));
        loss = Some(match loss {
            None => term,
            Some(l) => tape.add(l, term)?,
        });
    }
    loss.ok_or_else(|| NumError::Usage("predictor dataset has no other agents".into()))
}

/// Full-batch predictor training; returns the loss before each step.
pub fn fit_predictor(learner: &mut Learner, data: &PredictorDataset, steps: usize, lr: f64) -> Result<Vec<f64>, TrainError> {
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let grads = {
            let mut tape = Tape::new(&learner.net.store);
            let loss = dataset_loss(&learner.net, &mut tape, data)?;
            losses.push(tape.value(loss).scalar().expect("scalar loss"));
            tape.backward(loss)?
        };
        learner.predictor_opt.step(&mut learner.net.store, &grads, lr)?;
    }
    Ok(losses)
}

/// Fraction of (sample, other agent) pairs classified correctly.
pub fn dataset_accuracy(net: &PolicyNet, data: &PredictorDataset) -> Result<f64, NumError> {
    let k = net.arch.num_roles;
    let logits = net.predictor_logits(&data.hidden, &data.roles)?;
    let mut hits = 0;
    let mut total = 0;
    for (j, lab) in data.labels.iter().enumerate() {
        for (n, &y) in lab.iter().enumerate() {
            total += 1;
            hits += usize::from(argmax(&logits.row(n)[j * k..(j + 1) * k]) == y);
        }
    }
    Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}

/// Row-normalized K×K matrix: entry (i, j) is the fraction of final-episode
/// steps at which a partner whose true role is `i` was predicted as `j`.
///
/// Trials pair the policy with itself; for true partner role `i` the focal
/// agent's own role cycles through the space.
pub fn confusion_matrix(
    policy: &TrainedPolicy,
    env: &AnyEnv,
    trials_per_role: usize,
    opts: &EvalOptions,
) -> Result<Vec<Vec<f64>>, TrainError> {
    let k = policy.space.len();
    let m = env.spec().num_agents;
    let mut plans = Vec::with_capacity(k * trials_per_role);
    for i in 0..k {
        for t in 0..trials_per_role {
            let own = t % k;
            let seat = |role: usize| {
                Controller::Net(NetSeat {
                    net: &policy.net,
                    role: policy.space.roles()[role].clone(),
                    mode: opts.mode,
                    predict: true,
                    shaper: policy.shaper.clone(),
                    remap: Vec::new(),
                })
            };
            let mut seats = vec![seat(own)];
            let mut true_roles = vec![Some(own)];
            for _ in 1..m {
                seats.push(seat(i));
                true_roles.push(Some(i));
            }
            plans.push(TrialPlan {
                seats,
                true_roles,
                rng: eval_rng(opts.seed, (1 << 20) + i as u64, t as u64),
            });
        }
    }
    let ro = RolloutOptions {
        episodes: opts.trial_length.max(1),
        reset_hidden_each_episode: false,
    };
    let records = run_parallel(env, plans, ro, opts.workers)?;
    let mut counts = vec![vec![0usize; k]; k];
    for rec in &records {
        let b = rec.buffers[0].as_ref().expect("focal seat is a network");
        for t in b.episode_range(b.episodes - 1) {
            for (p, truth) in b.predicted_at(t).iter().zip(&b.others_true) {
                if let Some(c) = truth {
                    counts[*c][*p] += 1;
                }
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|row| {
            let n: usize = row.iter().sum();
            if n == 0 {
                vec![1.0 / k as f64; k]
            } else {
                row.into_iter().map(|c| c as f64 / n as f64).collect()
            }
        })
        .collect())
}

/// Mean of the diagonal of a confusion matrix.
pub fn diagonal_mass(matrix: &[Vec<f64>]) -> f64 {
    matrix.iter().enumerate().map(|(i, r)| r[i]).sum::<f64>() / matrix.len().max(1) as f64
}

/// Labeled CSV: a header of predicted-role names, then one row per true role.
pub fn confusion_csv(labels: &[String], matrix: &[Vec<f64>]) -> String {
    let mut wr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["true_role".to_string()];
    header.extend(labels.iter().cloned());
    wr.write_record(&header).expect("in-memory write");
    for (label, row) in labels.iter().zip(matrix) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(f64::to_string));
        wr.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(wr.into_inner().expect("in-memory flush")).expect("utf8")
}

/// Class probabilities of each other agent from raw logits.
pub fn class_probabilities(logits: &[f64], k: usize) -> Vec<Vec<f64>> {
    logits.chunks(k).map(softmax_logits).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Architecture;

    #[test]
    fn uniform_logits_cost_ln_k() {
        let l = predictor_loss(&[vec![0.0; 8]], &[3]).unwrap();
        assert!((l - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_cost_nothing() {
        let mut row = vec![-1e4; 8];
        row[5] = 1e4;
        assert_eq!(predictor_loss(&[row], &[5]).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        assert!(predictor_loss(&[vec![0.0; 4]], &[4]).is_err());
    }

    #[test]
    fn two_agent_shape() {
        let net = PolicyNet::new(Architecture::mini(5, 3, 8, 1), 2);
        let (logits, classes) = predict(&net, &vec![0.1; 64], 2).unwrap();
        assert_eq!(logits.len(), 1);
        assert_eq!(logits[0].len(), 8);
        assert_eq!(classes.len(), 1);
        assert!(predict(&net, &vec![0.1; 63], 2).is_err());
    }

    #[test]
    fn confusion_csv_shape() {
        let labels: Vec<String> = (0..3).map(|i| format!("r{i}")).collect();
        let m = vec![vec![1.0 / 3.0; 3]; 3];
        let text = confusion_csv(&labels, &m);
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("true_role,r0,r1,r2"));
    }
}
