//! Recurrent role-conditioned actor-critic with a detached role-predictor head.
//!
//! Per step the network maps the assembled [`PolicyInput`] through a tanh
//! encoder and a gated recurrent cell, then reads action logits and a value
//! from the new hidden state. The predictor head sees the same hidden state
//! with gradients stopped, plus the agent's own role.

mod input;

pub use input::{InputLayout, PolicyInput};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numgrad::{
    argmax, softmax_logits, CellActivation, Checkpoint, GatedCell, Linear, NodeId, NumError, ParamId, ParamStore,
    Tape, Tensor2D,
};

/// Sizes and activation of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub obs_len: usize,
    pub num_actions: usize,
    pub num_roles: usize,
    pub num_others: usize,
    pub encoder: usize,
    pub cell: usize,
    pub predictor_hidden: usize,
    pub activation: CellActivation,
}

impl Architecture {
    /// Desk-scale sizes: 64-unit encoder, cell and predictor.
    pub fn mini(obs_len: usize, num_actions: usize, num_roles: usize, num_others: usize) -> Self {
        Self {
            obs_len,
            num_actions,
            num_roles,
            num_others,
            encoder: 64,
            cell: 64,
            predictor_hidden: 64,
            activation: CellActivation::Silu,
        }
    }

    /// Named size presets. `mini` is the default; the others use the larger
    /// recurrent cells of the full-scale setups.
    pub fn with_preset(mut self, preset: &str) -> Result<Self, NumError> {
        match preset {
            "mini" => {}
            "overcooked" => self.cell = 128,
            "commons" => self.cell = 256,
            other => return Err(NumError::Usage(format!("unknown architecture preset {other:?}"))),
        }
        Ok(self)
    }

    pub fn layout(&self) -> InputLayout {
        InputLayout::new(self.obs_len, self.num_roles, self.num_others, self.num_actions)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActMode {
    Sample,
    Greedy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyState {
    pub h: Vec<f64>,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub probs: Vec<f64>,
    pub value: f64,
    pub state: PolicyState,
    /// New hidden state, the predictor's input.
    pub hidden: Vec<f64>,
    /// Predictor logits, `num_others × num_roles`, agent-major.
    pub pred_logits: Vec<f64>,
}

/// Batched step outputs, one row per stream.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchOutput {
    pub hidden: Tensor2D,
    pub logits: Tensor2D,
    pub values: Vec<f64>,
    pub pred_logits: Tensor2D,
}

pub(crate) struct StepNodes {
    pub h: NodeId,
    pub logits: NodeId,
    pub value: NodeId,
    pub pred: NodeId,
}

/// Parameters plus layer handles.
#[derive(Clone, Debug)]
pub struct PolicyNet {
    pub arch: Architecture,
    pub store: ParamStore,
    encoder: Linear,
    cell: GatedCell,
    pi: Linear,
    v: Linear,
    pred_hidden: Linear,
    pred_out: Linear,
    policy_ids: Vec<ParamId>,
    predictor_ids: Vec<ParamId>,
}

impl PolicyNet {
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let input = arch.layout().len();
        let encoder = Linear::new(&mut store, "encoder", input, arch.encoder, &mut rng);
        let cell = GatedCell::new(&mut store, "cell", arch.encoder, arch.cell, arch.activation, &mut rng);
        let pi = Linear::new(&mut store, "pi", arch.cell, arch.num_actions, &mut rng);
        let v = Linear::new(&mut store, "value", arch.cell, 1, &mut rng);
        let policy_ids: Vec<ParamId> = store.ids().collect();
        let pred_hidden = Linear::new(
            &mut store,
            "predictor.hidden",
            arch.cell + arch.num_roles,
            arch.predictor_hidden,
            &mut rng,
        );
        let pred_out = Linear::new(
            &mut store,
            "predictor.out",
            arch.predictor_hidden,
            arch.num_roles * arch.num_others,
            &mut rng,
        );
        let predictor_ids = store.ids().skip(policy_ids.len()).collect();
        Self {
            arch,
            store,
            encoder,
            cell,
            pi,
            v,
            pred_hidden,
            pred_out,
            policy_ids,
            predictor_ids,
        }
    }

    pub fn policy_ids(&self) -> &[ParamId] {
        &self.policy_ids
    }

    pub fn predictor_ids(&self) -> &[ParamId] {
        &self.predictor_ids
    }

    pub fn input_len(&self) -> usize {
        self.arch.layout().len()
    }

    pub(crate) fn step_nodes(&self, tape: &mut Tape<'_>, h: NodeId, x: NodeId) -> Result<StepNodes, NumError> {
        let layout = self.arch.layout();
        if tape.value(x).cols() != layout.len() {
            return Err(NumError::Shape(format!(
                "policy input has {} columns, expected {}",
                tape.value(x).cols(),
                layout.len()
            )));
        }
        let e_pre = self.encoder.forward(tape, x)?;
        let e = tape.tanh(e_pre);
        let h = self.cell.step(tape, h, e)?;
        let logits = self.pi.forward(tape, h)?;
        let value = self.v.forward(tape, h)?;
        let hd = tape.detach(h);
        let role = tape.slice_cols(x, layout.role, self.arch.num_roles)?;
        let pin = tape.concat_cols(&[hd, role])?;
        let ph_pre = self.pred_hidden.forward(tape, pin)?;
        let ph = tape.relu(ph_pre);
        let pred = self.pred_out.forward(tape, ph)?;
        Ok(StepNodes { h, logits, value, pred })
    }

    /// Predictor logits from hidden states and own-role one-hots, one row each.
    pub fn predictor_logits(&self, hidden: &Tensor2D, role_onehot: &Tensor2D) -> Result<Tensor2D, NumError> {
        if hidden.cols() != self.arch.cell || role_onehot.cols() != self.arch.num_roles || hidden.rows() != role_onehot.rows() {
            return Err(NumError::Shape(format!(
                "predictor input {:?} ⊕ {:?}, expected n×{} ⊕ n×{}",
                hidden.shape(),
                role_onehot.shape(),
                self.arch.cell,
                self.arch.num_roles
            )));
        }
        let mut tape = Tape::new(&self.store);
        let n = self.predictor_nodes(&mut tape, hidden, role_onehot)?;
        Ok(tape.value(n).clone())
    }

    pub(crate) fn predictor_nodes(
        &self,
        tape: &mut Tape<'_>,
        hidden: &Tensor2D,
        role_onehot: &Tensor2D,
    ) -> Result<NodeId, NumError> {
        let h = tape.constant(hidden.clone());
        let r = tape.constant(role_onehot.clone());
        let pin = tape.concat_cols(&[h, r])?;
        let ph_pre = self.pred_hidden.forward(tape, pin)?;
        let ph = tape.relu(ph_pre);
        self.pred_out.forward(tape, ph)
    }

    /// One step for a batch of independent streams.
    pub fn act_batch(&self, inputs: &Tensor2D, hidden: &Tensor2D) -> Result<BatchOutput, NumError> {
        let mut tape = Tape::new(&self.store);
        let x = tape.constant(inputs.clone());
        let h = tape.constant(hidden.clone());
        let n = self.step_nodes(&mut tape, h, x)?;
        Ok(BatchOutput {
            hidden: tape.value(n.h).clone(),
            logits: tape.value(n.logits).clone(),
            values: tape.value(n.value).data().to_vec(),
            pred_logits: tape.value(n.pred).clone(),
        })
    }

    pub fn initial_state(&self) -> PolicyState {
        PolicyState {
            h: vec![0.0; self.arch.cell],
            step: 0,
        }
    }

    /// Clears the recurrent state at a trial boundary.
    pub fn reset_trial(&self, _state: &PolicyState) -> PolicyState {
        self.initial_state()
    }

    /// Single-stream step: chooses an action and advances the hidden state.
    pub fn act<R: Rng + ?Sized>(
        &self,
        input: &PolicyInput,
        state: &PolicyState,
        rng: &mut R,
        mode: ActMode,
    ) -> Result<(usize, PolicyOutput), NumError> {
        let x = Tensor2D::row_vector(input.to_vec(&self.arch.layout())?);
        if state.h.len() != self.arch.cell {
            return Err(NumError::Shape(format!(
                "hidden state has length {}, expected {}",
                state.h.len(),
                self.arch.cell
            )));
        }
        let out = self.act_batch(&x, &Tensor2D::row_vector(state.h.clone()))?;
        let probs = softmax_logits(out.logits.row(0));
        let action = choose(&probs, rng, mode);
        let hidden = out.hidden.row(0).to_vec();
        Ok((
            action,
            PolicyOutput {
                probs,
                value: out.values[0],
                state: PolicyState {
                    h: hidden.clone(),
                    step: state.step + 1,
                },
                hidden,
                pred_logits: out.pred_logits.row(0).to_vec(),
            },
        ))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_store(&self.store);
        ck.metadata.insert(
            "architecture".into(),
            serde_json::to_string(&self.arch).expect("architecture serializes"),
        );
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NumError> {
        let arch_text = ck
            .metadata
            .get("architecture")
            .ok_or_else(|| NumError::Checkpoint("missing architecture metadata".into()))?;
        let arch: Architecture =
            serde_json::from_str(arch_text).map_err(|e| NumError::Checkpoint(e.to_string()))?;
        let mut net = Self::new(arch, 0);
        ck.load_into(&mut net.store)?;
        Ok(net)
    }
}

/// Samples from `probs`, or takes the lowest-index argmax in greedy mode.
pub fn choose<R: Rng + ?Sized>(probs: &[f64], rng: &mut R, mode: ActMode) -> usize {
    match mode {
        ActMode::Greedy => argmax(probs),
        ActMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    last = i;
                }
                acc += p;
                if u < acc {
                    return i;
                }
            }
            last
        }
    }
}

/// Entropy of a probability vector in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> PolicyNet {
        PolicyNet::new(Architecture::mini(6, 4, 3, 1), 7)
    }

    fn input(net: &PolicyNet, obs: Vec<f64>) -> PolicyInput {
        PolicyInput::trial_start(obs, 1, &net.arch)
    }

    #[test]
    fn greedy_ties_pick_lowest() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(choose(&[0.25; 4], &mut rng, ActMode::Greedy), 0);
    }

    #[test]
    fn sampling_matches_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 10_000;
        let ones = (0..n).filter(|_| choose(&[0.25, 0.75], &mut rng, ActMode::Sample) == 1).count();
        let sigma = (n as f64 * 0.75 * 0.25).sqrt();
        assert!((ones as f64 - 0.75 * n as f64).abs() < 3.0 * sigma);
    }

    #[test]
    fn act_is_reproducible_under_seed() {
        let net = net();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut state = net.initial_state();
            let mut actions = Vec::new();
            for t in 0..20 {
                let inp = input(&net, vec![t as f64 * 0.1; 6]);
                let (a, out) = net.act(&inp, &state, &mut rng, ActMode::Sample).unwrap();
                state = out.state;
                actions.push(a);
            }
            actions
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let net = net();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, out) = net
            .act(&input(&net, vec![0.3; 6]), &net.initial_state(), &mut rng, ActMode::Greedy)
            .unwrap();
        assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(out.value.is_finite());
        assert_eq!(out.pred_logits.len(), 3);
    }

    #[test]
    fn reset_matches_fresh_state() {
        let net = net();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, out) = net
            .act(&input(&net, vec![1.0; 6]), &net.initial_state(), &mut rng, ActMode::Greedy)
            .unwrap();
        assert_ne!(out.state, net.initial_state());
        assert_eq!(net.reset_trial(&out.state), net.initial_state());
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let net = net();
        let x = Tensor2D::zeros(1, 3);
        let h = Tensor2D::zeros(1, 64);
        assert!(matches!(net.act_batch(&x, &h), Err(NumError::Shape(_))));
    }

    #[test]
    fn uniform_entropy() {
        assert!((entropy(&[0.125; 8]) - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = net();
        let ck = net.to_checkpoint();
        let back = PolicyNet::from_checkpoint(&Checkpoint::from_json(&ck.to_json().unwrap()).unwrap()).unwrap();
        assert_eq!(back.store, net.store);
        assert_eq!(back.arch, net.arch);
    }
}
