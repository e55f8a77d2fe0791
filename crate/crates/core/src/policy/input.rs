use serde::{Deserialize, Serialize};

use super::Architecture;
use crate::numgrad::NumError;

/// Column offsets of the assembled policy input.
///
/// `[obs | onehot(z_i) | ẑ per other agent | onehot(prev action) | prev reward | boundary]`
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub obs_len: usize,
    pub num_roles: usize,
    pub num_others: usize,
    pub num_actions: usize,
    pub role: usize,
    pub zhat: usize,
    pub prev_action: usize,
    pub prev_reward: usize,
    pub boundary: usize,
}

impl InputLayout {
    pub fn new(obs_len: usize, num_roles: usize, num_others: usize, num_actions: usize) -> Self {
        let role = obs_len;
        let zhat = role + num_roles;
        let prev_action = zhat + num_roles * num_others;
        let prev_reward = prev_action + num_actions;
        Self {
            obs_len,
            num_roles,
            num_others,
            num_actions,
            role,
            zhat,
            prev_action,
            prev_reward,
            boundary: prev_reward + 1,
        }
    }

    pub fn len(&self) -> usize {
        self.boundary + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One step's conditioning for one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyInput {
    pub obs: Vec<f64>,
    /// Own role class index.
    pub role: usize,
    /// Predicted class per other agent; `None` feeds the uniform mixture `1/K`.
    pub zhat: Vec<Option<usize>>,
    pub prev_action: Option<usize>,
    pub prev_reward: f64,
    /// Set on the first step of every episode.
    pub boundary: bool,
}

impl PolicyInput {
    /// Input at the first step of a trial: no history, uniform predictions.
    pub fn trial_start(obs: Vec<f64>, role: usize, arch: &Architecture) -> Self {
        Self {
            obs,
            role,
            zhat: vec![None; arch.num_others],
            prev_action: None,
            prev_reward: 0.0,
            boundary: true,
        }
    }

    pub fn write_into(&self, layout: &InputLayout, out: &mut [f64]) -> Result<(), NumError> {
        if out.len() != layout.len() || self.obs.len() != layout.obs_len {
            return Err(NumError::Shape(format!(
                "policy input: observation {} (expected {}), buffer {} (expected {})",
                self.obs.len(),
                layout.obs_len,
                out.len(),
                layout.len()
            )));
        }
        if self.role >= layout.num_roles || self.zhat.len() != layout.num_others {
            return Err(NumError::Shape("policy input: role or prediction count".into()));
        }
        out.fill(0.0);
        out[..layout.obs_len].copy_from_slice(&self.obs);
        out[layout.role + self.role] = 1.0;
        let k = layout.num_roles;
        for (j, z) in self.zhat.iter().enumerate() {
            let block = &mut out[layout.zhat + j * k..layout.zhat + (j + 1) * k];
            match z {
                Some(c) if *c < k => block[*c] = 1.0,
                Some(c) => return Err(NumError::Shape(format!("predicted class {c} out of range"))),
                None => block.fill(1.0 / k as f64),
            }
        }
        if let Some(a) = self.prev_action {
            if a >= layout.num_actions {
                return Err(NumError::Shape(format!("previous action {a} out of range")));
            }
            out[layout.prev_action + a] = 1.0;
        }
        out[layout.prev_reward] = self.prev_reward;
        out[layout.boundary] = f64::from(u8::from(self.boundary));
        Ok(())
    }

    pub fn to_vec(&self, layout: &InputLayout) -> Result<Vec<f64>, NumError> {
        let mut v = vec![0.0; layout.len()];
        self.write_into(layout, &mut v)?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_uniform_predictions() {
        let arch = Architecture::mini(2, 3, 4, 1);
        let layout = arch.layout();
        assert_eq!(layout.len(), 2 + 4 + 4 + 3 + 2);
        let inp = PolicyInput::trial_start(vec![0.5, -1.0], 2, &arch);
        let v = inp.to_vec(&layout).unwrap();
        assert_eq!(&v[..2], &[0.5, -1.0]);
        assert_eq!(&v[2..6], &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(&v[6..10], &[0.25; 4]);
        assert_eq!(&v[10..13], &[0.0; 3]);
        assert_eq!(v[layout.boundary], 1.0);
    }

    #[test]
    fn bad_role_is_rejected() {
        let arch = Architecture::mini(2, 3, 4, 1);
        let mut inp = PolicyInput::trial_start(vec![0.0, 0.0], 0, &arch);
        inp.role = 4;
        assert!(inp.to_vec(&arch.layout()).is_err());
    }
}
