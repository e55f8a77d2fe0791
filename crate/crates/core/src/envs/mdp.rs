use serde::{Deserialize, Serialize};

use super::EnvError;

/// Explicit tabular multi-agent game.
///
/// Joint actions are indexed row-major over agents (agent 0 most significant).
/// `transitions[(s·J + j)·S + s']` is `P(s' | s, j)` and `rewards[i][s·J + j]`
/// is agent `i`'s reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteMDP {
    pub num_states: usize,
    pub action_counts: Vec<usize>,
    pub transitions: Vec<f64>,
    pub rewards: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub horizon: usize,
}

const ROW_TOL: f64 = 1e-12;

impl FiniteMDP {
    pub fn new(
        num_states: usize,
        action_counts: Vec<usize>,
        transitions: Vec<f64>,
        rewards: Vec<Vec<f64>>,
        initial: Vec<f64>,
        horizon: usize,
    ) -> Result<Self, EnvError> {
        let mdp = Self {
            num_states,
            action_counts,
            transitions,
            rewards,
            initial,
            horizon,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn num_agents(&self) -> usize {
        self.action_counts.len()
    }

    pub fn joint_count(&self) -> usize {
        self.action_counts.iter().product()
    }

    pub fn joint_index(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.action_counts)
            .fold(0, |acc, (&a, &n)| acc * n + a)
    }

    pub fn decode_joint(&self, mut j: usize) -> Vec<usize> {
        let mut out = vec![0; self.action_counts.len()];
        for (slot, &n) in out.iter_mut().zip(&self.action_counts).rev() {
            *slot = j % n;
            j /= n;
        }
        out
    }

    pub fn transition(&self, s: usize, joint: usize, next: usize) -> f64 {
        self.transitions[(s * self.joint_count() + joint) * self.num_states + next]
    }

    pub fn reward(&self, agent: usize, s: usize, joint: usize) -> f64 {
        self.rewards[agent][s * self.joint_count() + joint]
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let s = self.num_states;
        let j = self.joint_count();
        if s == 0 || self.action_counts.is_empty() || self.action_counts.contains(&0) {
            return Err(EnvError::Config("empty state or action set".into()));
        }
        if self.horizon == 0 {
            return Err(EnvError::Config("horizon must be >= 1".into()));
        }
        if self.transitions.len() != s * j * s {
            return Err(EnvError::Config(format!(
                "transition tensor has {} entries, expected {}",
                self.transitions.len(),
                s * j * s
            )));
        }
        if self.rewards.len() != self.num_agents() || self.rewards.iter().any(|r| r.len() != s * j) {
            return Err(EnvError::Config("reward tensor shape".into()));
        }
        if self.rewards.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EnvError::Config("non-finite reward".into()));
        }
        check_distribution(&self.initial, s, "initial distribution")?;
        for row in self.transitions.chunks(s) {
            check_distribution(row, s, "transition row")?;
        }
        Ok(())
    }
}

fn check_distribution(p: &[f64], len: usize, what: &str) -> Result<(), EnvError> {
    if p.len() != len {
        return Err(EnvError::Config(format!("{what} has length {}, expected {len}", p.len())));
    }
    if p.iter().any(|&v| !(0.0..=1.0 + ROW_TOL).contains(&v)) {
        return Err(EnvError::Config(format!("{what} has an entry outside [0, 1]")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > ROW_TOL {
        return Err(EnvError::Config(format!("{what} sums to {total}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_index_round_trip() {
        let mdp = FiniteMDP::new(
            1,
            vec![2, 3],
            vec![1.0; 6],
            vec![vec![0.0; 6], vec![0.0; 6]],
            vec![1.0],
            2,
        )
        .unwrap();
        for j in 0..6 {
            assert_eq!(mdp.joint_index(&mdp.decode_joint(j)), j);
        }
        assert_eq!(mdp.decode_joint(5), vec![1, 2]);
    }

    #[test]
    fn non_stochastic_rows_are_rejected() {
        let err = FiniteMDP::new(2, vec![1, 1], vec![0.5, 0.4, 0.0, 1.0], vec![vec![0.0; 2]; 2], vec![1.0, 0.0], 1);
        assert!(err.is_err());
    }
}
