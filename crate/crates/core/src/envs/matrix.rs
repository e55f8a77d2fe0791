use serde::{Deserialize, Serialize};

use super::{check_actions, EnvError, EnvSpec, Environment, EventKind, FiniteMDP, StepResult};

/// Move families of the social-dilemma preset.
///
/// Each action of that preset is a signature paired with an "ask" flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signature {
    Share,
    Spite,
    Take,
    Give,
}

impl Signature {
    pub const ALL: [Signature; 4] = [Signature::Share, Signature::Spite, Signature::Take, Signature::Give];

    /// Payoff the mover gains for itself.
    pub fn own_gain(self) -> f64 {
        match self {
            Signature::Share => 1.7,
            Signature::Spite => 1.7,
            Signature::Take => 1.8,
            Signature::Give => 1.1,
        }
    }

    /// Payoff the mover adds to (or removes from) the partner.
    pub fn gift(self) -> f64 {
        match self {
            Signature::Share => 0.8,
            Signature::Spite => -0.9,
            Signature::Take => 0.5,
            Signature::Give => 1.2,
        }
    }

    pub fn action(self, ask: bool) -> usize {
        self as usize * 2 + usize::from(ask)
    }

    pub fn of_action(action: usize) -> (Signature, bool) {
        (Self::ALL[action / 2], action % 2 == 1)
    }
}

/// Asking costs this much...
pub const ASK_COST: f64 = 0.2;
/// ...and pays this much when the partner plays [`Signature::Give`].
pub const ASK_BONUS: f64 = 0.4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    /// `"social_dilemma"` or `"custom"`.
    pub preset: String,
    pub horizon: usize,
    /// Actions per agent for the custom preset.
    pub actions: Vec<usize>,
    /// Custom payoffs, `payoffs[agent][joint]` with row-major joint indices.
    pub payoffs: Vec<Vec<f64>>,
    /// Whether observations carry the previous joint action.
    pub observe_actions: bool,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            preset: "social_dilemma".into(),
            horizon: 5,
            actions: Vec::new(),
            payoffs: Vec::new(),
            observe_actions: true,
        }
    }
}

/// Stateless normal-form game repeated for `horizon` rounds.
#[derive(Clone, Debug)]
pub struct IteratedMatrixGame {
    spec: EnvSpec,
    payoffs: Vec<Vec<f64>>,
    observe_actions: bool,
    t: usize,
    last: Option<Vec<usize>>,
}

impl IteratedMatrixGame {
    pub fn new(
        name: &str,
        actions: Vec<usize>,
        payoffs: Vec<Vec<f64>>,
        horizon: usize,
        observe_actions: bool,
    ) -> Result<Self, EnvError> {
        let joint: usize = actions.iter().product();
        if payoffs.len() != actions.len() || payoffs.iter().any(|p| p.len() != joint) {
            return Err(EnvError::Config(format!(
                "{name}: payoffs must be {} x {joint}",
                actions.len()
            )));
        }
        if payoffs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EnvError::Config(format!("{name}: non-finite payoff")));
        }
        let obs_len = if observe_actions { actions.iter().sum() } else { 1 };
        let spec = EnvSpec {
            name: name.to_string(),
            num_agents: actions.len(),
            action_sizes: actions,
            obs_len,
            horizon,
        };
        spec.validate()?;
        Ok(Self {
            spec,
            payoffs,
            observe_actions,
            t: 0,
            last: None,
        })
    }

    /// Two-player game from payoff matrices `a[i][j]` (row player) and `b[i][j]`.
    pub fn bimatrix(a: &[Vec<f64>], b: &[Vec<f64>], horizon: usize) -> Result<Self, EnvError> {
        let n0 = a.len();
        let n1 = a.first().map_or(0, Vec::len);
        if b.len() != n0 || a.iter().chain(b).any(|r| r.len() != n1) {
            return Err(EnvError::Config("bimatrix payoffs must share one shape".into()));
        }
        let p0 = a.iter().flatten().copied().collect();
        let p1 = b.iter().flatten().copied().collect();
        Self::new("matrix", vec![n0, n1], vec![p0, p1], horizon, true)
    }

    /// Two-player, eight-action mixed-motive game.
    ///
    /// `r_i = own_gain(s_i) + gift(s_j) + ask_i · (−ASK_COST + ASK_BONUS·[s_j = Give])`.
    /// Every payoff is nonnegative.
    pub fn social_dilemma(horizon: usize) -> Self {
        let mut p0 = Vec::with_capacity(64);
        let mut p1 = Vec::with_capacity(64);
        for a0 in 0..8 {
            for a1 in 0..8 {
                p0.push(dilemma_payoff(a0, a1));
                p1.push(dilemma_payoff(a1, a0));
            }
        }
        Self::new("matrix_social_dilemma", vec![8, 8], vec![p0, p1], horizon, true)
            .expect("preset is well formed")
    }

    pub fn from_config(cfg: &MatrixConfig) -> Result<Self, EnvError> {
        match cfg.preset.as_str() {
            "social_dilemma" => {
                let mut g = Self::social_dilemma(cfg.horizon);
                g.spec.validate()?;
                if !cfg.observe_actions {
                    g.observe_actions = false;
                    g.spec.obs_len = 1;
                }
                Ok(g)
            }
            "custom" => Self::new(
                "matrix",
                cfg.actions.clone(),
                cfg.payoffs.clone(),
                cfg.horizon,
                cfg.observe_actions,
            ),
            other => Err(EnvError::Config(format!("unknown matrix preset {other:?}"))),
        }
    }

    pub fn joint_index(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.spec.action_sizes)
            .fold(0, |acc, (&a, &n)| acc * n + a)
    }

    pub fn payoff(&self, agent: usize, actions: &[usize]) -> f64 {
        self.payoffs[agent][self.joint_index(actions)]
    }

    /// Previous joint action, if any round has been played.
    pub fn last_actions(&self) -> Option<&[usize]> {
        self.last.as_deref()
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        let m = self.spec.num_agents;
        if !self.observe_actions {
            return vec![vec![0.0]; m];
        }
        (0..m)
            .map(|i| {
                let mut o = vec![0.0; self.spec.obs_len];
                if let Some(last) = &self.last {
                    // Own action first, then the others in agent order.
                    let mut off = 0;
                    for j in std::iter::once(i).chain((0..m).filter(|&j| j != i)) {
                        o[off + last[j]] = 1.0;
                        off += self.spec.action_sizes[j];
                    }
                }
                o
            })
            .collect()
    }
}

fn dilemma_payoff(own: usize, other: usize) -> f64 {
    let (s_own, ask) = Signature::of_action(own);
    let (s_other, _) = Signature::of_action(other);
    let mut r = s_own.own_gain() + s_other.gift();
    if ask {
        r -= ASK_COST;
        if s_other == Signature::Give {
            r += ASK_BONUS;
        }
    }
    r
}

impl Environment for IteratedMatrixGame {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Vec<Vec<f64>> {
        self.t = 0;
        self.last = None;
        self.observe()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        if self.t >= self.spec.horizon {
            return Err(EnvError::AfterDone);
        }
        check_actions(&self.spec, actions)?;
        let j = self.joint_index(actions);
        let rewards = self.payoffs.iter().map(|p| p[j]).collect();
        self.last = Some(actions.to_vec());
        self.t += 1;
        Ok(StepResult {
            observations: self.observe(),
            rewards,
            events: vec![[0; EventKind::COUNT]; self.spec.num_agents],
            done: self.t == self.spec.horizon,
        })
    }

    fn as_finite_mdp(&self) -> Result<FiniteMDP, EnvError> {
        let joint = self.payoffs[0].len();
        FiniteMDP::new(
            1,
            self.spec.action_sizes.clone(),
            vec![1.0; joint],
            self.payoffs.clone(),
            vec![1.0],
            self.spec.horizon,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dilemma_payoffs_are_nonnegative() {
        let g = IteratedMatrixGame::social_dilemma(5);
        assert!(g.payoffs.iter().flatten().all(|&v| v >= -1e-12));
    }

    #[test]
    fn reset_gives_constant_observation() {
        let mut g = IteratedMatrixGame::social_dilemma(5);
        let a = g.reset(1);
        let b = g.reset(99);
        assert_eq!(a, b);
        assert!(a[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn observation_is_egocentric() {
        let mut g = IteratedMatrixGame::social_dilemma(5);
        g.reset(0);
        let res = g.step(&[3, 6]).unwrap();
        assert_eq!(res.observations[0][3], 1.0);
        assert_eq!(res.observations[0][8 + 6], 1.0);
        assert_eq!(res.observations[1][6], 1.0);
        assert_eq!(res.observations[1][8 + 3], 1.0);
    }

    #[test]
    fn horizon_and_after_done() {
        let mut g = IteratedMatrixGame::social_dilemma(3);
        g.reset(0);
        let done: Vec<bool> = (0..3).map(|_| g.step(&[0, 0]).unwrap().done).collect();
        assert_eq!(done, vec![false, false, true]);
        assert!(matches!(g.step(&[0, 0]), Err(EnvError::AfterDone)));
    }

    #[test]
    fn illegal_action_is_rejected() {
        let mut g = IteratedMatrixGame::social_dilemma(3);
        g.reset(0);
        assert!(matches!(g.step(&[8, 0]), Err(EnvError::IllegalAction { .. })));
    }

    #[test]
    fn one_shot_bimatrix_as_mdp() {
        let a = vec![vec![3.0, 0.0], vec![5.0, 1.0]];
        let b = vec![vec![3.0, 5.0], vec![0.0, 1.0]];
        let g = IteratedMatrixGame::bimatrix(&a, &b, 1).unwrap();
        let mdp = g.as_finite_mdp().unwrap();
        assert_eq!(mdp.num_states, 1);
        assert_eq!(mdp.joint_count(), 4);
        assert_eq!(mdp.rewards[0], vec![3.0, 0.0, 5.0, 1.0]);
        assert_eq!(mdp.rewards[1], vec![3.0, 5.0, 0.0, 1.0]);
    }
}
