use serde::{Deserialize, Serialize};

use crate::envs::EventCounts;
use crate::roles::{RoleEmbedding, Shaper};

/// Everything one policy-controlled agent saw and did during one trial.
///
/// Per-step vectors all have length `episodes × horizon` once the trial is
/// complete. `inputs` holds the assembled policy input rows back to back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialBuffer {
    pub seat: usize,
    pub num_agents: usize,
    pub episodes: usize,
    pub horizon: usize,
    pub input_len: usize,
    pub role: RoleEmbedding,
    /// True role class of each other agent (agent order, self skipped);
    /// `None` for partners without a role.
    pub others_true: Vec<Option<usize>>,
    pub inputs: Vec<f64>,
    pub actions: Vec<usize>,
    pub logp: Vec<f64>,
    pub values: Vec<f64>,
    pub raw: Vec<f64>,
    /// Raw rewards of every agent, `steps × num_agents`.
    pub raw_all: Vec<f64>,
    pub shaped: Vec<f64>,
    pub events: Vec<EventCounts>,
    pub episode_start: Vec<bool>,
    /// Predicted class per other agent, `steps × (num_agents − 1)`.
    pub predicted: Vec<usize>,
}

impl TrialBuffer {
    pub fn new(
        seat: usize,
        num_agents: usize,
        episodes: usize,
        horizon: usize,
        input_len: usize,
        role: RoleEmbedding,
        others_true: Vec<Option<usize>>,
    ) -> Self {
        let cap = episodes * horizon;
        Self {
            seat,
            num_agents,
            episodes,
            horizon,
            input_len,
            role,
            others_true,
            inputs: Vec::with_capacity(cap * input_len),
            actions: Vec::with_capacity(cap),
            logp: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
            raw: Vec::with_capacity(cap),
            raw_all: Vec::with_capacity(cap * num_agents),
            shaped: Vec::with_capacity(cap),
            events: Vec::with_capacity(cap),
            episode_start: Vec::with_capacity(cap),
            predicted: Vec::with_capacity(cap * num_agents.saturating_sub(1)),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.len() == self.episodes * self.horizon
            && self.inputs.len() == self.len() * self.input_len
            && self.episode_start.len() == self.len()
    }

    pub fn input_row(&self, t: usize) -> &[f64] {
        &self.inputs[t * self.input_len..(t + 1) * self.input_len]
    }

    pub fn rewards_at(&self, t: usize) -> &[f64] {
        &self.raw_all[t * self.num_agents..(t + 1) * self.num_agents]
    }

    pub fn predicted_at(&self, t: usize) -> &[usize] {
        let k = self.num_agents - 1;
        &self.predicted[t * k..(t + 1) * k]
    }

    /// Recomputes every shaped reward from the stored raw rewards.
    pub fn shaping_consistent(&self, shaper: &Shaper) -> bool {
        (0..self.len()).all(|t| {
            shaper.shape(&self.role.kind, self.rewards_at(t), self.seat, &self.events[t]) == self.shaped[t]
        })
    }

    /// Step range of episode `e`.
    pub fn episode_range(&self, e: usize) -> std::ops::Range<usize> {
        e * self.horizon..(e + 1) * self.horizon
    }

    /// Fraction of steps in the final episode where every predicted class
    /// matches the truth, or `None` if no partner has a role.
    pub fn final_episode_accuracy(&self) -> Option<f64> {
        let (hits, total) = self.prediction_hits(self.episode_range(self.episodes - 1));
        (total > 0).then(|| hits as f64 / total as f64)
    }

    /// (correct, counted) per-agent predictions over `steps`.
    pub fn prediction_hits(&self, steps: std::ops::Range<usize>) -> (usize, usize) {
        let mut hits = 0;
        let mut total = 0;
        for t in steps {
            for (p, truth) in self.predicted_at(t).iter().zip(&self.others_true) {
                if let Some(c) = truth {
                    total += 1;
                    hits += usize::from(p == c);
                }
            }
        }
        (hits, total)
    }
}
