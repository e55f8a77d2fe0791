use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{RoleError, RoleKind};
use crate::envs::{EventCounts, EventKind};

/// Weight on the agent's own reward in [`psi_svo`].
pub const DEFAULT_W: f64 = 0.3;

/// Event rewards `E_k` for the kitchen events, in `EventKind::KITCHEN` order.
pub const EVENT_REWARDS: [f64; 4] = [5.0, 5.0, 3.0, 10.0];

/// `atan2(r, r_bar)`: own reward over others' mean, with `(0, 0) ↦ 0`.
///
/// Diagnostic only; shaping uses [`svo_shaped_reward`] and [`psi_svo`].
pub fn svo_angle(r: f64, r_bar: f64) -> f64 {
    if r == 0.0 && r_bar == 0.0 {
        0.0
    } else {
        r.atan2(r_bar)
    }
}

/// `cos θ · r + sin θ · r_bar`.
pub fn svo_shaped_reward(r: f64, r_bar: f64, theta: f64) -> f64 {
    theta.cos() * r + theta.sin() * r_bar
}

/// `w · r + (1 − w) · |cos z · r + sin z · r_bar|`.
///
/// The absolute value means `z` and `z + π` shape rewards identically.
pub fn psi_svo(r: f64, r_bar: f64, z: f64, w: f64) -> f64 {
    w * r + (1.0 - w) * svo_shaped_reward(r, r_bar, z).abs()
}

/// `r + Σ_k prefs_k · E_k · count_k` over aligned slices.
pub fn psi_event(r: f64, prefs: &[i8], event_rewards: &[f64], counts: &[u32]) -> Result<f64, RoleError> {
    if prefs.len() != event_rewards.len() || prefs.len() > counts.len() {
        return Err(RoleError::Invalid(format!(
            "{} preferences, {} event rewards, {} counts",
            prefs.len(),
            event_rewards.len(),
            counts.len()
        )));
    }
    Ok(r + prefs
        .iter()
        .zip(event_rewards)
        .zip(counts)
        .map(|((&p, &e), &n)| f64::from(p) * e * f64::from(n))
        .sum::<f64>())
}

/// Map-keyed form of [`psi_event`]; keys are event kind names.
pub fn psi_event_named(
    r: f64,
    prefs: &BTreeMap<String, i8>,
    event_rewards: &BTreeMap<String, f64>,
    counts: &BTreeMap<String, u32>,
) -> Result<f64, RoleError> {
    for key in prefs.keys().chain(event_rewards.keys()).chain(counts.keys()) {
        if EventKind::from_name(key).is_none() {
            return Err(RoleError::UnknownEvent(key.clone()));
        }
    }
    if prefs.keys().ne(event_rewards.keys()) {
        return Err(RoleError::Invalid("preferences and event rewards must share keys".into()));
    }
    let mut total = r;
    for (k, &p) in prefs {
        let n = counts.get(k).copied().unwrap_or(0);
        total += f64::from(p) * event_rewards[k] * f64::from(n);
    }
    Ok(total)
}

/// Per-step reward shaping applied to one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shaper {
    /// Raw environment reward.
    Raw,
    Svo { w: f64 },
    Event { rewards: [f64; 4] },
    /// Sum of every agent's raw reward.
    Prosocial,
    InequityAverse { alpha: f64, beta: f64 },
}

impl Shaper {
    /// Shaped reward of agent `i` given every agent's raw reward and its own
    /// event counts. `r_bar` is the mean reward of the other agents.
    pub fn shape(&self, role: &RoleKind, rewards: &[f64], i: usize, counts: &EventCounts) -> f64 {
        let r = rewards[i];
        match (self, role) {
            (Shaper::Raw, _) => r,
            (Shaper::Prosocial, _) => rewards.iter().sum(),
            (Shaper::InequityAverse { alpha, beta }, _) => inequity_shaped(rewards, i, *alpha, *beta),
            (Shaper::Svo { w }, RoleKind::SvoAngle(z)) => psi_svo(r, mean_others(rewards, i), *z, *w),
            (Shaper::Event { rewards: e }, RoleKind::EventPrefs(p)) => {
                let kitchen = EventKind::KITCHEN.map(|k| counts[k.index()]);
                psi_event(r, p, e, &kitchen).expect("aligned kitchen events")
            }
            _ => r,
        }
    }

    /// Shaper matching the family of roles in a space.
    pub fn for_role(role: &RoleKind) -> Self {
        match role {
            RoleKind::SvoAngle(_) => Shaper::Svo { w: DEFAULT_W },
            RoleKind::EventPrefs(_) => Shaper::Event { rewards: EVENT_REWARDS },
        }
    }
}

/// `r_i − [α Σ_j max(0, r_j − r_i) + β Σ_j max(0, r_i − r_j)] / (m − 1)`.
///
/// Returns `r_i` unchanged when there are no other agents.
pub fn inequity_shaped(rewards: &[f64], i: usize, alpha: f64, beta: f64) -> f64 {
    let m = rewards.len();
    let r = rewards[i];
    if m < 2 {
        return r;
    }
    let (mut behind, mut ahead) = (0.0, 0.0);
    for (j, &o) in rewards.iter().enumerate() {
        if j != i {
            behind += (o - r).max(0.0);
            ahead += (r - o).max(0.0);
        }
    }
    r - (alpha * behind + beta * ahead) / (m - 1) as f64
}

/// Arithmetic mean of every reward except `rewards[i]`.
pub fn mean_others(rewards: &[f64], i: usize) -> f64 {
    let m = rewards.len();
    if m < 2 {
        return 0.0;
    }
    (rewards.iter().sum::<f64>() - rewards[i]) / (m - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn svo_angle_examples() {
        assert_eq!(svo_angle(1.0, 1.0), FRAC_PI_4);
        assert_eq!(svo_angle(0.0, 1.0), 0.0);
        assert_eq!(svo_angle(1.0, 0.0), FRAC_PI_2);
        assert_eq!(svo_angle(0.0, 0.0), 0.0);
    }

    #[test]
    fn shaped_reward_examples() {
        assert_eq!(svo_shaped_reward(2.5, -7.0, 0.0), 2.5);
        assert!((svo_shaped_reward(3.0, 2.0, FRAC_PI_2) - 2.0).abs() < 1e-15);
        assert!((svo_shaped_reward(1.0, 1.0, FRAC_PI_4) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn psi_svo_examples() {
        for z in [-PI, -FRAC_PI_4, 0.0, 1.0, FRAC_PI_2] {
            assert_eq!(psi_svo(1.7, -3.0, z, 1.0), 1.7);
        }
        assert_eq!(psi_svo(1.0, 0.0, 0.0, 0.3), 1.0);
        assert!((psi_svo(0.0, 2.0, FRAC_PI_2, 0.3) - 1.4).abs() < 1e-15);
        assert_eq!(psi_svo(-2.0, 5.0, 0.0, 1.0), -2.0);
    }

    #[test]
    fn psi_event_examples() {
        let r = psi_event(4.0, &[0, 0, 0, 0], &EVENT_REWARDS, &[3, 1, 2, 5]).unwrap();
        assert_eq!(r, 4.0);
        assert_eq!(psi_event(10.0, &[0, 0, 0, 1], &EVENT_REWARDS, &[0, 0, 0, 1]).unwrap(), 20.0);
        assert_eq!(psi_event(0.0, &[0, 0, -1, 0], &EVENT_REWARDS, &[0, 0, 1, 0]).unwrap(), -3.0);
    }

    #[test]
    fn psi_event_named_rejects_unknown_kind() {
        let prefs = BTreeMap::from([("teleport".to_string(), 1i8)]);
        let rewards = BTreeMap::from([("teleport".to_string(), 1.0)]);
        let err = psi_event_named(0.0, &prefs, &rewards, &BTreeMap::new());
        assert!(matches!(err, Err(RoleError::UnknownEvent(_))));

        let prefs = BTreeMap::from([("delivery".to_string(), 1i8)]);
        let rewards = BTreeMap::from([("delivery".to_string(), 10.0)]);
        let counts = BTreeMap::from([("delivery".to_string(), 1u32)]);
        assert_eq!(psi_event_named(10.0, &prefs, &rewards, &counts).unwrap(), 20.0);
    }

    #[test]
    fn inequity_examples() {
        assert_eq!(inequity_shaped(&[0.0, 1.0], 0, 5.0, 0.05), -5.0);
        assert_eq!(inequity_shaped(&[0.0, 1.0], 1, 5.0, 0.05), 0.95);
        assert_eq!(inequity_shaped(&[2.0, 2.0, 2.0], 1, 5.0, 0.05), 2.0);
        assert_eq!(inequity_shaped(&[0.3, 4.0, -1.0], 0, 0.0, 0.0), 0.3);
    }

    #[test]
    fn mean_of_others() {
        assert_eq!(mean_others(&[1.0, 3.0], 0), 3.0);
        assert_eq!(mean_others(&[1.0, 3.0, 5.0], 1), 3.0);
    }
}
