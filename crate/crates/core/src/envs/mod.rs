//! Seeded multi-agent environments behind one stepping interface.
//!
//! All environments are fully determined by the seed passed to `reset` plus
//! the joint action sequence. Rewards returned in [`StepResult`] are raw
//! environment rewards; any role shaping happens outside.

pub mod cleanup;
mod config;
mod dump;
mod grid;
pub mod harvest;
pub mod kitchen;
mod matrix;
mod mdp;

pub use cleanup::{CleanUpConfig, CleanUpMini};
pub use config::EnvConfig;
pub use dump::TrajectoryDump;
pub use grid::{Dir, GridAgent};
pub use harvest::{HarvestConfig, HarvestMini};
pub use kitchen::{Held, KitchenConfig, KitchenMini, Tile};
pub use matrix::{IteratedMatrixGame, MatrixConfig, Signature};
pub use mdp::FiniteMDP;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("agent {agent}: action {action} is outside 0..{limit}")]
    IllegalAction {
        agent: usize,
        action: usize,
        limit: usize,
    },
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("episode is done; call reset first")]
    AfterDone,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trajectory dump: {0}")]
    Io(#[from] std::io::Error),
}

/// Event kinds counted per agent per step.
///
/// The first four are the kitchen events that event-preference roles weight;
/// the rest are behavioural counters for the commons games.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PickupIngredient,
    PickupSoup,
    PlaceInPot,
    Delivery,
    Harvest,
    Clean,
    Beam,
}

impl EventKind {
    pub const COUNT: usize = 7;
    pub const ALL: [EventKind; 7] = [
        EventKind::PickupIngredient,
        EventKind::PickupSoup,
        EventKind::PlaceInPot,
        EventKind::Delivery,
        EventKind::Harvest,
        EventKind::Clean,
        EventKind::Beam,
    ];
    pub const KITCHEN: [EventKind; 4] = [
        EventKind::PickupIngredient,
        EventKind::PickupSoup,
        EventKind::PlaceInPot,
        EventKind::Delivery,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::PickupIngredient => "pickup_ingredient",
            EventKind::PickupSoup => "pickup_soup",
            EventKind::PlaceInPot => "place_in_pot",
            EventKind::Delivery => "delivery",
            EventKind::Harvest => "harvest",
            EventKind::Clean => "clean",
            EventKind::Beam => "beam",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

pub type EventCounts = [u32; EventKind::COUNT];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub num_agents: usize,
    pub action_sizes: Vec<usize>,
    pub obs_len: usize,
    pub horizon: usize,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.num_agents < 2 {
            return Err(EnvError::Config(format!("{}: need at least 2 agents", self.name)));
        }
        if self.action_sizes.len() != self.num_agents || self.action_sizes.contains(&0) {
            return Err(EnvError::Config(format!("{}: bad action spaces", self.name)));
        }
        if self.horizon == 0 {
            return Err(EnvError::Config(format!("{}: horizon must be >= 1", self.name)));
        }
        Ok(())
    }

    /// Largest per-agent action space, used to size shared policy heads.
    pub fn max_actions(&self) -> usize {
        self.action_sizes.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub events: Vec<EventCounts>,
    pub done: bool,
}

/// Common stepping interface.
pub trait Environment {
    fn spec(&self) -> &EnvSpec;

    /// Restarts from a state drawn from `seed`.
    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>>;

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError>;

    fn as_finite_mdp(&self) -> Result<FiniteMDP, EnvError> {
        Err(EnvError::Unsupported(format!(
            "{} has no enumerable tabular form",
            self.spec().name
        )))
    }
}

pub(crate) fn check_actions(spec: &EnvSpec, actions: &[usize]) -> Result<(), EnvError> {
    if actions.len() != spec.num_agents {
        return Err(EnvError::ActionCount {
            expected: spec.num_agents,
            got: actions.len(),
        });
    }
    for (agent, (&action, &limit)) in actions.iter().zip(&spec.action_sizes).enumerate() {
        if action >= limit {
            return Err(EnvError::IllegalAction {
                agent,
                action,
                limit,
            });
        }
    }
    Ok(())
}

/// Closed set of the shipped environments, so configs and scripted partners
/// can inspect concrete state.
#[derive(Clone, Debug)]
pub enum AnyEnv {
    Matrix(IteratedMatrixGame),
    Harvest(HarvestMini),
    CleanUp(CleanUpMini),
    Kitchen(KitchenMini),
}

impl AnyEnv {
    fn inner(&self) -> &dyn Environment {
        match self {
            AnyEnv::Matrix(e) => e,
            AnyEnv::Harvest(e) => e,
            AnyEnv::CleanUp(e) => e,
            AnyEnv::Kitchen(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            AnyEnv::Matrix(e) => e,
            AnyEnv::Harvest(e) => e,
            AnyEnv::CleanUp(e) => e,
            AnyEnv::Kitchen(e) => e,
        }
    }
}

impl Environment for AnyEnv {
    fn spec(&self) -> &EnvSpec {
        self.inner().spec()
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        self.inner_mut().reset(seed)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        self.inner_mut().step(actions)
    }

    fn as_finite_mdp(&self) -> Result<FiniteMDP, EnvError> {
        self.inner().as_finite_mdp()
    }
}
