//! Role embeddings, role spaces and the reward feature maps ψ.
//!
//! Two families of roles are supported: an angle on the social value
//! orientation ring, and a vector of per-event preferences in {-1, 0, 1}.

mod psi;
mod space;

pub use psi::{inequity_shaped, mean_others, psi_event, psi_event_named, psi_svo, svo_angle, svo_shaped_reward, Shaper, DEFAULT_W, EVENT_REWARDS};
pub use space::{RoleEmbedding, RoleKind, RoleSpace, RoleSpaceConfig, SVO_NAMES};

#[derive(Debug, thiserror::Error)]
pub enum RoleError {
    #[error("role space is empty")]
    EmptySpace,
    #[error("role is not registered in space {0:?}")]
    Unregistered(String),
    #[error("unknown event kind {0:?}")]
    UnknownEvent(String),
    #[error("invalid role space: {0}")]
    Invalid(String),
}
