//! Simulation of the feedback loop between a retail recommender and its
//! users.
//!
//! Periodically retrained recommenders ([`recommenders`]) hand ranked lists to
//! users who either adopt a suggestion or choose autonomously through a
//! softmax utility model ([`choice`]). The engine ([`sim`]) advances the world
//! step by step and [`metrics`] measures diversity, concentration and
//! homogenization of the resulting purchase log.

pub mod artifact;
pub mod choice;
pub mod config;
pub mod error;
pub mod ingestion;
pub mod metrics;
pub mod model;
pub mod recommenders;
pub mod rng;
pub mod sim;

pub use config::{CandidateMix, SimulationConfig};
pub use error::{Error, ErrorKind, Result};
pub use model::{
    rebuild_states, ActivitySchedule, Interaction, InteractionLog, ItemId, ItemState, Segment, Source,
    States, UserId, UserState,
};
