//! Discrete-time simulation of sales-channel allocation policies under
//! stochastic, channel- and outcome-dependent reward delays.

pub mod domain;
pub mod policies;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod preprocess;
pub mod rng;
pub mod sim;
pub mod world;

pub use domain::{Action, ContextVector, FhatBucket, LeadRecord, LoggedDataset, LoggedEntry, Observation, RewardEvent};
pub use error::{Error, Result};
