//! Soft Actor-Critic agent that tunes the estimator per image.
//!
//! Networks are small MLPs with a hand-written reverse pass over a flat
//! `f64` parameter vector. The histogram branch takes sparse input, and
//! identical histograms within a batch are encoded once.

pub mod agent;
pub mod checkpoint;
pub mod networks;
pub mod nn;
pub mod replay;
pub mod trainer;

pub use agent::{SacAgent, SacConfig, UpdateStats};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use networks::{Actor, Critic, NetConfig, ObsBatch};
pub use replay::{ReplayBuffer, Transition};
pub use trainer::{deploy, Deployment, EpisodeRecord, Trainer, TrainerConfig};
