//! Sequential routing over a pool of expert answerers.
//!
//! A question is answered by a chain of experts. The first expert sees the
//! raw question; each later expert sees the question together with the
//! previous answer. A learned policy picks the next expert from the current
//! question/answer text and is trained with clipped PPO against a reward that
//! trades answer quality for compute cost. A learned terminator decides when
//! to stop at inference time.

pub mod benchmark;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod env;
pub mod error;
pub mod experts;
pub mod mdp;
pub mod oracle;
pub mod policy;
pub mod ppo;
pub mod reward;
pub mod terminator;

pub use config::Config;
pub use encoder::{Encoder, EncoderConfig, Features, HashedNgramEncoder};
pub use env::{
    run_episode, run_episodes, step, EpisodeConfig, EpisodeResult, Router, TerminatedBy,
    Termination,
};
pub use error::{BackendError, Error, Result};
pub use experts::{ExpertPool, ExpertProfile, ExpertSpec, RemoteExpert};
pub use mdp::{render_ktp, render_prompt, render_state, Action, Answer, Question, Route, State};
pub use oracle::{optimal_route, route_count, OracleObjective};
pub use policy::{ActionDistribution, Policy, PolicyParams, SelectionMode};
pub use ppo::{train, PpoConfig, ReplayBuffer, TrajectoryStep};
pub use reward::{CostModel, LatentQualityScorer, OverlapScorer, QualityScorer, RewardConfig};
pub use terminator::{train_terminator, Terminator, TerminatorConfig};
