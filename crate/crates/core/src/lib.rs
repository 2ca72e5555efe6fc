//! Generation of neural-cellular-automata token corpora with controllable
//! complexity, plus the transfer-efficiency arithmetic used to evaluate them.
//!
//! The pipeline for one sequence is: [`nca::sample_rule`] draws a random
//! transition network, [`nca::rollout`] iterates it on a random torus grid,
//! [`complexity::sample_in_band`] keeps only rollouts whose gzip ratio lands in
//! the requested band, and [`tokenizer::serialize_trajectory`] turns the grids
//! into patch tokens. [`corpus`] writes many such sequences to binary shards.

pub mod complexity;
pub mod config;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod nca;
pub mod seed;
pub mod tokenizer;

pub use complexity::{gzip_ratio, sample_in_band, ComplexityBand, ComplexityHistogram};
pub use config::{GenConfig, LogitGain};
pub use error::{Error, Result};
pub use nca::{rollout, sample_init, sample_rule, step, Grid, RuleParams, StepMode, Trajectory};
pub use tokenizer::{TokenSequence, VocabSpec};
