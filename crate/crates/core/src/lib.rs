//! Controlled augment-and-retrain experiments on filler-gap dependencies.
//!
//! The crate covers the whole loop: templated minimal-pair paradigms
//! ([`stimgen`]), corpus synthesis and augmentation ([`corpus`]), a
//! from-scratch LSTM language model ([`neural_lm`]), surprisal-based filler
//! effects ([`scoring`]), sum-coded random-intercept regressions ([`stats`]),
//! result tables and charts ([`report`]), scoring against an external LM
//! service ([`lm_client`]) and the end-to-end pipeline ([`orchestrator`]).
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod condition;
pub mod corpus;
pub mod lm_client;
pub mod neural_lm;
pub mod orchestrator;
pub mod report;
pub mod scoring;
pub mod stats;
pub mod stimgen;

pub use condition::{Condition, Construction, Sign};
