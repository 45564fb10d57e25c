//! Adaptive action chunking.
//!
//! Given `N` candidate action chunks sampled in parallel from a stochastic
//! policy, estimate the per-timestep action entropy, form the running
//! average-entropy curve, and execute only the prefix up to its maximum
//! difference point (never less than the minimum-magnitude bound `xi`).
//!
//! The crate also carries everything needed to exercise the selector end to
//! end: a planar pick-and-place simulator with a scripted expert, a
//! controlled-noise synthetic sampler, a small flow-matching policy trained
//! with hand-written backpropagation, and an experiment runner that writes
//! CSV / JSON-lines results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod entropy;
pub mod error;
pub mod policy;
pub mod runner;
pub mod seed;
pub mod selector;
pub mod sim;

pub use action::{ActionChunk, ActionSpaceSpec, CandidateSet, MagnitudeParams};
pub use entropy::{AverageEntropyCurve, EntropyConfig, EntropyProfile};
pub use error::{Error, Result};
pub use selector::{select_chunk_size, ChunkDecision};
