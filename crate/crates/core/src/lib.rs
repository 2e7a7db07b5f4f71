//! Three-state threshold social-impact market model.
//!
//! Agents on a periodic square lattice hold an opinion in `{-1, 0, +1}` and
//! update it from their four neighbours plus heavy-tailed private noise.
//! Aggregate opinion changes drive log returns; losses below a threshold
//! are collected into interoccurrence-time statistics and fitted with a
//! Tsallis q-exponential.
//!
//! - [`lattice`]: spins, the update rule and the round loop
//! - [`noise`]: discrete Weierstrass noise and test stubs
//! - [`market`]: prices, returns, trap detection and market-maker resets
//! - [`analysis`]: loss events, threshold calibration and q-exponential fits
//! - [`config`] / [`harness`] / [`output`]: experiment plumbing

pub mod analysis;
pub mod config;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod market;
pub mod noise;
pub mod output;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use lattice::{LatticeState, Spin};
