//! Meal-delivery dispatch simulator and learning engine.
//!
//! The crate is organized around a minute-stepped grid world:
//!
//! - [`region`]: grid geometry, static region configuration, synthetic
//!   region generation, region files.
//! - [`demand`]: stochastic order streams (hourly rates, interarrival
//!   sampling, origin/destination sampling, order splitting).
//! - [`sim`]: the event-driven world physics couriers move through.
//! - [`mdp`]: state encoding, action layout, feasibility masks, rewards.
//! - [`neural`]: a dense value network with backprop and an adaptive
//!   optimizer, plus exact checkpointing.
//! - [`replay`]: uniform and rank-based prioritized experience replay.
//! - [`agents`]: the DQN-family algorithm variants and the training kernel.
//! - [`baselines`]: rule-based threshold dispatch policies.
//! - [`experiment`]: training/evaluation protocols, metrics, sweeps.

pub mod agents;
pub mod baselines;
pub mod demand;
pub mod experiment;
pub mod mdp;
pub mod neural;
pub mod region;
pub mod replay;
pub mod seeds;
pub mod sim;

pub use region::{manhattan, GridCoord, RegionConfig};
pub use sim::World;
