//! Safe multi-agent bidding and maintenance scheduling.
//!
//! * [`market`]: per-step clearing with uniform pricing.
//! * [`safety`]: projection of maintenance requests onto the feasible set.
//! * [`ddpg`] and [`qlearn`]: the per-agent learners.
//! * [`sim`]: the training loop and its CSV artifacts.
//! * [`config`]: the experiment file format.
//! * [`verify`]: seeded oracle suites shared by the CLI and the tests.

pub mod config;
pub mod ddpg;
pub mod market;
pub mod qlearn;
pub mod safety;
pub mod sim;
pub mod verify;
