//! Downlink resource allocation for indoor VCSEL-based optical wireless
//! networks.
//!
//! - [`channel`]: Gaussian-beam line-of-sight link, noise and beam steering.
//! - [`sinr`]: per-user SINR of an assignment, QoS bits and feasibility.
//! - [`exact`]: exhaustive optimal assignment.
//! - [`qlearning`]: tabular Q-learning over the same assignment space.
//! - [`config`], [`presets`] and [`cli`]: scenario files and the command
//!   implementations behind the `owc-alloc` binary.

pub mod channel;
pub mod cli;
pub mod config;
pub mod exact;
pub mod presets;
pub mod qlearning;
pub mod sinr;
