//! Communication-metered simulation of distributed PAC learning.
//!
//! `k` players each hold samples from their own distribution over a shared
//! instance space, labeled by one unknown target. They cooperate through a
//! charged [`channel::Channel`] to produce a single hypothesis with low
//! error on the uniform mixture of the player distributions. Every protocol
//! returns a [`model::ProtocolResult`] carrying the final hypotheses, an
//! exact [`channel::CostLedger`], and measured errors.
//!
//! Module map:
//!
//! * [`model`], [`sampling`], [`eval`]: shared domain types, samplers, error measurement.
//! * [`channel`]: messages, bit sizes, rounds and the cost ledger.
//! * [`baseline`]: sample shipping and the equivalence-query driver.
//! * [`closed`]: one-round protocols for intersection-closed classes.
//! * [`parity`]: GF(2) elimination and the two-player non-proper parity protocol.
//! * [`declist`]: the triplet-broadcast decision-list protocol.
//! * [`linear`]: averaging, round-robin margin perceptron, the adversarial margin instance.
//! * [`boosting`]: distributed AdaBoost with quantized weight sums.
//! * [`agnostic`]: robust generalized halving and the interval summary protocol.
//! * [`privacy`]: Laplace-noised statistical queries and private learners.
//! * [`experiment`]: config-driven batch runner behind the `distpac` binary.

pub mod agnostic;
pub mod baseline;
pub mod bits;
pub mod boosting;
pub mod channel;
pub mod closed;
pub mod declist;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod linear;
pub mod model;
pub mod parity;
pub mod privacy;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
