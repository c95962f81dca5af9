//! Markov-chain model of location-based two-hop relay selection.
//!
//! A mobile node (relay candidate or destination) walks on a grid. It reports
//! noisy positions to an access point through a finite queue, and the access
//! point picks direct or relayed transmission from the last delivered report.
//! The crate builds the joint continuous-time Markov chain of true position and
//! AP view, evaluates throughput metrics of relay policies, and computes
//! optimal policies. A discrete-event simulator of the same system serves as an
//! independent check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod chain;
pub mod ctmc;
pub mod error;
pub mod info_forwarding;
pub mod location_error;
pub mod metrics;
pub mod mobility;
pub mod model;
pub mod montecarlo;
pub mod policy;
pub mod radio;
pub mod scenario;

pub use error::{Error, Result};
pub use metrics::MetricReport;
pub use model::{PolicyKind, ScenarioModel};
pub use policy::{ConditionalMatrix, RelayPolicy};
pub use radio::{LinkModelParams, ThroughputTableSet};
pub use scenario::{load_scenario, Coord, GridScenario, Scenario, StateIndex};
