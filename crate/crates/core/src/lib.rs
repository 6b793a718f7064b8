//! Core layers of the siat video analytics platform.
//!
//! The crate is organised bottom-up:
//!
//! * [`broker`] is an embedded log-based message broker with consumer groups and
//!   the per-service three-topic lifecycle (`RIVA_<id>`, `RIVA_IR_<id>`, `RIVA_A_<id>`).
//! * [`framewire`] defines frames, mini-batches and the SVB1 binary wire format.
//! * [`acquisition`] turns frame sources into published mini-batches, consumes them
//!   back, and publishes intermediate results and anomalies.
//! * [`catalog`] holds the meta-stores (users, sources, algorithms, services,
//!   subscriptions, IR, anomalies) with role-based access and journaled persistence.
//! * [`userspace`] is the per-user object store with raw video, model and project spaces.
//! * [`processing`] and [`mining`] are the numerical kernels.
//! * [`runtime`] executes services as typed stage chains over consumed batches.
//! * [`knowledge`] maps intermediate results to triples and answers conjunctive queries.

pub mod access;
pub mod acquisition;
pub mod broker;
pub mod catalog;
pub mod framewire;
pub mod knowledge;
pub mod matrix;
pub mod mining;
pub mod processing;
pub mod runtime;
pub mod stages;
pub mod userspace;

pub(crate) mod util;

pub use access::{Actor, Role};
pub use matrix::FeatureMatrix;
