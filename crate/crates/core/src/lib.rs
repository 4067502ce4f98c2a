//! Capability-driven orchestration for federations of heterogeneous agents.
//!
//! Agents advertise Versioned Capability Vectors ([`capability::Vcv`]) that the
//! orchestrator indexes ([`index`]) and scores ([`routing`]) against the
//! subtasks produced by collaborative decomposition ([`decompose`]). Agents
//! assigned to the same subtask are grouped ([`cluster`]) and refine their
//! drafts over a dedicated channel ([`consensus`]) before the orchestrator
//! merges everything back along the task DAG ([`orchestrator`]). All traffic
//! rides an MQTT-shaped publish/subscribe fabric ([`transport`]).

pub mod agents;
pub mod bench;
pub mod capability;
pub mod cluster;
pub mod consensus;
pub mod decompose;
pub mod error;
pub mod index;
pub mod orchestrator;
pub mod policy;
pub mod routing;
pub mod scenario;
pub mod transport;
pub mod vector;

pub use error::{Error, Result};
