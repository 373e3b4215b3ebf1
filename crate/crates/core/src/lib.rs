//! Deterministic discrete-event simulator for co-serving image and video
//! diffusion requests on a shared GPU cluster.
//!
//! The crate is organized around a profile-driven latency model
//! ([`profile`]), seeded workload generation ([`workload`]), an event-driven
//! cluster engine ([`sim`]), pluggable scheduling policies ([`sched`]),
//! result aggregation ([`metrics`]) and an experiment runner
//! ([`experiment`]) that the CLI wraps.
//!
//! Everything downstream of a `(config, seed)` pair is bit-deterministic:
//! reruns produce byte-identical reports.

pub mod experiment;
pub mod metrics;
pub mod profile;
pub mod sched;
pub mod sim;
pub mod workload;

pub use profile::{LatencyProfile, ProfileError, RequestKind, ResolutionClass};
pub use workload::{Request, RequestId, TraceConfig, WorkloadError};
