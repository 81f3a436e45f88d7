//! Compress day-scale timestamped event streams into a short window and
//! replay them in real time.
//!
//! The pipeline has four stages, each in its own module:
//!
//! - [`ingest`]: delimited logs (or the synthetic generator) become a
//!   [`StreamSegment`] of UTC-second events.
//! - [`transform`]: min-max normalization onto `W` one-second buckets,
//!   followed by per-bucket systematic sampling, yields a
//!   [`SimulatedStream`] whose per-second rate matches the original.
//! - [`replay`]: buckets are emitted to a [`Sink`](replay::Sink) one per
//!   second on an absolute schedule.
//! - [`metrics`]: per-second volatility (average, population variance,
//!   standard deviation) and original-versus-simulated fidelity reports.
//!
//! [`store`] persists segments and streams with digest-checked manifests.

pub mod error;
pub mod exec;
pub mod ingest;
pub mod metrics;
pub mod replay;
pub mod store;
pub mod transform;

pub use error::{Error, Result};
pub use exec::Execution;
pub use ingest::{Event, StreamSegment};
pub use transform::{SampleMode, ScaledEvent, SimulatedStream};
