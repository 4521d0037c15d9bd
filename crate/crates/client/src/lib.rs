//! Client side of the `qsrv/1` sampling protocol.
//!
//! A job carries a Boltzmann machine (strict upper triangle of `W` plus
//! `h`), the sampler and its parameters, and a seed. The service runs the
//! same code as [`SampleJob::execute`], so remote and local results are
//! identical. [`ServiceSampler`] plugs the service into training as a
//! negative-phase sampler.

mod client;
mod error;
pub mod protocol;

pub use client::{client_submit, Client, ServiceSampler};
pub use error::{ClientError, ErrorCode};
pub use protocol::{Message, SampleJob, SampleResult, SamplerSpec, ServerInfo, VERSION};
