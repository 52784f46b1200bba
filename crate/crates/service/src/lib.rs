//! Live inspection service and batch front end over the `convis` library.
//!
//! [`Service`] holds sessions, the job pool and the results store; [`http`]
//! exposes it over HTTP and a WebSocket stream; [`cli`] implements the
//! `convis` command.

pub mod cli;
pub mod config;
pub mod error;
pub mod events;
pub mod http;
pub mod jobs;
mod render;
pub mod service;
pub mod session;
pub mod store;

pub use config::Config;
pub use error::{Result, ServiceError};
pub use events::Event;
pub use jobs::{JobState, OptJob, Progress};
pub use service::{JobRequest, LayerView, PanelBundle, Service, ServiceOptions, ViewOptions};
pub use session::FrameAck;
pub use store::{ResultKey, ResultMeta, ResultsStore};
