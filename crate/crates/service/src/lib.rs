//! HTTP service and batch tools around the pipeline builder.

pub mod api;
pub mod config;
pub mod store;

pub use api::{router, AppState};
pub use config::{ConfigError, ServiceConfig};
pub use store::{ApiSession, LoggedEvent, SessionStore, StoreError};
