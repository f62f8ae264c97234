//! Command-line driver and HTTP service for batch latent editing sessions.
//!
//! Both front ends call into [`ops`], so a session edited over HTTP and one
//! edited from the shell end up byte-identical given the same requests.

pub mod error;
pub mod ops;
pub mod server;
pub mod store;

pub use error::{ApiError, ApiResult, ErrorCode};
pub use store::SessionStore;
