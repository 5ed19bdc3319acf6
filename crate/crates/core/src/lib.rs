//! Sliding-mode-observer detection of false data injection on the V2V link
//! of a two-car automated intersection.

pub mod error;
pub mod linalg;
pub mod model;
pub mod vehicle;
pub mod smo;
pub mod bounds;
pub mod config;
pub mod detect;
pub mod sim;

pub use error::{Error, Result};
pub mod harness;
