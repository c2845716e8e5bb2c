//! Data-driven synthesis of event-triggered state-feedback controllers for
//! perturbed linear parameter-varying systems.

pub mod cli;
pub mod data;
pub mod error;
pub mod examples;
pub mod laws;
pub mod linalg;
pub mod lfr;
pub mod lpv;
pub mod sdp;
pub mod synthesis;
pub mod tracking;
pub mod trigger;

pub use error::{Error, Result};
