//! Soil surface detection and adaptive force-controlled probing.
//!
//! The detection side turns a depth-camera point cloud into a soil plane and
//! an approach point. The control side is a position-based impedance filter
//! whose reference is shaped by an online compliance estimate, plus a
//! single-axis contact simulator for exercising both.

pub mod adaptive;
pub mod config;
pub mod error;
pub mod ground;
pub mod impedance;
pub mod pipeline;
pub mod pointcloud;
pub mod sim;

pub use error::{Error, Result};
