//! Adaptive shape servoing of planar elastic rods.

pub mod centerline;
pub mod controller;
pub mod error;
pub mod estimators;
pub mod features;
pub mod harness;
pub mod plant;
pub mod rod;
pub mod tuner;

pub use error::{Error, Result};
