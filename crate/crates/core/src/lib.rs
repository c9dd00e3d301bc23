//! Binary-phase reconfigurable intelligent surface (RIS) toolkit: channel
//! simulation, greedy element and stripe search, a convolutional stripe
//! completion network, dataset generation and an evaluation harness.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod harness;
pub mod nn;
pub mod optimize;
pub mod physics;

pub use error::{Error, Result};
pub use grid::Grid;
