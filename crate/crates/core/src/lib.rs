//! Mixed-variable physics-informed neural networks for 2D plane-strain
//! elasticity with frictionless contact against a rigid obstacle.

pub mod benchmarks;
pub mod cli;
pub mod config;
pub mod contact;
pub mod elasticity;
pub mod error;
pub mod geometry;
pub mod io;
pub mod optimize;
pub mod problem;
pub mod network;

pub use error::{Error, Result};
