//! One-step-ahead forecasting with quantum and classical models.
//!
//! [`qsim`] simulates the variational circuits, [`anneal`] samples QUBOs
//! for the Boltzmann-machine model, [`models`] holds the eight forecasters
//! and [`pipeline`] runs the fold/grid-search protocol over them.

pub mod anneal;
pub mod datagen;
pub mod error;
pub mod models;
pub mod pipeline;
pub mod qsim;

pub use error::{Error, Result};
