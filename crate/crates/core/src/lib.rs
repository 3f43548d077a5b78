//! Neural-network-assisted readout of spin echoes on synthetic signals.
//!
//! - [`sim`] synthesizes Storage/Retrieval echo trains and Hahn-echo I/Q traces.
//! - [`neural`] is a small dense network with backpropagation and Adam.
//! - [`recognition`] turns a raw trace into echo probabilities and bit values.
//! - [`phase`] regresses the echo phase from a windowed I/Q pair.
//! - [`baselines`] holds the non-ML comparison methods and the scoreboard.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and sequentially otherwise; results are identical.

pub mod baselines;
pub mod circular;
pub mod dataset;
pub mod error;
pub mod io;
pub mod neural;
pub mod par;
pub mod phase;
pub mod pipeline;
pub mod recognition;
pub mod rng;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
pub use neural::accuracy;
