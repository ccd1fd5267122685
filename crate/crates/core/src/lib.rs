//! Concrete and symbolic execution of feed-forward ReLU networks.
//!
//! Networks are loaded from a directory holding `model.json` plus raw `f64`
//! parameter files ([`model`]), run concretely ([`exec`]) or symbolically
//! with chosen inputs or parameters marked symbolic ([`symexec`]). Branches at
//! ReLU and max-pool units produce linear path constraints ([`symexpr`]) that
//! an exact rational simplex decides ([`solver`]). [`analyses`] builds
//! adversarial-example search, local robustness checks and neuron coverage
//! on top.

pub mod analyses;
pub mod config;
pub mod error;
pub mod exec;
pub mod golden;
pub mod model;
pub mod solver;
pub mod symexec;
pub mod symexpr;

pub use error::{Error, Result};
