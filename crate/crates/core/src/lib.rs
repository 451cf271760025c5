pub mod clustering;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod intervention;
pub mod mil;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
