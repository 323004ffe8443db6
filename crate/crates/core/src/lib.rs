//! Semantic channel equalization on a grid-world control task.

pub mod channel;
pub mod checkpoint;
pub mod config;
pub mod episode;
pub mod equalizer;
pub mod error;
pub mod gridworld;
pub mod harness;
pub mod language;
pub mod nn;
pub mod partition;
pub mod pipeline;
pub mod report;
pub mod seed;

pub use error::{Error, Result};
