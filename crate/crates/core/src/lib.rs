//! Graph-based conditional imitation learning for unsignalized intersection
//! crossing: a 2D traffic simulator, scene-graph encoding, hand-written
//! neural networks, a scripted expert, behavior-cloning training and
//! closed-loop evaluation.

pub mod checkpoint;
pub mod config;
pub mod demo;
pub mod error;
pub mod eval;
pub mod expert;
pub mod geometry;
pub mod graph;
pub mod manifest;
pub mod nn;
pub mod parallel;
pub mod policy;
pub mod train;
pub mod world;

pub use error::{Error, Result};
