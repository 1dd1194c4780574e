//! Camera-controlled video re-rendering at desk scale.
//!
//! The crate covers the whole loop: procedural multi-camera scenes
//! ([`scenegen`]) filmed along sampled camera paths ([`trajgen`]), a
//! rectified-flow video transformer whose source-video conditioning is a
//! pluggable strategy ([`model`], [`flow`]), the two-stage training recipe
//! ([`train`]) and ground-truth-oracle evaluation ([`eval`]).

pub mod camera;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod flow;
pub mod model;
pub mod rng;
pub mod scenegen;
pub mod train;
pub mod trajgen;
pub mod video;

pub use error::{Error, Result};
