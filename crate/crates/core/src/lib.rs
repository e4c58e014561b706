//! Delay-dependent stability analysis and observer-based controller design
//! for discrete-time systems with a constant and a time-varying delay.
//!
//! The crate builds linear matrix inequalities from a Lyapunov-Krasovskii
//! functional, solves them with a built-in interior-point method, and checks
//! every certificate independently by simulation.

pub mod cli;
pub mod conditions;
pub mod error;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod sdp;
pub mod selectors;
pub mod simverify;

pub use error::{Error, Result};
