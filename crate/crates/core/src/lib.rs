//! Scheduling non-preemptive arc maintenance on a capacitated network so as
//! to maximize the total flow shipped over a finite horizon.
//!
//! The crate evaluates schedules exactly through a time-expanded max-flow,
//! builds the continuous-time exact model and the time-discretized
//! upper/lower bound models on top of a small exact-rational MILP engine,
//! solves storage-free instances by exhaustive candidate search, and provides
//! the Projection and Centre-of-Mass repair heuristics plus benchmarking
//! helpers.
//!
//! All data and results are exact [`Rational`]s; floating point only shows up
//! in [`bench`] reporting.

pub mod bench;
pub mod error;
pub mod evaluator;
pub mod exact;
pub mod flow;
pub mod heuristics;
pub mod instance;
pub mod milp;
pub mod models;
pub mod rational;
pub mod timegrid;

pub use error::{Error, Result};
pub use instance::{Arc, GeneratorParams, Instance, Job, Network, Schedule};
pub use rational::Rational;
pub use timegrid::{Discretization, OutageMap};
