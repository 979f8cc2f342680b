//! Event-driven simulator and controllers for multiclass queueing networks.
//!
//! The crate is `no_std` (it needs `alloc`) so the simulation kernel, the
//! scheduling policies, the fluid LP planner and the policy-gradient learner
//! can be embedded anywhere. File formats, the CLI and parallel campaigns
//! live in the `qnet-bench` companion crate.
//!
//! ```text
//!  Network ──► Simulator::step(action) ──► StepOutcome ──► TrajectoryMetrics
//!                    ▲
//!                    │ ActionMatrix
//!   Observation ──► Policy (cμ, MaxWeight, MaxPressure, fluid, softmax)
//! ```

#![no_std]

extern crate alloc;

pub mod engine;
pub mod eval;
pub mod fluid;
pub mod learn;
pub mod matrix;
pub mod netmodel;
pub mod policies;
pub mod rng;

mod float;

pub use engine::{
    ActionMatrix, EngineError, Event, Horizon, JobSelection, Observation, SimState, Simulator,
    StepOutcome,
};
pub use eval::{evaluate, run_trajectory, EvalError, EvaluationReport, TrajectoryMetrics};
pub use matrix::Matrix;
pub use netmodel::{ArrivalSpec, Network, NetworkSpec, ServiceSpec, SpecError};
pub use policies::{assign, Policy, PolicyError, PolicyKind, PriorityMatrix};
pub use rng::SimRng;
