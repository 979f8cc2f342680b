//! Trajectory metrics and the evaluation protocol: K seeded trajectories,
//! mean and standard error of the time-averaged total queue length.

use alloc::vec::Vec;

use thiserror::Error;

use crate::engine::{EngineError, Event, Horizon, JobSelection, Simulator, StepOutcome};
use crate::float;
use crate::netmodel::Network;
use crate::policies::{Policy, PolicyError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("trajectory with seed {seed}: {source}")]
    Engine { seed: u64, source: EngineError },
    #[error("trajectory with seed {seed}: {source}")]
    Policy { seed: u64, source: PolicyError },
    #[error("evaluation needs at least two trajectories")]
    TooFewTrajectories,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajectoryMetrics {
    /// ∫ Σ c_i Q_i dt.
    pub total_weighted_cost: f64,
    /// ∫ Σ Q_i dt.
    pub total_queue_area: f64,
    pub elapsed_time: f64,
    pub event_count: u64,
}

impl TrajectoryMetrics {
    pub fn record(&mut self, out: &StepOutcome) {
        self.total_weighted_cost += out.cost;
        self.total_queue_area += out.queue_area;
        self.elapsed_time += out.elapsed;
        if matches!(out.event, Event::Arrival { .. } | Event::Completion { .. }) {
            self.event_count += 1;
        }
    }

    /// Time-averaged total queue length; zero for an empty interval.
    pub fn time_average(&self) -> f64 {
        if self.elapsed_time > 0.0 {
            self.total_queue_area / self.elapsed_time
        } else {
            0.0
        }
    }

    pub fn time_average_cost(&self) -> f64 {
        if self.elapsed_time > 0.0 {
            self.total_weighted_cost / self.elapsed_time
        } else {
            0.0
        }
    }
}

/// Steps the engine under `policy` until the horizon. `on_step` sees every
/// outcome (used for trace logs).
pub fn run_trajectory_with<P: Policy + ?Sized>(
    net: &Network,
    policy: &mut P,
    horizon: Horizon,
    seed: u64,
    selection: JobSelection,
    mut on_step: impl FnMut(&StepOutcome),
) -> Result<TrajectoryMetrics, EvalError> {
    policy.reset(seed);
    let mut sim = Simulator::new(net, seed, horizon).with_selection(selection);
    let mut metrics = TrajectoryMetrics::default();
    let mut obs = sim.observation();
    while !sim.is_done() {
        let action = policy
            .act(net, &obs)
            .map_err(|source| EvalError::Policy { seed, source })?;
        let out = sim
            .step(&action)
            .map_err(|source| EvalError::Engine { seed, source })?;
        metrics.record(&out);
        on_step(&out);
        obs = out.observation;
    }
    Ok(metrics)
}

pub fn run_trajectory<P: Policy + ?Sized>(
    net: &Network,
    policy: &mut P,
    horizon: Horizon,
    seed: u64,
) -> Result<TrajectoryMetrics, EvalError> {
    run_trajectory_with(net, policy, horizon, seed, JobSelection::default(), |_| {})
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub mean: f64,
    pub stderr: f64,
    pub trajectories: usize,
    pub seed_base: u64,
    pub per_trajectory: Vec<TrajectoryMetrics>,
}

impl EvaluationReport {
    /// Aggregates per-trajectory metrics in index order.
    pub fn from_metrics(per_trajectory: Vec<TrajectoryMetrics>, seed_base: u64) -> Self {
        let k = per_trajectory.len();
        let values: Vec<f64> = per_trajectory.iter().map(|m| m.time_average()).collect();
        let (mean, stderr) = mean_stderr(&values);
        EvaluationReport {
            mean,
            stderr,
            trajectories: k,
            seed_base,
            per_trajectory,
        }
    }
}

/// Sample mean and standard error (sample std with n−1, over √n).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, float::sqrt(var) / float::sqrt(n))
}

/// Seed of trajectory `index` in a campaign.
pub fn trajectory_seed(seed_base: u64, index: usize) -> u64 {
    seed_base.wrapping_add(index as u64)
}

/// Sequential evaluation; `make_policy` builds a fresh policy per trajectory.
pub fn evaluate<P: Policy>(
    net: &Network,
    mut make_policy: impl FnMut() -> P,
    trajectories: usize,
    horizon: Horizon,
    seed_base: u64,
) -> Result<EvaluationReport, EvalError> {
    if trajectories < 2 {
        return Err(EvalError::TooFewTrajectories);
    }
    let metrics = (0..trajectories)
        .map(|k| {
            let mut policy = make_policy();
            run_trajectory(net, &mut policy, horizon, trajectory_seed(seed_base, k))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvaluationReport::from_metrics(metrics, seed_base))
}
