//! Static network description and the stochastic primitives it carries.
//!
//! A [`NetworkSpec`] is plain data; [`NetworkSpec::validate`] checks it and
//! derives the routing matrix, producing an immutable [`Network`] that the
//! engine and every policy borrow.
//!
//! Service requirements are unit-mean *workloads*: a job with workload `w`
//! held by a server running at rate `mu[i][j]` needs `w / mu[i][j]` time.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::float;
use crate::matrix::Matrix;
use crate::rng::SimRng;

/// Rate used for queues without exogenous arrivals.
pub const DISABLED_RATE: f64 = 1e-6;

const MIX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("rate mu[{queue}][{server}] > 0 but the topology forbids that pair")]
    MaskViolation { queue: usize, server: usize },
    #[error("bad routing vector for queue {queue}: {reason}")]
    BadRouting { queue: usize, reason: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Piecewise-constant arrival rate, extended cyclically past its last segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseRate {
    durations: Vec<f64>,
    rates: Vec<f64>,
    period: f64,
    cycle_mass: f64,
}

impl PiecewiseRate {
    pub fn new(durations: Vec<f64>, rates: Vec<f64>) -> Result<Self, SpecError> {
        if durations.is_empty() || durations.len() != rates.len() {
            return Err(SpecError::DimensionMismatch(
                "piecewise rate needs one rate per segment",
            ));
        }
        if durations.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(SpecError::InvalidParameter(
                "piecewise segment durations must be positive",
            ));
        }
        if rates.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(SpecError::InvalidParameter(
                "piecewise rates must be nonnegative",
            ));
        }
        let period = durations.iter().sum();
        let cycle_mass: f64 = durations.iter().zip(&rates).map(|(d, r)| d * r).sum();
        if cycle_mass <= 0.0 {
            return Err(SpecError::InvalidParameter(
                "piecewise rate must be positive somewhere",
            ));
        }
        Ok(PiecewiseRate {
            durations,
            rates,
            period,
            cycle_mass,
        })
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Instantaneous rate at time `t`.
    pub fn rate_at(&self, t: f64) -> f64 {
        let (seg, _) = self.locate(t);
        self.rates[seg]
    }

    /// Mean rate over one period.
    pub fn mean_rate(&self) -> f64 {
        self.cycle_mass / self.period
    }

    /// Integrated rate Λ(t) = ∫₀ᵗ λ(s) ds.
    pub fn integrated(&self, t: f64) -> f64 {
        let cycles = float::floor(t / self.period);
        let mut acc = cycles * self.cycle_mass;
        let mut rem = t - cycles * self.period;
        for (d, r) in self.durations.iter().zip(&self.rates) {
            let span = rem.min(*d);
            acc += span * r;
            rem -= span;
            if rem <= 0.0 {
                break;
            }
        }
        acc
    }

    /// Segment index containing `t` and the time left in that segment.
    fn locate(&self, t: f64) -> (usize, f64) {
        let mut offset = t - float::floor(t / self.period) * self.period;
        for (k, d) in self.durations.iter().enumerate() {
            if offset < *d {
                return (k, d - offset);
            }
            offset -= d;
        }
        // rounding put us on the period boundary
        (0, self.durations[0])
    }

    /// Time until the integrated rate, starting from `now`, accumulates
    /// `mass`. Inverts Λ segment by segment.
    fn advance(&self, now: f64, mass: f64) -> f64 {
        let mut need = mass;
        let mut elapsed = 0.0;
        let whole = float::floor(need / self.cycle_mass);
        if whole > 0.0 {
            need -= whole * self.cycle_mass;
            elapsed += whole * self.period;
        }
        let (mut seg, mut left) = self.locate(now);
        loop {
            let r = self.rates[seg];
            let seg_mass = r * left;
            if r > 0.0 && need <= seg_mass {
                return elapsed + need / r;
            }
            need -= seg_mass;
            elapsed += left;
            seg = (seg + 1) % self.durations.len();
            left = self.durations[seg];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalSpec {
    Exponential { rate: f64 },
    Hyperexponential { weights: Vec<f64>, rates: Vec<f64> },
    Deterministic { interval: f64 },
    TimeVarying(PiecewiseRate),
    /// Absolute arrival timestamps, strictly increasing.
    Trace { times: Vec<f64> },
    /// No exogenous arrivals; sampled at [`DISABLED_RATE`].
    Disabled,
}

impl ArrivalSpec {
    fn check(&self) -> Result<(), SpecError> {
        match self {
            ArrivalSpec::Exponential { rate } if !(*rate > 0.0 && rate.is_finite()) => Err(
                SpecError::InvalidParameter("arrival rate must be positive and finite"),
            ),
            ArrivalSpec::Hyperexponential { weights, rates } => {
                check_mixture(weights, rates)?;
                if rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
                    return Err(SpecError::InvalidParameter(
                        "hyperexponential rates must be positive",
                    ));
                }
                Ok(())
            }
            ArrivalSpec::Deterministic { interval } if !(*interval > 0.0 && interval.is_finite()) => {
                Err(SpecError::InvalidParameter(
                    "deterministic interval must be positive",
                ))
            }
            ArrivalSpec::Trace { times } => {
                if times.iter().any(|t| !t.is_finite() || *t < 0.0)
                    || times.windows(2).any(|w| w[1] <= w[0])
                {
                    return Err(SpecError::InvalidParameter(
                        "trace timestamps must be finite, nonnegative and strictly increasing",
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Long-run arrival rate (zero for disabled queues and finite traces).
    pub fn mean_rate(&self) -> f64 {
        match self {
            ArrivalSpec::Exponential { rate } => *rate,
            ArrivalSpec::Hyperexponential { weights, rates } => {
                1.0 / weights.iter().zip(rates).map(|(w, r)| w / r).sum::<f64>()
            }
            ArrivalSpec::Deterministic { interval } => 1.0 / interval,
            ArrivalSpec::TimeVarying(p) => p.mean_rate(),
            ArrivalSpec::Trace { .. } | ArrivalSpec::Disabled => 0.0,
        }
    }

    /// Rate in force at time `t`; what the fluid planner sees.
    pub fn rate_at(&self, t: f64) -> f64 {
        match self {
            ArrivalSpec::TimeVarying(p) => p.rate_at(t),
            other => other.mean_rate(),
        }
    }

    /// Time from `now` until the next arrival. Infinite only for an
    /// exhausted trace.
    pub fn sample_interarrival(&self, now: f64, rng: &mut SimRng) -> f64 {
        match self {
            ArrivalSpec::Exponential { rate } => rng.exp1() / rate,
            ArrivalSpec::Hyperexponential { weights, rates } => {
                let k = rng.categorical(weights);
                rng.exp1() / rates[k]
            }
            ArrivalSpec::Deterministic { interval } => *interval,
            ArrivalSpec::TimeVarying(p) => p.advance(now, rng.exp1()),
            ArrivalSpec::Trace { times } => {
                // the clock is a running float sum, so it can land a hair
                // before the timestamp that just fired
                let guard = now + 1e-9 * now.abs().max(1.0);
                let k = times.partition_point(|&t| t <= guard);
                match times.get(k) {
                    Some(t) => t - now,
                    None => f64::INFINITY,
                }
            }
            ArrivalSpec::Disabled => rng.exp1() / DISABLED_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServiceSpec {
    Exponential,
    /// Mixture of exponentials; the mixture mean must be 1.
    Hyperexponential { weights: Vec<f64>, means: Vec<f64> },
    Deterministic,
}

impl ServiceSpec {
    fn check(&self) -> Result<(), SpecError> {
        if let ServiceSpec::Hyperexponential { weights, means } = self {
            check_mixture(weights, means)?;
            if means.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
                return Err(SpecError::InvalidParameter(
                    "hyperexponential means must be positive",
                ));
            }
            let mean: f64 = weights.iter().zip(means).map(|(w, m)| w * m).sum();
            if (mean - 1.0).abs() > MIX_TOL {
                return Err(SpecError::InvalidParameter(
                    "service workload mixture must have unit mean",
                ));
            }
        }
        Ok(())
    }

    /// Unit-mean workload.
    pub fn sample_workload(&self, rng: &mut SimRng) -> f64 {
        match self {
            ServiceSpec::Exponential => rng.exp1(),
            ServiceSpec::Hyperexponential { weights, means } => {
                let k = rng.categorical(weights);
                rng.exp1() * means[k]
            }
            ServiceSpec::Deterministic => 1.0,
        }
    }
}

fn check_mixture(weights: &[f64], params: &[f64]) -> Result<(), SpecError> {
    if weights.is_empty() || weights.len() != params.len() {
        return Err(SpecError::DimensionMismatch(
            "mixture weights and parameters differ in length",
        ));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > MIX_TOL
    {
        return Err(SpecError::InvalidParameter(
            "mixture weights must be nonnegative and sum to 1",
        ));
    }
    Ok(())
}

/// Unvalidated description of a network. Matrices are queue-major (M×N).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub topology: Matrix<u8>,
    pub rates: Matrix<f64>,
    pub holding_costs: Vec<f64>,
    pub pool_sizes: Vec<u32>,
    /// Queue-length change Δ_i applied when a queue-i job completes.
    pub routing: Vec<Vec<i8>>,
    pub arrivals: Vec<ArrivalSpec>,
    pub services: Vec<ServiceSpec>,
    pub init_queues: Vec<u32>,
}

impl NetworkSpec {
    pub fn validate(self) -> Result<Network, SpecError> {
        let m = self.topology.rows();
        let n = self.topology.cols();
        if m == 0 || n == 0 {
            return Err(SpecError::DimensionMismatch("network needs queues and servers"));
        }
        if self.rates.rows() != m || self.rates.cols() != n {
            return Err(SpecError::DimensionMismatch("rates shape differs from topology"));
        }
        if self.holding_costs.len() != m {
            return Err(SpecError::DimensionMismatch("holding costs need one entry per queue"));
        }
        if self.pool_sizes.len() != n {
            return Err(SpecError::DimensionMismatch("pool sizes need one entry per server class"));
        }
        if self.routing.len() != m || self.routing.iter().any(|d| d.len() != m) {
            return Err(SpecError::DimensionMismatch("routing needs one length-M vector per queue"));
        }
        if self.arrivals.len() != m || self.services.len() != m || self.init_queues.len() != m {
            return Err(SpecError::DimensionMismatch(
                "arrival, service and initial-queue lists need one entry per queue",
            ));
        }
        for i in 0..m {
            for j in 0..n {
                let b = self.topology[(i, j)];
                let mu = self.rates[(i, j)];
                if b > 1 {
                    return Err(SpecError::InvalidParameter("topology entries must be 0 or 1"));
                }
                if !(mu >= 0.0 && mu.is_finite()) {
                    return Err(SpecError::InvalidParameter("rates must be finite and nonnegative"));
                }
                if mu > 0.0 && b == 0 {
                    return Err(SpecError::MaskViolation { queue: i, server: j });
                }
            }
        }
        if self.holding_costs.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(SpecError::InvalidParameter("holding costs must be positive"));
        }
        if self.pool_sizes.contains(&0) {
            return Err(SpecError::InvalidParameter("pool sizes must be at least 1"));
        }
        for a in &self.arrivals {
            a.check()?;
        }
        for s in &self.services {
            s.check()?;
        }

        let mut destination = vec![None; m];
        let mut routing_matrix = Matrix::zeros(m, m);
        for (i, delta) in self.routing.iter().enumerate() {
            let mut plus = None;
            for (k, &d) in delta.iter().enumerate() {
                match (d, k == i) {
                    (-1, true) | (0, false) => {}
                    (-1, false) => {
                        return Err(SpecError::BadRouting {
                            queue: i,
                            reason: "-1 entry away from the completing queue",
                        })
                    }
                    (_, true) => {
                        return Err(SpecError::BadRouting {
                            queue: i,
                            reason: "completing queue must carry -1",
                        })
                    }
                    (1, false) if plus.is_none() => plus = Some(k),
                    (1, false) => {
                        return Err(SpecError::BadRouting {
                            queue: i,
                            reason: "more than one downstream queue",
                        })
                    }
                    _ => {
                        return Err(SpecError::BadRouting {
                            queue: i,
                            reason: "entries must be in {-1, 0, 1}",
                        })
                    }
                }
            }
            if let Some(k) = plus {
                routing_matrix[(i, k)] = 1.0;
            }
            destination[i] = plus;
        }

        Ok(Network {
            spec: self,
            destination,
            routing_matrix,
        })
    }
}

/// Validated network. Immutable and shareable across trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    destination: Vec<Option<usize>>,
    routing_matrix: Matrix<f64>,
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn num_queues(&self) -> usize {
        self.spec.topology.rows()
    }

    pub fn num_servers(&self) -> usize {
        self.spec.topology.cols()
    }

    #[inline]
    pub fn compatible(&self, queue: usize, server: usize) -> bool {
        self.spec.topology[(queue, server)] == 1
    }

    #[inline]
    pub fn rate(&self, queue: usize, server: usize) -> f64 {
        self.spec.rates[(queue, server)]
    }

    pub fn rates(&self) -> &Matrix<f64> {
        &self.spec.rates
    }

    pub fn holding_costs(&self) -> &[f64] {
        &self.spec.holding_costs
    }

    pub fn pool_sizes(&self) -> &[u32] {
        &self.spec.pool_sizes
    }

    pub fn arrivals(&self) -> &[ArrivalSpec] {
        &self.spec.arrivals
    }

    pub fn services(&self) -> &[ServiceSpec] {
        &self.spec.services
    }

    pub fn init_queues(&self) -> &[u32] {
        &self.spec.init_queues
    }

    /// Queue a completed queue-`i` job joins, if any.
    pub fn destination(&self, queue: usize) -> Option<usize> {
        self.destination[queue]
    }

    /// Routing-probability matrix P (rows sum to 0 or 1).
    pub fn routing_matrix(&self) -> &Matrix<f64> {
        &self.routing_matrix
    }

    /// Period of the time-varying arrival pattern, if any queue has one.
    pub fn arrival_period(&self) -> Option<f64> {
        self.spec.arrivals.iter().find_map(|a| match a {
            ArrivalSpec::TimeVarying(p) => Some(p.period()),
            _ => None,
        })
    }
}
