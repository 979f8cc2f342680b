//! Event-by-event simulation kernel.
//!
//! Each [`Simulator::step`] takes the controller's [`ActionMatrix`], pairs
//! jobs with servers, advances the clock to the earliest residual event,
//! charges holding cost for the elapsed interval at the pre-event queue
//! lengths, and applies the event. Jobs are tracked individually so pooled
//! servers can share a queue and preempted jobs resume with the workload
//! they had left.

use alloc::vec::Vec;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::netmodel::Network;
use crate::rng::{SimRng, StreamKey};

/// Integer server counts per (queue, server class).
pub type ActionMatrix = Matrix<u32>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("action shape {rows}x{cols} does not match the network")]
    ActionShape { rows: usize, cols: usize },
    #[error("infeasible action: server class {server} assigned to incompatible queue {queue}")]
    Incompatible { queue: usize, server: usize },
    #[error("infeasible action: server class {server} over capacity ({assigned} > {pool})")]
    OverCapacity { server: usize, assigned: u32, pool: u32 },
    #[error("infeasible action: queue {queue} has {jobs} jobs but {assigned} servers")]
    TooManyServers { queue: usize, assigned: u32, jobs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub workload: f64,
    pub arrival_time: f64,
}

/// Which jobs of a queue receive its assigned servers. In both modes the
/// fastest server among those assigned takes the smallest remaining workload
/// of the selected jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JobSelection {
    /// The `k` head-of-line jobs, `k` = servers assigned to the queue.
    #[default]
    Fifo,
    /// The `k` jobs with the smallest remaining workload (SRPT within a queue).
    ShortestRemaining,
}

/// Dual stopping rule: whichever of the event count or clock limit hits first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub max_events: u64,
    pub max_time: f64,
}

impl Horizon {
    pub const DEFAULT_EVENTS: u64 = 50_000;

    pub fn events(n: u64) -> Self {
        Horizon {
            max_events: n,
            max_time: f64::INFINITY,
        }
    }

    pub fn time(t: f64) -> Self {
        Horizon {
            max_events: u64::MAX,
            max_time: t,
        }
    }
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::events(Self::DEFAULT_EVENTS)
    }
}

/// Controller-visible projection of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub clock: f64,
    pub queue_lengths: Vec<u32>,
}

impl Observation {
    pub fn is_empty(&self) -> bool {
        self.queue_lengths.iter().all(|&q| q == 0)
    }

    pub fn total(&self) -> u64 {
        self.queue_lengths.iter().map(|&q| q as u64).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Arrival { queue: usize },
    Completion { queue: usize, routed_to: Option<usize> },
    /// Clock limit reached before the next event.
    Horizon,
    /// No event can ever occur (no arrivals pending, nothing in service).
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub elapsed: f64,
    /// Holding cost Σ c_i Q_i · elapsed at the pre-event queue lengths.
    pub cost: f64,
    /// Σ Q_i · elapsed at the pre-event queue lengths.
    pub queue_area: f64,
    pub event: Event,
    pub terminal: bool,
}

impl StepOutcome {
    pub fn reward(&self) -> f64 {
        -self.cost
    }
}

/// One job in service: `queue[job]` held by a class-`server` server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Service {
    pub queue: usize,
    pub job: usize,
    pub server: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Next {
    Arrival(usize),
    Completion(usize),
}

/// Full dynamic state. `queues[i]` is FIFO by arrival.
#[derive(Debug, Clone)]
pub struct SimState {
    pub clock: f64,
    pub queues: Vec<Vec<Job>>,
    pub residual_arrivals: Vec<f64>,
    pub step_index: u64,
    arrival_rngs: Vec<SimRng>,
    service_rngs: Vec<SimRng>,
    initial_jobs: u64,
    arrived: u64,
    departed: u64,
    routed: u64,
}

impl SimState {
    pub fn new(net: &Network, seed: u64) -> Self {
        let m = net.num_queues();
        let mut arrival_rngs: Vec<SimRng> = (0..m)
            .map(|i| SimRng::substream(seed, StreamKey::Arrival(i)))
            .collect();
        let mut service_rngs: Vec<SimRng> = (0..m)
            .map(|i| SimRng::substream(seed, StreamKey::Service(i)))
            .collect();
        let queues = (0..m)
            .map(|i| {
                (0..net.init_queues()[i])
                    .map(|_| Job {
                        workload: net.services()[i].sample_workload(&mut service_rngs[i]),
                        arrival_time: 0.0,
                    })
                    .collect()
            })
            .collect();
        let residual_arrivals = (0..m)
            .map(|i| net.arrivals()[i].sample_interarrival(0.0, &mut arrival_rngs[i]))
            .collect();
        SimState {
            clock: 0.0,
            queues,
            residual_arrivals,
            step_index: 0,
            arrival_rngs,
            service_rngs,
            initial_jobs: net.init_queues().iter().map(|&q| q as u64).sum(),
            arrived: 0,
            departed: 0,
            routed: 0,
        }
    }

    pub fn queue_lengths(&self) -> Vec<u32> {
        self.queues.iter().map(|q| q.len() as u32).collect()
    }

    pub fn observation(&self) -> Observation {
        Observation {
            clock: self.clock,
            queue_lengths: self.queue_lengths(),
        }
    }

    pub fn jobs_in_system(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    /// Exogenous arrivals so far.
    pub fn arrivals(&self) -> u64 {
        self.arrived
    }

    /// Jobs that left the network.
    pub fn departures(&self) -> u64 {
        self.departed
    }

    /// Completions that moved a job to another queue.
    pub fn transfers(&self) -> u64 {
        self.routed
    }

    /// initial + arrived == departed + in system.
    pub fn is_conserved(&self) -> bool {
        self.initial_jobs + self.arrived == self.departed + self.jobs_in_system()
    }

    /// Total workload still owed by every job in the system.
    pub fn total_workload(&self) -> f64 {
        self.queues.iter().flatten().map(|j| j.workload).sum()
    }
}

/// Checks the action against the mask, the pool capacities and the queue
/// contents, then pairs servers with jobs.
pub fn allocate(
    net: &Network,
    state: &SimState,
    action: &ActionMatrix,
    selection: JobSelection,
) -> Result<Vec<Service>, EngineError> {
    let m = net.num_queues();
    let n = net.num_servers();
    if action.rows() != m || action.cols() != n {
        return Err(EngineError::ActionShape {
            rows: action.rows(),
            cols: action.cols(),
        });
    }
    for j in 0..n {
        let mut used = 0u32;
        for i in 0..m {
            let a = action[(i, j)];
            if a > 0 && !net.compatible(i, j) {
                return Err(EngineError::Incompatible { queue: i, server: j });
            }
            used += a;
        }
        if used > net.pool_sizes()[j] {
            return Err(EngineError::OverCapacity {
                server: j,
                assigned: used,
                pool: net.pool_sizes()[j],
            });
        }
    }

    let mut services = Vec::new();
    let mut servers: Vec<(f64, usize)> = Vec::new();
    let mut jobs: Vec<usize> = Vec::new();
    for (i, queue) in state.queues.iter().enumerate() {
        let assigned: u32 = action.row(i).iter().sum();
        if assigned == 0 {
            continue;
        }
        if assigned as usize > queue.len() {
            return Err(EngineError::TooManyServers {
                queue: i,
                assigned,
                jobs: queue.len(),
            });
        }
        servers.clear();
        for j in 0..n {
            for _ in 0..action[(i, j)] {
                servers.push((net.rate(i, j), j));
            }
        }
        // fastest first; equal rates keep the lower class index first
        servers.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let k = servers.len();
        let by_work =
            |a: &usize, b: &usize| queue[*a].workload.total_cmp(&queue[*b].workload).then(a.cmp(b));
        jobs.clear();
        match selection {
            JobSelection::Fifo => jobs.extend(0..k),
            JobSelection::ShortestRemaining => {
                jobs.extend(0..queue.len());
                if k < jobs.len() {
                    jobs.select_nth_unstable_by(k - 1, by_work);
                    jobs.truncate(k);
                }
            }
        }
        jobs.sort_by(by_work);
        for (&job, &(rate, server)) in jobs.iter().zip(servers.iter()) {
            services.push(Service {
                queue: i,
                job,
                server,
                rate,
            });
        }
    }
    Ok(services)
}

/// Earliest residual event. Arrivals win ties, then the lowest queue index,
/// then the lowest server class.
fn next_event(state: &SimState, services: &[Service]) -> Option<(Next, f64)> {
    let mut best: Option<(Next, f64)> = None;
    for (i, &t) in state.residual_arrivals.iter().enumerate() {
        if t.is_finite() && best.is_none_or(|(_, b)| t < b) {
            best = Some((Next::Arrival(i), t));
        }
    }
    let mut best_service: Option<(usize, f64)> = None;
    for (k, s) in services.iter().enumerate() {
        let t = state.queues[s.queue][s.job].workload / s.rate;
        let better = match best_service {
            None => true,
            Some((b, bt)) => {
                let cur = &services[b];
                t < bt || (t == bt && (s.queue, s.server) < (cur.queue, cur.server))
            }
        };
        if better {
            best_service = Some((k, t));
        }
    }
    if let Some((k, t)) = best_service {
        if best.is_none_or(|(_, b)| t < b) {
            best = Some((Next::Completion(k), t));
        }
    }
    best
}

/// Depletes residuals by `dt` without firing anything.
fn advance(state: &mut SimState, services: &[Service], dt: f64) {
    state.clock += dt;
    for s in services {
        let job = &mut state.queues[s.queue][s.job];
        job.workload = (job.workload - s.rate * dt).max(0.0);
    }
    for t in state.residual_arrivals.iter_mut() {
        *t = (*t - dt).max(0.0);
    }
}

fn apply_event(net: &Network, state: &mut SimState, services: &[Service], next: Next, dt: f64) -> Event {
    advance(state, services, dt);
    match next {
        Next::Arrival(i) => {
            let workload = net.services()[i].sample_workload(&mut state.service_rngs[i]);
            state.queues[i].push(Job {
                workload,
                arrival_time: state.clock,
            });
            state.arrived += 1;
            state.residual_arrivals[i] =
                net.arrivals()[i].sample_interarrival(state.clock, &mut state.arrival_rngs[i]);
            Event::Arrival { queue: i }
        }
        Next::Completion(k) => {
            let s = services[k];
            state.queues[s.queue].remove(s.job);
            let routed_to = net.destination(s.queue);
            match routed_to {
                Some(d) => {
                    let workload = net.services()[d].sample_workload(&mut state.service_rngs[d]);
                    state.queues[d].push(Job {
                        workload,
                        arrival_time: state.clock,
                    });
                    state.routed += 1;
                }
                None => state.departed += 1,
            }
            Event::Completion {
                queue: s.queue,
                routed_to,
            }
        }
    }
}

/// Gym-style environment over a borrowed [`Network`].
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    net: &'a Network,
    state: SimState,
    horizon: Horizon,
    selection: JobSelection,
    done: bool,
}

impl<'a> Simulator<'a> {
    pub fn new(net: &'a Network, seed: u64, horizon: Horizon) -> Self {
        Simulator {
            net,
            state: SimState::new(net, seed),
            horizon,
            selection: JobSelection::default(),
            done: false,
        }
    }

    pub fn with_selection(mut self, selection: JobSelection) -> Self {
        self.selection = selection;
        self
    }

    pub fn network(&self) -> &'a Network {
        self.net
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn observation(&self) -> Observation {
        self.state.observation()
    }

    /// Allocate, pick the next event, charge cost, apply the event.
    pub fn step(&mut self, action: &ActionMatrix) -> Result<StepOutcome, EngineError> {
        let services = allocate(self.net, &self.state, action, self.selection)?;
        let (mut cost_rate, mut queue_sum) = (0.0, 0.0);
        for (i, q) in self.state.queues.iter().enumerate() {
            let len = q.len() as f64;
            cost_rate += self.net.holding_costs()[i] * len;
            queue_sum += len;
        }

        let remaining = self.horizon.max_time - self.state.clock;
        let (event, dt) = match next_event(&self.state, &services) {
            Some((next, dt)) if dt <= remaining => {
                let event = apply_event(self.net, &mut self.state, &services, next, dt);
                (event, dt)
            }
            None if !remaining.is_finite() => (Event::Stalled, 0.0),
            _ => {
                advance(&mut self.state, &services, remaining);
                (Event::Horizon, remaining)
            }
        };
        if !matches!(event, Event::Stalled) {
            self.state.step_index += 1;
        }
        self.done = matches!(event, Event::Horizon | Event::Stalled)
            || self.state.step_index >= self.horizon.max_events
            || self.state.clock >= self.horizon.max_time;

        Ok(StepOutcome {
            observation: self.state.observation(),
            elapsed: dt,
            cost: cost_rate * dt,
            queue_area: queue_sum * dt,
            event,
            terminal: self.done,
        })
    }
}

/// Action with every entry zero.
pub fn idle_action(net: &Network) -> ActionMatrix {
    Matrix::zeros(net.num_queues(), net.num_servers())
}
