//! Fluid-model planning.
//!
//! The fluid model replaces jobs by continuous mass that drains at the
//! allocated service rates. Discretising it on a grid of `G` cells of width
//! `h` gives a linear program in the allocations `u[g][i][j]` and fluid
//! levels `x[g][i]`:
//!
//! ```text
//! x[g+1][i] = x[g][i] + h (λ_i − Σ_j μ_ij u[g][i][j] + Σ_k p_ki Σ_j μ_kj u[g][k][j])
//! Σ_i u[g][i][j] ≤ pool_j,   u, x ≥ 0,   x[0] = Q
//! minimise h Σ_{g<G} Σ_i c_i x[g][i]
//! ```
//!
//! The first cell's allocation is used as the priority matrix, and the plan
//! is re-solved every `resolve_every` decisions.

mod simplex;

use alloc::vec;
use alloc::vec::Vec;

pub use simplex::{Constraint, LinearProgram, LpError, LpSolution, Relation};

use crate::engine::{ActionMatrix, Observation};
use crate::matrix::Matrix;
use crate::netmodel::Network;
use crate::policies::{assign, priority_maxweight, Policy, PolicyError, PriorityMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidConfig {
    pub grid: usize,
    /// Planning horizon; `None` derives it from the current queue lengths.
    pub horizon: Option<f64>,
    pub resolve_every: u64,
}

impl Default for FluidConfig {
    fn default() -> Self {
        FluidConfig {
            grid: 50,
            horizon: None,
            resolve_every: 1000,
        }
    }
}

impl FluidConfig {
    const MIN_HORIZON: f64 = 10.0;
    const MAX_HORIZON: f64 = 200.0;

    /// Twice the time the slowest positive rate needs to clear the longest
    /// queue, clamped to [10, 200].
    pub fn horizon_for(&self, net: &Network, q: &[u32]) -> f64 {
        if let Some(h) = self.horizon {
            return h;
        }
        let min_rate = net
            .rates()
            .as_slice()
            .iter()
            .copied()
            .filter(|&r| r > 0.0)
            .fold(f64::INFINITY, f64::min);
        let max_q = q.iter().copied().max().unwrap_or(0) as f64;
        let h = if min_rate.is_finite() {
            2.0 * max_q / min_rate
        } else {
            0.0
        };
        h.clamp(Self::MIN_HORIZON, Self::MAX_HORIZON)
    }
}

/// Discretised fluid LP with its variable layout.
#[derive(Debug, Clone)]
pub struct FluidLp {
    pub lp: LinearProgram,
    pub grid: usize,
    pub step: f64,
    /// Compatible (queue, server) pairs with a positive rate, in row-major order.
    pub pairs: Vec<(usize, usize)>,
    num_queues: usize,
    num_servers: usize,
    initial: Vec<f64>,
    inflow: Vec<f64>,
    rates: Matrix<f64>,
    routing: Matrix<f64>,
}

impl FluidLp {
    /// Column of u[g][pair].
    pub fn u_index(&self, g: usize, pair: usize) -> usize {
        g * self.pairs.len() + pair
    }

    /// Column of x[g][i] for g in 1..=grid (x[0] is the fixed initial level).
    pub fn x_index(&self, g: usize, i: usize) -> usize {
        debug_assert!(g >= 1);
        self.grid * self.pairs.len() + (g - 1) * self.num_queues + i
    }

    pub fn num_queues(&self) -> usize {
        self.num_queues
    }

    /// Fluid levels x[0..=G] produced by allocation vector `u` (indexed
    /// like the LP's u-columns) under the discretised dynamics.
    pub fn levels(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let mut x = vec![self.initial.clone()];
        for g in 0..self.grid {
            let prev = &x[g];
            let mut next: Vec<f64> = (0..self.num_queues)
                .map(|i| prev[i] + self.step * self.inflow[i])
                .collect();
            for (p, &(i, j)) in self.pairs.iter().enumerate() {
                let flow = self.step * self.rates[(i, j)] * u[self.u_index(g, p)];
                next[i] -= flow;
                for (k, v) in next.iter_mut().enumerate() {
                    *v += flow * self.routing[(i, k)];
                }
            }
            x.push(next);
        }
        x
    }

    /// First-cell allocation as a queue × server matrix.
    pub fn first_allocation(&self, x: &[f64]) -> PriorityMatrix {
        let mut rho = Matrix::zeros(self.num_queues, self.num_servers);
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            rho[(i, j)] = x[self.u_index(0, p)];
        }
        rho
    }
}

/// Builds the fluid LP from the current observation. Arrival rates are the
/// instantaneous rates at the observation's clock.
pub fn build_fluid_lp(net: &Network, obs: &Observation, grid: usize, horizon: f64) -> FluidLp {
    assert!(grid >= 1 && horizon > 0.0);
    let m = net.num_queues();
    let n = net.num_servers();
    let h = horizon / grid as f64;
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| net.compatible(i, j) && net.rate(i, j) > 0.0)
        .collect();
    let initial: Vec<f64> = obs.queue_lengths.iter().map(|&q| q as f64).collect();
    let inflow: Vec<f64> = net.arrivals().iter().map(|a| a.rate_at(obs.clock)).collect();
    let routing = net.routing_matrix().clone();
    let num_vars = grid * pairs.len() + grid * m;

    let mut plan = FluidLp {
        lp: LinearProgram::new(num_vars),
        grid,
        step: h,
        pairs,
        num_queues: m,
        num_servers: n,
        initial,
        inflow,
        rates: net.rates().clone(),
        routing,
    };

    let costs = net.holding_costs();
    plan.lp.constant = h * (0..m).map(|i| costs[i] * plan.initial[i]).sum::<f64>();
    for g in 1..grid {
        for i in 0..m {
            let col = plan.x_index(g, i);
            plan.lp.objective[col] = h * costs[i];
        }
    }

    // dynamics: x[g+1] − x[g] + h Σ μ u (own) − h Σ p μ u (inflow) = h λ
    for g in 0..grid {
        for i in 0..m {
            let mut row = vec![0.0; num_vars];
            row[plan.x_index(g + 1, i)] = 1.0;
            let mut rhs = h * plan.inflow[i];
            if g == 0 {
                rhs += plan.initial[i];
            } else {
                row[plan.x_index(g, i)] = -1.0;
            }
            for (p, &(k, j)) in plan.pairs.iter().enumerate() {
                let col = plan.u_index(g, p);
                let mu = plan.rates[(k, j)];
                if k == i {
                    row[col] += h * mu;
                }
                row[col] -= h * mu * plan.routing[(k, i)];
            }
            plan.lp.push(row, Relation::Eq, rhs);
        }
    }
    // server capacity per cell
    for g in 0..grid {
        for j in 0..n {
            let mut row = vec![0.0; num_vars];
            let mut any = false;
            for (p, &(_, jj)) in plan.pairs.iter().enumerate() {
                if jj == j {
                    row[plan.u_index(g, p)] = 1.0;
                    any = true;
                }
            }
            if any {
                plan.lp.push(row, Relation::Le, net.pool_sizes()[j] as f64);
            }
        }
    }
    plan
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidPlan {
    pub priorities: PriorityMatrix,
    pub value: f64,
    pub horizon: f64,
    pub grid: usize,
}

/// Solves the fluid LP at `obs` and returns the first-cell allocation.
pub fn plan(net: &Network, obs: &Observation, config: &FluidConfig) -> Result<FluidPlan, LpError> {
    let horizon = config.horizon_for(net, &obs.queue_lengths);
    let fl = build_fluid_lp(net, obs, config.grid, horizon);
    let sol = fl.lp.solve()?;
    Ok(FluidPlan {
        priorities: fl.first_allocation(&sol.x),
        value: sol.value,
        horizon,
        grid: config.grid,
    })
}

/// Receding-horizon fluid policy with a cached plan.
#[derive(Debug, Clone)]
pub struct FluidPolicy {
    config: FluidConfig,
    cached: Option<PriorityMatrix>,
    steps: u64,
    fallbacks: u64,
}

impl FluidPolicy {
    pub fn new(config: FluidConfig) -> Self {
        FluidPolicy {
            config,
            cached: None,
            steps: 0,
            fallbacks: 0,
        }
    }

    /// Times the planner was infeasible and MaxWeight priorities were used.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    pub fn priorities(&mut self, net: &Network, obs: &Observation) -> Result<PriorityMatrix, PolicyError> {
        let due = self.cached.is_none() || self.steps.is_multiple_of(self.config.resolve_every.max(1));
        self.steps += 1;
        if due {
            match plan(net, obs, &self.config) {
                Ok(p) => self.cached = Some(p.priorities),
                Err(LpError::Infeasible) => {
                    self.fallbacks += 1;
                    self.cached = None;
                    return Ok(priority_maxweight(net, obs));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(self.cached.clone().unwrap_or_else(|| priority_maxweight(net, obs)))
    }
}

impl Policy for FluidPolicy {
    fn act(&mut self, net: &Network, obs: &Observation) -> Result<ActionMatrix, PolicyError> {
        let rho = self.priorities(net, obs)?;
        Ok(assign(&rho, obs, net))
    }

    fn reset(&mut self, _seed: u64) {
        self.cached = None;
        self.steps = 0;
        self.fallbacks = 0;
    }
}
