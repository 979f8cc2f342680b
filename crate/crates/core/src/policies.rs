//! Priority-index policies and the linear-assignment rule.
//!
//! A policy emits a priority matrix ρ (queues × server classes). [`assign`]
//! turns it into the feasible action maximising Σ ρ_ij a_ij, solved exactly
//! as a min-cost flow on the queue/server bipartite graph with pool
//! capacities on the server side and queue lengths on the queue side.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::engine::{ActionMatrix, Observation};
use crate::fluid::LpError;
use crate::matrix::Matrix;
use crate::netmodel::Network;
use crate::rng::{SimRng, StreamKey};

pub type PriorityMatrix = Matrix<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("fluid planner failed: {0}")]
    Fluid(#[from] LpError),
    #[error("non-finite policy output")]
    NonFinite,
}

/// A controller: observation in, feasible action out.
pub trait Policy {
    fn act(&mut self, net: &Network, obs: &Observation) -> Result<ActionMatrix, PolicyError>;

    /// Re-seed any internal randomness and drop cached state before a new
    /// trajectory.
    fn reset(&mut self, _seed: u64) {}
}

impl<P: Policy + ?Sized> Policy for alloc::boxed::Box<P> {
    fn act(&mut self, net: &Network, obs: &Observation) -> Result<ActionMatrix, PolicyError> {
        (**self).act(net, obs)
    }

    fn reset(&mut self, seed: u64) {
        (**self).reset(seed)
    }
}

/// Policy names accepted on the command line and in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Cmu,
    MaxWeight,
    MaxPressure,
    Fluid,
    Random,
    SoftmaxWc,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Cmu,
        PolicyKind::MaxWeight,
        PolicyKind::MaxPressure,
        PolicyKind::Fluid,
        PolicyKind::Random,
        PolicyKind::SoftmaxWc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Cmu => "cmu",
            PolicyKind::MaxWeight => "maxweight",
            PolicyKind::MaxPressure => "maxpressure",
            PolicyKind::Fluid => "fluid",
            PolicyKind::Random => "random",
            PolicyKind::SoftmaxWc => "softmax-wc",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown policy '{0}'")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyKind {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownPolicy(s.into()))
    }
}

/// ρ_ij = c_i μ_ij.
pub fn cmu_priorities(costs: &[f64], rates: &Matrix<f64>) -> PriorityMatrix {
    let mut rho = rates.clone();
    for i in 0..rho.rows() {
        for v in rho.row_mut(i) {
            *v *= costs[i];
        }
    }
    rho
}

/// ρ_ij = c_i Q_i μ_ij.
pub fn maxweight_priorities(costs: &[f64], rates: &Matrix<f64>, q: &[u32]) -> PriorityMatrix {
    let mut rho = rates.clone();
    for i in 0..rho.rows() {
        let w = costs[i] * q[i] as f64;
        for v in rho.row_mut(i) {
            *v *= w;
        }
    }
    rho
}

/// ρ_ij = c_i Q_i μ_ij − Σ_k c_k Q_k μ_ij p_ik.
pub fn maxpressure_priorities(
    costs: &[f64],
    rates: &Matrix<f64>,
    routing: &Matrix<f64>,
    q: &[u32],
) -> PriorityMatrix {
    let mut rho = rates.clone();
    for i in 0..rho.rows() {
        let own = costs[i] * q[i] as f64;
        let downstream: f64 = (0..routing.cols())
            .map(|k| costs[k] * q[k] as f64 * routing[(i, k)])
            .sum();
        for v in rho.row_mut(i) {
            let mu = *v;
            *v = own * mu - downstream * mu;
        }
    }
    rho
}

pub fn priority_cmu(net: &Network, _obs: &Observation) -> PriorityMatrix {
    cmu_priorities(net.holding_costs(), net.rates())
}

pub fn priority_maxweight(net: &Network, obs: &Observation) -> PriorityMatrix {
    maxweight_priorities(net.holding_costs(), net.rates(), &obs.queue_lengths)
}

pub fn priority_maxpressure(net: &Network, obs: &Observation) -> PriorityMatrix {
    maxpressure_priorities(
        net.holding_costs(),
        net.rates(),
        net.routing_matrix(),
        &obs.queue_lengths,
    )
}

/// Σ_ij ρ_ij a_ij, summed in row-major order.
pub fn objective(rho: &PriorityMatrix, a: &ActionMatrix) -> f64 {
    rho.as_slice()
        .iter()
        .zip(a.as_slice())
        .map(|(r, &x)| r * x as f64)
        .sum()
}

// Path costs are (priority, tie-break) pairs compared lexicographically.
// Priorities are fixed point so path sums are exact; float sums leave
// rounding-level negative cycles in the residual graph. The tie-break weight
// of a pair shrinks geometrically with its row-major rank among compatible
// pairs, so among equal-value assignments the one using lower
// (queue, server) pairs wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cost(i128, i128);

impl Cost {
    const ZERO: Cost = Cost(0, 0);

    fn add(self, o: Cost) -> Cost {
        Cost(self.0 + o.0, self.1 + o.1)
    }

    fn neg(self) -> Cost {
        Cost(-self.0, -self.1)
    }

    fn lt(self, o: Cost) -> bool {
        (self.0, self.1) < (o.0, o.1)
    }
}

struct Edge {
    to: usize,
    cap: u64,
    cost: Cost,
}

struct FlowGraph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        FlowGraph {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: u64, cost: Cost) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge {
            to: from,
            cap: 0,
            cost: cost.neg(),
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Successive shortest paths (Bellman-Ford on the residual graph),
    /// stopping once the cheapest augmenting path is no longer negative.
    fn max_weight_flow(&mut self, source: usize, sink: usize) {
        let n = self.adj.len();
        let mut dist = vec![None::<Cost>; n];
        let mut via = vec![usize::MAX; n];
        loop {
            dist.iter_mut().for_each(|d| *d = None);
            dist[source] = Some(Cost::ZERO);
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    let Some(du) = dist[u] else { continue };
                    for &e in &self.adj[u] {
                        let edge = &self.edges[e];
                        if edge.cap == 0 {
                            continue;
                        }
                        let cand = du.add(edge.cost);
                        if dist[edge.to].is_none_or(|d| cand.lt(d)) {
                            dist[edge.to] = Some(cand);
                            via[edge.to] = e;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            match dist[sink] {
                Some(d) if d.lt(Cost::ZERO) => {}
                _ => return,
            }
            let mut push = u64::MAX;
            let mut v = sink;
            let mut hops = 0;
            while v != source {
                let e = via[v];
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
                hops += 1;
                if hops > n {
                    // predecessor cycle from a rounding-level negative cycle
                    return;
                }
            }
            let mut v = sink;
            while v != source {
                let e = via[v];
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                v = self.edges[e ^ 1].to;
            }
        }
    }
}

/// Feasible action maximising Σ ρ_ij a_ij. Pairs with ρ_ij ≤ 0 are never
/// used, each queue gets at most Q_i servers and class j at most its pool.
pub fn assign(rho: &PriorityMatrix, obs: &Observation, net: &Network) -> ActionMatrix {
    let m = net.num_queues();
    let n = net.num_servers();
    let q = &obs.queue_lengths;
    let source = 0;
    let sink = m + n + 1;
    let mut g = FlowGraph::new(m + n + 2);
    let mut pair_edges = Vec::new();
    let mut rank = 0u32;
    // largest |ρ| maps just below 2^61
    let top = rho.as_slice().iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
    let shift = 61 - libm::frexp(top).1;
    let fixed = |r: f64| libm::round(libm::ldexp(r, shift)) as i128;
    for i in 0..m {
        for j in 0..n {
            if !net.compatible(i, j) {
                continue;
            }
            let r = rho[(i, j)];
            let cap = (q[i] as u64).min(net.pool_sizes()[j] as u64);
            if r > 0.0 && cap > 0 {
                let tie = 1i128 << (100 - rank.min(100));
                let e = g.add(1 + i, 1 + m + j, cap, Cost(-fixed(r), -tie));
                pair_edges.push((i, j, e));
            }
            rank += 1;
        }
    }
    let mut a = Matrix::zeros(m, n);
    if pair_edges.is_empty() {
        return a;
    }
    for i in 0..m {
        if q[i] > 0 {
            g.add(source, 1 + i, q[i] as u64, Cost::ZERO);
        }
    }
    for j in 0..n {
        g.add(1 + m + j, sink, net.pool_sizes()[j] as u64, Cost::ZERO);
    }
    g.max_weight_flow(source, sink);
    for (i, j, e) in pair_edges {
        a[(i, j)] = g.edges[e ^ 1].cap as u32;
    }
    a
}

/// Turns per-server draws into a feasible action. `choices[j]` lists the
/// queue drawn by each member of class j (`None` = idle); draws on an
/// incompatible queue or beyond the jobs left in a queue become idle.
pub fn repair_choices(net: &Network, q: &[u32], choices: &[Vec<Option<usize>>]) -> ActionMatrix {
    let mut a = Matrix::zeros(net.num_queues(), net.num_servers());
    let mut taken = vec![0u32; net.num_queues()];
    for (j, members) in choices.iter().enumerate() {
        for &choice in members {
            if let Some(i) = choice {
                if net.compatible(i, j) && taken[i] < q[i] {
                    taken[i] += 1;
                    a[(i, j)] += 1;
                }
            }
        }
    }
    a
}

/// Which index rule an [`IndexPolicy`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexRule {
    Cmu,
    MaxWeight,
    MaxPressure,
}

/// Priority-index policy followed by the linear-assignment rule.
#[derive(Debug, Clone)]
pub struct IndexPolicy {
    rule: IndexRule,
    // cμ priorities never change; cache them per network
    cached: Option<PriorityMatrix>,
}

impl IndexPolicy {
    pub fn new(rule: IndexRule) -> Self {
        IndexPolicy { rule, cached: None }
    }

    pub fn priorities(&mut self, net: &Network, obs: &Observation) -> PriorityMatrix {
        match self.rule {
            IndexRule::Cmu => self
                .cached
                .get_or_insert_with(|| priority_cmu(net, obs))
                .clone(),
            IndexRule::MaxWeight => priority_maxweight(net, obs),
            IndexRule::MaxPressure => priority_maxpressure(net, obs),
        }
    }
}

impl Policy for IndexPolicy {
    fn act(&mut self, net: &Network, obs: &Observation) -> Result<ActionMatrix, PolicyError> {
        let rho = self.priorities(net, obs);
        Ok(assign(&rho, obs, net))
    }

    fn reset(&mut self, _seed: u64) {
        self.cached = None;
    }
}

/// Every server member picks uniformly among its compatible queues and idling.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: SimRng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: SimRng::substream(seed, StreamKey::Policy),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, net: &Network, obs: &Observation) -> Result<ActionMatrix, PolicyError> {
        let m = net.num_queues();
        let mut choices = Vec::with_capacity(net.num_servers());
        for j in 0..net.num_servers() {
            let options: Vec<Option<usize>> = (0..m)
                .filter(|&i| net.compatible(i, j))
                .map(Some)
                .chain([None])
                .collect();
            let members = (0..net.pool_sizes()[j])
                .map(|_| options[(self.rng.next_u64() % options.len() as u64) as usize])
                .collect();
            choices.push(members);
        }
        Ok(repair_choices(net, &obs.queue_lengths, &choices))
    }

    fn reset(&mut self, seed: u64) {
        self.rng = SimRng::substream(seed, StreamKey::Policy);
    }
}
