//! Per-server softmax policy with an explicit idle option, the
//! work-conserving mask, and the log-probability gradients PPO needs.
//!
//! The network emits `N·(M+1)` logits: for server class `j`, entries
//! `j·(M+1) .. j·(M+1)+M` score the queues and the last entry scores idling.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{ActionMatrix, Observation};
use crate::float;
use crate::learn::mlp::{Activations, Mlp};
use crate::netmodel::Network;
use crate::policies::{repair_choices, Policy, PolicyError};
use crate::rng::{SimRng, StreamKey};

/// Denominator floor of the work-conserving mask.
pub const WC_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Masking {
    /// Plain softmax over all queues and idle; infeasible draws are repaired.
    None,
    /// Mass restricted to compatible nonempty queues.
    WorkConserving,
}

/// Masks a distribution over `M` queues down to the nonempty ones. The
/// result has `M+1` entries, the last being idle, which takes whatever mass
/// the floor `eps` leaves over (all of it when every queue is empty).
pub fn wc_mask(probs: &[f64], q: &[u32], eps: f64) -> Vec<f64> {
    let eligible: Vec<bool> = q.iter().map(|&x| x > 0).collect();
    mask_eligible(probs, &eligible, eps)
}

fn mask_eligible(probs: &[f64], eligible: &[bool], eps: f64) -> Vec<f64> {
    let s: f64 = probs.iter().zip(eligible).filter(|(_, &e)| e).map(|(p, _)| p).sum();
    let denom = s.max(eps);
    let mut out: Vec<f64> = probs
        .iter()
        .zip(eligible)
        .map(|(&p, &e)| if e { p / denom } else { 0.0 })
        .collect();
    let idle = if s >= eps { 0.0 } else { 1.0 - s / eps };
    out.push(idle);
    out
}

/// Target of the behavior-cloning warm start for server class `j`: a softmax
/// of queue lengths over compatible queues, or idle-only when they are all
/// empty.
pub fn bc_target(net: &Network, q: &[u32], j: usize) -> Vec<f64> {
    let m = net.num_queues();
    let mut out = vec![0.0; m + 1];
    let compat: Vec<usize> = (0..m).filter(|&i| net.compatible(i, j)).collect();
    if compat.iter().all(|&i| q[i] == 0) {
        out[m] = 1.0;
        return out;
    }
    let top = compat.iter().map(|&i| q[i]).max().unwrap_or(0) as f64;
    let mut total = 0.0;
    for &i in &compat {
        out[i] = float::exp(q[i] as f64 - top);
        total += out[i];
    }
    out.iter_mut().for_each(|x| *x /= total);
    out
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = z.iter().map(|x| float::exp(x - top)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// Action distribution of one server class.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerDist {
    /// Softmax of the raw logits.
    pub raw: Vec<f64>,
    /// Distribution actually sampled (equals `raw` without masking).
    pub probs: Vec<f64>,
    // eligibility mask and its raw mass when the WC mask applies
    eligible: Option<(Vec<bool>, f64)>,
}

impl ServerDist {
    fn new(logits: &[f64], eligible: Option<Vec<bool>>) -> Self {
        let raw = softmax(logits);
        match eligible {
            None => ServerDist {
                probs: raw.clone(),
                raw,
                eligible: None,
            },
            Some(e) => {
                let m = raw.len() - 1;
                let probs = mask_eligible(&raw[..m], &e, WC_EPS);
                let s = raw[..m].iter().zip(&e).filter(|(_, &x)| x).map(|(p, _)| p).sum();
                ServerDist {
                    raw,
                    probs,
                    eligible: Some((e, s)),
                }
            }
        }
    }

    /// ∂ ln probs[k] / ∂ logits.
    pub fn grad_log_prob(&self, k: usize) -> Vec<f64> {
        let n = self.raw.len();
        let m = n - 1;
        let mut g: Vec<f64> = match &self.eligible {
            Some((e, s)) if *s >= WC_EPS => {
                let mut w: Vec<f64> =
                    (0..m).map(|l| if e[l] { self.raw[l] / s } else { 0.0 }).collect();
                w.push(0.0);
                w.iter().map(|x| -x).collect()
            }
            Some((e, s)) if k == m => {
                // idle carries 1 − S/ε; ∂S/∂z_l = p_l (1{l eligible} − S)
                let idle = 1.0 - s / WC_EPS;
                if idle <= 0.0 {
                    return vec![0.0; n];
                }
                return (0..n)
                    .map(|l| {
                        let el = l < m && e[l];
                        let ds = self.raw[l] * (if el { 1.0 } else { 0.0 } - s);
                        -ds / (WC_EPS * idle)
                    })
                    .collect();
            }
            _ => self.raw.iter().map(|x| -x).collect(),
        };
        g[k] += 1.0;
        g
    }
}

/// Joint draws of every server class: `counts[j·(M+1)+k]` members of class
/// `j` chose option `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub action: ActionMatrix,
    pub counts: Vec<u32>,
    pub log_prob: f64,
}

/// Softmax policy network.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    pub net: Mlp,
    pub masking: Masking,
    period: Option<f64>,
    queues: usize,
    servers: usize,
}

/// Input features: Q/(1+Q) per queue, then the sine and cosine of the clock
/// phase when arrivals are periodic.
pub fn features(queue_lengths: &[u32], clock: f64, period: Option<f64>) -> Vec<f64> {
    let mut x: Vec<f64> = queue_lengths.iter().map(|&q| q as f64 / (1.0 + q as f64)).collect();
    if let Some(p) = period {
        let phase = core::f64::consts::TAU * clock / p;
        x.push(float::sin(phase));
        x.push(float::cos(phase));
    }
    x
}

pub fn feature_len(net: &Network) -> usize {
    net.num_queues() + if net.arrival_period().is_some() { 2 } else { 0 }
}

impl StochasticPolicy {
    /// Two tanh hidden layers of width `hidden`; small output weights so
    /// the initial distribution is close to uniform.
    pub fn new(net: &Network, masking: Masking, hidden: usize, rng: &mut SimRng) -> Self {
        let m = net.num_queues();
        let n = net.num_servers();
        let mlp = Mlp::new(&[feature_len(net), hidden, hidden, n * (m + 1)], 0.01, rng);
        Self::from_mlp(net, masking, mlp).unwrap()
    }

    /// Wraps an existing network if its shape fits `net`.
    pub fn from_mlp(net: &Network, masking: Masking, mlp: Mlp) -> Option<Self> {
        let m = net.num_queues();
        let n = net.num_servers();
        (mlp.inputs() == feature_len(net) && mlp.outputs() == n * (m + 1)).then(|| StochasticPolicy {
            net: mlp,
            masking,
            period: net.arrival_period(),
            queues: m,
            servers: n,
        })
    }

    pub fn features(&self, obs: &Observation) -> Vec<f64> {
        features(&obs.queue_lengths, obs.clock, self.period)
    }

    pub fn num_queues(&self) -> usize {
        self.queues
    }

    pub fn num_servers(&self) -> usize {
        self.servers
    }

    /// Distributions from precomputed logits.
    pub fn dists_from_logits(&self, net: &Network, q: &[u32], logits: &[f64]) -> Vec<ServerDist> {
        let w = self.queues + 1;
        (0..self.servers)
            .map(|j| {
                let eligible = match self.masking {
                    Masking::None => None,
                    Masking::WorkConserving => {
                        Some((0..self.queues).map(|i| q[i] > 0 && net.compatible(i, j)).collect())
                    }
                };
                ServerDist::new(&logits[j * w..(j + 1) * w], eligible)
            })
            .collect()
    }

    pub fn forward(&self, obs: &Observation) -> Activations {
        self.net.forward_cached(&self.features(obs))
    }

    pub fn distributions(&self, net: &Network, obs: &Observation) -> Vec<ServerDist> {
        let logits = self.net.forward(&self.features(obs));
        self.dists_from_logits(net, &obs.queue_lengths, &logits)
    }

    /// Each member of each class draws independently; the raw draws are
    /// repaired into a feasible action and their joint log-probability is
    /// returned.
    pub fn sample(&self, net: &Network, obs: &Observation, rng: &mut SimRng) -> SampledAction {
        let dists = self.distributions(net, obs);
        sample_from(net, &obs.queue_lengths, &dists, rng)
    }
}

/// Samples pool members from per-class distributions.
pub fn sample_from(net: &Network, q: &[u32], dists: &[ServerDist], rng: &mut SimRng) -> SampledAction {
    let m = net.num_queues();
    let mut counts = vec![0u32; dists.len() * (m + 1)];
    let mut choices = Vec::with_capacity(dists.len());
    let mut log_prob = 0.0;
    for (j, d) in dists.iter().enumerate() {
        let members: Vec<Option<usize>> = (0..net.pool_sizes()[j])
            .map(|_| {
                let k = rng.categorical(&d.probs);
                counts[j * (m + 1) + k] += 1;
                log_prob += float::ln(d.probs[k]);
                (k < m).then_some(k)
            })
            .collect();
        choices.push(members);
    }
    SampledAction {
        action: repair_choices(net, q, &choices),
        counts,
        log_prob,
    }
}

/// Joint log-probability of recorded draws.
pub fn log_prob(dists: &[ServerDist], counts: &[u32]) -> f64 {
    let w = dists.first().map_or(0, |d| d.probs.len());
    let mut lp = 0.0;
    for (j, d) in dists.iter().enumerate() {
        for k in 0..w {
            let c = counts[j * w + k];
            if c > 0 {
                lp += c as f64 * float::ln(d.probs[k]);
            }
        }
    }
    lp
}

/// Adds `scale · ∂ log π(counts) / ∂ logits` into `out`.
pub fn add_log_prob_grad(dists: &[ServerDist], counts: &[u32], scale: f64, out: &mut [f64]) {
    let w = dists.first().map_or(0, |d| d.probs.len());
    for (j, d) in dists.iter().enumerate() {
        for k in 0..w {
            let c = counts[j * w + k];
            if c > 0 {
                let g = d.grad_log_prob(k);
                for (o, x) in out[j * w..(j + 1) * w].iter_mut().zip(g) {
                    *o += scale * c as f64 * x;
                }
            }
        }
    }
}

/// Σ_j n_j · KL(old_j ‖ new_j); the joint KL of independent pool members.
pub fn kl_divergence(net: &Network, old: &[f64], new: &[ServerDist]) -> f64 {
    let w = new.first().map_or(0, |d| d.probs.len());
    let mut kl = 0.0;
    for (j, d) in new.iter().enumerate() {
        let mut part = 0.0;
        for k in 0..w {
            let p = old[j * w + k];
            if p > 0.0 {
                part += p * (float::ln(p) - float::ln(d.probs[k].max(f64::MIN_POSITIVE)));
            }
        }
        kl += net.pool_sizes()[j] as f64 * part;
    }
    kl
}

/// Adds `scale · ∂ KL / ∂ logits` into `out`.
pub fn add_kl_grad(net: &Network, old: &[f64], new: &[ServerDist], scale: f64, out: &mut [f64]) {
    let w = new.first().map_or(0, |d| d.probs.len());
    for (j, d) in new.iter().enumerate() {
        let n = net.pool_sizes()[j] as f64;
        for k in 0..w {
            let p = old[j * w + k];
            if p > 0.0 && d.probs[k] > 0.0 {
                let g = d.grad_log_prob(k);
                for (o, x) in out[j * w..(j + 1) * w].iter_mut().zip(g) {
                    *o -= scale * n * p * x;
                }
            }
        }
    }
}

/// A [`StochasticPolicy`] paired with its own sampling stream, usable
/// wherever a [`Policy`] is expected.
#[derive(Debug, Clone)]
pub struct SoftmaxPolicy {
    pub policy: StochasticPolicy,
    rng: SimRng,
}

impl SoftmaxPolicy {
    pub fn new(policy: StochasticPolicy, seed: u64) -> Self {
        SoftmaxPolicy {
            policy,
            rng: SimRng::substream(seed, StreamKey::Policy),
        }
    }
}

impl Policy for SoftmaxPolicy {
    fn act(&mut self, net: &Network, obs: &Observation) -> Result<ActionMatrix, PolicyError> {
        let s = self.policy.sample(net, obs, &mut self.rng);
        if !s.log_prob.is_finite() {
            return Err(PolicyError::NonFinite);
        }
        Ok(s.action)
    }

    fn reset(&mut self, seed: u64) {
        self.rng = SimRng::substream(seed, StreamKey::Policy);
    }
}
