//! Rollout storage and the clipped-surrogate / value-regression objectives
//! with their exact gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::Observation;
use crate::float;
use crate::learn::mlp::Mlp;
use crate::learn::policy::{add_kl_grad, add_log_prob_grad, kl_divergence, log_prob, StochasticPolicy};
use crate::netmodel::Network;

/// One episode of experience from one actor. All per-step vectors have the
/// same length; `empty[t]` flags that the observation at step `t` had every
/// queue empty (a regeneration epoch).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    pub observations: Vec<Observation>,
    pub counts: Vec<Vec<u32>>,
    pub log_probs: Vec<f64>,
    /// Sampled distributions, `N·(M+1)` per step, for the KL penalty.
    pub probs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub elapsed: Vec<f64>,
    pub values: Vec<f64>,
    pub empty: Vec<bool>,
    /// V of the state after the last step.
    pub bootstrap: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Time-averaged holding cost over the episode.
    pub fn average_cost(&self) -> f64 {
        let time: f64 = self.elapsed.iter().sum();
        if time > 0.0 {
            -self.rewards.iter().sum::<f64>() / time
        } else {
            0.0
        }
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.len();
        [
            self.observations.len(),
            self.counts.len(),
            self.log_probs.len(),
            self.probs.len(),
            self.elapsed.len(),
            self.values.len(),
            self.empty.len(),
        ]
        .iter()
        .all(|&l| l == n)
    }
}

/// A training sample after advantage estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub observation: Observation,
    pub counts: Vec<u32>,
    pub old_log_prob: f64,
    pub old_probs: Vec<f64>,
    pub advantage: f64,
    pub value_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConfig {
    /// Ratio clip ε; `None` gives the unclipped importance-weighted gradient.
    pub clip: Option<f64>,
    pub kl_beta: f64,
}

/// Mean over `batch` of −min(r·A, clip(r)·A) + β·KL, and its gradient
/// with respect to the policy parameters (added into `grad`).
pub fn surrogate_loss(
    policy: &StochasticPolicy,
    net: &Network,
    batch: &[&Sample],
    cfg: SurrogateConfig,
    grad: Option<&mut [f64]>,
) -> f64 {
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut grad = grad;
    let mut loss = 0.0;
    for s in batch {
        let acts = policy.forward(&s.observation);
        let dists = policy.dists_from_logits(net, &s.observation.queue_lengths, acts.output());
        let lp = log_prob(&dists, &s.counts);
        let ratio = float::exp(lp - s.old_log_prob);
        let a = s.advantage;
        let (term, active) = match cfg.clip {
            None => (ratio * a, true),
            Some(eps) => {
                let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
                let raw = ratio * a;
                if raw <= clipped {
                    (raw, true)
                } else {
                    (clipped, false)
                }
            }
        };
        let kl = if cfg.kl_beta != 0.0 {
            kl_divergence(net, &s.old_probs, &dists)
        } else {
            0.0
        };
        loss += scale * (-term + cfg.kl_beta * kl);
        if let Some(g) = grad.as_deref_mut() {
            let mut dz = vec![0.0; acts.output().len()];
            if active {
                add_log_prob_grad(&dists, &s.counts, -scale * ratio * a, &mut dz);
            }
            if cfg.kl_beta != 0.0 {
                add_kl_grad(net, &s.old_probs, &dists, scale * cfg.kl_beta, &mut dz);
            }
            policy.net.backward(&acts, &dz, g);
        }
    }
    loss
}

/// Mean of ½(V(s) − target)² and its gradient (added into `grad`).
pub fn value_loss(
    value: &Mlp,
    features: impl Fn(&Observation) -> Vec<f64>,
    batch: &[&Sample],
    grad: Option<&mut [f64]>,
) -> f64 {
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut grad = grad;
    let mut loss = 0.0;
    for s in batch {
        let acts = value.forward_cached(&features(&s.observation));
        let err = acts.output()[0] - s.value_target;
        loss += scale * 0.5 * err * err;
        if let Some(g) = grad.as_deref_mut() {
            value.backward(&acts, &[scale * err], g);
        }
    }
    loss
}
