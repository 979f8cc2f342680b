//! Generalized advantage estimation truncated at regeneration epochs.

use alloc::vec;
use alloc::vec::Vec;

use crate::float;

/// Advantages for one episode.
///
/// `values` has one more entry than `rewards` (the bootstrap value of the
/// final state). `regen[t]` marks that the state observed at step `t` has
/// every queue empty. The sum for step `s` runs through `δ_T` where `T ≥ s`
/// is the first flagged step, or to the end of the episode.
pub fn compute_gae(rewards: &[f64], values: &[f64], regen: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    assert_eq!(values.len(), n + 1, "values needs a bootstrap entry");
    assert_eq!(regen.len(), n);
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        next = if regen[t] { delta } else { delta + gamma * lambda * next };
        adv[t] = next;
    }
    adv
}

/// Standardizes in place to mean 0 and unit (population) deviation.
pub fn normalize(values: &mut [f64]) {
    let n = values.len();
    if n < 2 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let sd = float::sqrt(var) + 1e-8;
    for v in values {
        *v = (*v - mean) / sd;
    }
}

/// Welford running moments, used to scale rewards.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn std(&self) -> f64 {
        if self.count < 2 {
            1.0
        } else {
            float::sqrt(self.m2 / self.count as f64)
        }
    }

    /// (x − mean) / std with a floor on the deviation.
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std().max(1e-8)
    }

    pub fn from_parts(count: u64, mean: f64, std: f64) -> Self {
        RunningStats {
            count,
            mean,
            m2: std * std * count as f64,
        }
    }
}
