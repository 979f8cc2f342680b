//! Rollout collection, PPO updates, behavior cloning and the training loop.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::engine::{Horizon, Observation, Simulator};
use crate::float;
use crate::learn::gae::{compute_gae, normalize, RunningStats};
use crate::learn::mlp::Mlp;
use crate::learn::optim::{Adam, CosineSchedule};
use crate::learn::policy::{bc_target, feature_len, features, sample_from, Masking, StochasticPolicy};
use crate::learn::ppo::{surrogate_loss, value_loss, RolloutBuffer, Sample, SurrogateConfig};
use crate::learn::LearnError;
use crate::netmodel::Network;
use crate::policies::repair_choices;
use crate::rng::{SimRng, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Ppo,
    PpoBc,
    PpoWc,
    PgWc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Ppo, Algorithm::PpoBc, Algorithm::PpoWc, Algorithm::PgWc];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ppo => "ppo",
            Algorithm::PpoBc => "ppo-bc",
            Algorithm::PpoWc => "ppo-wc",
            Algorithm::PgWc => "pg-wc",
        }
    }

    pub fn masking(self) -> Masking {
        match self {
            Algorithm::Ppo | Algorithm::PpoBc => Masking::None,
            Algorithm::PpoWc | Algorithm::PgWc => Masking::WorkConserving,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or(LearnError::UnknownAlgorithm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcConfig {
    /// States visited by the target policy.
    pub states: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Largest acceptable mean of CE − H(target) over the visited states.
    pub threshold: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            states: 5_000,
            steps: 1_500,
            batch: 128,
            lr: 3e-3,
            threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub actors: usize,
    pub hidden: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub kl_beta: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub min_lr: f64,
    pub warmup_fraction: f64,
    pub bc: BcConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        TrainConfig {
            algorithm,
            episodes: 10,
            steps_per_episode: 5_000,
            actors: 1,
            hidden: 64,
            gamma: 0.998,
            lambda: 0.99,
            clip: 0.2,
            kl_beta: 0.03,
            epochs: 3,
            minibatch: 1_000,
            policy_lr: 9e-4,
            value_lr: 3e-4,
            min_lr: 1e-5,
            warmup_fraction: 0.03,
            bc: BcConfig::default(),
            seed: 0,
        }
    }

    fn surrogate(&self) -> SurrogateConfig {
        match self.algorithm {
            Algorithm::PgWc => SurrogateConfig {
                clip: None,
                kl_beta: 0.0,
            },
            _ => SurrogateConfig {
                clip: Some(self.clip),
                kl_beta: self.kl_beta,
            },
        }
    }

    fn schedule(&self, peak: f64) -> CosineSchedule {
        let per_update = self.epochs
            * (self.steps_per_episode * self.actors.max(1)).div_ceil(self.minibatch.max(1));
        let total = (self.episodes * per_update) as u64;
        CosineSchedule {
            peak,
            floor: self.min_lr,
            warmup: ((total as f64 * self.warmup_fraction) as u64).max(1),
            total,
        }
    }
}

/// Environment seed of one actor in one episode. Disjoint from the
/// `seed_base + k` range used by evaluation for any realistic campaign.
pub fn actor_seed(seed: u64, episode: usize, actor: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(1 + ((episode as u64) << 20 | actor as u64)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub mean_cost: f64,
    pub std_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcReport {
    /// Mean CE − H(target) over the visited states after training.
    pub excess: f64,
    /// `excess` is within the configured threshold.
    pub converged: bool,
}

/// Policy, value function and optimizer state. Rollouts are collected
/// through `&self` so callers can run actors concurrently; updates take the
/// buffers in actor order.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub policy: StochasticPolicy,
    pub value: Mlp,
    pub reward_stats: RunningStats,
    policy_opt: Adam,
    value_opt: Adam,
    rng: SimRng,
    updates: usize,
}

impl Trainer {
    pub fn new(net: &Network, config: TrainConfig) -> Self {
        let mut init = SimRng::substream(config.seed, StreamKey::Init);
        let policy = StochasticPolicy::new(net, config.algorithm.masking(), config.hidden, &mut init);
        let value = Mlp::new(&[feature_len(net), config.hidden, config.hidden, 1], 1.0, &mut init);
        Self::from_parts(config, policy, value, RunningStats::default())
    }

    pub fn from_parts(config: TrainConfig, policy: StochasticPolicy, value: Mlp, stats: RunningStats) -> Self {
        Trainer {
            policy_opt: Adam::new(policy.net.num_params()),
            value_opt: Adam::new(value.num_params()),
            rng: SimRng::substream(config.seed, StreamKey::Policy),
            config,
            policy,
            value,
            reward_stats: stats,
            updates: 0,
        }
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    fn value_of(&self, obs: &Observation) -> f64 {
        self.value.forward(&self.policy.features(obs))[0]
    }

    /// Runs one actor for `steps_per_episode` engine steps from the initial
    /// state. Rewards are raw (−cost); normalization happens at update time.
    pub fn collect(&self, net: &Network, episode: usize, actor: usize) -> Result<RolloutBuffer, LearnError> {
        let seed = actor_seed(self.config.seed, episode, actor);
        let mut rng = SimRng::substream(seed, StreamKey::Actor(actor));
        let steps = self.config.steps_per_episode;
        let mut sim = Simulator::new(net, seed, Horizon::events(u64::MAX));
        let mut buf = RolloutBuffer::default();
        let mut obs = sim.observation();
        for _ in 0..steps {
            let dists = self.policy.distributions(net, &obs);
            let s = sample_from(net, &obs.queue_lengths, &dists, &mut rng);
            if !s.log_prob.is_finite() {
                return Err(LearnError::NonFinite("policy output"));
            }
            let out = sim.step(&s.action)?;
            buf.values.push(self.value_of(&obs));
            buf.empty.push(obs.is_empty());
            buf.probs.push(dists.into_iter().flat_map(|d| d.probs).collect());
            buf.counts.push(s.counts);
            buf.log_probs.push(s.log_prob);
            buf.rewards.push(out.reward());
            buf.elapsed.push(out.elapsed);
            buf.observations.push(obs);
            obs = out.observation;
            if out.terminal {
                break;
            }
        }
        buf.bootstrap = self.value_of(&obs);
        Ok(buf)
    }

    /// Turns buffers into samples: reward normalization, regeneration-
    /// truncated GAE, then advantage standardization across the batch.
    pub fn prepare(&mut self, buffers: &[RolloutBuffer]) -> Vec<Sample> {
        for b in buffers {
            b.rewards.iter().for_each(|&r| self.reward_stats.push(r));
        }
        let mut samples = Vec::new();
        for b in buffers {
            let rewards: Vec<f64> = b.rewards.iter().map(|&r| self.reward_stats.normalize(r)).collect();
            let mut values = b.values.clone();
            values.push(b.bootstrap);
            let adv = compute_gae(&rewards, &values, &b.empty, self.config.gamma, self.config.lambda);
            for t in 0..b.len() {
                samples.push(Sample {
                    observation: b.observations[t].clone(),
                    counts: b.counts[t].clone(),
                    old_log_prob: b.log_probs[t],
                    old_probs: b.probs[t].clone(),
                    advantage: adv[t],
                    value_target: adv[t] + values[t],
                });
            }
        }
        let mut adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
        normalize(&mut adv);
        for (s, a) in samples.iter_mut().zip(adv) {
            s.advantage = a;
        }
        samples
    }

    /// Clipped-surrogate and value steps over shuffled minibatches. On a
    /// non-finite gradient the parameters roll back to their state before
    /// the update.
    pub fn update(&mut self, net: &Network, buffers: &[RolloutBuffer]) -> Result<UpdateStats, LearnError> {
        let samples = self.prepare(buffers);
        if samples.is_empty() {
            return Ok(UpdateStats {
                policy_loss: 0.0,
                value_loss: 0.0,
            });
        }
        let snapshot = (self.policy.clone(), self.value.clone(), self.policy_opt.clone(), self.value_opt.clone());
        let result = self.run_epochs(net, &samples);
        if result.is_err() {
            (self.policy, self.value, self.policy_opt, self.value_opt) = snapshot;
        }
        self.updates += 1;
        result
    }

    fn run_epochs(&mut self, net: &Network, samples: &[Sample]) -> Result<UpdateStats, LearnError> {
        let cfg = self.config;
        let surrogate = cfg.surrogate();
        let pol_sched = cfg.schedule(cfg.policy_lr);
        let val_sched = cfg.schedule(cfg.value_lr);
        let period = net.arrival_period();
        let feat = |o: &Observation| features(&o.queue_lengths, o.clock, period);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut stats = UpdateStats {
            policy_loss: 0.0,
            value_loss: 0.0,
        };
        for _ in 0..cfg.epochs {
            shuffle(&mut order, &mut self.rng);
            for chunk in order.chunks(cfg.minibatch.max(1)) {
                let batch: Vec<&Sample> = chunk.iter().map(|&k| &samples[k]).collect();
                let mut g = vec![0.0; self.policy.net.num_params()];
                stats.policy_loss = surrogate_loss(&self.policy, net, &batch, surrogate, Some(&mut g));
                let mut gv = vec![0.0; self.value.num_params()];
                stats.value_loss = value_loss(&self.value, feat, &batch, Some(&mut gv));
                if !stats.policy_loss.is_finite() || g.iter().any(|x| !x.is_finite()) {
                    return Err(LearnError::NonFinite("policy gradient"));
                }
                if !stats.value_loss.is_finite() || gv.iter().any(|x| !x.is_finite()) {
                    return Err(LearnError::NonFinite("value gradient"));
                }
                let lr = pol_sched.rate(self.policy_opt.steps());
                self.policy_opt.step(self.policy.net.params_mut(), &g, lr);
                let lr = val_sched.rate(self.value_opt.steps());
                self.value_opt.step(self.value.params_mut(), &gv, lr);
            }
        }
        Ok(stats)
    }
}

fn shuffle(xs: &mut [usize], rng: &mut SimRng) {
    for i in (1..xs.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        xs.swap(i, j);
    }
}

/// Observations visited by the softmax-of-queue-lengths target policy.
pub fn target_states(net: &Network, count: usize, seed: u64) -> Vec<Observation> {
    let mut rng = SimRng::substream(seed, StreamKey::Policy);
    let mut sim = Simulator::new(net, seed, Horizon::events(u64::MAX));
    let mut obs = sim.observation();
    let mut states = Vec::with_capacity(count);
    while states.len() < count {
        let choices: Vec<Vec<Option<usize>>> = (0..net.num_servers())
            .map(|j| {
                let t = bc_target(net, &obs.queue_lengths, j);
                (0..net.pool_sizes()[j])
                    .map(|_| {
                        let k = rng.categorical(&t);
                        (k < net.num_queues()).then_some(k)
                    })
                    .collect()
            })
            .collect();
        let action = repair_choices(net, &obs.queue_lengths, &choices);
        states.push(obs.clone());
        match sim.step(&action) {
            Ok(out) if !out.terminal => obs = out.observation,
            _ => break,
        }
    }
    states
}

/// Mean over servers of CE(target, policy) − H(target) at `obs`, with its
/// gradient in the logits when `dz` is given.
fn clone_excess(policy: &StochasticPolicy, net: &Network, obs: &Observation, logits: &[f64], dz: Option<&mut [f64]>) -> f64 {
    let dists = policy.dists_from_logits(net, &obs.queue_lengths, logits);
    let w = net.num_queues() + 1;
    let n = net.num_servers() as f64;
    let mut dz = dz;
    let mut excess = 0.0;
    for (j, d) in dists.iter().enumerate() {
        let t = bc_target(net, &obs.queue_lengths, j);
        for k in 0..w {
            if t[k] <= 0.0 {
                continue;
            }
            let q = d.probs[k].max(1e-300);
            excess += t[k] * (float::ln(t[k]) - float::ln(q)) / n;
            if let Some(g) = dz.as_deref_mut() {
                if d.probs[k] > 0.0 {
                    let gl = d.grad_log_prob(k);
                    for (o, x) in g[j * w..(j + 1) * w].iter_mut().zip(gl) {
                        *o -= t[k] * x / n;
                    }
                }
            }
        }
    }
    excess
}

/// Mean total-variation distance between policy and target over `states`.
pub fn clone_tv_distance(policy: &StochasticPolicy, net: &Network, states: &[Observation]) -> f64 {
    let mut total = 0.0;
    for obs in states {
        let dists = policy.distributions(net, obs);
        for (j, d) in dists.iter().enumerate() {
            let t = bc_target(net, &obs.queue_lengths, j);
            total += 0.5 * d.probs.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
    }
    total / (states.len() * net.num_servers()).max(1) as f64
}

/// Fits the policy to the softmax-of-queue-lengths target by minimizing the
/// cross-entropy over states the target visits. Returns the per-step moving
/// average of the minibatch objective alongside the report.
pub fn behavior_clone(
    policy: &mut StochasticPolicy,
    net: &Network,
    cfg: &BcConfig,
    seed: u64,
) -> Result<(BcReport, Vec<f64>), LearnError> {
    let states = target_states(net, cfg.states, seed);
    let mut rng = SimRng::substream(seed, StreamKey::Init);
    let mut opt = Adam::new(policy.net.num_params());
    let mut history = Vec::with_capacity(cfg.steps);
    let mut avg = f64::NAN;
    for _ in 0..cfg.steps {
        let mut g = vec![0.0; policy.net.num_params()];
        let mut loss = 0.0;
        let b = cfg.batch.max(1);
        for _ in 0..b {
            let obs = &states[(rng.next_u64() % states.len() as u64) as usize];
            let acts = policy.forward(obs);
            let mut dz = vec![0.0; acts.output().len()];
            loss += clone_excess(policy, net, obs, acts.output(), Some(&mut dz)) / b as f64;
            dz.iter_mut().for_each(|x| *x /= b as f64);
            policy.net.backward(&acts, &dz, &mut g);
        }
        if !loss.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(LearnError::NonFinite("behavior cloning gradient"));
        }
        opt.step(policy.net.params_mut(), &g, cfg.lr);
        avg = if avg.is_nan() { loss } else { 0.95 * avg + 0.05 * loss };
        history.push(avg);
    }
    let excess = states
        .iter()
        .map(|o| {
            let z = policy.net.forward(&policy.features(o));
            clone_excess(policy, net, o, &z, None)
        })
        .sum::<f64>()
        / states.len().max(1) as f64;
    Ok((
        BcReport {
            excess,
            converged: excess <= cfg.threshold,
        },
        history,
    ))
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    pub curve: Vec<EpisodeRecord>,
    pub clone_report: Option<BcReport>,
}

/// Summarizes one episode's buffers into a learning-curve point.
pub fn episode_record(episode: usize, buffers: &[RolloutBuffer]) -> EpisodeRecord {
    let costs: Vec<f64> = buffers.iter().map(RolloutBuffer::average_cost).collect();
    let n = costs.len().max(1) as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    EpisodeRecord {
        episode,
        mean_cost: mean,
        std_cost: float::sqrt(var),
    }
}

/// Sequential training loop. `ppo-bc` clones first; a cloning shortfall is
/// reported in the outcome, not raised.
pub fn train(net: &Network, config: TrainConfig) -> Result<TrainOutcome, LearnError> {
    let mut trainer = Trainer::new(net, config);
    let clone_report = if config.algorithm == Algorithm::PpoBc {
        Some(behavior_clone(&mut trainer.policy, net, &config.bc, config.seed)?.0)
    } else {
        None
    };
    let mut curve = Vec::with_capacity(config.episodes);
    for ep in 0..config.episodes {
        let buffers = (0..config.actors.max(1))
            .map(|a| trainer.collect(net, ep, a))
            .collect::<Result<Vec<_>, _>>()?;
        curve.push(episode_record(ep, &buffers));
        trainer.update(net, &buffers)?;
    }
    Ok(TrainOutcome {
        trainer,
        curve,
        clone_report,
    })
}
