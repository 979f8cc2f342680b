//! Training loop with actors collected in parallel.

use qnet_core::learn::train::{behavior_clone, episode_record};
use qnet_core::learn::{LearnError, TrainConfig, TrainOutcome, Trainer};
use qnet_core::Network;
use rayon::prelude::*;
use thiserror::Error;

use crate::checkpoint::Checkpoint;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("could not build thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

/// Same result as [`qnet_core::learn::train`] for any thread count: actors
/// are seeded by index and their buffers are consumed in index order.
pub fn train_parallel(
    net: &Network,
    config: TrainConfig,
    threads: usize,
    mut on_episode: impl FnMut(&qnet_core::learn::EpisodeRecord),
) -> Result<TrainOutcome, TrainError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let mut trainer = Trainer::new(net, config);
    let clone_report = if config.algorithm == qnet_core::learn::Algorithm::PpoBc {
        Some(behavior_clone(&mut trainer.policy, net, &config.bc, config.seed)?.0)
    } else {
        None
    };
    let mut curve = Vec::with_capacity(config.episodes);
    for ep in 0..config.episodes {
        let t = &trainer;
        let buffers = pool.install(|| {
            (0..config.actors.max(1))
                .into_par_iter()
                .map(|a| t.collect(net, ep, a))
                .collect::<Result<Vec<_>, _>>()
        })?;
        let record = episode_record(ep, &buffers);
        on_episode(&record);
        curve.push(record);
        trainer.update(net, &buffers)?;
    }
    Ok(TrainOutcome {
        trainer,
        curve,
        clone_report,
    })
}

pub fn checkpoint_of(env: &str, trainer: &Trainer) -> Checkpoint {
    Checkpoint {
        env: env.to_string(),
        algorithm: trainer.config.algorithm,
        masking: trainer.policy.masking,
        reward_stats: trainer.reward_stats,
        policy: trainer.policy.net.clone(),
        value: trainer.value.clone(),
    }
}
