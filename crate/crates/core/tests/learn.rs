mod common;

use common::{brute_gae, gradient_errors, obs, two_queue, wc_mask_check};
use proptest::prelude::*;
use qnet_core::learn::gae::compute_gae;
use qnet_core::learn::policy::{log_prob, sample_from};
use qnet_core::learn::{Masking, StochasticPolicy};
use qnet_core::SimRng;

fn random_buffer(rng: &mut SimRng, n: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let rewards = (0..n).map(|_| -rng.exp1() * 3.0).collect();
    let values = (0..=n).map(|_| rng.normal() * 5.0).collect();
    let regen = (0..n).map(|_| rng.uniform() < 0.15).collect();
    (rewards, values, regen)
}

#[test]
fn gae_matches_definition_on_random_buffers() {
    let mut rng = SimRng::new(7);
    for case in 0..100 {
        let n = 1 + (rng.next_u64() % 200) as usize;
        let (r, v, f) = random_buffer(&mut rng, n);
        let (gamma, lambda) = (0.9 + 0.099 * rng.uniform(), rng.uniform());
        let fast = compute_gae(&r, &v, &f, gamma, lambda);
        let slow = brute_gae(&r, &v, &f, gamma, lambda);
        for t in 0..n {
            assert!((fast[t] - slow[t]).abs() <= 1e-12 * (1.0 + slow[t].abs()), "case {case} t {t}");
        }
        let one_step = compute_gae(&r, &v, &f, gamma, 0.0);
        for t in 0..n {
            assert_eq!(one_step[t], r[t] + gamma * v[t + 1] - v[t]);
        }
    }
}

proptest! {
    #[test]
    fn gae_truncates_at_flags(seed in any::<u64>(), n in 2usize..60, cut in 0usize..59) {
        let mut rng = SimRng::new(seed);
        let (r, v, mut f) = random_buffer(&mut rng, n);
        let cut = cut % n;
        f[cut] = true;
        let a = compute_gae(&r, &v, &f, 0.99, 0.95);
        // rewards after the flag and values past V_{cut+1} are invisible to t ≤ cut
        let mut r2 = r.clone();
        let mut v2 = v.clone();
        for k in cut + 1..n {
            r2[k] += 10.0;
        }
        for k in cut + 2..=n {
            v2[k] -= 3.0;
        }
        let b = compute_gae(&r2, &v2, &f, 0.99, 0.95);
        prop_assert_eq!(&a[..=cut], &b[..=cut]);
    }

    #[test]
    fn wc_mask_random_cases(seed in any::<u64>(), m in 1usize..=8) {
        let mut rng = SimRng::new(seed);
        prop_assert_eq!(wc_mask_check(&mut rng, m, None), Ok(()));
    }
}

#[test]
fn wc_mask_every_pattern_up_to_four_queues() {
    let mut rng = SimRng::new(11);
    for m in 1..=4 {
        for bits in 0..(1u32 << m) {
            for _ in 0..25 {
                wc_mask_check(&mut rng, m, Some(bits)).unwrap();
            }
        }
    }
}

#[test]
fn policy_and_value_gradients_match_finite_differences() {
    let errors = gradient_errors();
    assert_eq!(errors.len(), 6);
    for (case, err) in errors {
        assert!(err < 1e-4, "{case}: {err}");
    }
}

#[test]
fn sampler_frequencies_follow_the_distribution() {
    let net = two_queue();
    let mut rng = SimRng::new(9);
    let policy = StochasticPolicy::new(&net, Masking::WorkConserving, 8, &mut rng);
    let mut p = policy.clone();
    p.net.params_mut().iter_mut().for_each(|w| *w *= 20.0);
    let o = obs(&[2, 3]);
    let dists = p.distributions(&net, &o);
    let draws = 200_000;
    let mut counts = [0u64; 2 * 3];
    for _ in 0..draws {
        let s = sample_from(&net, &o.queue_lengths, &dists, &mut rng);
        assert!((s.log_prob - log_prob(&dists, &s.counts)).abs() < 1e-12);
        for (c, k) in counts.iter_mut().zip(&s.counts) {
            *c += *k as u64;
        }
    }
    for (j, d) in dists.iter().enumerate() {
        let members = net.pool_sizes()[j] as f64 * draws as f64;
        for k in 0..3 {
            let freq = counts[j * 3 + k] as f64 / members;
            let sd = (d.probs[k] * (1.0 - d.probs[k]) / members).sqrt();
            assert!((freq - d.probs[k]).abs() <= 5.0 * sd + 1e-12, "class {j} option {k}: {freq} vs {}", d.probs[k]);
        }
    }
    // class 0 cannot reach queue 1; WC leaves it no idle mass while queue 0 is full
    assert_eq!(dists[0].probs[1], 0.0);
    assert_eq!(dists[0].probs[2], 0.0);
}

fn tiny(algorithm: qnet_core::learn::Algorithm) -> qnet_core::learn::TrainConfig {
    let mut cfg = qnet_core::learn::TrainConfig::new(algorithm);
    cfg.episodes = 2;
    cfg.steps_per_episode = 400;
    cfg.actors = 2;
    cfg.hidden = 8;
    cfg.minibatch = 100;
    cfg.bc.states = 200;
    cfg.bc.steps = 20;
    cfg.seed = 3;
    cfg
}

#[test]
fn training_is_reproducible_for_every_algorithm() {
    use qnet_core::learn::{train, Algorithm};
    let net = common::criss_cross();
    for algo in [Algorithm::Ppo, Algorithm::PpoBc, Algorithm::PpoWc, Algorithm::PgWc] {
        let a = train(&net, tiny(algo)).unwrap();
        let b = train(&net, tiny(algo)).unwrap();
        assert_eq!(a.trainer.policy.net.params(), b.trainer.policy.net.params(), "{algo}");
        assert_eq!(a.trainer.value.params(), b.trainer.value.params(), "{algo}");
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.curve.len(), 2);
        assert_eq!(a.clone_report.is_some(), algo == Algorithm::PpoBc);
        assert!(a.trainer.policy.net.params().iter().all(|w| w.is_finite()));
        assert_eq!(a.trainer.policy.masking, algo.masking());
    }
}

#[test]
fn rollouts_are_consistent() {
    use qnet_core::learn::{Algorithm, Trainer};
    let net = common::criss_cross();
    let trainer = Trainer::new(&net, tiny(Algorithm::PpoWc));
    let buf = trainer.collect(&net, 0, 1).unwrap();
    assert!(buf.is_consistent());
    assert_eq!(buf.len(), 400);
    assert_eq!(buf, trainer.collect(&net, 0, 1).unwrap());
    assert_ne!(buf.rewards, trainer.collect(&net, 0, 0).unwrap().rewards);
    for (o, e) in buf.observations.iter().zip(&buf.empty) {
        assert_eq!(*e, o.is_empty());
    }
}
