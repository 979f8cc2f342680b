use qnet_bench::campaign::traced_run;
use qnet_bench::training::checkpoint_of;
use qnet_bench::{builtin_instances, evaluate_parallel, report_csv, resolve_env, train_parallel, PolicySpec};
use qnet_core::learn::{train, Algorithm, TrainConfig};
use qnet_core::policies::{IndexPolicy, IndexRule};
use qnet_core::{Horizon, Network, Policy, Simulator};

fn criss_cross() -> Network {
    resolve_env("criss_cross_bh").unwrap().to_network().unwrap()
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let net = criss_cross();
    for name in ["cmu", "maxweight", "maxpressure", "random", "softmax-wc"] {
        let spec: PolicySpec = name.parse().unwrap();
        let csv = |threads| {
            let r = evaluate_parallel(&net, &spec, 6, Horizon::events(1_500), 21, threads).unwrap();
            report_csv(&[(name.to_string(), r)])
        };
        let one = csv(1);
        assert_eq!(one, csv(2), "{name}");
        assert_eq!(one, csv(4), "{name}");
    }
}

#[test]
fn parallel_report_matches_sequential_evaluation() {
    let net = criss_cross();
    let spec: PolicySpec = "maxweight".parse().unwrap();
    let par = evaluate_parallel(&net, &spec, 5, Horizon::events(2_000), 3, 3).unwrap();
    let seq = qnet_core::evaluate(&net, || IndexPolicy::new(IndexRule::MaxWeight), 5, Horizon::events(2_000), 3).unwrap();
    assert_eq!(par, seq);
}

#[test]
fn traced_runs_are_reproducible() {
    let net = criss_cross();
    for name in ["maxpressure", "random", "fluid"] {
        let spec: PolicySpec = name.parse().unwrap();
        let (ma, a) = traced_run(&net, &spec, Horizon::events(800), 12).unwrap();
        let (mb, b) = traced_run(&net, &spec, Horizon::events(800), 12).unwrap();
        assert_eq!(a, b, "{name}");
        assert_eq!(ma, mb);
        assert_eq!(a.lines().count(), 800);
        let (_, c) = traced_run(&net, &spec, Horizon::events(800), 13).unwrap();
        assert_ne!(a, c, "{name}");
    }
}

#[test]
fn parallel_training_matches_sequential_training() {
    let net = criss_cross();
    for algo in [Algorithm::PpoWc, Algorithm::PpoBc] {
        let mut cfg = TrainConfig::new(algo);
        cfg.episodes = 2;
        cfg.steps_per_episode = 300;
        cfg.actors = 3;
        cfg.hidden = 8;
        cfg.minibatch = 100;
        cfg.bc.states = 100;
        cfg.bc.steps = 10;
        cfg.seed = 8;
        let seq = train(&net, cfg).unwrap();
        let want = checkpoint_of("criss_cross_bh", &seq.trainer).to_text();
        for threads in [1, 3] {
            let mut seen = 0;
            let par = train_parallel(&net, cfg, threads, |_| seen += 1).unwrap();
            assert_eq!(seen, 2);
            assert_eq!(par.curve, seq.curve, "{algo} threads {threads}");
            assert_eq!(checkpoint_of("criss_cross_bh", &par.trainer).to_text(), want, "{algo} threads {threads}");
        }
    }
}

#[test]
fn every_builtin_conserves_jobs() {
    for inst in builtin_instances() {
        let net = inst.config.to_network().unwrap();
        let mut sim = Simulator::new(&net, 5, Horizon::events(10_000));
        let mut policy = IndexPolicy::new(IndexRule::MaxWeight);
        while !sim.is_done() {
            let a = policy.act(&net, &sim.observation()).unwrap();
            sim.step(&a).unwrap();
            assert!(sim.state().is_conserved(), "{}", inst.config.name);
        }
    }
}
