//! Evaluation campaigns: parallel trajectory fan-out, CSV reports and trace
//! logs.

use std::fmt::Write as _;
use std::str::FromStr;

use qnet_core::eval::{run_trajectory_with, trajectory_seed};
use qnet_core::fluid::{FluidConfig, FluidPolicy};
use qnet_core::learn::{Masking, SoftmaxPolicy, StochasticPolicy};
use qnet_core::policies::{IndexPolicy, IndexRule, RandomPolicy};
use qnet_core::rng::{SimRng, StreamKey};
use qnet_core::{
    EvalError, EvaluationReport, Event, Horizon, JobSelection, Network, Policy, PolicyKind, StepOutcome,
    TrajectoryMetrics,
};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("could not build thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
    #[error("policy '{0}' needs a checkpoint whose shape matches the instance")]
    Checkpoint(String),
}

/// Everything needed to build a fresh controller for one trajectory.
#[derive(Debug, Clone)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub fluid: FluidConfig,
    /// Trained network for `softmax-wc`; a freshly initialized one otherwise.
    pub learned: Option<StochasticPolicy>,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec {
            kind,
            fluid: FluidConfig::default(),
            learned: None,
        }
    }

    pub fn build(&self, net: &Network, seed: u64) -> Box<dyn Policy + Send> {
        match self.kind {
            PolicyKind::Cmu => Box::new(IndexPolicy::new(IndexRule::Cmu)),
            PolicyKind::MaxWeight => Box::new(IndexPolicy::new(IndexRule::MaxWeight)),
            PolicyKind::MaxPressure => Box::new(IndexPolicy::new(IndexRule::MaxPressure)),
            PolicyKind::Fluid => Box::new(FluidPolicy::new(self.fluid)),
            PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
            PolicyKind::SoftmaxWc => {
                let policy = self.learned.clone().unwrap_or_else(|| {
                    let mut rng = SimRng::substream(0, StreamKey::Init);
                    StochasticPolicy::new(net, Masking::WorkConserving, 64, &mut rng)
                });
                Box::new(SoftmaxPolicy::new(policy, seed))
            }
        }
    }
}

impl FromStr for PolicySpec {
    type Err = qnet_core::policies::UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(PolicySpec::new(s.parse()?))
    }
}

/// `trajectories` independent runs with seeds `seed_base + k`, spread over
/// `threads` workers (0 = rayon's default). The report only depends on the
/// seeds, never on the thread count.
pub fn evaluate_parallel(
    net: &Network,
    policy: &PolicySpec,
    trajectories: usize,
    horizon: Horizon,
    seed_base: u64,
    threads: usize,
) -> Result<EvaluationReport, CampaignError> {
    if trajectories < 2 {
        return Err(EvalError::TooFewTrajectories.into());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let metrics: Vec<TrajectoryMetrics> = pool.install(|| {
        (0..trajectories)
            .into_par_iter()
            .map(|k| {
                let seed = trajectory_seed(seed_base, k);
                let mut p = policy.build(net, seed);
                run_trajectory_with(net, &mut p, horizon, seed, JobSelection::default(), |_| {})
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(EvaluationReport::from_metrics(metrics, seed_base))
}

/// C-style `%.6g`.
pub fn fmt_g(x: f64) -> String {
    const SIG: usize = 6;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", SIG - 1, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= SIG as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mantissa), sign, exp.abs())
    } else {
        let decimals = (SIG as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}

pub const CSV_HEADER: &str = "policy,mean,stderr,trajectories,seed_base";

pub fn report_csv(rows: &[(String, EvaluationReport)]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            name,
            fmt_g(r.mean),
            fmt_g(r.stderr),
            r.trajectories,
            r.seed_base
        );
    }
    out
}

/// One tab-separated trace line: step, clock, event, queue lengths, cost.
pub fn trace_line(step: u64, out: &StepOutcome) -> String {
    let event = match out.event {
        Event::Arrival { queue } => format!("arrival:{queue}"),
        Event::Completion {
            queue,
            routed_to: Some(k),
        } => format!("completion:{queue}->{k}"),
        Event::Completion { queue, routed_to: None } => format!("completion:{queue}"),
        Event::Horizon => "horizon".into(),
        Event::Stalled => "stalled".into(),
    };
    let q: Vec<String> = out.observation.queue_lengths.iter().map(u32::to_string).collect();
    format!("{}\t{}\t{}\t{}\t{}", step, out.observation.clock, event, q.join(","), out.cost)
}

/// Runs one trajectory and returns its metrics plus the trace text.
pub fn traced_run(
    net: &Network,
    policy: &PolicySpec,
    horizon: Horizon,
    seed: u64,
) -> Result<(TrajectoryMetrics, String), EvalError> {
    let mut p = policy.build(net, seed);
    let mut trace = String::new();
    let mut step = 0u64;
    let metrics = run_trajectory_with(net, &mut p, horizon, seed, JobSelection::default(), |out| {
        step += 1;
        trace.push_str(&trace_line(step, out));
        trace.push('\n');
    })?;
    Ok((metrics, trace))
}
