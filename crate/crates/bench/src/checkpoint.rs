//! Text checkpoints for trained policy/value networks and learning-curve
//! CSV.
//!
//! ```text
//! qnet-checkpoint 1
//! env criss_cross_bh
//! algorithm ppo-wc
//! masking work-conserving
//! reward-stats <count> <mean> <std>
//! policy <layer sizes...>
//! <parameters, 8 per line>
//! value <layer sizes...>
//! <parameters, 8 per line>
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so loading gives
//! back bit-identical parameters.

use std::fmt::Write as _;

use qnet_core::learn::train::EpisodeRecord;
use qnet_core::learn::{Algorithm, Masking, Mlp, RunningStats, StochasticPolicy};
use qnet_core::Network;
use thiserror::Error;

use crate::campaign::fmt_g;

pub const MAGIC: &str = "qnet-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckpointError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint was trained on '{found}', not '{expected}'")]
    WrongEnv { expected: String, found: String },
    #[error("network shape does not fit the instance")]
    Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub env: String,
    pub algorithm: Algorithm,
    pub masking: Masking,
    pub reward_stats: RunningStats,
    pub policy: Mlp,
    pub value: Mlp,
}

fn masking_name(m: Masking) -> &'static str {
    match m {
        Masking::None => "none",
        Masking::WorkConserving => "work-conserving",
    }
}

fn write_net(out: &mut String, tag: &str, net: &Mlp) {
    let sizes: Vec<String> = net.sizes().iter().map(usize::to_string).collect();
    let _ = writeln!(out, "{tag} {}", sizes.join(" "));
    for chunk in net.params().chunks(8) {
        let vals: Vec<String> = chunk.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(out, "{}", vals.join(" "));
    }
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        let _ = writeln!(out, "env {}", self.env);
        let _ = writeln!(out, "algorithm {}", self.algorithm);
        let _ = writeln!(out, "masking {}", masking_name(self.masking));
        let s = &self.reward_stats;
        let _ = writeln!(out, "reward-stats {} {:?} {:?}", s.count, s.mean, s.std());
        write_net(&mut out, "policy", &self.policy);
        write_net(&mut out, "value", &self.value);
        out
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
        let bad = |line: usize, message: &str| CheckpointError::Malformed {
            line,
            message: message.to_string(),
        };
        let mut field = |tag: &str| -> Result<(usize, Vec<String>), CheckpointError> {
            let (n, l) = lines.next().ok_or_else(|| bad(0, "unexpected end of file"))?;
            let mut words = l.split_whitespace();
            if words.next() != Some(tag) {
                return Err(bad(n, &format!("expected '{tag}'")));
            }
            Ok((n, words.map(str::to_string).collect()))
        };
        let (n, v) = field(MAGIC)?;
        let version: u32 = v.first().and_then(|s| s.parse().ok()).ok_or_else(|| bad(n, "bad version"))?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let (_, env) = field("env")?;
        let (n, algo) = field("algorithm")?;
        let algorithm: Algorithm = algo
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(n, "unknown algorithm"))?;
        let (n, m) = field("masking")?;
        let masking = match m.first().map(String::as_str) {
            Some("none") => Masking::None,
            Some("work-conserving") => Masking::WorkConserving,
            _ => return Err(bad(n, "unknown masking")),
        };
        let (n, rs) = field("reward-stats")?;
        let nums: Vec<f64> = rs.iter().filter_map(|s| s.parse().ok()).collect();
        if nums.len() != 3 {
            return Err(bad(n, "reward-stats needs count, mean, std"));
        }
        let reward_stats = RunningStats::from_parts(nums[0] as u64, nums[1], nums[2]);
        let rest: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .skip(5)
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let mut at = 0;
        let mut read_net = |tag: &str| -> Result<Mlp, CheckpointError> {
            let (n, head) = *rest.get(at).ok_or_else(|| bad(0, "unexpected end of file"))?;
            let mut words = head.split_whitespace();
            if words.next() != Some(tag) {
                return Err(bad(n, &format!("expected '{tag}'")));
            }
            let sizes: Vec<usize> = words
                .map(|w| w.parse().map_err(|_| bad(n, "bad layer size")))
                .collect::<Result<_, _>>()?;
            at += 1;
            let want: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
            let mut params = Vec::with_capacity(want);
            while params.len() < want {
                let (n, l) = *rest.get(at).ok_or_else(|| bad(0, "too few parameters"))?;
                for w in l.split_whitespace() {
                    params.push(w.parse::<f64>().map_err(|_| bad(n, "bad parameter"))?);
                }
                at += 1;
            }
            Mlp::from_params(&sizes, params).ok_or_else(|| bad(n, "parameter count mismatch"))
        };
        let policy = read_net("policy")?;
        let value = read_net("value")?;
        Ok(Checkpoint {
            env: env.join(" "),
            algorithm,
            masking,
            reward_stats,
            policy,
            value,
        })
    }

    /// The stored policy, checked against `net`.
    pub fn stochastic_policy(&self, net: &Network) -> Result<StochasticPolicy, CheckpointError> {
        StochasticPolicy::from_mlp(net, self.masking, self.policy.clone()).ok_or(CheckpointError::Shape)
    }
}

pub fn curve_csv(curve: &[EpisodeRecord]) -> String {
    let mut out = String::from("episode,mean_cost,std_cost\n");
    for r in curve {
        let _ = writeln!(out, "{},{},{}", r.episode, fmt_g(r.mean_cost), fmt_g(r.std_cost));
    }
    out
}
