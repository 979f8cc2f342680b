//! Instance configuration files.
//!
//! The on-disk layout stores `network` and `mu` server-major (one row per
//! server class, one column per queue) and lists `queue_event_options` as M
//! arrival deltas followed by M completion deltas. [`EnvConfig::to_network`]
//! converts to the queue-major [`NetworkSpec`].

use std::fmt::Write as _;
use std::path::Path;

use qnet_core::netmodel::PiecewiseRate;
use qnet_core::{ArrivalSpec, Matrix, Network, NetworkSpec, ServiceSpec, SpecError};
use thiserror::Error;

use crate::yaml::{self, Node, Pos, Spanned, SyntaxError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("missing required key '{0}'")]
    MissingKey(&'static str),
    #[error("{pos}: unknown key '{key}'")]
    UnknownKey { key: String, pos: Pos },
    #[error("{pos}: '{key}' must be {expected}")]
    Type {
        key: String,
        expected: &'static str,
        pos: Pos,
    },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("invalid instance: {0}")]
    Validation(#[from] SpecError),
    #[error("'{0}' is neither a built-in instance nor an existing file")]
    UnknownEnv(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Inter-arrival family and its parameters, one entry per queue.
#[derive(Debug, Clone, PartialEq)]
pub enum Arrivals {
    /// Poisson arrivals; `lam_params: {val: [...]}`.
    Constant { rates: Vec<f64> },
    /// Fixed spacing 1/λ; `lam_params: {val: [...]}`.
    Deterministic { rates: Vec<f64> },
    /// Piecewise-constant rates cycling over `durations`;
    /// `lam_params: {durations: [...], val: [[rate per segment], ...]}`.
    TimeVarying {
        durations: Vec<f64>,
        rates: Vec<Vec<f64>>,
    },
}

impl Arrivals {
    fn type_name(&self) -> &'static str {
        match self {
            Arrivals::Constant { .. } => "constant",
            Arrivals::Deterministic { .. } => "deterministic",
            Arrivals::TimeVarying { .. } => "time_varying",
        }
    }
}

/// Service-time family; workloads have unit mean, rates come from `mu`.
#[derive(Debug, Clone, PartialEq)]
pub enum Service {
    Exponential,
    Deterministic,
    /// Same mixture for every queue; `service_params: {weights, means}`.
    Hyperexponential { weights: Vec<f64>, means: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub name: String,
    pub arrivals: Arrivals,
    /// N rows × M columns, 0/1.
    pub network: Vec<Vec<u8>>,
    /// N rows × M columns.
    pub mu: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub init_queues: Vec<u32>,
    /// 2M rows × M columns: arrivals, then completions.
    pub queue_event_options: Vec<Vec<f64>>,
    pub pool_sizes: Option<Vec<u32>>,
    pub service: Service,
    pub horizon_events: Option<u64>,
    pub horizon_time: Option<f64>,
}

const KEYS: [&str; 13] = [
    "name",
    "lam_type",
    "lam_params",
    "network",
    "mu",
    "h",
    "init_queues",
    "queue_event_options",
    "pool_sizes",
    "service_dist",
    "service_params",
    "horizon_events",
    "horizon_time",
];

fn type_err<T>(key: &str, expected: &'static str, at: &Spanned) -> Result<T, ParseError> {
    Err(ParseError::Type {
        key: key.to_string(),
        expected,
        pos: at.pos,
    })
}

fn as_num(key: &str, v: &Spanned) -> Result<f64, ParseError> {
    match v.node {
        Node::Num(x) => Ok(x),
        _ => type_err(key, "a number", v),
    }
}

fn as_str<'a>(key: &str, v: &'a Spanned) -> Result<&'a str, ParseError> {
    match &v.node {
        Node::Str(s) => Ok(s),
        _ => type_err(key, "a string", v),
    }
}

fn as_count(key: &str, v: &Spanned) -> Result<u64, ParseError> {
    let x = as_num(key, v)?;
    if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
        Ok(x as u64)
    } else {
        type_err(key, "a nonnegative integer", v)
    }
}

fn as_list<'a>(key: &str, v: &'a Spanned) -> Result<&'a [Spanned], ParseError> {
    match &v.node {
        Node::List(items) => Ok(items),
        _ => type_err(key, "a list", v),
    }
}

fn num_list(key: &str, v: &Spanned) -> Result<Vec<f64>, ParseError> {
    as_list(key, v)?.iter().map(|x| as_num(key, x)).collect()
}

fn num_matrix(key: &str, v: &Spanned) -> Result<Vec<Vec<f64>>, ParseError> {
    as_list(key, v)?.iter().map(|row| num_list(key, row)).collect()
}

fn count_list(key: &str, v: &Spanned) -> Result<Vec<u32>, ParseError> {
    as_list(key, v)?
        .iter()
        .map(|x| {
            let c = as_count(key, x)?;
            u32::try_from(c).or_else(|_| type_err(key, "a list of 32-bit counts", x))
        })
        .collect()
}

/// Entries of a flow map, rejecting keys outside `allowed`.
fn map_entries<'a>(
    key: &str,
    v: &'a Spanned,
    allowed: &[&str],
) -> Result<&'a [(String, Spanned)], ParseError> {
    let Node::Map(entries) = &v.node else {
        return type_err(key, "a map", v);
    };
    for (k, val) in entries {
        if !allowed.contains(&k.as_str()) {
            return Err(ParseError::UnknownKey {
                key: format!("{key}.{k}"),
                pos: val.pos,
            });
        }
    }
    Ok(entries)
}

fn map_get<'a>(entries: &'a [(String, Spanned)], key: &str) -> Option<&'a Spanned> {
    entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
}

impl EnvConfig {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let doc = yaml::parse(text)?;
        for (k, v) in &doc.entries {
            if !KEYS.contains(&k.as_str()) {
                return Err(ParseError::UnknownKey {
                    key: k.clone(),
                    pos: v.pos,
                });
            }
        }
        let get = |key: &str| doc.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v);
        let need = |key: &'static str| get(key).ok_or(ParseError::MissingKey(key));

        let name = as_str("name", need("name")?)?.to_string();
        let lam_type = need("lam_type")?;
        let lam_params = need("lam_params")?;
        let arrivals = match as_str("lam_type", lam_type)? {
            "constant" | "deterministic" => {
                let p = map_entries("lam_params", lam_params, &["val"])?;
                let rates = num_list("lam_params.val", map_get(p, "val").ok_or(ParseError::MissingKey("lam_params.val"))?)?;
                if as_str("lam_type", lam_type)? == "constant" {
                    Arrivals::Constant { rates }
                } else {
                    Arrivals::Deterministic { rates }
                }
            }
            "time_varying" => {
                let p = map_entries("lam_params", lam_params, &["durations", "val"])?;
                let durations = num_list(
                    "lam_params.durations",
                    map_get(p, "durations").ok_or(ParseError::MissingKey("lam_params.durations"))?,
                )?;
                let rates = num_matrix(
                    "lam_params.val",
                    map_get(p, "val").ok_or(ParseError::MissingKey("lam_params.val"))?,
                )?;
                Arrivals::TimeVarying { durations, rates }
            }
            _ => return type_err("lam_type", "one of constant, deterministic, time_varying", lam_type),
        };
        let network = num_matrix("network", need("network")?)?
            .into_iter()
            .zip(as_list("network", need("network")?)?)
            .map(|(row, span)| {
                row.iter()
                    .map(|&x| match x {
                        0.0 => Ok(0u8),
                        1.0 => Ok(1u8),
                        _ => type_err("network", "a 0/1 matrix", span),
                    })
                    .collect::<Result<Vec<u8>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let mu = num_matrix("mu", need("mu")?)?;
        let h = num_list("h", need("h")?)?;
        let init_queues = count_list("init_queues", need("init_queues")?)?;
        let queue_event_options = num_matrix("queue_event_options", need("queue_event_options")?)?;
        let pool_sizes = get("pool_sizes").map(|v| count_list("pool_sizes", v)).transpose()?;
        let service = match get("service_dist") {
            None => Service::Exponential,
            Some(v) => match as_str("service_dist", v)? {
                "exponential" => Service::Exponential,
                "deterministic" => Service::Deterministic,
                "hyperexponential" => {
                    let params = get("service_params").ok_or(ParseError::MissingKey("service_params"))?;
                    let p = map_entries("service_params", params, &["weights", "means"])?;
                    Service::Hyperexponential {
                        weights: num_list(
                            "service_params.weights",
                            map_get(p, "weights").ok_or(ParseError::MissingKey("service_params.weights"))?,
                        )?,
                        means: num_list(
                            "service_params.means",
                            map_get(p, "means").ok_or(ParseError::MissingKey("service_params.means"))?,
                        )?,
                    }
                }
                _ => return type_err("service_dist", "one of exponential, deterministic, hyperexponential", v),
            },
        };
        if let (Some(v), false) = (get("service_params"), matches!(service, Service::Hyperexponential { .. })) {
            return Err(ParseError::UnknownKey {
                key: "service_params".into(),
                pos: v.pos,
            });
        }
        let horizon_events = get("horizon_events").map(|v| as_count("horizon_events", v)).transpose()?;
        let horizon_time = get("horizon_time").map(|v| as_num("horizon_time", v)).transpose()?;
        Ok(EnvConfig {
            name,
            arrivals,
            network,
            mu,
            h,
            init_queues,
            queue_event_options,
            pool_sizes,
            service,
            horizon_events,
            horizon_time,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg = Self::parse(&text)?;
        cfg.to_network()?;
        Ok(cfg)
    }

    /// Canonical text form; parsing it gives back `self`.
    pub fn to_yaml(&self) -> String {
        fn list<T: std::fmt::Display>(xs: &[T]) -> String {
            let items: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
            format!("[{}]", items.join(", "))
        }
        fn matrix<T: std::fmt::Display>(rows: &[Vec<T>]) -> String {
            let items: Vec<String> = rows.iter().map(|r| list(r)).collect();
            format!("[{}]", items.join(", "))
        }
        let mut out = String::new();
        let _ = writeln!(out, "name: '{}'", self.name);
        let _ = writeln!(out, "lam_type: '{}'", self.arrivals.type_name());
        match &self.arrivals {
            Arrivals::Constant { rates } | Arrivals::Deterministic { rates } => {
                let _ = writeln!(out, "lam_params: {{val: {}}}", list(rates));
            }
            Arrivals::TimeVarying { durations, rates } => {
                let _ = writeln!(
                    out,
                    "lam_params: {{durations: {}, val: {}}}",
                    list(durations),
                    matrix(rates)
                );
            }
        }
        let _ = writeln!(out, "network: {}", matrix(&self.network));
        let _ = writeln!(out, "mu: {}", matrix(&self.mu));
        let _ = writeln!(out, "h: {}", list(&self.h));
        let _ = writeln!(out, "init_queues: {}", list(&self.init_queues));
        out.push_str("queue_event_options: [");
        for (k, row) in self.queue_event_options.iter().enumerate() {
            if k > 0 {
                out.push_str(",\n                      ");
            }
            out.push_str(&list(row));
        }
        out.push_str("]\n");
        if let Some(p) = &self.pool_sizes {
            let _ = writeln!(out, "pool_sizes: {}", list(p));
        }
        match &self.service {
            Service::Exponential => {}
            Service::Deterministic => out.push_str("service_dist: 'deterministic'\n"),
            Service::Hyperexponential { weights, means } => {
                out.push_str("service_dist: 'hyperexponential'\n");
                let _ = writeln!(out, "service_params: {{weights: {}, means: {}}}", list(weights), list(means));
            }
        }
        if let Some(n) = self.horizon_events {
            let _ = writeln!(out, "horizon_events: {n}");
        }
        if let Some(t) = self.horizon_time {
            let _ = writeln!(out, "horizon_time: {t}");
        }
        out
    }

    pub fn num_queues(&self) -> usize {
        self.h.len()
    }

    pub fn num_servers(&self) -> usize {
        self.network.len()
    }

    /// Builds and validates the queue-major network.
    pub fn to_network(&self) -> Result<Network, SpecError> {
        let m = self.num_queues();
        let n = self.num_servers();
        let dims = |ok: bool, what: &'static str| if ok { Ok(()) } else { Err(SpecError::DimensionMismatch(what)) };
        dims(self.network.iter().all(|r| r.len() == m), "network rows must have one entry per queue")?;
        dims(self.mu.len() == n && self.mu.iter().all(|r| r.len() == m), "mu must match network")?;
        dims(self.queue_event_options.len() == 2 * m, "queue_event_options needs 2M rows")?;
        dims(
            self.queue_event_options.iter().all(|r| r.len() == m),
            "queue_event_options rows need M entries",
        )?;
        let topology = Matrix::from_rows(&self.network).ok_or(SpecError::DimensionMismatch("network"))?.transpose();
        let rates = Matrix::from_rows(&self.mu).ok_or(SpecError::DimensionMismatch("mu"))?.transpose();

        let rates_of = |rates: &[f64]| -> Result<(), SpecError> {
            dims(rates.len() == m, "lam_params.val needs one rate per queue")
        };
        let mut arrivals = Vec::with_capacity(m);
        for i in 0..m {
            let row = &self.queue_event_options[i];
            let silent = row.iter().all(|&x| x == 0.0);
            let unit = row.iter().enumerate().all(|(k, &x)| x == if k == i { 1.0 } else { 0.0 });
            if !silent && !unit {
                return Err(SpecError::InvalidParameter("arrival deltas must be a unit vector or all zero"));
            }
            let spec = match &self.arrivals {
                _ if silent => ArrivalSpec::Disabled,
                Arrivals::Constant { rates } => {
                    rates_of(rates)?;
                    if rates[i] > 0.0 {
                        ArrivalSpec::Exponential { rate: rates[i] }
                    } else {
                        ArrivalSpec::Disabled
                    }
                }
                Arrivals::Deterministic { rates } => {
                    rates_of(rates)?;
                    if rates[i] > 0.0 {
                        ArrivalSpec::Deterministic { interval: 1.0 / rates[i] }
                    } else {
                        ArrivalSpec::Disabled
                    }
                }
                Arrivals::TimeVarying { durations, rates } => {
                    dims(rates.len() == m, "lam_params.val needs one row per queue")?;
                    ArrivalSpec::TimeVarying(PiecewiseRate::new(durations.clone(), rates[i].clone())?)
                }
            };
            arrivals.push(spec);
        }
        let routing: Vec<Vec<i8>> = self.queue_event_options[m..]
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&x| match x {
                        -1.0 => Ok(-1),
                        0.0 => Ok(0),
                        1.0 => Ok(1),
                        _ => Err(SpecError::InvalidParameter("completion deltas must be -1, 0 or 1")),
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        let service = match &self.service {
            Service::Exponential => ServiceSpec::Exponential,
            Service::Deterministic => ServiceSpec::Deterministic,
            Service::Hyperexponential { weights, means } => ServiceSpec::Hyperexponential {
                weights: weights.clone(),
                means: means.clone(),
            },
        };
        NetworkSpec {
            topology,
            rates,
            holding_costs: self.h.clone(),
            pool_sizes: self.pool_sizes.clone().unwrap_or_else(|| vec![1; n]),
            routing,
            arrivals,
            services: vec![service; m],
            init_queues: self.init_queues.clone(),
        }
        .validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CC: &str = include_str!("../configs/criss_cross_bh.yaml");

    #[test]
    fn criss_cross_block() {
        let cfg = EnvConfig::parse(CC).unwrap();
        assert_eq!(cfg.name, "criss_cross_bh");
        assert_eq!(cfg.arrivals, Arrivals::Constant { rates: vec![0.9, 1e-6, 0.9] });
        assert_eq!(cfg.queue_event_options.len(), 6);
        let net = cfg.to_network().unwrap();
        assert_eq!((net.num_queues(), net.num_servers()), (3, 2));
        assert_eq!(net.rate(2, 0), 2.0);
        assert_eq!(net.rate(1, 1), 1.0);
        assert_eq!(net.destination(0), Some(1));
        assert_eq!(net.arrivals()[1], ArrivalSpec::Disabled);
    }

    #[test]
    fn round_trip() {
        let cfg = EnvConfig::parse(CC).unwrap();
        let again = EnvConfig::parse(&cfg.to_yaml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.to_yaml(), cfg.to_yaml());
    }

    #[test]
    fn missing_and_unknown_keys() {
        let without_mu: String = CC.lines().filter(|l| !l.starts_with("mu:")).map(|l| format!("{l}\n")).collect();
        assert_eq!(EnvConfig::parse(&without_mu).unwrap_err(), ParseError::MissingKey("mu"));
        let extra = format!("{CC}\nlambda: 3\n");
        match EnvConfig::parse(&extra).unwrap_err() {
            ParseError::UnknownKey { key, pos } => {
                assert_eq!(key, "lambda");
                assert_eq!(pos.col, 9);
            }
            e => panic!("{e:?}"),
        }
        let bad = CC.replace("{val:", "{value:");
        assert!(matches!(EnvConfig::parse(&bad), Err(ParseError::UnknownKey { .. })));
    }

    #[test]
    fn rejects_fractional_topology() {
        let bad = CC.replace("network: [[1,0,1]", "network: [[1,0,0.5]");
        assert!(matches!(EnvConfig::parse(&bad), Err(ParseError::Type { .. })));
    }
}
