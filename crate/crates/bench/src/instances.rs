//! Built-in instances.
//!
//! Only `criss_cross_bh` carries published parameters. Every other entry has
//! placeholder rates picked so each server's nominal load stays below one;
//! they reproduce the shape of the named network, not its calibration.

use crate::config::{Arrivals, EnvConfig, Service};

pub const CRISS_CROSS_BH: &str = include_str!("../configs/criss_cross_bh.yaml");

/// Bed counts of the eleven wards in `hospital_shape`.
pub const HOSPITAL_POOLS: [u32; 11] = [60, 55, 50, 45, 45, 40, 45, 42, 40, 40, 35];

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub config: EnvConfig,
    /// Rates are illustrative, not taken from a published calibration.
    pub placeholder: bool,
}

fn unit_rows(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| (0..m).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Arrival rows (zero rows where `rates` is zero) then completion rows.
fn event_options(rates: &[f64], next: &[Option<usize>]) -> Vec<Vec<f64>> {
    let m = rates.len();
    let mut rows: Vec<Vec<f64>> = unit_rows(m)
        .into_iter()
        .zip(rates)
        .map(|(row, &r)| if r > 0.0 { row } else { vec![0.0; m] })
        .collect();
    for (i, dest) in next.iter().enumerate() {
        let mut row = vec![0.0; m];
        row[i] = -1.0;
        if let Some(k) = dest {
            row[*k] = 1.0;
        }
        rows.push(row);
    }
    rows
}

/// Server-major 0/1 topology and rates from (queue, server, rate) triples.
fn links(m: usize, n: usize, triples: &[(usize, usize, f64)]) -> (Vec<Vec<u8>>, Vec<Vec<f64>>) {
    let mut network = vec![vec![0u8; m]; n];
    let mut mu = vec![vec![0.0; m]; n];
    for &(i, j, r) in triples {
        network[j][i] = 1;
        mu[j][i] = r;
    }
    (network, mu)
}

#[allow(clippy::too_many_arguments)]
fn build(
    name: String,
    arrivals: Arrivals,
    rates_for_rows: &[f64],
    triples: &[(usize, usize, f64)],
    n: usize,
    next: &[Option<usize>],
    pools: Option<Vec<u32>>,
    service: Service,
) -> EnvConfig {
    let m = next.len();
    let (network, mu) = links(m, n, triples);
    EnvConfig {
        name,
        arrivals,
        network,
        mu,
        h: vec![1.0; m],
        init_queues: vec![0; m],
        queue_event_options: event_options(rates_for_rows, next),
        pool_sizes: pools,
        service,
        horizon_events: None,
        horizon_time: None,
    }
}

fn hyper() -> Service {
    // unit mean, squared coefficient of variation 3.56
    Service::Hyperexponential {
        weights: vec![0.5, 0.5],
        means: vec![0.2, 1.8],
    }
}

pub fn criss_cross_bh() -> EnvConfig {
    EnvConfig::parse(CRISS_CROSS_BH).expect("shipped config parses")
}

pub fn n_model() -> EnvConfig {
    let lam = vec![1.3, 0.4];
    build(
        "n_model".into(),
        Arrivals::Constant { rates: lam.clone() },
        &lam,
        &[(0, 0, 1.0), (0, 1, 0.8), (1, 1, 1.0)],
        2,
        &[None, None],
        None,
        Service::Exponential,
    )
}

/// `L` stations, each job passing all of them three times. `mirrored`
/// reverses the station order on the second pass.
pub fn reentrant(l: usize, mirrored: bool, hyperexponential: bool) -> EnvConfig {
    let m = 3 * l;
    let mut lam = vec![0.0; m];
    lam[0] = 0.9;
    // mean work per pass 0.3, 0.4, 0.2 → per-station load 0.81
    let pass_rates = [1.0 / 0.3, 1.0 / 0.4, 1.0 / 0.2];
    let triples: Vec<(usize, usize, f64)> = (0..m)
        .map(|k| {
            let (pass, pos) = (k / l, k % l);
            let station = if mirrored && pass == 1 { l - 1 - pos } else { pos };
            (k, station, pass_rates[pass])
        })
        .collect();
    let next: Vec<Option<usize>> = (0..m).map(|k| (k + 1 < m).then_some(k + 1)).collect();
    let name = match (mirrored, hyperexponential) {
        (false, false) => format!("reentrant_{l}"),
        (false, true) => format!("reentrant_hyper_{l}"),
        (true, false) => format!("reentrant_2_{l}"),
        (true, true) => format!("reentrant_2_hyper_{l}"),
    };
    build(
        name,
        Arrivals::Constant { rates: lam.clone() },
        &lam,
        &triples,
        l,
        &next,
        None,
        if hyperexponential { hyper() } else { Service::Exponential },
    )
}

/// Five classes, five servers; server `j` handles class `j` at rate 1 and
/// class `j+1` at rate 0.5. Demand alternates between a slack and a busy
/// half-period.
pub fn five_by_five() -> EnvConfig {
    let m = 5;
    let mut triples = Vec::new();
    for j in 0..m {
        triples.push((j, j, 1.0));
        triples.push(((j + 1) % m, j, 0.5));
    }
    let rates: Vec<Vec<f64>> = (0..m)
        .map(|i| if i % 2 == 0 { vec![0.5, 0.9] } else { vec![0.9, 0.5] })
        .collect();
    build(
        "five_by_five".into(),
        Arrivals::TimeVarying {
            durations: vec![10.0, 10.0],
            rates,
        },
        &[1.0; 5],
        &triples,
        m,
        &[None; 5],
        None,
        Service::Exponential,
    )
}

/// Six input queues over three outputs; queue `i` may use output `i mod 3`
/// or `(i+1) mod 3`.
pub fn input_switch() -> EnvConfig {
    let m = 6;
    let lam = vec![0.3; m];
    let triples: Vec<(usize, usize, f64)> = (0..m)
        .flat_map(|i| [(i, i % 3, 1.0), (i, (i + 1) % 3, 1.0)])
        .collect();
    build(
        "input_switch".into(),
        Arrivals::Constant { rates: lam.clone() },
        &lam,
        &triples,
        3,
        &[None; 6],
        None,
        Service::Exponential,
    )
}

/// Eight specialties over eleven wards (497 beds). Wards 0–7 are each
/// dedicated to one specialty; wards 8–10 take overflow from two.
pub fn hospital_shape() -> EnvConfig {
    let m = 8;
    let mut triples: Vec<(usize, usize, f64)> = (0..m).map(|i| (i, i, 0.2)).collect();
    for (w, pair) in [(8usize, [0usize, 6]), (9, [1, 2]), (10, [3, 7])] {
        for i in pair {
            triples.push((i, w, 0.18));
        }
    }
    // offer each specialty 85% of the capacity it can reach, shared wards
    // split evenly
    let mut capacity = vec![0.0; m];
    for &(i, w, r) in &triples {
        let share = if w >= m { 0.5 } else { 1.0 };
        capacity[i] += share * r * HOSPITAL_POOLS[w] as f64;
    }
    let lam: Vec<f64> = capacity.iter().map(|c| (0.85 * c * 1000.0).round() / 1000.0).collect();
    build(
        "hospital_shape".into(),
        Arrivals::Constant { rates: lam.clone() },
        &lam,
        &triples,
        11,
        &[None; 8],
        Some(HOSPITAL_POOLS.to_vec()),
        Service::Exponential,
    )
}

/// Every built-in instance, in a stable order.
pub fn builtin_instances() -> Vec<Instance> {
    let mut out = vec![Instance {
        config: criss_cross_bh(),
        placeholder: false,
    }];
    let mut push = |config| out.push(Instance { config, placeholder: true });
    push(n_model());
    for (mirrored, hyperexponential) in [(false, false), (false, true), (true, false), (true, true)] {
        for l in 2..=10 {
            push(reentrant(l, mirrored, hyperexponential));
        }
    }
    push(five_by_five());
    push(input_switch());
    push(hospital_shape());
    out
}

pub fn find(name: &str) -> Option<Instance> {
    builtin_instances().into_iter().find(|i| i.config.name == name)
}
