//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use qnet_core::fluid::{LinearProgram, Relation};
use qnet_core::learn::policy::sample_from;
use qnet_core::learn::ppo::{surrogate_loss, value_loss, SurrogateConfig};
use qnet_core::learn::{wc_mask, Masking, Mlp, Sample, StochasticPolicy, WC_EPS};
use qnet_core::matrix::Matrix;
use qnet_core::netmodel::{ArrivalSpec, NetworkSpec, ServiceSpec};
use qnet_core::{ActionMatrix, Network, Observation, PriorityMatrix, SimRng};

/// One queue served by a pool of `servers` identical servers.
pub fn mmc(lambda: f64, mu: f64, servers: u32) -> Network {
    NetworkSpec {
        topology: Matrix::from_rows(&[vec![1]]).unwrap(),
        rates: Matrix::from_rows(&[vec![mu]]).unwrap(),
        holding_costs: vec![1.0],
        pool_sizes: vec![servers],
        routing: vec![vec![-1]],
        arrivals: vec![ArrivalSpec::Exponential { rate: lambda }],
        services: vec![ServiceSpec::Exponential],
        init_queues: vec![0],
    }
    .validate()
    .unwrap()
}

/// Mean number in system of M/M/c from the Erlang-C formula.
pub fn erlang_c_number_in_system(lambda: f64, mu: f64, c: u32) -> f64 {
    let a = lambda / mu;
    let rho = a / c as f64;
    assert!(rho < 1.0);
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 0..c {
        if k > 0 {
            term *= a / k as f64;
        }
        sum += term;
    }
    let top = term * a / c as f64 / (1.0 - rho);
    let wait_prob = top / (sum + top);
    wait_prob * rho / (1.0 - rho) + a
}

/// Two-station criss-cross, written out by hand: queues 0 and 2 share
/// server 0 (rate 2); queue 0 feeds queue 1, which uses server 1 (rate 1).
pub fn criss_cross() -> Network {
    NetworkSpec {
        topology: Matrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 0]]).unwrap(),
        rates: Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap(),
        holding_costs: vec![1.0; 3],
        pool_sizes: vec![1, 1],
        routing: vec![vec![-1, 1, 0], vec![0, -1, 0], vec![0, 0, -1]],
        arrivals: vec![
            ArrivalSpec::Exponential { rate: 0.9 },
            ArrivalSpec::Disabled,
            ArrivalSpec::Exponential { rate: 0.9 },
        ],
        services: vec![ServiceSpec::Exponential; 3],
        init_queues: vec![0; 3],
    }
    .validate()
    .unwrap()
}

/// Random small network: `m` queues, `n` classes, every queue compatible
/// with at least one class, optional routing to a later queue.
pub fn random_network(rng: &mut SimRng, m: usize, n: usize, max_pool: u32, routing: bool) -> Network {
    let mut topo = vec![vec![0u8; n]; m];
    for row in topo.iter_mut() {
        for x in row.iter_mut() {
            *x = (rng.uniform() < 0.5) as u8;
        }
        if row.iter().all(|&x| x == 0) {
            row[(rng.next_u64() % n as u64) as usize] = 1;
        }
    }
    let rates: Vec<Vec<f64>> = topo
        .iter()
        .map(|row| row.iter().map(|&b| if b == 1 { 0.5 + rng.uniform() * 2.0 } else { 0.0 }).collect())
        .collect();
    let route: Vec<Vec<i8>> = (0..m)
        .map(|i| {
            let mut d = vec![0i8; m];
            d[i] = -1;
            if routing && i + 1 < m && rng.uniform() < 0.5 {
                let k = i + 1 + (rng.next_u64() % (m - i - 1) as u64) as usize;
                d[k] = 1;
            }
            d
        })
        .collect();
    NetworkSpec {
        topology: Matrix::from_rows(&topo).unwrap(),
        rates: Matrix::from_rows(&rates).unwrap(),
        holding_costs: (0..m).map(|_| 0.5 + rng.uniform()).collect(),
        pool_sizes: (0..n).map(|_| 1 + (rng.next_u64() % max_pool as u64) as u32).collect(),
        routing: route,
        arrivals: (0..m)
            .map(|_| ArrivalSpec::Exponential {
                rate: 0.1 + 0.4 * rng.uniform(),
            })
            .collect(),
        services: vec![ServiceSpec::Exponential; m],
        init_queues: (0..m).map(|_| (rng.next_u64() % 4) as u32).collect(),
    }
    .validate()
    .unwrap()
}

/// Best Σ ρ_ij a_ij over every feasible action, by exhaustive enumeration.
pub fn brute_assign(rho: &PriorityMatrix, q: &[u32], net: &Network) -> f64 {
    let m = net.num_queues();
    let n = net.num_servers();
    let cells: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| net.compatible(i, j))
        .collect();
    let mut a = vec![0u32; cells.len()];
    let mut best = 0.0f64;
    loop {
        let mut used_q = vec![0u32; m];
        let mut used_s = vec![0u32; n];
        let mut value = 0.0;
        for (k, &(i, j)) in cells.iter().enumerate() {
            used_q[i] += a[k];
            used_s[j] += a[k];
            value += rho[(i, j)] * a[k] as f64;
        }
        let feasible = (0..m).all(|i| used_q[i] <= q[i]) && (0..n).all(|j| used_s[j] <= net.pool_sizes()[j]);
        if feasible && value > best {
            best = value;
        }
        // odometer over a[k] ∈ 0..=min(q_i, pool_j)
        let mut k = 0;
        loop {
            if k == cells.len() {
                return best;
            }
            let (i, j) = cells[k];
            if a[k] < q[i].min(net.pool_sizes()[j]) {
                a[k] += 1;
                break;
            }
            a[k] = 0;
            k += 1;
        }
    }
}

pub fn is_feasible(a: &ActionMatrix, q: &[u32], net: &Network) -> bool {
    let m = net.num_queues();
    let n = net.num_servers();
    (0..m).all(|i| (0..n).map(|j| a[(i, j)]).sum::<u32>() <= q[i])
        && (0..n).all(|j| (0..m).map(|i| a[(i, j)]).sum::<u32>() <= net.pool_sizes()[j])
        && (0..m).all(|i| (0..n).all(|j| net.compatible(i, j) || a[(i, j)] == 0))
}

pub fn obs(q: &[u32]) -> Observation {
    Observation {
        clock: 0.0,
        queue_lengths: q.to_vec(),
    }
}

/// GAE by the definition: for each t, discounted δ's summed forward until
/// (and including) the first flagged step.
pub fn brute_gae(rewards: &[f64], values: &[f64], regen: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut w = 1.0;
            for k in t..n {
                let delta = rewards[k] + gamma * values[k + 1] - values[k];
                total += w * delta;
                if regen[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            total
        })
        .collect()
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn choose(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = choose(n - 1, k);
    for mut c in choose(n - 1, k - 1) {
        c.push(n - 1);
        out.push(c);
    }
    out
}

/// Minimum over every basic feasible point: each choice of `n` tight
/// constraints (rows or x_k = 0) whose system is nonsingular. `None` when
/// no vertex is feasible.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = lp.constraints.iter().map(|c| (c.coeffs.clone(), c.rhs)).collect();
    let eq: Vec<usize> = (0..rows.len()).filter(|&r| lp.constraints[r].relation == Relation::Eq).collect();
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        rows.push((e, 0.0));
    }
    let optional: Vec<usize> = (0..rows.len()).filter(|r| !eq.contains(r)).collect();
    if eq.len() > n {
        return None;
    }
    let mut best: Option<f64> = None;
    for pick in choose(optional.len(), n - eq.len()) {
        let active: Vec<usize> = eq.iter().copied().chain(pick.iter().map(|&p| optional[p])).collect();
        let a = active.iter().map(|&r| rows[r].0.clone()).collect();
        let b = active.iter().map(|&r| rows[r].1).collect();
        let Some(x) = solve_square(a, b) else { continue };
        if lp.max_violation(&x) <= 1e-9 {
            let v = lp.evaluate(&x);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

/// Random bounded LP in `n ≤ 6` variables that is feasible at a known
/// nonnegative point.
pub fn random_lp(rng: &mut SimRng, n: usize, rows: usize) -> LinearProgram {
    let mut lp = LinearProgram::new(n);
    let x0: Vec<f64> = (0..n).map(|_| rng.uniform() * 2.0).collect();
    for c in lp.objective.iter_mut() {
        *c = rng.uniform() * 4.0 - 2.0;
    }
    for r in 0..rows {
        let mut coeffs: Vec<f64> = (0..n).map(|_| (rng.uniform() * 6.0 - 3.0).round()).collect();
        if coeffs.iter().all(|&a| a == 0.0) {
            coeffs[r % n] = 1.0;
        }
        let lhs: f64 = coeffs.iter().zip(&x0).map(|(a, b)| a * b).sum();
        match r % 3 {
            0 => lp.push(coeffs, Relation::Le, lhs + rng.uniform()),
            1 => lp.push(coeffs, Relation::Ge, lhs - rng.uniform()),
            _ => lp.push(coeffs, Relation::Eq, lhs),
        }
    }
    // box keeps the optimum finite
    lp.push(vec![1.0; n], Relation::Le, x0.iter().sum::<f64>() + 3.0);
    lp
}

/// Relative error floored at `floor` to ignore rounding-level entries.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Queue 0 on class 0; queue 1 on both classes; class 1 has two servers.
pub fn two_queue() -> Network {
    NetworkSpec {
        topology: Matrix::from_rows(&[vec![1, 1], vec![0, 1]]).unwrap(),
        rates: Matrix::from_rows(&[vec![1.0, 0.7], vec![0.0, 1.2]]).unwrap(),
        holding_costs: vec![1.0, 2.0],
        pool_sizes: vec![1, 2],
        routing: vec![vec![-1, 0], vec![0, -1]],
        arrivals: vec![
            ArrivalSpec::Exponential { rate: 0.5 },
            ArrivalSpec::Exponential { rate: 0.6 },
        ],
        services: vec![ServiceSpec::Exponential; 2],
        init_queues: vec![0, 0],
    }
    .validate()
    .unwrap()
}

fn random_probs(rng: &mut SimRng, m: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..m).map(|_| rng.exp1()).collect();
    // occasionally near-zero mass on some entries
    for x in p.iter_mut() {
        if rng.uniform() < 0.2 {
            *x *= 1e-12;
        }
    }
    let idle = rng.exp1();
    let total: f64 = p.iter().sum::<f64>() + idle;
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// One masked distribution against the definition. `pattern` fixes which
/// queues are nonempty (bit i); otherwise they are drawn at random.
pub fn wc_mask_check(rng: &mut SimRng, m: usize, pattern: Option<u32>) -> Result<(), String> {
    let q: Vec<u32> = match pattern {
        Some(bits) => (0..m).map(|i| (bits >> i) & 1).map(|b| b * (1 + (rng.next_u64() % 5) as u32)).collect(),
        None => (0..m).map(|_| if rng.uniform() < 0.5 { 0 } else { 1 + (rng.next_u64() % 9) as u32 }).collect(),
    };
    let p = random_probs(rng, m);
    let out = wc_mask(&p, &q, WC_EPS);
    if out.len() != m + 1 {
        return Err(format!("length {} for {m} queues", out.len()));
    }
    let s: f64 = (0..m).filter(|&i| q[i] > 0).map(|i| p[i]).sum();
    for i in 0..m {
        if q[i] == 0 {
            if out[i] != 0.0 {
                return Err(format!("mass {} on empty queue {i} of {q:?}", out[i]));
            }
        } else if (out[i] - p[i] / s.max(WC_EPS)).abs() > 1e-15 * (1.0 + out[i]) {
            return Err(format!("queue {i} of {q:?}: {} vs {}", out[i], p[i] / s));
        }
    }
    let total: f64 = out.iter().sum();
    if (total - 1.0).abs() >= 1e-12 {
        return Err(format!("total {total} for {q:?}"));
    }
    if q.iter().all(|&x| x == 0) && out[m] != 1.0 {
        return Err(format!("idle mass {} with every queue empty", out[m]));
    }
    if q.iter().any(|&x| x > 0) && s >= WC_EPS && out[m] != 0.0 {
        return Err(format!("idle mass {} with work available in {q:?}", out[m]));
    }
    Ok(())
}

fn perturbed(policy: &StochasticPolicy, rng: &mut SimRng, scale: f64) -> StochasticPolicy {
    let mut p = policy.clone();
    p.net.params_mut().iter_mut().for_each(|w| *w += scale * rng.normal());
    p
}

fn fd_samples(net: &Network, policy: &StochasticPolicy, rng: &mut SimRng) -> Vec<Sample> {
    let states = [[3u32, 1], [0, 2], [4, 0], [1, 1], [0, 0], [2, 5]];
    let old = perturbed(policy, rng, 0.3);
    states
        .iter()
        .enumerate()
        .map(|(k, q)| {
            let o = Observation {
                clock: k as f64,
                queue_lengths: q.to_vec(),
            };
            let dists = old.distributions(net, &o);
            let draw = sample_from(net, q, &dists, rng);
            Sample {
                observation: o,
                counts: draw.counts,
                old_log_prob: draw.log_prob,
                old_probs: dists.iter().flat_map(|d| d.probs.iter().copied()).collect(),
                advantage: rng.normal(),
                value_target: rng.normal() * 2.0,
            }
        })
        .collect()
}

fn max_fd_error(params: &mut [f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let x = params[k];
        params[k] = x + h;
        let up = f(params);
        params[k] = x - h;
        let down = f(params);
        params[k] = x;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max(rel_err(analytic[k], fd, 1e-5));
    }
    worst
}

/// Worst relative error between analytic and central-difference gradients
/// of the surrogate and value losses on [`two_queue`], labelled by case.
pub fn gradient_errors() -> Vec<(String, f64)> {
    let net = two_queue();
    let mut out = Vec::new();
    for masking in [Masking::None, Masking::WorkConserving] {
        let mut rng = SimRng::new(5);
        let mut policy = StochasticPolicy::new(&net, masking, 8, &mut rng);
        // larger output weights than the near-uniform initialization
        policy.net.params_mut().iter_mut().for_each(|w| *w *= 3.0);
        let batch_owned = fd_samples(&net, &policy, &mut rng);
        let batch: Vec<&Sample> = batch_owned.iter().collect();
        for cfg in [
            SurrogateConfig { clip: None, kl_beta: 0.0 },
            SurrogateConfig { clip: None, kl_beta: 0.03 },
        ] {
            let mut grad = vec![0.0; policy.net.num_params()];
            surrogate_loss(&policy, &net, &batch, cfg, Some(&mut grad));
            let sizes = policy.net.sizes().to_vec();
            let mut params = policy.net.params().to_vec();
            let err = max_fd_error(&mut params, &grad, |p| {
                let mut q = policy.clone();
                q.net = Mlp::from_params(&sizes, p.to_vec()).unwrap();
                surrogate_loss(&q, &net, &batch, cfg, None)
            });
            out.push((format!("policy {masking:?} kl {}", cfg.kl_beta), err));
        }

        let value = Mlp::new(&[2, 8, 8, 1], 1.0, &mut rng);
        let feats = |o: &Observation| policy.features(o);
        let mut grad = vec![0.0; value.num_params()];
        value_loss(&value, feats, &batch, Some(&mut grad));
        let mut params = value.params().to_vec();
        let err = max_fd_error(&mut params, &grad, |p| {
            let v = Mlp::from_params(value.sizes(), p.to_vec()).unwrap();
            value_loss(&v, feats, &batch, None)
        });
        out.push((format!("value {masking:?}"), err));
    }
    out
}
