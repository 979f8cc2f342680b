use std::error::Error;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qnet_bench::campaign::{evaluate_parallel, report_csv, traced_run, PolicySpec};
use qnet_bench::checkpoint::{curve_csv, Checkpoint, CheckpointError};
use qnet_bench::config::EnvConfig;
use qnet_bench::training::{checkpoint_of, train_parallel};
use qnet_bench::{builtin_instances, resolve_env};
use qnet_core::fluid::{plan, FluidConfig};
use qnet_core::learn::{Algorithm, TrainConfig};
use qnet_core::{Horizon, Network, PolicyKind, Simulator};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "qnet", version, about = "Simulate, evaluate and train queueing network controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct FluidArgs {
    /// Grid cells in the fluid LP.
    #[arg(long, default_value_t = 50)]
    fluid_grid: usize,
    /// Fixed planning horizon (default: derived from queue lengths).
    #[arg(long)]
    fluid_horizon: Option<f64>,
    /// Engine steps between re-solves.
    #[arg(long, default_value_t = 1000)]
    fluid_resolve: u64,
}

impl FluidArgs {
    fn config(self) -> FluidConfig {
        FluidConfig {
            grid: self.fluid_grid,
            horizon: self.fluid_horizon,
            resolve_every: self.fluid_resolve,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// List built-in instances.
    ListEnvs,
    /// Run one trajectory.
    Run {
        /// Built-in name or instance file.
        #[arg(long)]
        env: String,
        #[arg(long)]
        policy: PolicyKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Event horizon (default: the instance's, else 50000).
        #[arg(long)]
        events: Option<u64>,
        /// Write one line per event here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Trained network for softmax-wc.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        fluid: FluidArgs,
    },
    /// Evaluate policies over seeded trajectories and write a CSV report.
    Evaluate {
        #[arg(long)]
        env: String,
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<PolicyKind>,
        #[arg(long, default_value_t = 100)]
        trajectories: usize,
        /// CSV path (default: stdout).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        events: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        fluid: FluidArgs,
    },
    /// Train a softmax policy and save a checkpoint.
    Train {
        #[arg(long)]
        env: String,
        #[arg(long)]
        algo: Algorithm,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Engine steps per actor per episode.
        #[arg(long, default_value_t = 5000)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        actors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Learning-curve CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Solve the fluid LP at the initial state and print the plan.
    SolveFluid {
        #[arg(long)]
        env: String,
        #[command(flatten)]
        fluid: FluidArgs,
    },
}

fn load_env(name: &str) -> Result<(EnvConfig, Network)> {
    let cfg = resolve_env(name)?;
    let net = cfg.to_network()?;
    Ok((cfg, net))
}

fn horizon(cfg: &EnvConfig, events: Option<u64>) -> Horizon {
    match (events, cfg.horizon_events, cfg.horizon_time) {
        (Some(n), _, _) => Horizon::events(n),
        (None, e, t) if e.is_some() || t.is_some() => Horizon {
            max_events: e.unwrap_or(u64::MAX),
            max_time: t.unwrap_or(f64::INFINITY),
        },
        _ => Horizon::default(),
    }
}

fn policy_spec(
    kind: PolicyKind,
    fluid: FluidArgs,
    checkpoint: Option<&Checkpoint>,
    cfg: &EnvConfig,
    net: &Network,
) -> Result<PolicySpec> {
    let mut spec = PolicySpec::new(kind);
    spec.fluid = fluid.config();
    if let (PolicyKind::SoftmaxWc, Some(ck)) = (kind, checkpoint) {
        if ck.env != cfg.name {
            return Err(CheckpointError::WrongEnv {
                expected: cfg.name.clone(),
                found: ck.env.clone(),
            }
            .into());
        }
        spec.learned = Some(ck.stochastic_policy(net)?);
    }
    Ok(spec)
}

fn read_checkpoint(path: Option<&PathBuf>) -> Result<Option<Checkpoint>> {
    path.map(|p| {
        let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
        Ok(Checkpoint::parse(&text)?)
    })
    .transpose()
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::ListEnvs => {
            let mut out = String::new();
            for inst in builtin_instances() {
                let c = &inst.config;
                let tag = if inst.placeholder { "\tplaceholder" } else { "" };
                out += &format!("{}\tM={}\tN={}{tag}\n", c.name, c.num_queues(), c.num_servers());
            }
            // a closed pipe (`| head`) is not an error
            let _ = std::io::stdout().write_all(out.as_bytes());
        }
        Command::Run {
            env,
            policy,
            seed,
            events,
            trace,
            checkpoint,
            fluid,
        } => {
            let (cfg, net) = load_env(&env)?;
            let ck = read_checkpoint(checkpoint.as_ref())?;
            let spec = policy_spec(policy, fluid, ck.as_ref(), &cfg, &net)?;
            let (m, log) = traced_run(&net, &spec, horizon(&cfg, events), seed)?;
            if let Some(path) = trace {
                fs::write(&path, log).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            println!("events\t{}", m.event_count);
            println!("elapsed\t{}", m.elapsed_time);
            println!("time_avg_queue\t{}", m.time_average());
            println!("time_avg_cost\t{}", m.time_average_cost());
        }
        Command::Evaluate {
            env,
            policies,
            trajectories,
            output,
            events,
            seed_base,
            threads,
            checkpoint,
            fluid,
        } => {
            let (cfg, net) = load_env(&env)?;
            let ck = read_checkpoint(checkpoint.as_ref())?;
            let h = horizon(&cfg, events);
            let mut rows = Vec::new();
            for kind in policies {
                let spec = policy_spec(kind, fluid, ck.as_ref(), &cfg, &net)?;
                let report = evaluate_parallel(&net, &spec, trajectories, h, seed_base, threads)?;
                rows.push((kind.to_string(), report));
            }
            let csv = report_csv(&rows);
            match output {
                Some(path) => fs::write(&path, csv).map_err(|e| format!("{}: {e}", path.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::Train {
            env,
            algo,
            episodes,
            steps,
            actors,
            seed,
            threads,
            checkpoint,
            curve,
        } => {
            let (cfg, net) = load_env(&env)?;
            let mut tc = TrainConfig::new(algo);
            tc.episodes = episodes;
            tc.steps_per_episode = steps;
            tc.actors = actors;
            tc.seed = seed;
            let outcome = train_parallel(&net, tc, threads, |r| {
                eprintln!("episode {}\tmean_cost {:.4}\tstd {:.4}", r.episode, r.mean_cost, r.std_cost);
            })?;
            if let Some(rep) = outcome.clone_report {
                eprintln!(
                    "behavior cloning excess {:.4} ({})",
                    rep.excess,
                    if rep.converged { "converged" } else { "not converged" }
                );
            }
            let ck = checkpoint_of(&cfg.name, &outcome.trainer);
            fs::write(&checkpoint, ck.to_text()).map_err(|e| format!("{}: {e}", checkpoint.display()))?;
            if let Some(path) = curve {
                fs::write(&path, curve_csv(&outcome.curve)).map_err(|e| format!("{}: {e}", path.display()))?;
            }
        }
        Command::SolveFluid { env, fluid } => {
            let (_, net) = load_env(&env)?;
            let obs = Simulator::new(&net, 0, Horizon::default()).observation();
            let p = plan(&net, &obs, &fluid.config())?;
            println!("horizon\t{}", p.horizon);
            println!("grid\t{}", p.grid);
            println!("value\t{}", p.value);
            println!("allocation (queue x server)");
            for i in 0..p.priorities.rows() {
                let row: Vec<String> = p.priorities.row(i).iter().map(|x| format!("{x:.6}")).collect();
                println!("{i}\t{}", row.join("\t"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
