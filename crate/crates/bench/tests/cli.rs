use std::path::PathBuf;
use std::process::{Command, Output};

fn qnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnet")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qnet-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn list_envs_names_every_builtin() {
    let out = qnet(&["list-envs"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let names: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    let want: Vec<String> = qnet_bench::builtin_instances().into_iter().map(|i| i.config.name).collect();
    assert_eq!(names, want);
    assert!(text.lines().next().unwrap().starts_with("criss_cross_bh\tM=3\tN=2"));
}

#[test]
fn run_writes_one_trace_line_per_event() {
    let dir = scratch_dir("run");
    let trace = dir.join("trace.tsv");
    let args = ["run", "--env", "criss_cross_bh", "--policy", "maxweight", "--seed", "4", "--events", "1000"];
    let out = qnet(&[&args[..], &["--trace", trace.to_str().unwrap()]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 1000);
    for (k, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 5);
        assert_eq!(cols[0], (k + 1).to_string());
        assert_eq!(cols[3].split(',').count(), 3);
    }
    // same seed, same bytes
    let again = dir.join("again.tsv");
    assert!(qnet(&[&args[..], &["--trace", again.to_str().unwrap()]].concat()).status.success());
    assert_eq!(std::fs::read(&trace).unwrap(), std::fs::read(&again).unwrap());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn evaluate_report_columns_and_thread_independence() {
    let run = |threads: &str| {
        let out = qnet(&[
            "evaluate", "--env", "criss_cross_bh", "--policies", "cmu,maxweight,maxpressure", "--trajectories", "4",
            "--events", "2000", "--seed-base", "7", "--threads", threads,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        stdout(&out)
    };
    let one = run("1");
    assert_eq!(one, run("3"));
    let mut lines = one.lines();
    assert_eq!(lines.next(), Some("policy,mean,stderr,trajectories,seed_base"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), ["cmu", "maxweight", "maxpressure"]);
    for r in &rows {
        assert!(r[1].parse::<f64>().unwrap() > 0.0);
        assert!(r[2].parse::<f64>().unwrap() > 0.0);
        assert_eq!((r[3], r[4]), ("4", "7"));
    }
}

#[test]
fn train_then_evaluate_the_checkpoint() {
    let dir = scratch_dir("train");
    let ckpt = dir.join("policy.ckpt");
    let curve = dir.join("curve.csv");
    let out = qnet(&[
        "train", "--env", "criss_cross_bh", "--algo", "ppo-wc", "--episodes", "2", "--steps", "300", "--actors", "2",
        "--seed", "1", "--checkpoint", ckpt.to_str().unwrap(), "--curve", curve.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&ckpt).unwrap().starts_with("qnet-checkpoint 1"));
    let curve_text = std::fs::read_to_string(&curve).unwrap();
    assert_eq!(curve_text.lines().next(), Some("episode,mean_cost,std_cost"));
    assert_eq!(curve_text.lines().count(), 3);

    let out = qnet(&[
        "evaluate", "--env", "criss_cross_bh", "--policies", "softmax-wc", "--trajectories", "2", "--events", "500",
        "--checkpoint", ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).lines().nth(1).unwrap().starts_with("softmax-wc,"));

    // a checkpoint only fits the instance it was trained on
    let out = qnet(&[
        "evaluate", "--env", "n_model", "--policies", "softmax-wc", "--trajectories", "2", "--events", "100",
        "--checkpoint", ckpt.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn solve_fluid_prints_a_plan() {
    let out = qnet(&["solve-fluid", "--env", "criss_cross_bh", "--fluid-grid", "10"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("grid\t10"));
    let rows: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("allocation")).skip(1).collect();
    assert_eq!(rows.len(), 3);
}

#[test]
fn exit_codes() {
    assert_eq!(qnet(&["--help"]).status.code(), Some(0));
    assert_eq!(qnet(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(qnet(&["run", "--env", "criss_cross_bh"]).status.code(), Some(1));
    let out = qnet(&["run", "--env", "no_such_env", "--policy", "cmu"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    assert_eq!(qnet(&["run", "--env", "criss_cross_bh", "--policy", "bogus"]).status.code(), Some(1));
}
