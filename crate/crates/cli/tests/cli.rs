use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lodac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lodac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap_or_else(|| panic!("no `{key}` in {text}"))
}

#[test]
fn eval_policy_constant_one() {
    let o = lodac(&["eval-policy", "--n", "50", "--portfolio", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(field(&text, "expected_runtime"), "1250");
    assert_eq!(field(&text, "normalized"), "0.5");
}

#[test]
fn optimal_policy_text_round_trips_through_eval() {
    let dir = tempfile::tempdir().unwrap();
    let o = lodac(&["optimal-policy", "--n", "50", "--portfolio", "1,2,6"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "n: 50\nportfolio: 1,2,6\nbreakpoints: 11,24\n");

    let path = dir.path().join("p.txt");
    fs::write(&path, stdout(&o)).unwrap();
    let e = lodac(&["eval-policy", "--policy", path.to_str().unwrap()]);
    assert_eq!(e.status.code(), Some(0));
    let expected: f64 = field(&stdout(&e), "normalized").parse().unwrap();
    assert!((expected - 0.39568).abs() < 1e-5);

    let t = lodac(&["optimal-policy", "--n", "10", "--portfolio", "1,2", "--table"]);
    assert_eq!(stdout(&t), "n: 10\nportfolio: 1,2\ntable: 2,2,2,2,2,1,1,1,1,1\n");
}

#[test]
fn optimal_portfolio_and_sweep() {
    let o = lodac(&["optimal-portfolio", "--n", "50", "--k", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(field(&stdout(&o), "portfolio"), "1,2,6");

    let s = lodac(&["sweep-portfolios", "--n", "10", "--k", "2"]);
    assert_eq!(s.status.code(), Some(0));
    let text = stdout(&s);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("portfolio;expected_runtime;normalized"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    assert!(rows[0].starts_with("1 "), "{}", rows[0]);
    assert_eq!(rows[0].split(';').count(), 3);
}

#[test]
fn simulate_writes_trace_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = lodac(&[
        "simulate",
        "--n",
        "20",
        "--portfolio",
        "1,2,6",
        "--seed",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step;fitness_before;action;fitness_after;reward"));
    let mut last_after = None;
    for (j, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(';').collect();
        assert_eq!(f.len(), 5);
        assert_eq!(f[0], (j + 1).to_string());
        assert!(["1", "2", "6"].contains(&f[2]));
        let (before, after): (i64, i64) = (f[1].parse().unwrap(), f[3].parse().unwrap());
        assert_eq!(f[4].parse::<f64>().unwrap(), (after - before - 1) as f64);
        last_after = Some(after);
    }
    if let Some(a) = last_after {
        assert_eq!(a, 20);
    }

    // identical seeds give identical traces
    let a = lodac(&["simulate", "--n", "20", "--portfolio", "1,2", "--seed", "5"]);
    let b = lodac(&["simulate", "--n", "20", "--portfolio", "1,2", "--seed", "5"]);
    assert_eq!(a.stdout, b.stdout);

    let stats = lodac(&[
        "simulate",
        "--n",
        "20",
        "--portfolio",
        "1",
        "--runs",
        "200",
        "--backend",
        "surrogate",
    ]);
    assert_eq!(stats.status.code(), Some(0));
    assert_eq!(field(&stdout(&stats), "runs"), "200");
}

#[test]
fn invalid_arguments_exit_with_code_2() {
    // powers_of_2 with k = 7 needs 64 <= n
    assert_eq!(
        lodac(&["optimal-policy", "--n", "50", "--family", "powers_of_2", "--k", "7"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        lodac(&["eval-policy", "--n", "50", "--portfolio", "2,3"]).status.code(),
        Some(2)
    );
    assert_eq!(
        lodac(&["eval-policy", "--n", "5", "--portfolio", "1,9"]).status.code(),
        Some(2)
    );
    assert_eq!(
        lodac(&["eval-policy", "--n", "50", "--family", "nonsense", "--k", "3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(lodac(&["optimal-portfolio", "--n", "50"]).status.code(), Some(2));
    assert_eq!(lodac(&["reproduce", "table1", "--k", "5..2"]).status.code(), Some(2));
}

#[test]
fn enumeration_cap_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = lodac(&["optimal-portfolio", "--n", "50", "--k", "4", "--cap", "10"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));
    assert_eq!(
        lodac(&["sweep-portfolios", "--n", "50", "--k", "4", "--cap", "100"])
            .status
            .code(),
        Some(3)
    );
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        lodac(&[
            "reproduce",
            "table1",
            "--n",
            "50",
            "--k",
            "4",
            "--cap",
            "10",
            "--out",
            out
        ])
        .status
        .code(),
        Some(3)
    );
}

const TINY: &str = r#"
n = 10
budget = 4000
eval_period = 1000
eval_runs = 10
final_runs = 50
seeds = [0, 1]
hit_tau = 0.25

[portfolio]
radii = [1, 2, 4]

[agent]
kind = "tabular"
"#;

fn evaluation_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn train_then_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("run");
    let o = lodac(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("config.toml").exists());
    for seed in [0, 1] {
        let d = out.join(format!("seed_{seed}"));
        assert!(d.join("log.json").exists());
        assert!(d.join("agent.json").exists());
        let rows = evaluation_rows(&d.join("evaluations.csv"));
        assert_eq!(rows[0], "train_step;mean;std;censored;exact;hit");
        assert_eq!(rows.len(), 1 + 5);
    }

    // the echoed config reproduces the run bit for bit
    let again = dir.path().join("again");
    let o = lodac(&[
        "train",
        "--config",
        out.join("config.toml").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read(out.join("seed_1/log.json")).unwrap(),
        fs::read(again.join("seed_1/log.json")).unwrap()
    );

    let log = out.join("seed_0/log.json");
    let m = lodac(&["metrics", "--log", log.to_str().unwrap()]);
    assert_eq!(m.status.code(), Some(0));
    let text = stdout(&m);
    assert_eq!(field(&text, "evaluations"), "5");
    let hr: f64 = field(&text, "hitting_ratio").parse().unwrap();
    assert!((0.0..=1.0).contains(&hr));
    let strict = lodac(&["metrics", "--log", log.to_str().unwrap(), "--tau=-1000"]);
    assert_eq!(field(&stdout(&strict), "hitting_ratio"), "0");
}

#[test]
fn diverging_training_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        r#"
n = 10
budget = 2000
eval_period = 1000
eval_runs = 5
final_runs = 5

[portfolio]
radii = [1, 2]

[agent]
kind = "ddqn"
learning_rate = 1e300
batch_size = 16
learning_starts = 16
replay_capacity = 100
"#,
    )
    .unwrap();
    let o = lodac(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reproduce_exact_commands_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = lodac(&["reproduce", "table1", "--n", "50", "--k", "2..3", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let t1 = fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    let lines: Vec<&str> = t1.lines().collect();
    assert_eq!(lines[0], "n;k;portfolio;expected_runtime;normalized");
    assert!(lines[1].starts_with("50;2;1 4;"));
    assert!(lines[2].starts_with("50;3;1 2 6;"));
    assert!(dir.path().join("config.toml").exists());

    let o = lodac(&["reproduce", "table2", "--n", "50", "--k", "3", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let t2 = fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    assert!(t2.lines().any(|l| l.starts_with("50;3;optimal;1 2 6;11 24;")), "{t2}");

    let o = lodac(&["reproduce", "fig1", "--n", "20", "--k", "3", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("fig1_sweep.csv").exists());

    let o = lodac(&["reproduce", "fig4", "--n", "20", "--k", "2..4", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let f4 = fs::read_to_string(dir.path().join("fig4.csv")).unwrap();
    assert_eq!(
        f4.lines().next(),
        Some("n;k;family;portfolio;expected_runtime;normalized")
    );

    // deterministic output
    let first = fs::read(dir.path().join("fig4.csv")).unwrap();
    lodac(&["reproduce", "fig4", "--n", "20", "--k", "2..4", "--out", out]);
    assert_eq!(first, fs::read(dir.path().join("fig4.csv")).unwrap());
}
