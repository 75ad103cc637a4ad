use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lodac::agents::{DdqnConfig, QTableConfig};
use lodac::harness::reproduce;
use lodac::harness::{AgentConfig, ExperimentConfig, ExperimentLog, PortfolioSpec};
use lodac::portfolio::{write_sweep_csv, FamilyKind, DEFAULT_SWEEP_CAP};
use lodac::sim::{run_rls_with_mode, sample_runtimes, stream_rng, RunStats, TraceMode};
use lodac::{
    optimal_restricted_policy, run_surrogate, search_optimal_portfolio, sweep_all_portfolios, Backend, Error, Instance,
    Policy, Portfolio, RuntimeMoments,
};

const EXIT_OTHER: u8 = 1;
const EXIT_INVALID_ARGUMENT: u8 = 2;
const EXIT_ENUMERATION_TOO_LARGE: u8 = 3;
const EXIT_TRAINING_DIVERGED: u8 = 4;

const DEFAULT_SEARCH_CAP: u128 = 200_000_000;

#[derive(Parser)]
#[command(
    name = "lodac",
    version,
    about = "Exact and learned radius control for RLS on LeadingOnes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact expected runtime (and optional simulation) of a policy.
    EvalPolicy(EvalPolicyArgs),
    /// Optimal policy restricted to a portfolio, in text form.
    OptimalPolicy(OptimalPolicyArgs),
    /// Brute-force search for the best portfolio of size k.
    OptimalPortfolio(OptimalPortfolioArgs),
    /// Expected runtimes of all portfolios of size k.
    SweepPortfolios(SweepArgs),
    /// Run the RLS under a policy and write its trace.
    Simulate(SimulateArgs),
    /// Train an agent against the environment.
    Train(TrainArgs),
    /// Hitting ratio and ruggedness of a training log.
    Metrics(MetricsArgs),
    /// Regenerate a table or figure.
    #[command(subcommand)]
    Reproduce(Reproduce),
}

#[derive(Args, Clone)]
struct PortfolioArgs {
    /// Problem size.
    #[arg(long)]
    n: Option<usize>,
    /// Portfolio size for --family.
    #[arg(long)]
    k: Option<usize>,
    /// Explicit radii, e.g. 1,2,6.
    #[arg(long, value_delimiter = ',', conflicts_with = "family")]
    portfolio: Option<Vec<usize>>,
    /// powers_of_2, initial_segment, evenly_spread or optimal.
    #[arg(long)]
    family: Option<FamilyKind>,
}

impl PortfolioArgs {
    fn spec(&self) -> Result<Option<PortfolioSpec>, Error> {
        match (&self.portfolio, self.family, self.k) {
            (Some(r), None, _) => Ok(Some(PortfolioSpec::explicit(r.clone()))),
            (None, Some(f), Some(k)) => Ok(Some(PortfolioSpec::family(f, k))),
            (None, Some(_), None) => Err(Error::InvalidArgument("--family needs --k".into())),
            _ => Ok(None),
        }
    }

    fn n(&self) -> Result<usize, Error> {
        self.n.ok_or_else(|| Error::InvalidArgument("--n is required".into()))
    }

    fn resolve(&self, jobs: usize) -> Result<Portfolio, Error> {
        let n = self.n()?;
        match self.spec()? {
            Some(spec) => spec.resolve(n, jobs),
            None => Err(Error::InvalidArgument(
                "give a portfolio with --portfolio or --family and --k".into(),
            )),
        }
    }
}

#[derive(Args)]
struct EvalPolicyArgs {
    #[command(flatten)]
    portfolio: PortfolioArgs,
    /// Policy file in text form; defaults to the optimal policy of the portfolio.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Also simulate this many runs.
    #[arg(long, default_value_t = 0)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop simulated runs after this many steps.
    #[arg(long)]
    cutoff: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimalPolicyArgs {
    #[command(flatten)]
    portfolio: PortfolioArgs,
    /// Print the per-fitness table instead of breakpoints.
    #[arg(long)]
    table: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimalPortfolioArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Largest number of candidate portfolios to enumerate.
    #[arg(long, default_value_t = DEFAULT_SEARCH_CAP)]
    cap: u128,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    /// Include portfolios without radius 1.
    #[arg(long)]
    all: bool,
    #[arg(long, default_value_t = DEFAULT_SWEEP_CAP)]
    cap: u128,
    /// Write sweep.csv here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Bitstring,
    Surrogate,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Bitstring => Backend::Bitstring,
            BackendArg::Surrogate => Backend::Surrogate,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    portfolio: PortfolioArgs,
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// With more than one run, print runtime statistics instead of a trace.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, value_enum, default_value = "bitstring")]
    backend: BackendArg,
    /// Use a uniformly random target and bit order.
    #[arg(long)]
    random_instance: bool,
    #[arg(long)]
    cutoff: Option<u64>,
    /// Record only improving steps.
    #[arg(long)]
    improvements_only: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write trace.csv here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentKind {
    Ddqn,
    Tabular,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    portfolio: PortfolioArgs,
    #[arg(long, value_enum)]
    agent: Option<AgentKind>,
    #[arg(long)]
    budget: Option<u64>,
    /// Seeds to train, e.g. 0,1,2.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Final evaluation runs.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long, conflicts_with = "config")]
    resume: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// log.json written by `train`.
    #[arg(long)]
    log: PathBuf,
    /// Hit threshold in optimal standard deviations; defaults to the log's.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct ExactArgs {
    /// Problem sizes, e.g. 50,100.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Portfolio sizes: a list (2,3,4) or a range (2..6).
    #[arg(long)]
    k: Option<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    cap: Option<u128>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Reproduce {
    /// Optimal portfolios for each size.
    Table1(ExactArgs),
    /// Breakpoints of each family.
    Table2(ExactArgs),
    /// Cumulative runtime distribution over all portfolios.
    Fig1(ExactArgs),
    /// Optimal-policy runtimes per family and size.
    Fig4(ExactArgs),
    /// Multi-seed training with summary and curves.
    Training(TrainArgs),
}

fn parse_list(text: &str) -> Result<Vec<usize>, Error> {
    let bad = || Error::InvalidArgument(format!("cannot parse list `{text}`"));
    if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn load_policy(path: &Path) -> Result<Policy, Error> {
    fs::read_to_string(path)?.parse()
}

/// The policy named by --policy, or the optimal policy of the portfolio.
fn chosen_policy(policy: &Option<PathBuf>, portfolio: &PortfolioArgs, jobs: usize) -> Result<Policy, Error> {
    match policy {
        Some(path) => {
            let p = load_policy(path)?;
            if let Some(n) = portfolio.n {
                if n != p.n() {
                    return Err(Error::InvalidArgument(format!("policy is for n = {}, not {n}", p.n())));
                }
            }
            Ok(p)
        }
        None => optimal_restricted_policy(&portfolio.resolve(jobs)?),
    }
}

fn eval_policy(a: EvalPolicyArgs) -> Result<(), Error> {
    let policy = chosen_policy(&a.policy, &a.portfolio, a.jobs)?;
    let n = policy.n();
    let m = RuntimeMoments::of(&policy);
    let mut report = serde_json::json!({
        "n": n,
        "portfolio": policy.portfolio().radii(),
        "expected_runtime": m.expectation,
        "normalized": m.expectation / (n * n) as f64,
        "variance": m.variance,
        "std": m.std(),
    });
    println!("portfolio: {}", policy.portfolio());
    println!("expected_runtime: {}", m.expectation);
    println!("normalized: {}", m.expectation / (n * n) as f64);
    println!("variance: {}", m.variance);
    println!("std: {}", m.std());
    if a.runs > 0 {
        let inst = Instance::canonical(n);
        let samples = with_pool(a.jobs, || {
            sample_runtimes(&policy, &inst, a.runs, a.seed, a.cutoff, Backend::Bitstring)
        })??;
        let s = RunStats::from_samples(&samples);
        println!("sample_mean: {}", s.mean);
        println!("sample_std: {}", s.std);
        println!("sample_sem: {}", s.sem());
        println!("censored: {}", s.censored);
        report["simulation"] = serde_json::to_value(&s)?;
    }
    if let Some(dir) = a.out {
        create_dir(&dir)?;
        fs::write(dir.join("eval.json"), serde_json::to_string_pretty(&report)?)?;
        fs::write(dir.join("policy.txt"), policy.to_string())?;
    }
    Ok(())
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    let pool = lodac::portfolio::thread_pool(jobs)?;
    Ok(pool.install(f))
}

fn optimal_policy(a: OptimalPolicyArgs) -> Result<(), Error> {
    let portfolio = a.portfolio.resolve(a.jobs)?;
    let policy = optimal_restricted_policy(&portfolio)?;
    let policy = if a.table {
        policy.as_table()
    } else {
        policy.as_breakpoints()?
    };
    print!("{policy}");
    if let Some(dir) = a.out {
        create_dir(&dir)?;
        fs::write(dir.join("policy.txt"), policy.to_string())?;
    }
    Ok(())
}

fn optimal_portfolio(a: OptimalPortfolioArgs) -> Result<(), Error> {
    if a.k < 2 || a.k > a.n {
        return Err(Error::InvalidArgument(format!("k must lie in [2, n], got {}", a.k)));
    }
    let count = lodac::portfolio::binomial(a.n as u64 - 1, a.k as u64 - 1);
    if count > a.cap {
        return Err(Error::EnumerationTooLarge { count, cap: a.cap });
    }
    let (p, m) = search_optimal_portfolio(a.k, a.n, a.jobs)?;
    let normalized = m.expectation / (a.n * a.n) as f64;
    println!("portfolio: {p}");
    println!("expected_runtime: {}", m.expectation);
    println!("normalized: {normalized}");
    if let Some(dir) = a.out {
        create_dir(&dir)?;
        let report = serde_json::json!({
            "n": a.n, "k": a.k, "portfolio": p.radii(),
            "expected_runtime": m.expectation, "normalized": normalized,
        });
        fs::write(
            dir.join("optimal_portfolio.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), Error> {
    let records = sweep_all_portfolios(a.k, a.n, !a.all, a.cap)?;
    match a.out {
        Some(dir) => {
            create_dir(&dir)?;
            write_sweep_csv(&records, fs::File::create(dir.join("sweep.csv"))?)?;
            eprintln!(
                "{} portfolios written to {}",
                records.len(),
                dir.join("sweep.csv").display()
            );
        }
        None => write_sweep_csv(&records, io::stdout().lock())?,
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Error> {
    let policy = chosen_policy(&a.policy, &a.portfolio, a.jobs)?;
    let n = policy.n();
    let mut rng = stream_rng(a.seed, 0);
    let inst = if a.random_instance {
        Instance::random(n, &mut stream_rng(a.seed, u64::MAX))
    } else {
        Instance::canonical(n)
    };
    let backend = Backend::from(a.backend);
    if a.runs > 1 {
        let samples = with_pool(a.jobs, || {
            sample_runtimes(&policy, &inst, a.runs, a.seed, a.cutoff, backend)
        })??;
        let s = RunStats::from_samples(&samples);
        println!("runs: {}", s.runs);
        println!("mean: {}", s.mean);
        println!("std: {}", s.std);
        println!("sem: {}", s.sem());
        println!("min: {}", s.min);
        println!("max: {}", s.max);
        println!("censored: {}", s.censored);
        return Ok(());
    }
    if a.runs == 0 {
        return Err(Error::InvalidArgument("--runs must be at least 1".into()));
    }
    let mode = if a.improvements_only {
        TraceMode::ImprovementsOnly
    } else {
        TraceMode::Full
    };
    let trace = match backend {
        Backend::Bitstring => run_rls_with_mode(&policy, &inst, &mut rng, a.cutoff, mode)?,
        Backend::Surrogate => run_surrogate(&policy, n, &mut rng, a.cutoff)?,
    };
    match a.out {
        Some(dir) => {
            create_dir(&dir)?;
            trace.write_csv(fs::File::create(dir.join("trace.csv"))?)?;
            eprintln!("runtime {} ({:?})", trace.total_steps, trace.terminal);
        }
        None => trace.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn experiment_config(a: &TrainArgs) -> Result<ExperimentConfig, Error> {
    let mut config = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let n = a.portfolio.n()?;
            let spec = a.portfolio.spec()?.ok_or_else(|| {
                Error::InvalidArgument("give --config, or --n with --portfolio or --family and --k".into())
            })?;
            ExperimentConfig::new(n, spec, AgentConfig::default())
        }
    };
    if let Some(n) = a.portfolio.n {
        config.n = n;
    }
    if let Some(spec) = a.portfolio.spec()? {
        config.portfolio = spec;
    }
    match a.agent {
        Some(AgentKind::Ddqn) if !matches!(config.agent, AgentConfig::Ddqn(_)) => {
            config.agent = AgentConfig::Ddqn(DdqnConfig::default());
        }
        Some(AgentKind::Tabular) if !matches!(config.agent, AgentConfig::Tabular(_)) => {
            config.agent = AgentConfig::Tabular(QTableConfig::default());
        }
        _ => {}
    }
    if a.budget.is_some() {
        config.budget = a.budget;
    }
    if let Some(seeds) = &a.seed {
        config.seeds = seeds.clone();
    }
    if let Some(runs) = a.runs {
        config.final_runs = runs;
    }
    if let Some(tau) = a.tau {
        config.hit_tau = tau;
    }
    config.validate()?;
    Ok(config)
}

fn print_log_summary(log: &ExperimentLog) {
    print!("seed {}: optimal {:.2}", log.seed, log.optimal.expectation);
    if let Some(fe) = &log.final_eval {
        print!(
            ", best {:.2} +- {:.2} (step {}), last {:.2}, optimal sampled {:.2} +- {:.2}",
            fe.best.mean,
            fe.best.sem(),
            fe.best_step,
            fe.last.mean,
            fe.optimal.mean,
            fe.optimal.sem()
        );
    }
    if let Some(h) = log.hitting_ratio {
        print!(", hitting ratio {h:.4}");
    }
    println!();
}

fn train_command(a: TrainArgs, summary: bool) -> Result<(), Error> {
    if let Some(ckpt) = &a.resume {
        let log = lodac::harness::resume(ckpt, a.out.as_deref())?;
        print_log_summary(&log);
        if let (true, Some(dir)) = (summary, &a.out) {
            reproduce::write_training_summary(std::slice::from_ref(&log), dir)?;
        }
        return Ok(());
    }
    let config = experiment_config(&a)?;
    let logs = if summary {
        reproduce::training(&config, a.jobs, a.out.as_deref())?
    } else {
        lodac::harness::train(&config, a.jobs, a.out.as_deref())?
    };
    for log in &logs {
        print_log_summary(log);
    }
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<(), Error> {
    let log = ExperimentLog::load(&a.log)?;
    let tau = a.tau.unwrap_or(log.tau);
    println!("evaluations: {}", log.evaluations.len());
    println!("tau: {tau}");
    println!("hitting_ratio: {}", log.hitting_ratio(tau)?);
    match log.ruggedness() {
        Ok(r) => println!("ruggedness: {r}"),
        Err(e) => println!("ruggedness: undefined ({e})"),
    }
    match log.first_hit(tau) {
        Some(s) => println!("first_hit: {s}"),
        None => println!("first_hit: none"),
    }
    Ok(())
}

fn exact(cmd: Reproduce) -> Result<(), Error> {
    match cmd {
        Reproduce::Table1(a) => {
            let ns = a.n.unwrap_or_else(|| vec![50, 100]);
            let ks = parse_list(a.k.as_deref().unwrap_or("2..5"))?;
            let rows = reproduce::table1(&ns, &ks, a.jobs, a.cap.unwrap_or(DEFAULT_SEARCH_CAP), Some(&a.out))?;
            for r in rows {
                println!("n={} k={}: {} {:.7}", r.n, r.k, r.portfolio, r.normalized);
            }
        }
        Reproduce::Table2(a) => {
            let ns = a.n.unwrap_or_else(|| vec![50, 100]);
            let ks = parse_list(a.k.as_deref().unwrap_or("3,4"))?;
            let rows = reproduce::table2(&ns, &ks, a.jobs, a.cap.unwrap_or(DEFAULT_SEARCH_CAP), Some(&a.out))?;
            for r in rows {
                let nb: Vec<String> = r.normalized().iter().map(|b| format!("{b:.2}")).collect();
                println!("n={} k={} {}: {}", r.n, r.k, r.family, nb.join(", "));
            }
        }
        Reproduce::Fig1(a) => {
            let n = single(a.n, 50)?;
            let k = single(a.k.as_deref().map(parse_list).transpose()?, 3)?;
            let records = reproduce::fig1(n, k, a.cap.unwrap_or(DEFAULT_SWEEP_CAP), Some(&a.out))?;
            if let (Some(first), Some(last)) = (records.first(), records.last()) {
                println!(
                    "{} portfolios, best {} {:.6}, worst {} {:.6}",
                    records.len(),
                    first.portfolio,
                    first.normalized,
                    last.portfolio,
                    last.normalized
                );
            }
        }
        Reproduce::Fig4(a) => {
            let n = single(a.n, 50)?;
            let ks = parse_list(a.k.as_deref().unwrap_or("2..8"))?;
            let points = reproduce::fig4(n, &ks, a.jobs, a.cap.unwrap_or(DEFAULT_SEARCH_CAP), Some(&a.out))?;
            for p in points {
                println!("k={} {}: {:.7}", p.k, p.family, p.normalized);
            }
        }
        Reproduce::Training(a) => train_command(a, true)?,
    }
    Ok(())
}

fn single(values: Option<Vec<usize>>, default: usize) -> Result<usize, Error> {
    match values.as_deref() {
        None => Ok(default),
        Some([v]) => Ok(*v),
        Some(_) => Err(Error::InvalidArgument("expected a single value".into())),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::EnumerationTooLarge { .. } => EXIT_ENUMERATION_TOO_LARGE,
        Error::TrainingDiverged { .. } => EXIT_TRAINING_DIVERGED,
        Error::InvalidRadius { .. }
        | Error::InvalidArgument(_)
        | Error::UnsolvablePortfolio(_)
        | Error::Representation(_)
        | Error::FamilyUndefined { .. }
        | Error::InvalidAction { .. }
        | Error::Parse(_) => EXIT_INVALID_ARGUMENT,
        _ => EXIT_OTHER,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::EvalPolicy(a) => eval_policy(a),
        Command::OptimalPolicy(a) => optimal_policy(a),
        Command::OptimalPortfolio(a) => optimal_portfolio(a),
        Command::SweepPortfolios(a) => sweep(a),
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train_command(a, false),
        Command::Metrics(a) => metrics(a),
        Command::Reproduce(r) => exact(r),
    };
    let _ = io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
