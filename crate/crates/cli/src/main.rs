use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use iseval_core::fingerprint::{self, config_files, load_fingerprint, load_task, plan_experiments, EditingMode};
use iseval_core::mocksegmenter::{self, MockBehavior, MockOptions};
use iseval_core::simulator::{run_experiment, Endpoints, RunConfig};
use iseval_core::{protocol, report, Error, ExperimentPlan};

const EXIT_INVALID: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "iseval", version, about = "Interactive segmentation evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check fingerprint and task documents.
    Validate(ConfigArgs),
    /// Resolve compatible experiments and write a plan file.
    Plan(PlanArgs),
    /// Execute a plan against running applications.
    Run(RunArgs),
    /// Rebuild summary and curves from persisted results.
    Report(ReportArgs),
    /// Check placed prompts against their error regions.
    Audit(ReportArgs),
    /// Serve a reference application with known behaviour.
    ServeMock(MockArgs),
    /// Check a running application against the wire protocol.
    Conformance(ConformanceArgs),
}

#[derive(Args)]
struct ConformanceArgs {
    /// Application address, host:port.
    #[arg(long)]
    endpoint: String,
    /// Image the application is asked to segment.
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
}

#[derive(Args)]
struct ConfigArgs {
    /// Directory of fingerprint documents (*.toml).
    #[arg(long)]
    fingerprints: Option<PathBuf>,
    /// Directory of task documents (*.toml).
    #[arg(long)]
    tasks: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    fingerprints: PathBuf,
    #[arg(long)]
    tasks: PathBuf,
    /// Output plan file.
    #[arg(long, default_value = "plan.json")]
    plan: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override every task's interaction budget.
    #[arg(long)]
    budget: Option<u32>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Dataset root; task dataset paths are relative to it.
    #[arg(long)]
    data: PathBuf,
    /// TOML map of algorithm id to address or list of addresses.
    #[arg(long)]
    endpoints: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the plan's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the plan's budgets.
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Per-request response timeout in seconds.
    #[arg(long, default_value_t = 300.0)]
    timeout: f64,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a previous run.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BehaviorName {
    OracleBall,
    DilatedTruth,
    ConstantEmpty,
    PerfectAfter,
    NoisyOracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum EditingName {
    Implicit,
    Explicit,
    Atomic,
    None,
}

impl From<EditingName> for EditingMode {
    fn from(e: EditingName) -> Self {
        match e {
            EditingName::Implicit => EditingMode::Implicit,
            EditingName::Explicit => EditingMode::Explicit,
            EditingName::Atomic => EditingMode::Atomic,
            EditingName::None => EditingMode::None,
        }
    }
}

#[derive(Args)]
struct MockArgs {
    #[arg(long, value_enum)]
    behavior: BehaviorName,
    /// Ball radius in voxels (oracle_ball, noisy_oracle).
    #[arg(long, default_value_t = 5)]
    radius: u32,
    /// Dilation steps (dilated_truth).
    #[arg(long, default_value_t = 0)]
    k: u32,
    /// First perfect iteration (perfect_after).
    #[arg(long, default_value_t = 1)]
    after: u32,
    /// Voxel flip probability (noisy_oracle).
    #[arg(long, default_value_t = 0.01)]
    flip_prob: f64,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long, default_value_t = 0)]
    port: u16,
    /// Directory of reference labels named like the images.
    #[arg(long)]
    cheat_labels: Option<PathBuf>,
    /// Directory for returned masks.
    #[arg(long, default_value = "mock-work")]
    workdir: PathBuf,
    #[arg(long, value_enum, default_value = "implicit")]
    editing: EditingName,
    /// Advertise this fingerprint instead of the built-in one.
    #[arg(long)]
    fingerprint: Option<PathBuf>,
    /// Sleep before each reply, in milliseconds.
    #[arg(long, default_value_t = 0)]
    delay_ms: u64,
}

fn validate(args: &ConfigArgs) -> Result<u8> {
    if args.fingerprints.is_none() && args.tasks.is_none() {
        bail!("nothing to validate: pass --fingerprints and/or --tasks");
    }
    let mut failures = 0;
    let mut check = |dir: &Path, load: &dyn Fn(&Path) -> iseval_core::Result<()>| match config_files(dir) {
        Ok(files) => {
            for f in files {
                match load(&f) {
                    Ok(()) => println!("ok    {}", f.display()),
                    Err(e) => {
                        failures += 1;
                        println!("error {e}");
                    }
                }
            }
        }
        Err(e) => {
            failures += 1;
            println!("error {e}");
        }
    };
    if let Some(dir) = &args.fingerprints {
        check(dir, &|p| load_fingerprint(p).map(|_| ()));
    }
    if let Some(dir) = &args.tasks {
        check(dir, &|p| load_task(p).map(|_| ()));
    }
    Ok(if failures == 0 { 0 } else { EXIT_INVALID })
}

fn plan(args: &PlanArgs) -> Result<u8> {
    let fps = match fingerprint::load_fingerprints(&args.fingerprints) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_INVALID);
        }
    };
    let tasks = match fingerprint::load_tasks(&args.tasks) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_INVALID);
        }
    };
    if fps.is_empty() || tasks.is_empty() {
        eprintln!("error: need at least one fingerprint and one task");
        return Ok(EXIT_INVALID);
    }
    let plan = match plan_experiments(&fps, &tasks, args.seed, args.budget) {
        Ok(p) => p,
        Err(e @ Error::NoCommonPrompt { .. }) => {
            eprintln!("error: {e}");
            return Ok(EXIT_INVALID);
        }
        Err(e) => return Err(e.into()),
    };
    for task in &tasks {
        if !plan.entries.iter().any(|e| e.task == task.id) {
            eprintln!("warning: no compatible algorithm for task {}", task.id);
        }
    }
    if plan.entries.is_empty() {
        eprintln!("warning: empty plan");
    }
    let mut out = std::io::stdout().lock();
    for e in &plan.entries {
        let types: Vec<&str> = e.prompt.types.iter().map(|t| t.name()).collect();
        write!(
            out,
            "{}\t{}\tprompts={}\tper_class={}\tediting={}\tbudget={}",
            e.task,
            e.algorithm,
            types.join("+"),
            e.prompt.points_per_class,
            format!("{:?}", e.editing).to_lowercase(),
            e.budget
        )?;
        if !e.prompt.constraints.is_empty() {
            write!(out, "\tconstraints={}", e.prompt.constraints.join(";"))?;
        }
        if e.out_of_distribution {
            write!(out, "\tout-of-distribution")?;
        }
        writeln!(out)?;
    }
    std::fs::write(&args.plan, plan.to_json() + "\n").with_context(|| format!("writing {}", args.plan.display()))?;
    eprintln!("plan with {} entries written to {}", plan.entries.len(), args.plan.display());
    Ok(0)
}

fn run(args: &RunArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.plan).with_context(|| format!("reading {}", args.plan.display()))?;
    let mut plan = ExperimentPlan::from_json(&text).with_context(|| format!("parsing {}", args.plan.display()))?;
    if let Some(seed) = args.seed {
        plan.master_seed = seed;
        plan.entries.iter_mut().for_each(|e| e.master_seed = seed);
    }
    if let Some(budget) = args.budget {
        if budget == 0 {
            bail!("--budget must be >= 1");
        }
        plan.entries.iter_mut().for_each(|e| e.budget = budget);
    }
    if !(args.timeout.is_finite() && args.timeout > 0.0) {
        bail!("--timeout must be positive");
    }
    let endpoints = Endpoints::load(&args.endpoints)?;
    let cfg = RunConfig {
        data_root: args.data.clone(),
        out_dir: args.out.clone(),
        workers: args.workers.max(1),
        timeout: Duration::from_secs_f64(args.timeout),
    };
    log::info!("running {} plan entries with {} worker(s)", plan.entries.len(), cfg.workers);
    let result = run_experiment(&plan, &endpoints, &cfg)?;
    for s in &result.skipped {
        eprintln!("skipped {} on {}: {}", s.algorithm, s.task, s.reason);
    }
    for g in &result.groups {
        if g.errored() > 0 {
            eprintln!("{} on {}: {} samples ended with an application error", g.algorithm, g.task, g.errored());
        }
    }
    for f in &result.failed_samples {
        eprintln!("failed: {f}");
    }
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if result.has_failures() { EXIT_PARTIAL } else { 0 })
}

fn regenerate(args: &ReportArgs) -> Result<u8> {
    report::regenerate(&args.out)?;
    let md = args.out.join("summary.md");
    print!("{}", std::fs::read_to_string(&md).with_context(|| format!("reading {}", md.display()))?);
    Ok(0)
}

fn audit(args: &ReportArgs) -> Result<u8> {
    let r = report::audit(&args.out.join("transcripts"))?;
    for v in &r.violations {
        println!("violation: {v}");
    }
    println!(
        "{} transcripts, {} points, {} violations",
        r.transcripts,
        r.points,
        r.violations.len()
    );
    Ok(if r.violations.is_empty() { 0 } else { EXIT_INVALID })
}

fn serve_mock(args: &MockArgs) -> Result<u8> {
    let behavior = match args.behavior {
        BehaviorName::OracleBall => MockBehavior::OracleBall { radius: args.radius },
        BehaviorName::DilatedTruth => MockBehavior::DilatedTruth { k: args.k },
        BehaviorName::ConstantEmpty => MockBehavior::ConstantEmpty,
        BehaviorName::PerfectAfter => MockBehavior::PerfectAfter { j: args.after },
        BehaviorName::NoisyOracle => MockBehavior::NoisyOracle {
            radius: args.radius,
            flip_prob: args.flip_prob,
        },
    };
    behavior.validate()?;
    std::fs::create_dir_all(&args.workdir).with_context(|| format!("creating {}", args.workdir.display()))?;
    let workdir = args.workdir.canonicalize()?;
    let mut options = MockOptions::new(&behavior, workdir, args.cheat_labels.clone());
    options.fingerprint = match &args.fingerprint {
        Some(p) => load_fingerprint(p)?,
        None => mocksegmenter::mock_fingerprint(&behavior, args.editing.into()),
    };
    options.delay = Duration::from_millis(args.delay_ms);
    let listener = TcpListener::bind((args.host.as_str(), args.port))
        .with_context(|| format!("binding {}:{}", args.host, args.port))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    mocksegmenter::serve(behavior, options, listener)?;
    Ok(0)
}

fn conformance(args: &ConformanceArgs) -> Result<u8> {
    if !(args.timeout.is_finite() && args.timeout > 0.0) {
        bail!("--timeout must be positive");
    }
    match protocol::conformance(&args.endpoint, &args.image, Duration::from_secs_f64(args.timeout)) {
        Ok(passed) => {
            for check in passed {
                println!("ok    {check}");
            }
            Ok(0)
        }
        Err(e) => {
            println!("error {e}");
            Ok(EXIT_INVALID)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Validate(a) => validate(a),
        Command::Plan(a) => plan(a),
        Command::Run(a) => run(a),
        Command::Report(a) => regenerate(a),
        Command::Audit(a) => audit(a),
        Command::ServeMock(a) => serve_mock(a),
        Command::Conformance(a) => conformance(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
