//! Command-line front end: `run`, `compare`, `schedule`, and `bound`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use adaptopk::engine::{self, Compressor};
use adaptopk::harness::{
    self, check_equal_budget, compare_summary, render_summary, run_all, run_single,
    write_metrics, write_summary_csv, Arm, DataSpec, ExperimentSpec, HarnessError, ProblemSpec,
};
use adaptopk::schedule::{self, TransitionPoint};

#[derive(Parser)]
#[command(
    name = "adaptopk",
    about = "Distributed-SGD simulator with adaptive Top-K gradient sparsification",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a single arm and write its metrics CSV.
    Run(CommonArgs),
    /// Run several compressor arms over several seeds at equal budget and
    /// summarize final accuracy/loss per arm.
    Compare(CompareArgs),
    /// Print the per-round sparsity schedule (k_t, t_hat, alpha, beta, B).
    Schedule(ScheduleArgs),
    /// Print the optimality-gap bound terms for a configuration.
    Bound(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON experiment config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Compression ratio d/k.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rounds between test evaluations (0 = final round only).
    #[arg(long)]
    eval_every: Option<usize>,
    /// none | topk_fixed | adaptopk
    #[arg(long)]
    compressor: Option<Compressor>,
    /// Enable per-worker error compensation.
    #[arg(long)]
    ec: bool,
    /// Training images (IDX, optionally .gz); switches the problem to image data.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker thread count (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated arms, e.g. adaptopk,topk_fixed,adaptopk+ec
    #[arg(long, value_delimiter = ',')]
    arms: Option<Vec<Arm>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Summarize even when the compressed arms' budgets differ.
    #[arg(long)]
    allow_unequal_budget: bool,
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Force the transition point instead of deriving it from constants.
    #[arg(long)]
    t_hat: Option<usize>,
    /// Average per-round k (overrides ratio-derived k).
    #[arg(long)]
    avg_k: Option<usize>,
    /// Model dimension (only needed when no problem is constructed).
    #[arg(long)]
    d: Option<usize>,
}

fn apply_overrides(spec: &mut ExperimentSpec, args: &CommonArgs) {
    let t = &mut spec.train;
    if let Some(v) = args.rounds {
        t.rounds = v;
    }
    if let Some(v) = args.workers {
        t.workers = v;
    }
    if let Some(v) = args.eta {
        t.eta = v;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = args.gamma {
        t.gamma = v;
    }
    if let Some(v) = args.ratio {
        t.ratio = v;
    }
    if let Some(v) = args.seed {
        t.seed = v;
    }
    if let Some(v) = args.eval_every {
        t.eval_every = v;
    }
    if let Some(v) = args.compressor {
        t.compressor = v;
    }
    if args.ec {
        t.error_compensation = true;
    }
    if args.images.is_some() || args.labels.is_some() {
        let mut data = match &spec.problem {
            ProblemSpec::Logistic { data } => data.clone(),
            ProblemSpec::Mlp { data, .. } => data.clone(),
            ProblemSpec::Quadratic { .. } => DataSpec::default(),
        };
        data.images = args.images.clone().or(data.images);
        data.labels = args.labels.clone().or(data.labels);
        data.test_images = args.test_images.clone().or(data.test_images);
        data.test_labels = args.test_labels.clone().or(data.test_labels);
        spec.problem = match &spec.problem {
            ProblemSpec::Mlp { hidden, .. } => ProblemSpec::Mlp {
                hidden: *hidden,
                data,
            },
            _ => ProblemSpec::Logistic { data },
        };
    } else if let (Some(ti), Some(tl)) = (&args.test_images, &args.test_labels) {
        if let ProblemSpec::Logistic { data } | ProblemSpec::Mlp { data, .. } = &mut spec.problem {
            data.test_images = Some(ti.clone());
            data.test_labels = Some(tl.clone());
        }
    }
    if let Some(v) = &args.output_dir {
        spec.output_dir = v.clone();
    }
    if args.threads.is_some() {
        spec.threads = args.threads;
    }
}

fn load_spec(args: &CommonArgs) -> Result<ExperimentSpec, HarnessError> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::from_file(path)?,
        None => ExperimentSpec::default(),
    };
    apply_overrides(&mut spec, args);
    Ok(spec)
}

fn with_pool<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, HarnessError> + Send,
) -> Result<T, HarnessError> {
    match threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Runtime(e.to_string()))?
            .install(f),
        _ => f(),
    }
}

fn cmd_run(args: CommonArgs) -> Result<(), HarnessError> {
    let spec = load_spec(&args)?;
    let out_dir = spec.resolved_output_dir();
    let arm = Arm {
        compressor: spec.train.compressor,
        error_compensation: Some(spec.train.error_compensation),
    };
    let seed = spec.train.seed;
    let source = harness::load_source(&spec.problem)?;
    let run = with_pool(spec.threads, || {
        run_single(&source, &spec.train, arm, seed)
    })?;
    let path = out_dir.join(format!("{}_seed{}.csv", arm.name(), seed));
    write_metrics(&run.metrics, &path)?;
    let acc = run
        .metrics
        .final_accuracy
        .map(|a| format!("{a:.4}"))
        .unwrap_or_else(|| "-".into());
    println!(
        "{} seed {}: final_loss {:.6} final_acc {} total_coords {} wall {:.2}s -> {}",
        arm.name(),
        seed,
        run.metrics.final_loss,
        acc,
        run.metrics.total_coords,
        run.metrics.wall_secs,
        path.display()
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), HarnessError> {
    let mut spec = load_spec(&args.common)?;
    if let Some(arms) = args.arms {
        spec.arms = arms;
    }
    if let Some(seeds) = args.seeds {
        spec.seeds = seeds;
    }
    if spec.arms.is_empty() || spec.seeds.is_empty() {
        return Err(HarnessError::Config(
            "compare needs at least one arm and one seed".into(),
        ));
    }
    let out_dir = spec.resolved_output_dir();
    let source = harness::load_source(&spec.problem)?;
    let runs = with_pool(spec.threads, || {
        run_all(&source, &spec.train, &spec.arms, &spec.seeds)
    })?;
    for run in &runs {
        let path = out_dir.join(format!("{}_seed{}.csv", run.arm.name(), run.seed));
        write_metrics(&run.metrics, &path)?;
    }
    if !args.allow_unequal_budget {
        check_equal_budget(&runs)?;
    }
    let summary = compare_summary(&runs)?;
    print!("{}", render_summary(&summary));
    write_summary_csv(&summary, &out_dir.join("summary.csv"))?;
    Ok(())
}

fn cmd_schedule(args: ScheduleArgs) -> Result<(), HarnessError> {
    let spec = load_spec(&args.common)?;
    let rounds = spec.train.rounds;
    let gamma = spec.train.gamma;
    let sched = match args.t_hat {
        Some(t_hat) => {
            // Fully explicit: no constants needed.
            let d = match args.d {
                Some(d) => d,
                None => harness::instantiate(
                    &harness::load_source(&spec.problem)?,
                    spec.train.workers,
                    spec.train.seed,
                )?
                .dim(),
            };
            let k = args.avg_k.unwrap_or_else(|| spec.train.sparsity_k(d));
            schedule::build_schedule(rounds, k, gamma, t_hat, d)?
        }
        None => {
            let source = harness::load_source(&spec.problem)?;
            let problem = harness::instantiate(&source, spec.train.workers, spec.train.seed)?;
            let mut train = spec.train.clone();
            train.compressor = Compressor::Adaptopk;
            if let Some(k) = args.avg_k {
                train.ratio = problem.dim() as f64 / k as f64;
            }
            let (sched, params) = with_pool(spec.threads, || {
                Ok(engine::plan_schedule(&train, problem.as_ref())?)
            })?;
            if let Some(p) = params {
                let (alpha, beta) = schedule::alpha_beta(&p);
                let b = schedule::contraction(&p)?;
                println!("alpha = {alpha}");
                println!("beta = {beta}");
                println!("B = {b}");
            }
            sched
        }
    };
    println!("t_hat = {}", sched.t_hat);
    println!("m = {}", sched.adjustment);
    println!(
        "low_block = [{}, {})  high = [0, {}) + [{}, {})",
        sched.low_start, sched.low_end, sched.low_start, sched.low_end, rounds
    );
    println!("budget_K = {}  sum_k_t = {}", sched.budget, sched.total());
    let rendered: Vec<String> = sched.per_round_k.iter().map(|k| k.to_string()).collect();
    println!("k_t: {}", rendered.join(" "));
    Ok(())
}

fn cmd_bound(args: CommonArgs) -> Result<(), HarnessError> {
    let spec = load_spec(&args)?;
    let source = harness::load_source(&spec.problem)?;
    let problem = harness::instantiate(&source, spec.train.workers, spec.train.seed)?;
    let mut train = spec.train.clone();
    train.compressor = Compressor::Adaptopk;
    let (sched, params) = with_pool(spec.threads, || {
        Ok(engine::plan_schedule(&train, problem.as_ref())?)
    })?;
    let p = params.ok_or_else(|| {
        HarnessError::Config("no bound constants available for this problem".into())
    })?;
    p.validate()?;
    let (alpha, beta) = schedule::alpha_beta(&p);
    let b = schedule::contraction(&p)?;
    let t_hat = match schedule::transition_point(alpha, beta, b)? {
        TransitionPoint::At(t) => t,
        TransitionPoint::Monotone => train.rounds - 1,
    };
    let bt = b.powi(p.rounds as i32);
    let m_term = bt * (p.f0 - p.f_star);
    let vanilla = schedule::vanilla_bound(&p)?;
    let n_term = vanilla - m_term;
    let gap = schedule::adaptive_gap_term(&sched, alpha, beta, b, p.eta, p.d);
    println!("L = {}  mu = {}  sigma_sq = {}  f0 = {}", p.l, p.mu, p.sigma_sq, p.f0);
    println!("alpha = {alpha}");
    println!("beta = {beta}");
    println!("B = {b}");
    println!("t_hat = {t_hat}");
    println!("M(k) = {m_term}");
    println!("N(k) = {n_term}");
    println!("vanilla_bound = {vanilla}");
    println!("adaptive_gap_term = {gap}");
    println!("adaptive_bound = {}", vanilla + gap);
    if gap >= 0.0 && sched.adjustment > 0 {
        eprintln!("note: gap term is non-negative; the schedule offers no envelope improvement here");
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Compare(args) => cmd_compare(args),
        Cmd::Schedule(args) => cmd_schedule(args),
        Cmd::Bound(args) => cmd_bound(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
