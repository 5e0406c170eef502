use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use firreg::bench::{export_report, run_benchmark, run_identify, IdentifyOptions};
use firreg::estimator::Method;
use firreg::io;
use firreg::kernel::{
    build_covariance, build_filter_factor_closed_form, build_regularisation_closed_form, row_frequency_response,
    KernelFamily, KernelSpec,
};
use firreg::simulation::{make_dataset, ExperimentConfig, SystemRef};
use firreg::Error;

#[derive(Parser)]
#[command(name = "firreg", version, about = "Regularised FIR identification and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate an impulse response from a `u,y` CSV dataset.
    Identify(IdentifyArgs),
    /// Generate one synthetic dataset.
    Simulate(SimulateArgs),
    /// Run a paired Monte Carlo benchmark and export the report.
    Benchmark(BenchmarkArgs),
    /// Dump P, R, F and row frequency responses of a kernel.
    InspectKernel(InspectArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark system name or a system JSON file.
    #[arg(long)]
    system: Option<String>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Stop-band edges for the tailored method, e.g. 0.1,0.2,0.35,0.45.
    #[arg(long, value_delimiter = ',')]
    tailored_edges: Option<Vec<f64>>,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Dataset CSV with columns u,y.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "filter")]
    method: Method,
    /// FIR model order.
    #[arg(long, short = 'n', default_value_t = 100)]
    order: usize,
    /// Configuration providing the grid, folds and refinement settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    tailored_edges: Option<Vec<f64>>,
    #[arg(long, default_value = "identify-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Run index within the seeded stream family.
    #[arg(long, default_value_t = 0)]
    run: usize,
    #[arg(long, default_value = "simulate-out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long)]
    runs: Option<usize>,
    /// Comma-separated methods (ls, tc, dc, filter, tailored).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, default_value = "benchmark-out")]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    /// rw, corr, dec, tc or dc.
    #[arg(long, default_value = "tc")]
    family: KernelFamily,
    #[arg(short = 'n', long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    #[arg(long, default_value_t = 0.8)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Rows of F whose frequency response is written (0-based).
    #[arg(long, value_delimiter = ',')]
    rows: Option<Vec<usize>>,
    #[arg(long, default_value_t = 512)]
    freq_points: usize,
    #[arg(long, default_value = "kernel-out")]
    out: PathBuf,
}

/// Exit status classes: 1 for configuration problems, 2 for runtime failures.
enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure::Config(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(args: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::standard(args.system.as_deref().unwrap_or("band2")),
    };
    if let Some(system) = &args.system {
        let path = Path::new(system);
        cfg.system = if path.extension().is_some_and(|e| e == "json") {
            SystemRef::Spec(io::read_system_json(path).map_err(Failure::config)?)
        } else {
            SystemRef::Name(system.clone())
        };
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(edges) = &args.tailored_edges {
        cfg.tailored_edges = Some(edges.clone());
    }
    Ok(cfg)
}

fn identify(args: IdentifyArgs) -> Result<(), Failure> {
    let mut options = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            let cfg: ExperimentConfig =
                serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            IdentifyOptions::from_config(&cfg)
        }
        None => IdentifyOptions::default(),
    };
    if args.tailored_edges.is_some() {
        options.tailored_edges = args.tailored_edges.clone();
    }
    let data = io::read_dataset(&args.data).map_err(Failure::config)?;
    let id = run_identify(&data, args.order, args.method, &options).map_err(|e| match e {
        Error::Method { ref source, .. } if matches!(**source, Error::Parameter(_)) => Failure::config(&e),
        other => Failure::runtime(other),
    })?;
    io::write_estimate_csv(&args.out.join("estimate.csv"), &id.estimate).map_err(Failure::runtime)?;
    io::write_json(&args.out.join("identification.json"), &id).map_err(Failure::runtime)?;
    println!(
        "{}: {} taps, {}{}",
        args.method,
        id.estimate.order(),
        id.estimate.hyperparameters.summary(),
        id.cv_mse.map(|v| format!(", cv_mse={v:e}")).unwrap_or_default()
    );
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.experiment)?;
    cfg.validate().map_err(Failure::config)?;
    let data = make_dataset(&cfg, args.run).map_err(Failure::runtime)?;
    let system = cfg.system.resolve().map_err(Failure::config)?;
    io::write_dataset(&args.out.join("dataset.csv"), &data).map_err(Failure::runtime)?;
    io::write_json(&args.out.join("system.json"), &system).map_err(Failure::runtime)?;
    println!("{} samples of `{}` written to {}", data.len(), system.name, args.out.display());
    Ok(())
}

fn benchmark(args: BenchmarkArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.experiment)?;
    if let Some(runs) = args.runs {
        cfg.runs = runs;
    }
    if let Some(methods) = args.methods {
        cfg.methods = methods;
    }
    cfg.validate().map_err(Failure::config)?;
    let report = run_benchmark(&cfg).map_err(Failure::runtime)?;
    export_report(&report, &args.out).map_err(Failure::runtime)?;
    for s in &report.summary {
        println!(
            "{:<9} n={:<4} median={:e} q1={:e} q3={:e}",
            s.method, s.count, s.median, s.q1, s.q3
        );
    }
    for w in &report.win_table {
        println!("{} beats {} in {:.1}% of {} runs", w.challenger, w.baseline, w.percent, w.paired_runs);
    }
    if report.failures > 0 {
        return Err(Failure::Runtime(format!(
            "{} identifications failed; outputs in {}",
            report.failures,
            args.out.display()
        )));
    }
    Ok(())
}

fn inspect_kernel(args: InspectArgs) -> Result<(), Failure> {
    let spec = KernelSpec {
        family: args.family,
        c: args.c,
        rho: args.rho,
        alpha: args.alpha,
        sigma2: args.sigma2,
    };
    let p = build_covariance(&spec, args.n).map_err(Failure::config)?;
    let r = build_regularisation_closed_form(&spec, args.n).map_err(Failure::runtime)?;
    let f = build_filter_factor_closed_form(&spec, args.n).map_err(Failure::runtime)?;
    let out = &args.out;
    io::write_matrix_csv(&out.join("P.csv"), p.matrix()).map_err(Failure::runtime)?;
    io::write_matrix_csv(&out.join("R.csv"), r.matrix()).map_err(Failure::runtime)?;
    io::write_matrix_csv(&out.join("F.csv"), f.matrix()).map_err(Failure::runtime)?;
    let rows = args.rows.unwrap_or_else(|| vec![0, args.n / 2, args.n - 1]);
    for row in rows {
        let resp = row_frequency_response(&f, row, args.freq_points).map_err(Failure::config)?;
        io::write_frequency_response_csv(&out.join(format!("F_row{row}.csv")), &resp).map_err(Failure::runtime)?;
    }
    println!("{:?} kernel, n = {}: P, R, F written to {}", args.family, args.n, out.display());
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
    let result = match cli.command {
        Command::Identify(a) => identify(a),
        Command::Simulate(a) => simulate(a),
        Command::Benchmark(a) => benchmark(a),
        Command::InspectKernel(a) => inspect_kernel(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
