use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use socimpact::analysis::{fit_q_exponential_with, FitOptions, LossAnalysis, QExpDistribution};
use socimpact::config::{load_config, Overrides};
use socimpact::harness::{self, analyze_returns, summarize, write_analysis_outputs};
use socimpact::{output, Error, Result};

#[derive(Parser)]
#[command(name = "socimpact", version, about = "Threshold social-impact market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Config file: dotted key-value text, or a JSON config / run manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Linear lattice size.
    #[arg(long)]
    n: Option<usize>,
    /// Threshold amplitude.
    #[arg(long)]
    lambda: Option<f64>,
    /// Rounds per trading day.
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Trading days per replica.
    #[arg(long)]
    total_days: Option<usize>,
    #[arg(long)]
    warmup_rounds: Option<usize>,
    /// Run replicas one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            n: self.n,
            lambda: self.lambda,
            tau: self.tau,
            seed: self.seed,
            replicas: self.replicas,
            total_days: self.total_days,
            warmup_rounds: self.warmup_rounds,
            sequential: self.sequential,
            out: self.out.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment and write the output bundle.
    Simulate(ConfigArgs),
    /// Re-run the loss analysis on stored daily.csv files.
    Analyze {
        /// Bundle directory or a single daily.csv.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Fit a q-exponential to an interoccurrence CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Sample count, needed when the input holds masses rather than samples.
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long, default_value_t = 0.17)]
        q0: f64,
    },
    /// Validate a config and print it with defaults filled in.
    ConfigCheck(ConfigArgs),
}

fn simulate(args: &ConfigArgs) -> Result<i32> {
    let (cfg, _) = load_config(args.config.as_deref(), &args.overrides())?;
    let bundle = harness::run_experiment(&cfg)?;
    for t in &bundle.manifest.targets {
        match (t.q_fit, t.beta_fit) {
            (Some(q), Some(b)) => println!(
                "R_Q={:<5} achieved={:.3} Q={:.6} q={:.4} beta={:.4} rms={:.3} events={}",
                t.target_rq,
                t.empirical_rq.unwrap_or(f64::NAN),
                t.q_threshold.unwrap_or(f64::NAN),
                q,
                b,
                t.rms_log_residual.unwrap_or(f64::NAN),
                t.n_events.unwrap_or(0)
            ),
            _ => println!("R_Q={:<5} no fit", t.target_rq),
        }
    }
    println!(
        "wrote {} ({:.1} s)",
        bundle.dir.display(),
        bundle.manifest.wall_time_seconds
    );
    Ok(bundle.exit_code())
}

fn analyze(input: &PathBuf, args: &ConfigArgs) -> Result<i32> {
    let mut overrides = args.overrides();
    if overrides.out.is_none() && std::env::var_os(socimpact::config::OUTPUT_DIR_ENV).is_none() {
        let dir = if input.is_file() {
            input.parent().map(PathBuf::from).unwrap_or_default()
        } else {
            input.clone()
        };
        overrides.out = Some(dir);
    }
    let (cfg, _) = load_config(args.config.as_deref(), &overrides)?;
    let files = harness::find_daily_files(input)?;
    let series: Vec<Vec<f64>> = files
        .iter()
        .map(|f| output::read_daily_returns(f))
        .collect::<Result<_>>()?;
    info!("analyzing {} daily series", series.len());
    let segments: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
    let report = analyze_returns(&segments, &cfg.analysis);
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_analysis_outputs(&cfg.output_dir, &report, &cfg.analysis)?;
    for w in &report.warnings {
        warn!("{w}");
    }
    println!("{}", serde_json::to_string_pretty(&summarize(&report))?);
    Ok(if report.has_insufficient_events() { 3 } else { 0 })
}

fn fit(input: &PathBuf, n_samples: Option<usize>, q0: f64) -> Result<i32> {
    let inter = output::read_inter_times(input, n_samples)?;
    let n = inter.len();
    let days: Vec<usize> = (0..=n).collect();
    let loss = LossAnalysis::from_inter_times(f64::NAN, days, inter)?;
    let opts = FitOptions {
        q0,
        ..FitOptions::default()
    };
    let fit = fit_q_exponential_with(&loss, &opts)?;
    let dist: QExpDistribution = fit.distribution();
    println!("q={} beta={} rms_log_residual={} samples={}", fit.q, fit.beta_scale, fit.rms_log_residual, n);
    println!("{}", output::INTEROCCURRENCE_HEADER);
    for &(r, p) in &loss.pq {
        println!("{r},{p},{}", dist.pmf(r));
    }
    Ok(0)
}

fn config_check(args: &ConfigArgs) -> Result<i32> {
    let (cfg, warnings) = load_config(args.config.as_deref(), &args.overrides())?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", cfg.to_toml_string());
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Analyze { input, config } => analyze(input, config),
        Command::Fit { input, n_samples, q0 } => fit(input, *n_samples, *q0),
        Command::ConfigCheck(args) => config_check(args),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    e.exit_code()
}
