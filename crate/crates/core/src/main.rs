//! Command-line front end. Exit codes: 0 success, 1 usage or configuration
//! error, 2 data error or failed validation, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use extreme_series::pipeline::{cmd_diagnose, cmd_fit, cmd_simulate, cmd_validate, RunConfig};
use extreme_series::polar::ThresholdSpec;
use extreme_series::simulator::SamplingMode;

#[derive(Parser)]
#[command(name = "extreme-series", version, about = "Fit, simulate and validate extreme fixed-length time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags take precedence over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitFlags {
    /// Input CSV of cycle series.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Subsampling step between retained cycles.
    #[arg(long)]
    delta: Option<usize>,
    #[arg(long)]
    ar_order: Option<usize>,
    /// Tail probability modelled by the GPD in each margin.
    #[arg(long)]
    p_u: Option<f64>,
    /// Radius threshold as a quantile of the observed costs.
    #[arg(long, conflicts_with = "u_ell")]
    cost_quantile: Option<f64>,
    /// Absolute radius threshold.
    #[arg(long)]
    u_ell: Option<f64>,
    /// Keep every month instead of the default season.
    #[arg(long)]
    all_months: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Conditional,
    Unconditional,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every model and write the bundle.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitFlags,
    },
    /// Simulate a batch of extreme series from a bundle.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Model bundle (defaults to OUT/model.json).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        n_sim: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Also write re-trended series.
        #[arg(long)]
        retrend: bool,
    },
    /// Compare a simulated batch with the observed extremes.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Batch CSV (defaults to OUT/batch.csv).
        #[arg(long)]
        batch: Option<PathBuf>,
        /// Repetitions of the classification test.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Write exploratory diagnostics tables.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitFlags,
    },
}

fn base_config(common: &Common) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn apply_fit(cfg: &mut RunConfig, f: &FitFlags) {
    if let Some(i) = &f.input {
        cfg.input = Some(i.clone());
    }
    if let Some(d) = f.delta {
        cfg.fit.delta = d;
    }
    if let Some(p) = f.ar_order {
        cfg.fit.ar_order = p;
    }
    if let Some(p) = f.p_u {
        cfg.fit.p_u = p;
    }
    if let Some(q) = f.cost_quantile {
        cfg.fit.threshold = ThresholdSpec::Quantile(q);
    }
    if let Some(u) = f.u_ell {
        cfg.fit.threshold = ThresholdSpec::Absolute(u);
    }
    if f.all_months {
        cfg.fit.season = None;
    }
}

fn run(cli: Cli) -> ExitCode {
    let common = match &cli.command {
        Command::Fit { common, .. }
        | Command::Simulate { common, .. }
        | Command::Validate { common, .. }
        | Command::Diagnose { common, .. } => common,
    };
    let mut cfg = match base_config(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match &cli.command {
        Command::Fit { fit, .. } | Command::Diagnose { fit, .. } => apply_fit(&mut cfg, fit),
        Command::Simulate { n_sim, mode, retrend, .. } => {
            if let Some(n) = n_sim {
                cfg.simulation.n_sim = *n;
            }
            if let Some(m) = mode {
                cfg.simulation.sampling_mode = match m {
                    Mode::Conditional => SamplingMode::Conditional,
                    Mode::Unconditional => SamplingMode::Unconditional,
                };
            }
            cfg.simulation.retrend |= *retrend;
        }
        Command::Validate { input, reps, .. } => {
            if let Some(i) = input {
                cfg.input = Some(i.clone());
            }
            if let Some(r) = reps {
                cfg.validation.reps = *r;
            }
        }
    }
    let cfg = match cfg.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    let result = match &cli.command {
        Command::Fit { .. } => cmd_fit(&cfg).map(|m| {
            println!("fitted {} extremes, J = {}", m.extreme_ids.len(), m.angular.j);
            true
        }),
        Command::Simulate { model, .. } => cmd_simulate(&cfg, model.as_deref()).map(|b| {
            println!("simulated {} series, acceptance rate {:.4}", b.len(), b.acceptance_rate());
            true
        }),
        Command::Validate { model, batch, .. } => cmd_validate(&cfg, model.as_deref(), batch.as_deref()).map(|r| {
            for h in &r.hard_checks {
                println!("{} {}: {}", if h.passed { "PASS" } else { "FAIL" }, h.name, h.detail);
            }
            r.passed
        }),
        Command::Diagnose { .. } => cmd_diagnose(&cfg).map(|files| {
            println!("wrote {} diagnostics tables", files.len());
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}
