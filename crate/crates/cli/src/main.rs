use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use zoll_lab::experiment::{
    run_experiment, CountKind, ExperimentConfig, ExperimentError, ExperimentKind, ExperimentResult, Family,
};
use zoll_lab::exponents::Exponent;

/// Strichartz-norm experiments on the sphere and related counting audits.
#[derive(Parser, Debug)]
#[command(name = "zoll-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Exponent branches and breakpoints in exact arithmetic.
    Exponents,
    /// Norm sweep over lambda for one family, with slope fits.
    Fit,
    /// Norm sweep plus evolution diagnostics and peak persistence.
    Simulate,
    /// Lattice and representation counting audits.
    Count,
    /// Whitney close-pair audit on seeded random pairs.
    Whitney,
    /// Pointwise Weyl sums.
    Weyl,
    /// L^4 baseline for the Schrodinger flow on the circle.
    BaselineCircle,
    /// Run the experiment described by --config as is.
    Run,
}

#[derive(Args, Debug, Clone, Default)]
struct Opts {
    /// JSON config; other flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    dim: Option<u32>,
    #[arg(long, global = true, value_parser = parse_family)]
    family: Option<Family>,
    /// Comma-separated exponents, e.g. `4,14/3,6`.
    #[arg(long, global = true, value_delimiter = ',')]
    q: Option<Vec<Exponent>>,
    /// Sweep `lambda-min, 2 lambda-min, ...` up to `lambda-max`.
    #[arg(long, global = true, requires = "lambda_max")]
    lambda_min: Option<f64>,
    #[arg(long, global = true, requires = "lambda_min")]
    lambda_max: Option<f64>,
    /// Explicit comma-separated lambda list.
    #[arg(long, global = true, value_delimiter = ',', conflicts_with = "lambda_min")]
    lambdas: Option<Vec<f64>>,
    #[arg(long, global = true)]
    alpha: Option<u32>,
    #[arg(long, global = true)]
    c0: Option<f64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    oversample: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// CSV destination; the JSON summary goes next to it. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 2 if any acceptance check fails.
    #[arg(long, global = true)]
    assert: bool,
    #[arg(long, global = true, value_parser = parse_count_kind)]
    count_kind: Option<CountKind>,
    #[arg(long, global = true)]
    pairs: Option<usize>,
    #[arg(long, global = true)]
    theta0: Option<f64>,
    /// Exponent of the representation-count bound.
    #[arg(long, global = true)]
    growth_exponent: Option<f64>,
    /// Drop the smallest lambda from slope fits.
    #[arg(long, global = true)]
    drop_smallest: bool,
    #[arg(long, global = true)]
    serial: bool,
    #[arg(long, global = true)]
    memory_budget_mib: Option<u64>,
    #[arg(long, global = true)]
    runtime_limit_secs: Option<u64>,
}

fn parse_family(s: &str) -> Result<Family, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| {
        format!("unknown family {s:?}; expected zonal, highest_weight, cluster_kernel or random")
    })
}

fn parse_count_kind(s: &str) -> Result<CountKind, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| {
        format!("unknown count kind {s:?}; expected annulus, pair_representation, triple_representation or triple_cells")
    })
}

fn build_config(command: Command, o: &Opts) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = match &o.config {
        Some(path) => ExperimentConfig::from_json(
            &std::fs::read_to_string(path)
                .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?,
        )?,
        None => ExperimentConfig::default(),
    };
    let kind = match command {
        Command::Exponents => Some(ExperimentKind::ExponentTable),
        Command::Fit => Some(ExperimentKind::Fit),
        Command::Simulate => Some(ExperimentKind::Simulate),
        Command::Count => Some(ExperimentKind::Count),
        Command::Whitney => Some(ExperimentKind::Whitney),
        Command::Weyl => Some(ExperimentKind::Weyl),
        Command::BaselineCircle => Some(ExperimentKind::BaselineCircle),
        Command::Run => None,
    };
    if let Some(kind) = kind {
        if o.config.is_none() {
            cfg = defaults_for(kind);
        }
        cfg.kind = kind;
    } else if o.config.is_none() {
        return Err(ExperimentError::Config("run needs --config".into()));
    }
    if let Some(v) = o.dim {
        cfg.dimension = v;
    }
    if let Some(v) = o.family {
        cfg.family = v;
    }
    if let Some(v) = &o.q {
        cfg.qs = v.clone();
    }
    if let (Some(lo), Some(hi)) = (o.lambda_min, o.lambda_max) {
        if !(lo > 0.0 && hi >= lo) {
            return Err(ExperimentError::Config(format!("need 0 < lambda-min <= lambda-max, got {lo}, {hi}")));
        }
        cfg.lambdas = std::iter::successors(Some(lo), |l| Some(l * 2.0)).take_while(|l| *l <= hi).collect();
    }
    if let Some(v) = &o.lambdas {
        cfg.lambdas = v.clone();
    }
    if let Some(v) = o.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = o.c0 {
        cfg.c0 = v;
    }
    if let Some(v) = o.delta {
        cfg.delta = v;
    }
    if let Some(v) = o.oversample {
        cfg.oversample = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.out {
        cfg.output = Some(v.clone());
    }
    if let Some(v) = o.count_kind {
        cfg.count_kind = v;
    }
    if let Some(v) = o.pairs {
        cfg.pairs = v;
    }
    if let Some(v) = o.theta0 {
        cfg.theta0 = v;
    }
    if let Some(v) = o.growth_exponent {
        cfg.growth_exponent = v;
    }
    if o.drop_smallest {
        cfg.drop_smallest = true;
    }
    if o.serial {
        cfg.parallel = false;
    }
    if let Some(v) = o.memory_budget_mib {
        cfg.memory_budget_bytes = v << 20;
    }
    if let Some(v) = o.runtime_limit_secs {
        cfg.runtime_limit_secs = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Per-subcommand lambda ranges when no config file is given.
fn defaults_for(kind: ExperimentKind) -> ExperimentConfig {
    let base = ExperimentConfig::default();
    let lambdas = match kind {
        ExperimentKind::Count => vec![256.0, 512.0, 1024.0, 2048.0],
        ExperimentKind::Weyl => (4..=12).map(|e| 2f64.powi(e)).collect(),
        ExperimentKind::BaselineCircle => (6..=12).map(|e| 2f64.powi(e)).collect(),
        _ => base.lambdas.clone(),
    };
    let qs = if kind == ExperimentKind::ExponentTable { Vec::new() } else { base.qs.clone() };
    ExperimentConfig { kind, lambdas, qs, ..base }
}

fn emit(result: &ExperimentResult) -> Result<(), ExperimentError> {
    let generated = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0).to_string();
    match &result.config.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            result.write_csv(&mut w, &generated)?;
            w.flush()?;
            std::fs::write(path.with_extension("json"), result.summary_json() + "\n")?;
            println!("{}", result.summary_json());
        }
        None => {
            let stdout = io::stdout();
            result.write_csv(stdout.lock(), &generated)?;
        }
    }
    for f in &result.fits {
        let q = f.q.map(|q| format!(" q={q}")).unwrap_or_default();
        eprintln!("fit {} {}{}: slope {:.6} over {} points", f.family, f.norm_kind, q, f.fit.slope, f.fit.sample_count);
    }
    for c in &result.checks {
        eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = build_config(cli.command, &cli.opts).and_then(|cfg| {
        let result = run_experiment(&cfg)?;
        emit(&result)?;
        Ok(result.exit_code(cli.opts.assert))
    });
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
