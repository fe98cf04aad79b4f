use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qcframe_cli::{exit, parse_radii, run, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "qcframe",
    version,
    about = "Quasiconformal frame experiments on uniform grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Glue an inner and an outer frame across the annulus collar.
    Glue,
    /// Minimize the conformal energy among K-quasiconformal frames.
    Minimize,
    /// Degree field of a map over a ball or annulus.
    Degree,
    /// Energy, distortion and curl of a frame.
    Energy,
    /// Run the verification suites.
    Verify,
}

#[derive(Args)]
struct Flags {
    /// JSON configuration file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    res: Option<usize>,
    #[arg(long, global = true)]
    q: Option<f64>,
    #[arg(long, global = true)]
    k: Option<f64>,
    /// r,r',R',R
    #[arg(long, global = true, value_parser = parse_radii, allow_hyphen_values = true)]
    radii: Option<[f64; 4]>,
    #[arg(long, global = true)]
    map: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated suite names.
    #[arg(long, global = true, value_delimiter = ',')]
    only: Option<Vec<String>>,
    #[arg(long, global = true)]
    refine: Option<usize>,
    #[arg(long, global = true)]
    inner: Option<String>,
    #[arg(long, global = true)]
    outer: Option<String>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// ball:R or annulus:r,R
    #[arg(long, global = true)]
    domain: Option<String>,
    #[arg(long, global = true)]
    half_width: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long, global = true)]
    trend_iter: Option<usize>,
    #[arg(long, global = true)]
    k_trend: Option<f64>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Glue => "glue",
            Command::Minimize => "minimize",
            Command::Degree => "degree",
            Command::Energy => "energy",
            Command::Verify => "verify",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let f = cli.flags;
    let overrides = Overrides {
        n: f.n,
        res: f.res,
        radii: f.radii,
        q: f.q,
        k: f.k,
        map: f.map,
        inner: f.inner,
        outer: f.outer,
        input: f.input,
        domain: f.domain,
        half_width: f.half_width,
        seed: f.seed,
        only: f.only,
        refine: f.refine,
        max_iter: f.max_iter,
        trend_iter: f.trend_iter,
        k_trend: f.k_trend,
        out: f.out,
    };
    let code = match RunConfig::resolve(cli.command.name(), f.config.as_deref(), overrides) {
        Err(e) => {
            let e = qcframe_cli::CliError::from(e);
            eprintln!("error: {e}");
            e.code
        }
        Ok(config) => match run(&config) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                e.code
            }
        },
    };
    if code == exit::OK {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(code as u8)
    }
}
