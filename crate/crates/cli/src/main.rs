mod commands;
mod expr;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::expr::ParseError;

/// Concave metric flattening and coarse-geometry verification experiments.
#[derive(Parser, Debug)]
#[command(name = "coarse-forge", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for every sampled verification (decimal or 0x-prefixed hex).
    #[arg(long, global = true, env = "COARSE_FORGE_SEED", default_value = "0xC0A45E", value_parser = parse_seed)]
    pub seed: u64,
    /// Slack allowed on every asserted bound.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Directory for relative output paths.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
}

fn parse_seed(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    };
    parsed.map_err(|e| format!("invalid seed {t:?}: {e}"))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Raw,
    Log,
    Scaled,
    All,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a flattening schedule from one or more control functions.
    Flatten {
        /// Control function; repeat to share one schedule across several.
        #[arg(long = "control", required = true)]
        controls: Vec<String>,
        #[arg(long, default_value_t = 12)]
        steps: usize,
        #[arg(long, default_value = "schedule.json")]
        out: PathBuf,
    },
    /// Measure the control of the flattened metric against r′ + 2.
    VerifyFlatten {
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        control: String,
        #[arg(long, default_value_t = 10.0)]
        rmax: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Also check the log-corrected control against r″ + ln 3 + chord error.
        #[arg(long)]
        log_nodes: Option<u32>,
        #[arg(long, default_value = "flatten_report.csv")]
        out: PathBuf,
    },
    /// Build a brick cover of ℤⁿ; optionally verify it on a box and fit its control.
    Cover {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: i64,
        /// Box radius for verification.
        #[arg(long = "box", default_value_t = 20)]
        box_radius: i64,
        #[arg(long)]
        verify: bool,
        /// Comma-separated scales whose measured diameters are fitted by A·r + B.
        #[arg(long, value_delimiter = ',')]
        fit_scales: Vec<i64>,
        #[arg(long, default_value = "cover_cells.csv")]
        out: PathBuf,
    },
    /// Verify a brick cover on any lattice-backed space at a given scale and bound.
    VerifyCover {
        #[arg(long)]
        space: String,
        /// Brick scale (lattice units).
        #[arg(long)]
        brick: i64,
        /// Required same-color separation, in the space's units.
        #[arg(long)]
        scale: f64,
        /// Diameter bound, in the space's units.
        #[arg(long)]
        bound: f64,
        /// Report same-color gaps up to this distance as well.
        #[arg(long)]
        probe: Option<f64>,
        #[arg(long, default_value = "cover_cells.csv")]
        out: PathBuf,
    },
    /// Check symmetry, identity and the triangle inequality.
    MetricCheck {
        #[arg(long)]
        space: String,
        /// Spaces with at most this many points are checked exhaustively.
        #[arg(long, default_value_t = 400)]
        exhaustive_limit: usize,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value = "metric_check.csv")]
        out: PathBuf,
    },
    /// Repair the identity between two metrics on one point set into a quasi-isometry.
    Qi {
        #[arg(long)]
        domain: String,
        #[arg(long)]
        codomain: String,
        /// Contraction φ of the map.
        #[arg(long)]
        phi: String,
        /// Dilation Φ of the map; defaults to φ.
        #[arg(long)]
        dilation: Option<String>,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Variant::All)]
        variant: Variant,
        #[arg(long, default_value_t = 12)]
        nodes: u32,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Pairs are enumerated exhaustively up to this many points.
        #[arg(long, default_value_t = 5000)]
        exhaustive_limit: usize,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value = "qi")]
        prefix: String,
    },
    /// Flatten a target metric so a map with dilation Φ becomes large-scale Lipschitz.
    Lsl {
        #[arg(long)]
        dilation: String,
        #[arg(long, default_value_t = 50.0)]
        rmax: f64,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        #[arg(long, default_value = "lsl.csv")]
        out: PathBuf,
    },
    /// Four-point δ of lattice boxes under a metric transform, or of one space.
    Delta {
        /// Comma-separated box radii.
        #[arg(long, value_delimiter = ',', conflicts_with = "space")]
        boxes: Vec<i64>,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// raw, log1p, or a function expression.
        #[arg(long, default_value = "log1p")]
        transform: String,
        #[arg(long)]
        space: Option<String>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 40)]
        exhaustive_limit: usize,
        #[arg(long, default_value = "delta.csv")]
        out: PathBuf,
    },
    /// One schedule for ℤ² and both ℤ factors: flattening excess and c∘sup = sup∘c.
    ProductDemo {
        #[arg(long = "box", default_value_t = 10)]
        box_radius: i64,
        #[arg(long, default_value_t = 6)]
        steps: usize,
        #[arg(long, default_value_t = 30.0)]
        rmax: f64,
        #[arg(long, default_value_t = 3000)]
        samples: usize,
        #[arg(long, default_value = "product_demo")]
        prefix: String,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] coarse_forge::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Verification outcome of a successful run.
pub enum Status {
    Passed,
    Failed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli.global, &cli.command) {
        Ok(Status::Passed) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
