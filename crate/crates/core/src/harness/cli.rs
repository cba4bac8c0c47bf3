use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::ExperimentConfig;
use super::report::{emit_report, Summary};
use super::sim::{run_experiment, run_probe_experiment};
use crate::analysis::{
    format_sig9, recovery_curve, write_probe_csv, write_recovery_curve_csv, MonteCarloSpec, RecoveryRule,
};
use crate::codec::{epsilon_of, p_of_epsilon};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "cdpa", version, about = "Compressed differentially private federated aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a federated experiment and write metrics.csv, config.json, summary.txt.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo recovery curve against the closed form, as CSV.
    Analyze(AnalyzeArgs),
    /// Print the matching (p, epsilon) pair.
    Calibrate {
        #[arg(long, conflicts_with = "epsilon", required_unless_present = "epsilon")]
        p: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Gradient inversion probe, as CSV.
    Probe {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Grid such as `R=5,20,100 p=0.5,0.6` or `R=20,p=0.9`.
    #[arg(long, num_args = 1.., required = true)]
    grid: Vec<String>,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Masked positions, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2u8])]
    mask: Vec<u8>,
    #[arg(long, default_value_t = 16)]
    m: u8,
    #[arg(long, default_value_t = 4)]
    z: u8,
    #[arg(long, default_value = "majority")]
    rule: RecoveryRule,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `R=...` and `p=...` lists. Values may be separated by commas or
/// whitespace, and a token containing `=` starts a new key.
pub fn parse_grid(args: &[String]) -> Result<(Vec<usize>, Vec<f64>)> {
    let (mut rs, mut ps) = (Vec::new(), Vec::new());
    let mut key: Option<String> = None;
    for token in args.iter().flat_map(|a| a.split([',', ' ', ';'])).filter(|t| !t.is_empty()) {
        let value = match token.split_once('=') {
            Some((k, v)) => {
                key = Some(k.trim().to_string());
                v
            }
            None => token,
        };
        if value.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Config(format!("grid: bad {what} value {value:?}"));
        match key.as_deref() {
            Some("R") => rs.push(value.parse().map_err(|_| bad("R"))?),
            Some("p") => ps.push(value.parse().map_err(|_| bad("p"))?),
            Some(other) => return Err(Error::Config(format!("grid: unknown key {other:?}"))),
            None => return Err(Error::Config(format!("grid: value {value:?} before any key"))),
        }
    }
    if rs.is_empty() || ps.is_empty() {
        return Err(Error::Config("grid needs at least one R and one p".into()));
    }
    Ok((rs, ps))
}

fn create(path: &PathBuf) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let io = |e: std::io::Error| Error::Encode(format!("write: {e}"));
    match cli.command {
        Command::Simulate { config, out: dir } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let metrics = run_experiment(&cfg)?;
            let dir = dir
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("cdpa-output"));
            let paths = emit_report(&metrics, &cfg, &dir)?;
            write!(out, "{}", Summary::new(&metrics, cfg.clients).render()).map_err(io)?;
            writeln!(out, "report: {}", paths.metrics.parent().unwrap_or(&dir).display()).map_err(io)?;
        }
        Command::Analyze(a) => {
            let (rs, ps) = parse_grid(&a.grid)?;
            let template = MonteCarloSpec {
                m: a.m,
                z: a.z,
                rule: a.rule,
                ..MonteCarloSpec::new(1, 1.0, a.mask, a.trials, a.seed)
            };
            let reports = recovery_curve(&rs, &ps, &template)?;
            match &a.out {
                Some(path) => write_recovery_curve_csv(&reports, create(path)?)?,
                None => write_recovery_curve_csv(&reports, &mut *out)?,
            }
        }
        Command::Calibrate { p, epsilon } => {
            let (p, eps) = match (p, epsilon) {
                (Some(p), _) => (p, epsilon_of(p)?),
                (None, Some(e)) => (p_of_epsilon(e)?, e),
                (None, None) => unreachable!("clap requires one of --p / --epsilon"),
            };
            writeln!(out, "p = {}, epsilon = {eps:.2} ({})", format_sig9(p), format_sig9(eps)).map_err(io)?;
        }
        Command::Probe { config, out: path } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let results = run_probe_experiment(&cfg)?;
            match &path {
                Some(path) => write_probe_csv(&results, create(path)?)?,
                None => write_probe_csv(&results, &mut *out)?,
            }
        }
    }
    Ok(())
}

/// Runs the command line `args` (program name first) and returns the exit
/// status. Usage problems exit with 2, runtime failures with 1.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
