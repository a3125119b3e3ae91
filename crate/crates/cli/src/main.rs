use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seqgp_cli::check::{run_checks, write_checks};
use seqgp_cli::exact_cmd::{fit_exact, write_exact_report};
use seqgp_cli::{ingest_csv, run_stream, write_report, CliError, CliResult, Config};

#[derive(Parser)]
#[command(
    name = "seqgp",
    version,
    about = "Sequential Gaussian-process inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prequential run over a CSV stream: predict, score, then update.
    Run(IoArgs),
    /// Batch exact GP on the rows with `y`, predicting the rows without.
    FitExact(IoArgs),
    /// Run the invariant checks for a configuration on a synthetic stream.
    Check(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// File of `key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Global seed for stochastic components.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct IoArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Input CSV; standard input when absent or `-`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output path; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Include wall-clock time in the summary record.
    #[arg(long)]
    timing: bool,
}

fn load_config(args: &ConfigArgs) -> CliResult<Config> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    for pair in &args.set {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = args.seed {
        cfg.set("seed", &seed.to_string());
    }
    Ok(cfg)
}

fn read_input(path: &Option<PathBuf>) -> CliResult<seqgp_cli::Dataset> {
    match path {
        Some(p) if p.as_os_str() != "-" => {
            let file =
                File::open(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            ingest_csv(file)
        }
        _ => {
            let mut buf = Vec::new();
            io::stdin().read_to_end(&mut buf)?;
            ingest_csv(buf.as_slice())
        }
    }
}

fn open_output(path: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn execute(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load_config(&args.config)?;
            let data = read_input(&args.input)?;
            let report = run_stream(&cfg, &data)?;
            let mut out = open_output(&args.output)?;
            write_report(&report, args.timing, &mut out)?;
            out.flush()?;
            if !args.timing {
                eprintln!("wall time: {:.3} s", report.wall_time_s);
            }
            Ok(true)
        }
        Command::FitExact(args) => {
            let cfg = load_config(&args.config)?;
            let data = read_input(&args.input)?;
            let report = fit_exact(&cfg, &data)?;
            let mut out = open_output(&args.output)?;
            write_exact_report(&report, &mut out)?;
            out.flush()?;
            Ok(true)
        }
        Command::Check(args) => {
            let cfg = load_config(&args)?;
            let results = run_checks(&cfg)?;
            write_checks(&results, io::stdout().lock())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
