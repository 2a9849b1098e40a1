use clap::{Parser, Subcommand};
use distpac::experiment::{self, ExperimentConfig, PROTOCOLS};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "distpac", version, about = "Communication-metered distributed PAC learning experiments")]
struct Cli {
    /// Print the protocol names a config may use.
    #[arg(long)]
    list_protocols: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        config: PathBuf,
        /// Override the config's seeds, e.g. `0..100`.
        #[arg(long)]
        seed_range: Option<String>,
        /// Output directory (default: config `out`, then $DISTPAC_OUT/<name>, then runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ratios of median costs between two finished runs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Also write the comparison as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_protocols {
        for (name, about) in PROTOCOLS {
            println!("{name:<24} {about}");
        }
        return ExitCode::SUCCESS;
    }
    let Some(cmd) = cli.command else {
        eprintln!("nothing to do; try `distpac --help`");
        return ExitCode::from(2);
    };
    match run(cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> distpac::Result<()> {
    match cmd {
        Command::Run { config, seed_range, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let seeds = match seed_range {
                Some(r) => experiment::parse_seed_range(&r)?,
                None => cfg.seeds.expand()?,
            };
            let name = config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            let dir = experiment::resolve_out(out.as_deref(), &cfg, &name);
            let summary = experiment::run_experiment(&cfg, &seeds, &dir)?;
            println!("{}: {} runs, {} failures -> {}", summary.protocol, summary.runs, summary.failures.len(), dir.display());
            for (k, s) in &summary.stats {
                println!("  {k:<14} median {:<12} p90 {}", s.median, s.p90);
            }
            Ok(())
        }
        Command::Compare { a, b, out } => {
            let c = experiment::compare(&experiment::read_summary(&a)?, &experiment::read_summary(&b)?)?;
            print!("{c}");
            if let Some(p) = out {
                let json = serde_json::to_string_pretty(&c).map_err(|e| distpac::Error::Io(e.to_string()))?;
                std::fs::write(p, json + "\n")?;
            }
            Ok(())
        }
    }
}
