use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use exchtail_cli::commands::{cmd_asym, cmd_bound, cmd_simulate, cmd_sweep};
use exchtail_cli::verify::cmd_verify;
use exchtail_cli::{CliError, Overrides, RunConfig, Table, EXIT_OK, EXIT_VERIFY_FAILED};

#[derive(Parser)]
#[command(
    name = "exchtail",
    version,
    about = "Tail bounds and simulation for sums of exchangeable variables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mixture tail bound on the t-grid
    Bound(Common),
    /// Asymptotic approximations and their constants on the t-grid
    Asym(Common),
    /// Monte Carlo tail estimates over the (n, t) grid
    Simulate(Common),
    /// Full check battery; exit status 1 if any check fails
    Verify(Common),
    /// Bound and asymptotics over a parameter lattice
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "rel-tol")]
    rel_tol: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads for parallel sections
    #[arg(long)]
    workers: Option<usize>,
    /// Multiplies the mixing normalizer (fault injection)
    #[arg(long = "corrupt-c2", hide = true)]
    corrupt_c2: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::from_path(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            trials: self.trials,
            rel_tol: self.rel_tol,
            corrupt_c2: self.corrupt_c2,
        })?;
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(CliError::Config("--workers: must be >= 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build_global()
                .map_err(|e| CliError::Config(format!("--workers: {e}")))?;
        }
        Ok(cfg)
    }

    fn sink(&self) -> Result<Box<dyn Write>, CliError> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn emit(&self, table: &Table) -> Result<(), CliError> {
        let mut w = self.sink()?;
        table.write(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

type TableCmd = fn(&RunConfig) -> Result<Table, CliError>;

fn run(cli: Cli) -> Result<i32, CliError> {
    let (common, table_cmd): (&Common, Option<TableCmd>) = match &cli.command {
        Command::Bound(c) => (c, Some(cmd_bound)),
        Command::Asym(c) => (c, Some(cmd_asym)),
        Command::Simulate(c) => (c, Some(cmd_simulate)),
        Command::Sweep(c) => (c, Some(cmd_sweep)),
        Command::Verify(c) => (c, None),
    };
    let cfg = common.load()?;
    if let Some(f) = table_cmd {
        common.emit(&f(&cfg)?)?;
        return Ok(EXIT_OK);
    }
    let summary = cmd_verify(&cfg);
    let report = summary.report();
    match &common.out {
        Some(p) => {
            print!("{report}");
            std::fs::write(p, summary.to_json() + "\n")?;
        }
        None => println!("{report}{}", summary.to_json()),
    }
    if summary.passed {
        Ok(EXIT_OK)
    } else {
        eprintln!("verification failed: {}", summary.failed_checks.join(", "));
        Ok(EXIT_VERIFY_FAILED)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("exchtail: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
