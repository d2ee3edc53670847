use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pasvs::qfi_linear::benchmark_limits;
use pasvs::states::solve_r_for_energy;
use pasvs::sweep::{figure_preset, parse_config, run_figure, run_sweep};
use pasvs::Error;

/// Phase-estimation sweeps for a Mach-Zehnder interferometer fed with a
/// coherent state and a photon-added squeezed vacuum.
#[derive(Parser)]
#[command(name = "pasvs", version)]
struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a JSON configuration file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the preset behind one of figures 2-12.
    Figure {
        n: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add an oracle column computed in truncated Fock space.
        #[arg(long)]
        oracle: bool,
    },
    /// Print the SQL, HL, sub-HL and SHL benchmarks for a mean photon number.
    Limits {
        #[arg(long)]
        nbar: f64,
    },
    /// Squeezing that gives the m-photon-added squeezed vacuum a target mean
    /// photon number.
    MatchEnergy {
        #[arg(long)]
        m: u32,
        #[arg(long = "nbar-b")]
        nbar_b: f64,
    },
}

enum Failure {
    Lib(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn emit(text: &str, out: Option<PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(&path, text)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display()))),
        None => write_stdout(text),
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn write_stdout(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => {
            Err(Failure::Io(format!("cannot write to stdout: {e}")))
        }
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sweep { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Failure::Io(format!("cannot read {}: {e}", config.display())))?;
            let spec = parse_config(&text)?;
            emit(&run_sweep(&spec)?.render(), out)
        }
        Command::Figure { n, out, oracle } => {
            let preset = figure_preset(n)?;
            emit(&run_figure(&preset, oracle)?.render(), out)
        }
        Command::Limits { nbar } => {
            let b = benchmark_limits(nbar)?;
            write_stdout(&format!(
                "nbar_total,sql,hl,sub_hl,shl\n{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}\n",
                nbar, b.sql, b.hl, b.sub_hl, b.shl
            ))
        }
        Command::MatchEnergy { m, nbar_b } => {
            let r = solve_r_for_energy(m, nbar_b)?;
            write_stdout(&format!("m,nbar_b,r\n{m},{nbar_b:.11e},{r:.11e}\n"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(Failure::Io(format!("cannot start thread pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(if e.is_spec_error() { 1 } else { 2 })
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
