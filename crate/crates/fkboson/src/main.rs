use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fkboson::commands::{self, Command, RunError};
use fkboson::config::{ConfigError, RunConfig};
use fkboson::exec::RayonExecutor;

/// Monte Carlo estimators and checks for Feynman–Kac formulas of
/// boson–particle Hamiltonians.
#[derive(Parser, Debug)]
#[command(name = "fkboson", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Fiber matrix elements ⟨ζ(g)⊗e_i, e^{−tĤ(ξ)} ζ(h)⊗e_j⟩ against the truncated oracle
    FiberMc(Common),
    /// Operator-valued kernel T(x, y) and its symmetry under refinement
    KernelMc(Common),
    /// Brownian-bridge drift moments against their closed form
    BridgeMoments(Common),
    /// Time-ordered series against the SDE on shared paths
    SeriesVsSde(Common),
    /// Discrete time-reversal residuals
    ReversalCheck(Common),
    /// Truncated van Hove ground energy
    Vanhove(Common),
    /// Convergence in steps, truncation and path count
    Sweep(Common),
    /// The full property suite
    Selftest(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file (defaults apply when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (falls back to `output` in the config, then $FKBOSON_OUT, then ./fkboson-out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides mc.n_paths
    #[arg(long)]
    paths: Option<u64>,
    /// Overrides grid.steps
    #[arg(long)]
    steps: Option<usize>,
    /// Overrides grid.horizon
    #[arg(long)]
    horizon: Option<f64>,
    /// Overrides fock.max_bosons
    #[arg(long)]
    max_bosons: Option<usize>,
    /// Overrides series.n_max
    #[arg(long)]
    n_max: Option<usize>,
    /// Overrides estimator.scheme (splitting | euler-maruyama)
    #[arg(long)]
    scheme: Option<String>,
    /// Overrides estimator.mode (sde | closed-form)
    #[arg(long)]
    mode: Option<String>,
}

impl Cmd {
    fn split(self) -> (Command, Common) {
        match self {
            Cmd::FiberMc(c) => (Command::FiberMc, c),
            Cmd::KernelMc(c) => (Command::KernelMc, c),
            Cmd::BridgeMoments(c) => (Command::BridgeMoments, c),
            Cmd::SeriesVsSde(c) => (Command::SeriesVsSde, c),
            Cmd::ReversalCheck(c) => (Command::ReversalCheck, c),
            Cmd::Vanhove(c) => (Command::Vanhove, c),
            Cmd::Sweep(c) => (Command::Sweep, c),
            Cmd::Selftest(c) => (Command::Selftest, c),
        }
    }
}

fn load(c: &Common) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.mc.seed = s;
    }
    if let Some(w) = c.workers {
        cfg.mc.workers = w;
    }
    if let Some(n) = c.paths {
        cfg.mc.n_paths = n;
    }
    if let Some(k) = c.steps {
        cfg.grid.steps = k;
    }
    if let Some(t) = c.horizon {
        cfg.grid.horizon = t;
    }
    if let Some(n) = c.max_bosons {
        cfg.fock.max_bosons = n;
    }
    if let Some(n) = c.n_max {
        cfg.series.n_max = n;
    }
    if let Some(s) = &c.scheme {
        cfg.estimator.scheme = s.clone();
    }
    if let Some(m) = &c.mode {
        cfg.estimator.mode = m.clone();
    }
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: &RunConfig) -> PathBuf {
    c.out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os("FKBOSON_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fkboson-out"))
}

fn main() -> ExitCode {
    // usage errors count as configuration errors; exit code 2 is reserved
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(4);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let (command, common) = cli.command.split();
    let cfg = match load(&common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(4);
        }
    };
    let dir = out_dir(&common, &cfg);
    let workers = match cfg.mc.workers {
        0 => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        w => w,
    };
    let exec = match RayonExecutor::new(workers) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("config error: mc.workers: {e}");
            return ExitCode::from(4);
        }
    };
    match commands::run(command, &cfg, &exec) {
        Ok(out) => {
            for c in &out.checks {
                println!("{}", c.line());
            }
            if let Err(e) = out.write(&cfg, &dir) {
                eprintln!("writing {}: {e:#}", dir.display());
                return ExitCode::from(3);
            }
            println!("results written to {}", dir.display());
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e @ RunError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("{e}");
            let doc = commands::failure_document(command, &cfg, &e);
            if std::fs::create_dir_all(&dir).is_ok() {
                let _ = std::fs::write(dir.join("results.json"), serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
