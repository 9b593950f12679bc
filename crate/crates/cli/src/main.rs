use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wsym_cli::commands::{
    check_cmd, mesh_gen, solve_eig_cmd, solve_source_cmd, study_convergence_cmd, study_gap_cmd, study_locking_cmd,
};
use wsym_cli::{thread_count, CliError, Config, ConfigError};
use wsym_core::SideSet;

#[derive(Parser)]
#[command(name = "wsym", version, about = "Hybridized weakly symmetric mixed FEM for 2D elasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (`key = value` lines); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compute the local postprocessed displacement.
    #[arg(long)]
    postprocess: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh generation.
    Mesh {
        #[command(subcommand)]
        what: MeshCommand,
    },
    /// Single solves.
    Solve {
        #[command(subcommand)]
        what: SolveCommand,
    },
    /// Convergence, locking and initial-guess studies.
    Study {
        #[command(subcommand)]
        what: StudyCommand,
    },
    /// Structural invariant suite (JSON verdicts).
    Check {
        #[command(flatten)]
        common: Common,
        /// Skip the negative control on meshes without the barycentric split.
        #[arg(long)]
        skip_negative_control: bool,
    },
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Structured unit-square mesh, barycentrically split unless `--macro`.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Cells per side.
        #[arg(long)]
        n: Option<usize>,
        /// Traction sides, e.g. `right,top`.
        #[arg(long)]
        gamma1: Option<String>,
        #[arg(long = "macro")]
        macro_only: bool,
        /// Mesh file; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SolveCommand {
    /// Source problem; prints a JSON summary.
    Source {
        #[command(flatten)]
        common: Common,
        /// Also write per-element coefficients to the output directory.
        #[arg(long)]
        dump: bool,
    },
    /// Eigenproblem; prints CSV rows.
    Eig {
        #[command(flatten)]
        common: Common,
        /// Number of eigenvalues; overrides `num_eigs`.
        #[arg(long)]
        num: Option<usize>,
    },
}

#[derive(Subcommand)]
enum StudyCommand {
    Convergence {
        #[command(flatten)]
        common: Common,
    },
    Locking {
        #[command(flatten)]
        common: Common,
    },
    Gap {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<Config, CliError> {
    let mut cfg = match &common.config {
        Some(p) => Config::from_file(p)?,
        None => Config::default(),
    };
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    cfg.postprocess |= common.postprocess;
    Ok(cfg)
}

fn init_threads(cfg: &Config) -> Result<(), CliError> {
    if let Some(n) = thread_count(cfg)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Failed(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Mesh {
            what:
                MeshCommand::Gen {
                    config,
                    n,
                    gamma1,
                    macro_only,
                    out,
                },
        } => {
            let cfg = match &config {
                Some(p) => Config::from_file(p)?,
                None => Config::default(),
            };
            let gamma1 = gamma1
                .map(|s| SideSet::parse(&s).map_err(|e| ConfigError::Invalid(format!("gamma1: {e}"))))
                .transpose()?;
            let text = mesh_gen(&cfg, n, gamma1, macro_only, out.as_deref())?;
            Ok(if out.is_some() { String::new() } else { text })
        }
        Command::Solve { what } => match what {
            SolveCommand::Source { common, dump } => {
                let cfg = load_config(&common)?;
                init_threads(&cfg)?;
                solve_source_cmd(&cfg, dump)
            }
            SolveCommand::Eig { common, num } => {
                let mut cfg = load_config(&common)?;
                if let Some(n) = num {
                    cfg.num_eigs = n;
                }
                cfg.validate()?;
                init_threads(&cfg)?;
                solve_eig_cmd(&cfg)
            }
        },
        Command::Study { what } => {
            let (common, f): (Common, fn(&Config) -> Result<String, CliError>) = match what {
                StudyCommand::Convergence { common } => (common, study_convergence_cmd),
                StudyCommand::Locking { common } => (common, study_locking_cmd),
                StudyCommand::Gap { common } => (common, study_gap_cmd),
            };
            let cfg = load_config(&common)?;
            init_threads(&cfg)?;
            f(&cfg)
        }
        Command::Check {
            common,
            skip_negative_control,
        } => {
            let cfg = load_config(&common)?;
            init_threads(&cfg)?;
            check_cmd(&cfg, !skip_negative_control)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            if !text.is_empty() {
                let mut out = std::io::stdout().lock();
                let nl = if text.ends_with('\n') { "" } else { "\n" };
                let _ = write!(out, "{text}{nl}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
