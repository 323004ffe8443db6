use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use semeq_core::config::{ExperimentConfig, Role};
use semeq_core::harness::PartitionSpec;
use semeq_core::partition::PartitionKind;
use semeq_core::pipeline::{self, SweepOptions, Workspace};
use semeq_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "semeq",
    version,
    about = "Semantic channel equalization experiments"
)]
struct Cli {
    /// Experiment configuration (TOML). Defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RoleArg {
    Source,
    Target,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Role {
        match r {
            RoleArg::Source => Role::Source,
            RoleArg::Target => Role::Target,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Hard,
    Soft,
}

#[derive(clap::Args, Debug)]
struct SpecArgs {
    /// Partition kind; all partitions listed in the config when omitted.
    #[arg(long)]
    kind: Option<KindArg>,
    /// Number of soft atoms.
    #[arg(long)]
    n_c: Option<usize>,
}

impl SpecArgs {
    fn specs(&self, cfg: &ExperimentConfig) -> Result<Vec<PartitionSpec>> {
        let spec = match (self.kind, self.n_c) {
            (None, None) => {
                let mut all: Vec<_> = cfg
                    .sweep
                    .partitions
                    .iter()
                    .map(|p| p.normalized())
                    .collect();
                all.dedup();
                return Ok(all);
            }
            (None, Some(_)) => return Err(Error::Usage("--n-c requires --kind soft".into())),
            (Some(KindArg::Hard), None) => PartitionSpec::hard(),
            (Some(KindArg::Hard), Some(_)) => {
                return Err(Error::Usage("--n-c applies only to soft partitions".into()))
            }
            (Some(KindArg::Soft), None) => {
                return Err(Error::Usage("--kind soft requires --n-c".into()))
            }
            (Some(KindArg::Soft), Some(n)) => PartitionSpec::soft(n),
        };
        spec.validate()?;
        Ok(vec![spec])
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one language and write its checkpoint and training curve.
    Train {
        #[arg(long, value_enum)]
        role: RoleArg,
    },
    /// Partition a trained language.
    Partition {
        #[arg(long, value_enum)]
        role: RoleArg,
        /// Language checkpoint; defaults to the one in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Fit the transformation codebook between source and target partitions.
    Codebook {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, requires = "target_partition")]
        source_partition: Option<PathBuf>,
        #[arg(long, requires = "source_partition")]
        target_partition: Option<PathBuf>,
        /// Target language checkpoint; defaults to the one in the output directory.
        #[arg(long)]
        target_checkpoint: Option<PathBuf>,
    },
    /// Run the SNR sweep and print the ordering check.
    Sweep {
        /// Train or build missing checkpoints, partitions and codebooks.
        #[arg(long)]
        build_missing: bool,
        /// Reuse cached cells from an earlier run.
        #[arg(long)]
        resume: bool,
        /// Exit nonzero when an ordering assertion fails.
        #[arg(long)]
        strict: bool,
    },
    /// Describe an artifact; codebooks also print ζ as CSV.
    Inspect { path: PathBuf },
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = std::env::var_os("SEMEQ_OUT").filter(|d| !d.is_empty()) {
        cfg.output_dir = PathBuf::from(dir);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(e.to_string()))?;
    }
    if let Command::Inspect { path } = &cli.command {
        let (summary, csv) = pipeline::inspect(path)?;
        println!("{summary}");
        if let Some(csv) = csv {
            print!("{csv}");
        }
        return Ok(0);
    }
    let cfg = load_config(cli.config.as_ref())?;
    let ws = Workspace::new(&cfg.output_dir);
    match cli.command {
        Command::Train { role } => {
            let role = Role::from(role);
            let lang = pipeline::train(&cfg, &ws, role)?;
            println!(
                "wrote {} (tau {:.6}, average power {:.4})",
                ws.language(role).display(),
                lang.tau().unwrap_or(f64::NAN),
                lang.average_power()?
            );
        }
        Command::Partition {
            role,
            checkpoint,
            spec,
        } => {
            let role = Role::from(role);
            let lang = pipeline::load_language(&checkpoint.unwrap_or_else(|| ws.language(role)))?;
            for s in spec.specs(&cfg)? {
                let part = pipeline::partition(&cfg, &ws, role, &lang, s)?;
                println!(
                    "wrote {} ({} atoms)",
                    ws.partition(role, s).display(),
                    part.n_atoms()
                );
            }
        }
        Command::Codebook {
            spec,
            source_partition,
            target_partition,
            target_checkpoint,
        } => {
            let target = pipeline::load_language(
                &target_checkpoint.unwrap_or_else(|| ws.language(Role::Target)),
            )?;
            let specs = match (&source_partition, &target_partition) {
                (Some(s), Some(_)) => {
                    let p = pipeline::load_partition(s)?;
                    vec![match p.kind {
                        PartitionKind::Hard => PartitionSpec::hard(),
                        PartitionKind::Soft => PartitionSpec::soft(p.n_atoms()),
                    }]
                }
                _ => spec.specs(&cfg)?,
            };
            for s in specs {
                let src = pipeline::load_partition(
                    source_partition
                        .as_deref()
                        .unwrap_or(&ws.partition(Role::Source, s)),
                )?;
                let tgt = pipeline::load_partition(
                    target_partition
                        .as_deref()
                        .unwrap_or(&ws.partition(Role::Target, s)),
                )?;
                let cb = pipeline::codebook(&cfg, &ws, s, &src, &tgt, &target)?;
                println!("wrote {} ({} maps)", ws.codebook(s).display(), cb.n_maps());
            }
        }
        Command::Sweep {
            build_missing,
            resume,
            strict,
        } => {
            let out = pipeline::sweep(
                &cfg,
                &ws,
                SweepOptions {
                    build_missing,
                    resume,
                },
            )?;
            println!(
                "wrote {} ({} cells, {} from cache)",
                ws.sweep_report().display(),
                out.report.cells.len(),
                out.cached_cells
            );
            match &out.ordering {
                Some(checks) => {
                    println!(
                        "{:<6} {:>7} {:<30} {:>8} {:>8}  result",
                        "policy", "snr_db", "relation", "lhs", "rhs"
                    );
                    for c in checks {
                        let verdict = match (c.pass, c.low_confidence) {
                            (true, false) => "pass",
                            (true, true) => "pass (low confidence)",
                            (false, false) => "FAIL",
                            (false, true) => "FAIL (low confidence)",
                        };
                        println!(
                            "{:<6} {:>7} {:<30} {:>8.4} {:>8.4}  {verdict}",
                            c.policy.name(),
                            c.snr_db,
                            c.relation,
                            c.lhs,
                            c.rhs
                        );
                    }
                    let failed = checks.iter().filter(|c| !c.pass).count();
                    if strict && failed > 0 {
                        eprintln!("error: {failed} ordering assertion(s) failed");
                        return Ok(2);
                    }
                }
                None => {
                    let note = out.ordering_note.unwrap_or_default();
                    println!("ordering check skipped: {note}");
                    if strict {
                        eprintln!(
                            "error: --strict needs the partitions the ordering check compares"
                        );
                        return Ok(2);
                    }
                }
            }
        }
        Command::Inspect { .. } => unreachable!("handled above"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
