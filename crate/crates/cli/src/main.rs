use brakeorb_cli::config::{Mode, RunConfig};
use brakeorb_cli::runner::run;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "brakeorb", about = "Brake orbits and strip heteroclinics by action minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the pipeline described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker cap for sweep instances; 1 guarantees determinism.
        #[arg(long)]
        threads: Option<usize>,
        /// RNG seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run the residual checks on a stored field or path.
    Verify { field: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            out,
            threads,
            seed,
        } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("config error: cannot read {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let mut cfg = match RunConfig::from_json(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(t) = threads {
                cfg.threads = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            run(cfg, out)
        }
        Command::Verify { field } => {
            let cfg = RunConfig {
                potential: brakeorb_core::PotentialSpec::ScalarQuartic,
                mode: Mode::Verify,
                seed: 0,
                threads: 1,
                out_dir: None,
                field_path: Some(field.display().to_string()),
                grid: Default::default(),
                brake: Default::default(),
                sweep_t: Default::default(),
                strip: Default::default(),
                sweep_l: Default::default(),
                minimize: Default::default(),
            };
            run(cfg, None)
        }
    };
    match outcome {
        Ok(out) => {
            use std::io::Write;
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            for c in &out.manifest.checks {
                let _ = writeln!(
                    w,
                    "{} {}: {:.6e} {} {:.6e}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.op,
                    c.threshold
                );
            }
            let _ = writeln!(w, "manifest: {}", out.out_dir.join("manifest.json").display());
            match out.manifest.first_failure() {
                None => ExitCode::SUCCESS,
                Some(c) => {
                    eprintln!("assertion failure: {}", c.name);
                    ExitCode::from(4)
                }
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
