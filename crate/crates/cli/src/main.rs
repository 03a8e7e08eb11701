//! `guiprobe`: validate corpora, execute probing runs, diff two runs, and
//! export plot-ready tables.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use guiprobe_core::fixture;
use guiprobe_core::ingest::adapters::{adapt, SourceFormat};
use guiprobe_core::run::{compare_runs, emit_plot_data, load_config, run_experiment, MANIFEST_NAME};

#[derive(Parser)]
#[command(name = "guiprobe", version, about = "Perturbation probing harness for GUI agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus, check every invariant, and report violations.
    Validate {
        /// Corpus directory.
        corpus: PathBuf,
        /// Source format: canonical, androidcontrol, aitz, gui_odyssey, gui_act, omniact.
        #[arg(long, default_value = "canonical")]
        format: String,
    },
    /// Execute a run described by a TOML config file.
    Run {
        /// Path to the run config; relative paths inside it resolve from its directory.
        config: PathBuf,
    },
    /// Compare two runs' reports metric by metric (same corpus required).
    Compare {
        /// manifest.json of the first run.
        a: PathBuf,
        /// manifest.json of the second run.
        b: PathBuf,
    },
    /// Write plot-ready CSV tables next to a run's manifest.
    EmitPlots {
        /// manifest.json of the run.
        manifest: PathBuf,
    },
    /// Generate the built-in synthetic corpus and a ready-to-run config.
    GenFixture {
        /// Target directory (created if missing).
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Validate { corpus, format } => {
            let format = SourceFormat::parse(&format)
                .ok_or_else(|| format!("unknown format {format:?}"))?;
            let outcome = adapt(format, &corpus).map_err(|e| e.to_string())?;
            println!(
                "ok: {} episode(s), {} step(s), platform {:?}{}",
                outcome.corpus.episodes.len(),
                outcome.corpus.step_count(),
                outcome.corpus.platform_tag,
                if outcome.dropped > 0 {
                    format!(", {} native step(s) dropped", outcome.dropped)
                } else {
                    String::new()
                }
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config } => {
            let parsed = load_config(&config).map_err(|e| e.to_string())?;
            let base = config.parent().unwrap_or_else(|| Path::new("."));
            let manifest = run_experiment(&parsed, base).map_err(|e| e.to_string())?;
            let out = base.join(&parsed.output_dir);
            println!("{} report(s) in {}", manifest.reports.len(), out.join("reports").display());
            println!("summary: {}", out.join(&manifest.csv_path).display());
            println!("manifest: {}", out.join(MANIFEST_NAME).display());
            if manifest.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for (key, why) in &manifest.failures {
                    eprintln!("failed: {key}: {why}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Compare { a, b } => {
            let cmp = compare_runs(&a, &b).map_err(|e| e.to_string())?;
            print!("{}", cmp.render());
            println!("{} difference(s)", cmp.flagged());
            Ok(ExitCode::SUCCESS)
        }
        Command::EmitPlots { manifest } => {
            let paths = emit_plot_data(&manifest).map_err(|e| e.to_string())?;
            println!("{}", paths.scatter.display());
            println!("{}", paths.vmc_rs.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::GenFixture { dir } => {
            let paths = fixture::write_fixture(&dir).map_err(|e| e.to_string())?;
            println!("corpus: {}", paths.corpus_dir.display());
            println!("config: {}", paths.config_path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
