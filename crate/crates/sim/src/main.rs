use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use vmrt::runner::{self, RunOptions};
use vmrt::{presets, vectors, Overrides};

#[derive(Parser)]
#[command(name = "vmrt", version, about = "Virtual-memory predictability simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a config file or shipped preset.
    Run {
        /// Path to a TOML config, or a preset name.
        config: String,
        /// Override the master seed of every scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the iteration count of every scenario.
        #[arg(long)]
        iterations: Option<u64>,
        /// Output directory [default: results/<config name>].
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Run iterations on one thread.
        #[arg(long)]
        serial: bool,
    },
    /// Mean and std-dev change of one scenario against another.
    Compare { bundle: PathBuf, baseline: String, subject: String },
    /// Shipped presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Check the golden replacement vectors.
    Vectors,
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names and descriptions.
    List,
    /// Print a preset's config file.
    Show { name: String },
}

fn load(config: &str) -> anyhow::Result<(String, String)> {
    let path = Path::new(config);
    if path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let stem = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
        return Ok((text, stem));
    }
    match presets::get(config) {
        Some(p) => Ok((p.text.to_string(), p.name.to_string())),
        None => bail!("{config}: no such file or preset (see `vmrt presets list`)"),
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, seed, iterations, output, serial } => {
            let (text, stem) = load(&config)?;
            let options = RunOptions { overrides: Overrides { seed, iterations }, serial };
            let bundle = runner::run_config(&text, options).with_context(|| config.clone())?;
            let dir = output.unwrap_or_else(|| Path::new("results").join(stem));
            bundle.write(&dir).with_context(|| format!("writing {}", dir.display()))?;
            let summary = bundle.summary();
            println!("{:<24} {:>8} {:>14} {:>12} {:>12}", "scenario", "iters", "mean", "std", "d_std_unmit");
            for (name, s) in &summary.scenarios {
                let delta = s.vs_unmitigated.map_or("-".to_string(), |c| c.delta_std_pct.to_string());
                println!(
                    "{:<24} {:>8} {:>14.1} {:>12.1} {:>12}",
                    name, s.stats.iterations, s.stats.mean, s.stats.std, delta
                );
            }
            println!("wrote {}", dir.display());
        }
        Command::Compare { bundle, baseline, subject } => {
            let summary = runner::read_summary(&bundle)?;
            let c = runner::compare(&summary, &baseline, &subject)?;
            println!("{}", serde_json::to_string_pretty(&c)?);
        }
        Command::Presets { action: PresetAction::List } => {
            for p in presets::PRESETS {
                println!("{:<18} {}", p.name, p.description());
            }
        }
        Command::Presets { action: PresetAction::Show { name } } => match presets::get(&name) {
            Some(p) => print!("{}", p.text),
            None => bail!("no preset `{name}`"),
        },
        Command::Vectors => {
            let results = vectors::run_all();
            for v in &results {
                let verdict = if v.passed { "PASS" } else { "FAIL" };
                println!("{verdict} {:<3} {} ({})", v.name, v.description, v.detail);
            }
            if results.iter().any(|v| !v.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
