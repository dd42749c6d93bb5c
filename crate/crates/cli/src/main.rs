use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mapnet::config::ExperimentConfig;
use mapnet::federation::{PolicyRegistry, Regime};
use mapnet::harness::experiments::{format_summaries, read_curve};
use mapnet::harness::{emit_plots, run_dynamic_comparison, run_episode, run_eval, run_training, summarize, EpisodeRecord};
use mapnet::Result;

#[derive(Parser)]
#[command(name = "mapnet", version, about = "Aerial mobile access point simulator and placement trainer")]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set scenario.n_ue=25`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Full-scale budgets: 200 evaluation episodes and 10x the training slots.
    #[arg(long)]
    full: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train the policies of one regime.
    Train {
        #[command(flatten)]
        common: Common,
        /// Sets `regime`.
        #[arg(long)]
        regime: Option<Regime>,
        /// Sets `training.budget_slots`.
        #[arg(long)]
        budget: Option<u64>,
        /// Sets `training.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for checkpoints, curves and policies.
        #[arg(short, long, default_value = "runs")]
        out: PathBuf,
    },
    /// Evaluate a trained policy registry.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Registry directory written by `train`.
        #[arg(short, long)]
        policies: PathBuf,
        /// Sets `eval.episodes`.
        #[arg(long)]
        episodes: Option<u64>,
        /// Sets `eval.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Sets `eval.dynamic`.
        #[arg(long)]
        dynamic: Option<bool>,
        /// Episode record file.
        #[arg(short, long, default_value = "runs/eval.ndjson")]
        out: PathBuf,
    },
    /// Paired comparison of fixed codebook, dynamic codebook and dynamic federated fleets.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        federated: PathBuf,
        /// Sets `eval.episodes`.
        #[arg(long)]
        episodes: Option<u64>,
        /// Sets `eval.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the three record files and the report.
        #[arg(short, long, default_value = "runs/compare")]
        out: PathBuf,
    },
    /// Run one episode and print a per-slot log of moves, decisions and constraints.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        policies: PathBuf,
        /// Scenario seed; defaults to `eval.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Sets `eval.dynamic`.
        #[arg(long)]
        dynamic: Option<bool>,
    },
    /// Render SVG plots from record and curve files.
    Plot {
        /// Episode record files.
        #[arg(long, num_args = 1..)]
        records: Vec<PathBuf>,
        /// Training curve files.
        #[arg(long, num_args = 1..)]
        curves: Vec<PathBuf>,
        #[arg(short, long, default_value = "runs/plots")]
        out: PathBuf,
    },
    /// Print the resolved configuration as TOML.
    Config {
        #[command(flatten)]
        common: Common,
        /// List every key as `key = value` instead.
        #[arg(long)]
        flat: bool,
    },
}

fn resolve(common: &Common, flags: &[(&str, Option<String>)]) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if common.full {
        cfg.eval.episodes = 200;
        cfg.training.budget_slots *= 10;
    }
    cfg.apply_overrides(&common.overrides)?;
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn curve_label(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("curve");
    name.trim_end_matches(".ndjson").trim_end_matches(".curve").to_string()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, regime, budget, seed, out } => {
            let cfg = resolve(
                &common,
                &[
                    ("regime", regime.map(|r| format!("\"{r}\""))),
                    ("training.budget_slots", budget.map(|b| b.to_string())),
                    ("training.seed", seed.map(|s| s.to_string())),
                ],
            )?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join(format!("{}.config.toml", cfg.regime)), cfg.to_toml()?)?;
            let outcome = run_training(&cfg, cfg.regime, Some(&out))?;
            for (label, curve) in &outcome.curves {
                if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
                    println!(
                        "{label}: {} episodes, rolling reward {:.3} -> {:.3}",
                        curve.len(),
                        first.rolling_mean,
                        last.rolling_mean
                    );
                }
            }
            let dir = out.join("policies").join(cfg.regime.tag());
            println!("{} policies written to {}", outcome.registry.len(), dir.display());
        }
        Command::Eval { common, policies, episodes, seed, dynamic, out } => {
            let cfg = resolve(
                &common,
                &[
                    ("eval.episodes", episodes.map(|e| e.to_string())),
                    ("eval.seed", seed.map(|s| s.to_string())),
                    ("eval.dynamic", dynamic.map(|d| d.to_string())),
                ],
            )?;
            let registry = PolicyRegistry::load(&policies)?;
            let arm = if cfg.eval.dynamic { format!("{}+dynamic", registry.regime) } else { registry.regime.to_string() };
            let record = run_eval(&cfg, &registry, &arm, cfg.eval.dynamic)?;
            record.write(&out)?;
            print!("{}", format_summaries(&[summarize(&record)?]));
            println!("records written to {}", out.display());
        }
        Command::Compare { common, codebook, federated, episodes, seed, out } => {
            let cfg = resolve(
                &common,
                &[("eval.episodes", episodes.map(|e| e.to_string())), ("eval.seed", seed.map(|s| s.to_string()))],
            )?;
            let cb = PolicyRegistry::load(&codebook)?;
            let fed = PolicyRegistry::load(&federated)?;
            let (report, records) = run_dynamic_comparison(&cfg, &cb, &fed)?;
            std::fs::create_dir_all(&out)?;
            for (name, rec) in ["a_codebook", "b_codebook_dynamic", "c_federated_dynamic"].iter().zip(&records) {
                rec.write(&out.join(format!("{name}.ndjson")))?;
            }
            let table = report.table();
            std::fs::write(out.join("report.txt"), &table)?;
            std::fs::write(out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
            print!("{table}");
        }
        Command::Trace { common, policies, seed, dynamic } => {
            let cfg = resolve(&common, &[("eval.dynamic", dynamic.map(|d| d.to_string()))])?;
            let registry = PolicyRegistry::load(&policies)?;
            let mut log = Vec::new();
            let seed = seed.unwrap_or(cfg.eval.seed);
            let result = run_episode(&cfg, &registry, 0, seed, cfg.eval.dynamic, Some(&mut log));
            for line in &log {
                println!("{line}");
            }
            result?;
        }
        Command::Plot { records, curves, out } => {
            let records = records.iter().map(|p| EpisodeRecord::read(p)).collect::<Result<Vec<_>>>()?;
            let curves = curves.iter().map(|p| Ok((curve_label(p), read_curve(p)?))).collect::<Result<Vec<_>>>()?;
            for p in emit_plots(&records, &curves, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Config { common, flat } => {
            let cfg = resolve(&common, &[])?;
            if flat {
                for (k, v) in cfg.flat_keys()? {
                    println!("{k} = {v}");
                }
            } else {
                print!("{}", cfg.to_toml()?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_set_and_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[eval]\nepisodes = 3\nseed = 4\n").unwrap();
        let common = Common { config: Some(path), overrides: vec!["eval.episodes=5".into()], full: false };
        let cfg = resolve(&common, &[("eval.episodes", Some("7".into())), ("eval.seed", None)]).unwrap();
        assert_eq!(cfg.eval.episodes, 7);
        assert_eq!(cfg.eval.seed, 4);
    }

    #[test]
    fn curve_labels_strip_suffixes() {
        assert_eq!(curve_label(Path::new("runs/train/federated.curve.ndjson")), "federated");
    }

    #[test]
    fn cli_parses() {
        Cli::try_parse_from(["mapnet", "train", "--regime", "codebook", "--set", "ppo.epochs=2"]).unwrap();
        Cli::try_parse_from(["mapnet", "eval", "-p", "runs/policies/federated", "--dynamic", "true"]).unwrap();
        assert!(Cli::try_parse_from(["mapnet", "train", "--regime", "bogus"]).is_err());
    }
}
