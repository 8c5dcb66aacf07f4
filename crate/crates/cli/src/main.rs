use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use houtu::sim::{run, Deployment, MetricsReport, ScenarioConfig};
use log::info;

#[derive(Parser)]
#[command(name = "houtu", version, about = "Simulate geo-distributed DAG jobs under Houtu and its baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics and traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every matching config over a range of seeds.
    Sweep {
        /// Glob, e.g. 'configs/*.json'.
        #[arg(long)]
        configs: String,
        /// Half-open range `a..b`, or `a..=b`.
        #[arg(long)]
        seeds: String,
        /// Writes one directory per run plus summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Houtu scenario and check its makespan against the bound.
    CheckBound {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one scenario under several deployments.
    Compare {
        /// Comma separated: houtu,decent-stat,cent-stat,cent-dyna.
        #[arg(long, value_delimiter = ',', default_value = "houtu,decent-stat,cent-stat,cent-dyna")]
        deployments: Vec<String>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        let n: u64 = s.parse().with_context(|| format!("bad seed {s:?}"))?;
        return Ok(vec![n]);
    };
    let a: u64 = a.trim().parse().with_context(|| format!("bad seed range {s:?}"))?;
    let b: u64 = b.trim().parse().with_context(|| format!("bad seed range {s:?}"))?;
    Ok(if inclusive { (a..=b).collect() } else { (a..b).collect() })
}

fn header() {
    println!("{:<28} {:>6} {:<12} {:>5} {:>10} {:>10} {:>10} {:>12} {:>6}", "config", "seed", "deployment", "done", "makespan", "avg_resp", "cost_usd", "xdc_bytes", "bound");
}

fn row(label: &str, r: &MetricsReport) {
    let bound = match &r.bound {
        Some(b) if b.holds => "ok",
        Some(_) => "MISS",
        None => "-",
    };
    println!(
        "{:<28} {:>6} {:<12} {:>5} {:>10.3} {:>10.3} {:>10.4} {:>12} {:>6}",
        label,
        r.seed,
        r.deployment.name(),
        r.jobs_completed,
        r.makespan_s,
        r.avg_response_s,
        r.cost.total_usd(),
        r.cross_dc_bytes,
        bound
    );
}

fn label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = load(&config, seed)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let res = run(&cfg)?;
            res.write(&out)?;
            info!("wrote {}", out.display());
            header();
            row(&label(&config), &res.report);
        }
        Command::Sweep { configs, seeds, out } => {
            let seeds = parse_seeds(&seeds)?;
            let mut paths: Vec<PathBuf> = glob::glob(&configs)?.collect::<Result<_, _>>()?;
            paths.sort();
            if paths.is_empty() {
                bail!("no config matches {configs}");
            }
            let mut reports = Vec::new();
            header();
            for path in &paths {
                for seed in &seeds {
                    let cfg = load(path, Some(*seed))?;
                    let res = run(&cfg)?;
                    if let Some(dir) = &out {
                        let d = dir.join(format!("{}-{seed}", label(path)));
                        std::fs::create_dir_all(&d)?;
                        res.write(&d)?;
                    }
                    row(&label(path), &res.report);
                    reports.push(serde_json::json!({ "config": path.display().to_string(), "report": res.report }));
                }
            }
            if let Some(dir) = &out {
                let mut text = serde_json::to_string_pretty(&reports)?;
                text.push('\n');
                std::fs::write(dir.join("summary.json"), text)?;
            }
        }
        Command::CheckBound { config, seed } => {
            let cfg = load(&config, seed)?;
            if cfg.deployment != Deployment::Houtu {
                bail!("the bound applies to houtu runs, config uses {}", cfg.deployment.name());
            }
            let res = run(&cfg)?;
            let b = res.report.bound.context("bound missing from a houtu run")?;
            println!(
                "makespan {:.3} s, bound {:.3} s (c_max {:.4}, work {:.3}, sum d {:.3}): {}",
                b.makespan_s,
                b.value_s,
                b.breakdown.c_max,
                b.breakdown.work,
                b.breakdown.d.iter().sum::<f64>(),
                if b.holds { "holds" } else { "VIOLATED" }
            );
            if !b.holds {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Compare { deployments, config, seed } => {
            let base = load(&config, seed)?;
            let mut chosen = Vec::new();
            for name in &deployments {
                match Deployment::parse(name.trim()) {
                    Some(d) => chosen.push(d),
                    None => bail!("unknown deployment {name:?}"),
                }
            }
            header();
            for d in chosen {
                let mut cfg = base.clone();
                cfg.deployment = d;
                let res = run(&cfg)?;
                row(&label(&config), &res.report);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("3..6").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_seeds("3..=4").unwrap(), vec![3, 4]);
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert!(parse_seeds("a..b").is_err());
    }
}
