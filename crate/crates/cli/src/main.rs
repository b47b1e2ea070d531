use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lfgp_core::envs::TaskId;
use lfgp_core::harness::ablate::AblationMatrix;
use lfgp_core::harness::plot::{aggregate, render_svg};
use lfgp_core::harness::six_state::{render, runs_csv, six_state_summary};
use lfgp_core::harness::{
    ablate, collect_expert, evaluate, load_policy, read_metrics, train_observed, CollectConfig,
    PolicyController, RunConfig,
};
use lfgp_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lfgp",
    version,
    about = "Multitask adversarial imitation with scheduled auxiliary intentions"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run configuration file (`key = value`, `include = <file>` allowed).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set total_steps=20000`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Print every configuration key with its provenance and exit.
    #[arg(long, global = true)]
    explain_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write scripted demonstrations for every task of the variant.
    CollectExpert {
        /// Regular pairs per task.
        #[arg(long)]
        pairs: Option<usize>,
        /// Final (s_T, 0) pairs per task.
        #[arg(long)]
        final_pairs: Option<usize>,
    },
    /// Train one run and write metrics, checkpoint and resolved config.
    Train {
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        total_steps: Option<usize>,
        #[arg(long)]
        expert_dir: Option<PathBuf>,
        #[arg(long)]
        scheduler: Option<String>,
    },
    /// Success rate of a saved policy.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task to evaluate; defaults to every head.
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Run the cross-product of the axes in a matrix file.
    Ablate {
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Deceptive-reward reproduction on the six-state MDP.
    SixState {
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
    },
    /// SVG success-rate chart from one or more metrics files.
    Plot {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Task to plot; defaults to the main task of the first file.
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        title: Option<String>,
    },
}

fn resolve_config(common: &Common, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set_from(k.trim(), v.trim(), "command line")?;
    }
    for (k, v) in extra {
        if let Some(v) = v {
            cfg.set_from(k, v, "command line")?;
        }
    }
    if let Some(seed) = common.seed {
        cfg.set_from("seed", &seed.to_string(), "command line")?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let extra: Vec<(&str, Option<String>)> = match &cli.command {
        Command::Train {
            algorithm,
            variant,
            total_steps,
            expert_dir,
            scheduler,
        } => vec![
            ("algorithm", algorithm.clone()),
            ("variant", variant.clone()),
            ("total_steps", total_steps.map(|v| v.to_string())),
            (
                "expert_dir",
                expert_dir.as_ref().map(|p| p.display().to_string()),
            ),
            ("scheduler", scheduler.clone()),
        ],
        Command::CollectExpert { pairs, final_pairs } => vec![
            ("expert_pairs", pairs.map(|v| v.to_string())),
            ("final_pairs", final_pairs.map(|v| v.to_string())),
        ],
        Command::Evaluate { episodes, .. } => {
            vec![("eval_episodes", episodes.map(|v| v.to_string()))]
        }
        _ => Vec::new(),
    };
    let cfg = resolve_config(common, &extra)?;
    if common.explain_config {
        print!("{}", cfg.explain());
        return Ok(());
    }
    match cli.command {
        Command::CollectExpert { .. } => {
            let out = common.out.clone().unwrap_or_else(|| cfg.expert_dir.clone());
            let mut cc = CollectConfig::new(cfg.env.clone(), cfg.full_task_set());
            cc.pairs_per_task = cfg.expert_pairs;
            cc.final_pairs = cfg.final_pairs;
            cc.seed = cfg.seed;
            cc.prefix_steps = cfg.period_len;
            for (path, stats) in collect_expert(&cc, &out)? {
                println!(
                    "{} pairs={} final_pairs={} episodes={} failures={}",
                    path.display(),
                    stats.pairs,
                    stats.final_pairs,
                    stats.episodes,
                    stats.failures
                );
            }
        }
        Command::Train { .. } => {
            let out = out_dir(common, "runs/train");
            let main = cfg.task_set().main().name();
            let report = train_observed(&cfg, Some(&out), &mut |r| {
                if r.task == main {
                    println!(
                        "step={} task={} success_rate={}",
                        r.step, r.task, r.success_rate
                    );
                }
            })?;
            println!(
                "trained {} seed={} env_steps={} updates={} elapsed_s={:.1} final_main_success={}",
                cfg.algorithm,
                cfg.seed,
                report.env_steps,
                report.updates,
                report.elapsed.as_secs_f64(),
                report.final_main_success().unwrap_or(f64::NAN)
            );
            println!("wrote {}", out.display());
        }
        Command::Evaluate {
            checkpoint, task, ..
        } => {
            let (policy, tasks, env) = load_policy(&checkpoint)?;
            let which: Vec<TaskId> = match task {
                Some(name) => vec![name.parse()?],
                None => tasks.tasks(),
            };
            for t in which {
                let mut ctl = PolicyController {
                    policy: &policy,
                    tasks: &tasks,
                };
                let r = evaluate(
                    &env,
                    &mut ctl,
                    t,
                    cfg.eval_episodes,
                    cfg.hold_steps,
                    cfg.seed,
                )?;
                println!(
                    "task={} success_rate={} mean_return={}",
                    t.name(),
                    r.success_rate,
                    r.mean_return
                );
            }
        }
        Command::Ablate { matrix, jobs } => {
            let m = match matrix {
                Some(p) => AblationMatrix::parse(&read(&p)?)?,
                None => AblationMatrix::default(),
            };
            let out = out_dir(common, "runs/ablate");
            for cell in ablate(&cfg, &m, &out, jobs)? {
                let main = cfg.task_set().main();
                let last = cell.metrics.iter().rev().find(|r| r.task == main.name());
                println!(
                    "{} final_main_success={}",
                    cell.dir.display(),
                    last.map_or(f64::NAN, |r| r.success_rate)
                );
            }
        }
        Command::SixState { seeds, episodes } => {
            let s = six_state_summary(seeds, episodes, cfg.seed)?;
            let text = render(&s);
            print!("{text}");
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("six_state.txt"), text)?;
                std::fs::write(dir.join("six_state.csv"), runs_csv(&s)?)?;
            }
        }
        Command::Plot {
            metrics,
            task,
            title,
        } => {
            let mut rows = Vec::new();
            for p in &metrics {
                for r in read_metrics(p)? {
                    rows.push((r.algorithm.clone(), r));
                }
            }
            let task = match task {
                Some(t) => t.parse::<TaskId>()?.name().to_string(),
                None => rows
                    .first()
                    .map(|(_, r)| r.task.clone())
                    .ok_or_else(|| Error::Usage("metrics files are empty".into()))?,
            };
            let curves = aggregate(&rows, &task);
            let svg = render_svg(title.as_deref().unwrap_or(&task), &curves)?;
            let out = out_dir(common, "plots");
            std::fs::create_dir_all(&out)?;
            let path = out.join(format!("{task}.svg"));
            std::fs::write(&path, svg)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail
                .lines()
                .next()
                .unwrap_or(&msg)
                .trim_start_matches("error: ");
            eprintln!("error kind=usage message={first:?}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} message={msg:?}", e.kind());
            ExitCode::from(match e {
                Error::Config(_) | Error::Usage(_) => 2,
                _ => 1,
            })
        }
    }
}
