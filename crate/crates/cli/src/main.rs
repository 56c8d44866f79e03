//! Command-line front end: dataset generation, the two training loops,
//! rollout-horizon sweeps of saved models, and report rendering.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
//! fault.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fwdlearn_core::approx::checkpoint::Checkpoint;
use fwdlearn_core::dynsys::io::load_dataset;
use fwdlearn_core::fwdenv::{DeltaAction, FwdEnv};
use fwdlearn_core::harness::report::{render_report, sweep_plot, write_overlay};
use fwdlearn_core::harness::{
    eval_pool, eval_rollout_run, eval_rollouts, run_gen, train_eval_split, train_rl, train_sl,
    write_rollout_table, HarnessError, RolloutEvalRow, RolloutPolicy, RunConfig, TrainSummary,
};
use fwdlearn_core::sac::SacAgent;
use fwdlearn_core::sltrain::SlAgent;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "fwdlearn",
    version,
    about = "Learn one-step forward models of small dynamical systems from logged trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every config-driven subcommand.
#[derive(Args)]
struct ConfigArgs {
    /// key=value config file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.apply("seed", &seed.to_string())?;
        }
        if let Some(out) = &self.out {
            config.apply("out", &out.display().to_string())?;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory dataset at the configured dataset path.
    Gen(ConfigArgs),
    /// Train the reinforcement-learned predictor.
    TrainRl(ConfigArgs),
    /// Train the supervised one-step baseline.
    TrainSl(ConfigArgs),
    /// Sweep bootstrapped-rollout error over horizons for a saved model.
    EvalRollout {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model checkpoint to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Render comparison panels, sweep charts, and a summary from saved runs.
    Report {
        /// Metrics CSV from a train-rl run (repeatable).
        #[arg(long = "rl")]
        rl: Vec<PathBuf>,
        /// Metrics CSV from a train-sl run (repeatable).
        #[arg(long = "sl")]
        sl: Vec<PathBuf>,
        /// Rollout sweep table from eval-rollout (repeatable).
        #[arg(long = "table")]
        table: Vec<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fwdlearn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Gen(args) => {
            let config = args.resolve()?;
            let path = run_gen(&config)?;
            println!("wrote {}", path.display());
        }
        Command::TrainRl(args) => {
            let summary = train_rl(&args.resolve()?)?;
            print_summary("train-rl", &summary);
        }
        Command::TrainSl(args) => {
            let summary = train_sl(&args.resolve()?)?;
            print_summary("train-sl", &summary);
        }
        Command::EvalRollout { config, checkpoint } => {
            let config = config.resolve()?;
            eval_rollout_cmd(&config, &checkpoint)?;
        }
        Command::Report { rl, sl, table, out } => {
            let paths = render_report(&rl, &sl, &table, &out)?;
            for p in &paths.panels {
                println!("wrote {}", p.display());
            }
            if let Some(s) = &paths.sweep {
                println!("wrote {}", s.display());
            }
            println!("wrote {}", paths.summary.display());
        }
    }
    Ok(())
}

fn print_summary(what: &str, summary: &TrainSummary) {
    println!(
        "{what}: {} rounds, {} updates ({} skipped); metrics at {}, model at {}",
        summary.rounds,
        summary.total_updates,
        summary.skipped_updates,
        summary.metrics_path.display(),
        summary.final_checkpoint.display()
    );
}

/// A checkpointed agent of either family, re-hydrated for evaluation.
enum LoadedAgent {
    Rl(SacAgent),
    Sl(SlAgent),
}

impl RolloutPolicy for LoadedAgent {
    fn action(&self, env: &FwdEnv, explore: bool, rng: &mut ChaCha8Rng) -> DeltaAction {
        match self {
            Self::Rl(a) => a.action(env, explore, rng),
            Self::Sl(a) => a.action(env, explore, rng),
        }
    }
}

fn load_agent(cp: &Checkpoint, trained: &RunConfig) -> Result<LoadedAgent, HarnessError> {
    let action_dim = cp.delta_low.len();
    match cp.kind.as_str() {
        "sac" => SacAgent::from_checkpoint(cp, trained.sac_config(action_dim))
            .map(LoadedAgent::Rl)
            .map_err(Into::into),
        "sl" => SlAgent::from_checkpoint(cp, trained.sl_config())
            .map(LoadedAgent::Sl)
            .map_err(Into::into),
        other => Err(HarnessError::Data(format!("checkpoint kind {other:?} is not runnable"))),
    }
}

/// Loads the checkpoint, sweeps the configured horizons over the held-out
/// episode pool, and writes the table, the sweep chart, and trajectory
/// overlays under the configured output directory.
///
/// Structural settings (window width, network shape) come from the
/// configuration echoed inside the checkpoint; the command's own config
/// picks the dataset, horizons, pool size, and reward bookkeeping.
fn eval_rollout_cmd(config: &RunConfig, checkpoint: &Path) -> Result<(), HarnessError> {
    let cp = Checkpoint::load(checkpoint)?;
    let trained = RunConfig::parse(&cp.config_echo).unwrap_or_else(|_| config.clone());
    let agent = load_agent(&cp, &trained)?;

    let dataset = load_dataset(&config.dataset)?;
    if dataset.spec.name() != config.system {
        return Err(HarnessError::Config(format!(
            "config says system {} but dataset holds {}",
            config.system,
            dataset.spec.name()
        )));
    }
    let (_train, eval) = train_eval_split(&dataset)?;
    let mut base = config.env_config(dataset.spec.dt);
    base.window_w = trained.window_w;

    let pool = eval_pool(&eval, config.eval_episodes, config.seed);
    let rows = eval_rollouts(&eval, &base, &agent, &config.eval_lengths, &pool)?;

    std::fs::create_dir_all(&config.out)?;
    let table_path = config.out.join("rollout_table.csv");
    write_rollout_table(&table_path, &rows)?;
    println!("wrote {}", table_path.display());
    print_rows(&rows);

    let chart_path = config.out.join("rollout_sweep.svg");
    let labeled: Vec<(String, &[RolloutEvalRow])> = vec![(cp.kind.clone(), rows.as_slice())];
    std::fs::write(&chart_path, sweep_plot(&labeled).render())?;
    println!("wrote {}", chart_path.display());

    let overlay_pool: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&i| eval.episodes[i].len() > config.rollout_h)
        .take(config.overlay_episodes)
        .collect();
    for idx in overlay_pool {
        let run = eval_rollout_run(&eval, &base, config.rollout_h, &agent, idx)?;
        let path = config.out.join(format!("overlay_{idx:03}.svg"));
        write_overlay(&path, &run, config.rollout_h, &format!("held-out episode {idx}"))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn print_rows(rows: &[RolloutEvalRow]) {
    println!("{:>6} {:>9} {:>12} {:>12} {:>12}", "h", "episodes", "mean_rmse", "std_rmse", "mean_reward");
    for r in rows {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        println!(
            "{:>6} {:>9} {:>12} {:>12} {:>12}",
            r.h,
            r.episodes,
            cell(r.mean_rmse),
            cell(r.std_rmse),
            cell(r.mean_reward)
        );
    }
}
