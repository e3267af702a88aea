use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deepmod::harness::{self, experiments, Experiment, ExperimentConfig, RunReport};
use deepmod::Result;

/// Tabular DP, fitted value iteration and extracted-feature models on a 4×4 gridworld.
#[derive(Parser)]
#[command(name = "deepmod", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set ddpn.bellman_iterations=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (default: $DEEPMOD_OUT, else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seeds, e.g. `0,1,2` or `0..5`.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Record wall-clock seconds in trace files (makes them non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Clean-input value table: Q-learning, value iteration, DDPN, reduced DDPN.
    Table1,
    /// Noisy-input value table: DQN, value iteration, DDPN, reduced DDPN, feature-model DDPN.
    Table2,
    /// Reward curves for one figure.
    Curves {
        #[arg(long, value_parser = clap::value_parser!(u8).range(5..=7))]
        fig: u8,
    },
    /// One end-to-end run of the feature-model pipeline.
    Pipeline {
        #[arg(long)]
        noisy: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the pipeline and print its transition table as CSV.
    EfmDump {
        #[arg(long)]
        noisy: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Full acceptance suite; exits nonzero if any check fails.
    Check,
}

fn build_config(common: &Common, experiment: Experiment) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::preset(experiment);
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seeds) = &common.seeds {
        cfg.set("experiment.seeds", seeds)?;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.timing |= common.timing;
    cfg.validate()?;
    Ok(cfg)
}

fn emit(report: &RunReport, cfg: &ExperimentConfig) -> Result<()> {
    for path in report.write(&cfg.out_dir, cfg.timing)? {
        println!("wrote {}", path.display());
    }
    print!("{}", report.summary());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let c = &cli.common;
    match cli.command {
        Command::Table1 => {
            let cfg = build_config(c, Experiment::Table1)?;
            let r = harness::reproduce_table1(&cfg)?;
            emit(&r, &cfg)?;
            print!("{}", r.values_csv());
            Ok(r.all_passed())
        }
        Command::Table2 => {
            let cfg = build_config(c, Experiment::Table2)?;
            let r = harness::reproduce_table2(&cfg)?;
            emit(&r, &cfg)?;
            print!("{}", r.values_csv());
            Ok(r.all_passed())
        }
        Command::Curves { fig } => {
            let exp = experiments::figure(fig).expect("range-checked by clap");
            let cfg = build_config(c, exp)?;
            let r = harness::reproduce_curves(&cfg, exp)?;
            emit(&r, &cfg)?;
            Ok(r.all_passed())
        }
        Command::Pipeline { noisy, seed } => {
            let cfg = build_config(c, Experiment::Pipeline)?;
            let r = harness::run_pipeline(&cfg, seed, noisy)?;
            emit(&r, &cfg)?;
            print!("{}", r.values_csv());
            Ok(r.all_passed())
        }
        Command::EfmDump { noisy, seed } => {
            let cfg = build_config(c, Experiment::Pipeline)?;
            let r = harness::run_pipeline(&cfg, seed, noisy)?;
            let (_, p) = &r.pipelines[0];
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("efm.csv");
            std::fs::write(&path, p.efm.to_csv())?;
            eprintln!("wrote {} ({} entries)", path.display(), p.efm.len());
            print!("{}", p.efm.to_csv());
            Ok(true)
        }
        Command::Check => {
            let cfg = build_config(c, Experiment::Table2)?;
            let run = harness::acceptance_suite(&cfg)?;
            for r in run.reports() {
                report_files(r, &cfg)?;
                for w in &r.warnings {
                    println!("warning: {w}");
                }
            }
            for check in run.checks() {
                println!("{check}");
            }
            let failed = run.checks().iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", run.checks().len());
            Ok(failed == 0)
        }
    }
}

fn report_files(r: &RunReport, cfg: &ExperimentConfig) -> Result<()> {
    for path in r.write(&cfg.out_dir, cfg.timing)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
