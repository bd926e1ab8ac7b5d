use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rad_cli::commands;
use rad_cli::config::{parse_theta_list, resolve, Overrides, Profile};
use rad_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "rad", version, about = "Train and analyse spiking networks with rectified axonal delays")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON config; fields missing from it take the profile defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Base seed for trials and the synthetic task
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of seeded trials
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Delay cap in ms or `inf`; a comma list for `ablate`
    #[arg(long = "theta-d", global = true)]
    theta_d: Option<String>,

    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded training trials
    Train,
    /// Evaluate a checkpoint on the test set
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train one run-set per delay cap
    Ablate,
    /// Write cumulative spike-count traces for one sample
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        sample: PathBuf,
    },
    /// Compare analytic and finite-difference gradients
    Gradcheck,
    /// Write the synthetic timing task as event files
    Synth,
}

fn run(cli: Cli) -> CliResult<()> {
    let common = cli.common;
    let theta_list = common.theta_d.as_deref().map(parse_theta_list).transpose()?;
    let single_theta = match (&cli.command, &theta_list) {
        (Command::Ablate, _) | (_, None) => None,
        (_, Some(list)) if list.len() == 1 => Some(list[0]),
        _ => return Err(CliError::field("theta_d", "only ablate accepts a list")),
    };
    let overrides = Overrides {
        profile: common.profile,
        seed: common.seed,
        trials: common.trials,
        theta_d: single_theta,
        out_dir: common.out,
    };
    let cfg = resolve(common.config.as_deref(), &overrides)?;
    let out = cfg.out_dir.clone();
    match cli.command {
        Command::Train => {
            let s = commands::train(&cfg, &out)?;
            println!(
                "theta_d {} params {} mean {:.4} std {:.4} best {:.4}",
                s.theta_d.as_deref().unwrap_or("none"),
                s.params,
                s.mean,
                s.std,
                s.best
            );
        }
        Command::Eval { checkpoint } => {
            let e = commands::eval(&cfg, &checkpoint, &out)?;
            println!("accuracy {:.4} mean_loss {:.4} no_spike {}", e.accuracy, e.mean_loss, e.no_spike);
        }
        Command::Ablate => {
            let caps = theta_list.unwrap_or_else(|| cfg.theta_d_list.clone());
            for row in commands::ablate(&cfg, &caps, &out)? {
                println!(
                    "theta_d {} params {} mean {:.4} std {:.4}",
                    row.theta_d, row.params, row.mean, row.std
                );
            }
        }
        Command::Analyze { checkpoint, sample } => {
            let r = commands::analyze(&checkpoint, &sample, &out)?;
            println!(
                "predicted {} label {} decision_time_ms {} of {}",
                r.predicted, r.label, r.decision_time_ms, r.duration_ms
            );
        }
        Command::Gradcheck => {
            let suite = commands::gradcheck(&cfg, &out)?;
            for r in &suite.reports {
                println!("{} h={:e} max_rel_err={:e}", r.label, r.h, r.max_relative_error);
            }
        }
        Command::Synth => {
            let (train, test) = commands::synth(&cfg, &out)?;
            println!("wrote {train} train and {test} test samples to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
