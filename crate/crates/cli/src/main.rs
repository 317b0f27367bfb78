use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use causal_bidding::harness::{self, output, verify, ExperimentConfig};
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "causal-bid", version, about = "Causal bidding experiments in second-price auctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plot: bool,
    },
    /// Run a named verification suite and print one line per check.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn simulate(
    path: PathBuf,
    runs: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    plot: bool,
) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut config = ExperimentConfig::from_json(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    if let Some(r) = runs {
        config.runs = r;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out {
        config.out_dir = o;
    }
    config.plot |= plot;
    config.validate()?;

    let results = harness::run_experiment(&config)?;
    let summary = output::write_outputs(&config, &results)?;
    for p in &summary.policies {
        println!(
            "{:<12} final regret {:>10.2} +- {:.2} over {} runs",
            p.policy,
            p.mean_final_regret,
            p.std_final_regret,
            p.final_regret.len()
        );
    }
    println!("wrote {}", config.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate {
            config,
            runs,
            seed,
            out,
            plot,
        } => simulate(config, runs, seed, out, plot).map(|()| true),
        Command::Verify { suite, seed } => verify::run_suite(&suite, seed)
            .map(|report| {
                print!("{}", report.render());
                report.passed()
            })
            .map_err(Into::into),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
