use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scarlet_core::config::RunConfig;
use scarlet_core::pipeline::{cmd_e2e, error_json, run_stage, Stage};

#[derive(Parser)]
#[command(name = "scarlet", version, about = "Utility-based retriever training pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// `section.key=value`, may repeat; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    Synthesize(Common),
    Attribute(Common),
    Sample(Common),
    Train(Common),
    Eval(Common),
    E2e(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (stage, common) = match cli.command {
        Command::Synthesize(c) => (Some(Stage::Synthesize), c),
        Command::Attribute(c) => (Some(Stage::Attribute), c),
        Command::Sample(c) => (Some(Stage::Sample), c),
        Command::Train(c) => (Some(Stage::Train), c),
        Command::Eval(c) => (Some(Stage::Eval), c),
        Command::E2e(c) => (None, c),
    };
    let result = RunConfig::load(&common.config, &common.set).and_then(|cfg| match stage {
        Some(s) => run_stage(s, &cfg),
        None => cmd_e2e(&cfg),
    });
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
