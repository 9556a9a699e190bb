use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ringlat::{config, scenarios, HarnessError};

#[derive(Parser)]
#[command(name = "ringlat", version, about = "Ring-cavity optical lattice scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the available scenarios.
    List,
    /// Print the fully resolved default configuration as TOML.
    Defaults,
    #[command(external_subcommand)]
    Scenario(Vec<String>),
}

#[derive(Parser)]
#[command(name = "ringlat <scenario>", no_binary_name = true)]
struct RunArgs {
    scenario: String,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set fig7.t_end=0.05`; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (default: `out/<scenario>`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn run(args: RunArgs) -> Result<(), HarnessError> {
    let mut sets = args.sets;
    if let Some(s) = args.seed {
        sets.push(format!("seed={s}"));
    }
    let cfg = config::load(args.config.as_deref(), &sets)?;
    ringlat::init_threads()?;
    let out = args.out.unwrap_or_else(|| PathBuf::from("out").join(&args.scenario));
    let m = scenarios::run(&args.scenario, &cfg, &out)?;
    println!("{}: {} files in {} ({:.1} s)", m.scenario, m.files.len(), out.display(), m.wall_seconds);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::List => {
            for (name, about) in scenarios::SCENARIOS {
                println!("{name:<22} {about}");
            }
            Ok(())
        }
        Command::Defaults => {
            print!("{}", toml::to_string(&config::Config::default()).expect("defaults serialize"));
            Ok(())
        }
        Command::Scenario(argv) => match RunArgs::try_parse_from(argv) {
            Ok(a) => run(a),
            Err(e) => {
                let _ = e.print();
                return ExitCode::from(1);
            }
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
