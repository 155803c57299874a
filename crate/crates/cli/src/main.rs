use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use kirchhoff_cli::config::{parse_config_for, Format, Scenario};

#[derive(Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    Energies,
    Verify,
    Sweep,
    Linearized,
    Resonance,
    Obstruction,
    Truncation,
}

impl Command {
    fn scenario(self) -> Scenario {
        match self {
            Command::Simulate => Scenario::Simulate,
            Command::Energies => Scenario::Energies,
            Command::Verify => Scenario::Verify,
            Command::Sweep => Scenario::Sweep,
            Command::Linearized => Scenario::Linearized,
            Command::Resonance => Scenario::Resonance,
            Command::Obstruction => Scenario::Obstruction,
            Command::Truncation => Scenario::Truncation,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

/// Spectral simulator for a Kirchhoff-type wave equation, with energy
/// diagnostics and verification suites.
#[derive(Parser)]
#[command(name = "kirchhoff", version)]
struct Cli {
    /// Scenario to run.
    scenario: Command,
    /// TOML configuration; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Also write SVG diagnostic plots.
    #[arg(long)]
    plots: bool,
    /// Print the fully resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: reading {}: {e}", path.display());
                return ExitCode::from(1);
            }
        },
        None => String::new(),
    };
    let mut cfg = match parse_config_for(&text, Some(cli.scenario.scenario())) {
        Ok(c) => c,
        Err(errs) => {
            eprintln!("{errs}");
            return ExitCode::from(1);
        }
    };
    if let Some(out) = cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(f) = cli.format {
        cfg.output.format = match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Both => Format::Both,
        };
    }
    cfg.output.plots |= cli.plots;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    match kirchhoff_cli::run(&cfg, cli.threads) {
        Ok(outcome) => {
            let v = &outcome.verdict;
            for c in &v.checks {
                println!("{:<32} {}", c.name, if c.pass { "pass" } else { "FAIL" });
            }
            for w in &v.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}: {} ({})", v.suite, if v.pass { "pass" } else { "FAIL" }, cfg.output.dir);
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
