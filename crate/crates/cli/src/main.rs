use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lyapunov_cli::config::{ConfigFileError, RunConfig};
use lyapunov_cli::run::{run, Command, RunError, RunOptions};

/// Design open-loop control schedules by Lyapunov feedback and test how
/// they hold up under model uncertainty and control noise.
///
/// Any config key can be overridden as `--section.key=value`.
#[derive(Parser, Debug)]
#[command(name = "lyapctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug)]
struct Global {
    /// Run configuration (TOML)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for the noise generator (overrides the config seed)
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for sweeps and ensembles (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Leave timestamps and wall times out of the output comments
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Also write a gnuplot script next to each CSV
    #[arg(long, global = true)]
    gnuplot_stub: bool,
    /// Override a config key, e.g. `--set integrator.dt=5e-4`
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Run the closed-loop design and write the schedule
    Design,
    /// Replay the stored schedule on the configured plant
    Replay,
    /// Final fidelity over a grid of two perturbations
    Sweep,
    /// Fidelity statistics over noisy replays
    Ensemble,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Design => Command::Design,
            Cmd::Replay => Command::Replay,
            Cmd::Sweep => Command::Sweep,
            Cmd::Ensemble => Command::Ensemble,
        }
    }
}

/// Rewrites `--section.key=value` into `--set section.key=value`.
fn expand_overrides(args: impl Iterator<Item = String>) -> Vec<String> {
    let mut out = Vec::new();
    for arg in args {
        match arg.strip_prefix("--") {
            Some(rest) if rest.split('=').next().is_some_and(|k| k.contains('.')) => {
                out.push("--set".into());
                out.push(rest.to_string());
            }
            _ => out.push(arg),
        }
    }
    out
}

fn fail(kind: &str, code: u8, message: &str) -> ExitCode {
    let line = serde_json::json!({ "error": { "kind": kind, "code": code, "message": message } });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse_from(expand_overrides(std::env::args()));
    let g = cli.global;
    let Some(config_path) = g.config else {
        return fail("config", 2, "--config PATH is required");
    };
    let mut config = match RunConfig::from_file(&config_path, &g.overrides) {
        Ok(c) => c,
        Err(e @ ConfigFileError::Io(..)) => return fail("io", 4, &e.to_string()),
        Err(e @ ConfigFileError::Invalid(..)) => return fail("config", 2, &e.to_string()),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    let options = RunOptions {
        out: g.out,
        no_timestamp: g.no_timestamp,
        gnuplot_stub: g.gnuplot_stub,
    };
    let command = Command::from(cli.command);

    let result = match g.jobs {
        Some(0) => return fail("config", 2, "--jobs must be >= 1"),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(command, &config, &options)),
            Err(e) => Err(RunError::Config(format!("cannot start {n} workers: {e}"))),
        },
        None => run(command, &config, &options),
    };
    match result {
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            for line in &summary.lines {
                println!("{line}");
            }
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.exit_code() as u8, &e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_flags_become_overrides() {
        let args = [
            "lyapctl",
            "sweep",
            "--integrator.dt=5e-4",
            "--out=a.b",
            "--seed",
            "3",
        ];
        let got = expand_overrides(args.iter().map(|s| s.to_string()));
        assert_eq!(
            got,
            [
                "lyapctl",
                "sweep",
                "--set",
                "integrator.dt=5e-4",
                "--out=a.b",
                "--seed",
                "3"
            ]
        );
    }
}
