use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hvs_cli::commands::{self, EXIT_CONVERGED, EXIT_DIVERGED, EXIT_ERROR};
use hvs_cli::{parse_config, parse_override, CliError, Result, RunConfig};
use hvs_core::simulation::ScenarioKind;

/// Hybrid eye-in-hand / fixed-camera adaptive visual servoing simulator.
#[derive(Debug, Parser)]
#[command(name = "hvs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one closed-loop simulation. Exits 0 when it converges, 2 when it
    /// diverges or fails to converge, 1 on any other error.
    Run(Common),
    /// Run several seeds derived from the master seed.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Number of runs.
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Also write one trace per run.
        #[arg(long)]
        traces: bool,
    },
    /// Render SVG plots from a trace file.
    Plot {
        /// Trace CSV written by `run`.
        trace: PathBuf,
        /// Output directory (defaults to the trace's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check model identities and run determinism.
    Selftest(Common),
    /// Print the resolved configuration.
    Config(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Config file of dotted `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["circle", "rectangle", "static"])]
    scenario: Option<String>,
    /// Output directory; overrides HVS_OUT_DIR and `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one config key, e.g. `--set gains.lambda=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                parse_config(&text)?
            }
            None => RunConfig::default(),
        };
        let overrides = self
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        cfg.apply_all(overrides)?;
        if let Some(s) = &self.scenario {
            cfg.scenario = s.parse::<ScenarioKind>()?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            let out = commands::resolve_out_dir(common.out.as_deref(), &cfg);
            let report = commands::cmd_run(&cfg, &out)?;
            print!("{}", report.summary());
            println!("output = {}", out.display());
            Ok(report.status.exit_code())
        }
        Command::Sweep {
            common,
            seeds,
            traces,
        } => {
            let cfg = common.load()?;
            let out = commands::resolve_out_dir(common.out.as_deref(), &cfg);
            let report = commands::cmd_sweep(&cfg, seeds, &out, traces)?;
            print!("{}", report.table());
            print!("{}", report.summary());
            Ok(EXIT_CONVERGED)
        }
        Command::Plot { trace, out } => {
            let out = out.unwrap_or_else(|| trace.parent().map(PathBuf::from).unwrap_or_default());
            for p in commands::cmd_plot(&trace, &out)? {
                println!("{}", p.display());
            }
            Ok(EXIT_CONVERGED)
        }
        Command::Selftest(common) => {
            let cfg = common.load()?;
            let checks = commands::selftest(&cfg)?;
            let mut ok = true;
            for c in &checks {
                let verdict = if c.passed() { "PASS" } else { "FAIL" };
                println!(
                    "{verdict} {:<32} {:.3e} (tol {:.0e})",
                    c.name, c.value, c.tolerance
                );
                ok &= c.passed();
            }
            Ok(if ok { EXIT_CONVERGED } else { EXIT_DIVERGED })
        }
        Command::Config(common) => {
            print!("{}", common.load()?.to_text());
            Ok(EXIT_CONVERGED)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
