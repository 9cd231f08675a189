//! `schrod-inverse`: simulate boundary traces, extract modes, reconstruct
//! the potential, or run everything at once.
//!
//! ```text
//! $ schrod-inverse pipeline --config run.toml --set simulate.potential=const:5
//! $ schrod-inverse extract --traces run/traces.csv --out run2
//! $ schrod-inverse converge --set converge.ns=[10,20,40]
//! ```
//!
//! Exit codes: 0 success, 2 configuration, 3 file or parse error, then one
//! code per stage (4 simulate, 5 extract, 6 norming, 7 kernel,
//! 8 reconstruct, 9 source, 10 converge).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use schrod_inverse::pipeline::config::Config;
use schrod_inverse::pipeline::converge::{convergence_experiment, write_report_csv};
use schrod_inverse::pipeline::io;
use schrod_inverse::pipeline::run::{
    extract_stage, reconstruct_stage, run_pipeline, simulate_stage, AtStage, Bundle, Stage, StageResult,
};

#[derive(Parser)]
#[command(name = "schrod-inverse", version, about = "Potential reconstruction from boundary traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set kernel.m=128`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (`output.dir`).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> StageResult<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p).at(Stage::Config)?,
            None => Config::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o).at(Stage::Config)?;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.display().to_string();
        }
        cfg.validate().at(Stage::Config)?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated traces and the true potential.
    Simulate(Common),
    /// Extract eigenvalues and endpoint products from a trace file.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        traces: PathBuf,
    },
    /// Norming, kernel, reconstruction and source recovery from extracted modes.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        extracted: PathBuf,
    },
    /// Every stage, with a manifest.
    Pipeline(Common),
    /// Truncation and convergence table.
    Converge(Common),
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: Cli) -> StageResult<()> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = common.load()?;
            let mut bundle = Bundle::create(Path::new(&cfg.output.dir))?;
            simulate_stage(&cfg, &mut bundle)?;
            print_json(&bundle.artifacts);
        }
        Command::Extract { common, traces } => {
            let cfg = common.load()?;
            let mut bundle = Bundle::create(Path::new(&cfg.output.dir))?;
            let (r0, r1) = io::read_traces(&traces).at(Stage::Io)?;
            let data = extract_stage(&cfg, &r0, &r1, None, &mut bundle)?;
            eprintln!("{} modes", data.modes.len());
            for w in &data.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&bundle.artifacts);
        }
        Command::Reconstruct { common, extracted } => {
            let cfg = common.load()?;
            let mut bundle = Bundle::create(Path::new(&cfg.output.dir))?;
            let data = io::read_extracted(&extracted).at(Stage::Io)?;
            let rec = reconstruct_stage(&cfg, &data, &mut bundle)?;
            for w in &rec.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&rec.metrics);
        }
        Command::Pipeline(common) => {
            let cfg = common.load()?;
            let manifest = run_pipeline(&cfg)?;
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&manifest.metrics);
            if let Some(t) = &manifest.truth_metrics {
                print_json(t);
            }
        }
        Command::Converge(common) => {
            let cfg = common.load()?;
            std::fs::create_dir_all(&cfg.output.dir)
                .map_err(schrod_inverse::Error::from)
                .at(Stage::Io)?;
            let report = convergence_experiment(&cfg)?;
            let path = Path::new(&cfg.output.dir).join("convergence.csv");
            write_report_csv(&path, &report).at(Stage::Io)?;
            for (delta, ok) in &report.proxy_decreasing {
                eprintln!("delta={delta}: proxy strictly decreasing in n: {ok}");
            }
            let flagged = report.violations();
            if flagged > 0 {
                eprintln!("{flagged} row(s) flagged");
            }
            println!("{}", path.display());
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
