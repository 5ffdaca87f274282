use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use xtalk_core::config::{EmitterSet, Method};
use xtalk_core::pipeline::{self, DATA_FILE};
use xtalk_core::{Experiment, ExperimentConfig, XtalkError};

/// Simulate, image and mitigate two-emitter crosstalk.
#[derive(Debug, Parser)]
#[command(name = "xtalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for the compute kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for randomized checks. Pipeline stages are deterministic and
    /// ignore it.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate data for the configured scene.
    Simulate(Common),
    /// Backproject a data file.
    Reconstruct(WithData),
    /// Apply the configured mitigation to a data file.
    Mitigate(WithData),
    /// Predict artifact positions for the scene's scatterer.
    Predict(Common),
    /// Run simulate, reconstruct, mitigate and predict in sequence.
    Pipeline(Common),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    emitters: Option<EmitterArg>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

#[derive(Debug, Args)]
struct WithData {
    #[command(flatten)]
    common: Common,
    /// Data file (default: data.f32 in the output directory).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EmitterArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Geometry,
    Displacement,
    None,
}

fn load(common: &Common) -> Result<(Experiment, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(e) = common.emitters {
        cfg.acquisition.emitters = match e {
            EmitterArg::One => EmitterSet::One,
            EmitterArg::Two => EmitterSet::Two,
            EmitterArg::Both => EmitterSet::Both,
        };
    }
    if let Some(m) = common.method {
        let method = match m {
            MethodArg::Geometry => Method::Geometry,
            MethodArg::Displacement => Method::Displacement,
            MethodArg::None => Method::None,
        };
        match cfg.mitigation.as_mut() {
            Some(block) => block.method = method,
            None if matches!(method, Method::None) => {}
            None => {
                return Err(XtalkError::config("mitigation", "--method needs a [mitigation] block with an roi").into())
            }
        }
    }
    let out = common.output.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg.resolve()?, out))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    if let Some(seed) = cli.seed {
        log::debug!("seed {seed}");
    }
    match cli.command {
        Command::Simulate(c) => {
            let (exp, out) = load(&c)?;
            let r = pipeline::run_simulate(&exp, &out)?;
            println!("{}", r.data_path.display());
        }
        Command::Reconstruct(w) => {
            let (exp, out) = load(&w.common)?;
            let data = w.data.unwrap_or_else(|| out.join(DATA_FILE));
            let r = pipeline::run_reconstruct(&exp, &data, &out)?;
            println!("{}", r.image_path.display());
            for p in r.peaks.iter().take(5) {
                println!("peak {:.3} at ({:.3}, {:.3}, {:.3})", p.value, p.point.x1, p.point.x2, p.point.x3);
            }
        }
        Command::Mitigate(w) => {
            let (exp, out) = load(&w.common)?;
            let data = w.data.unwrap_or_else(|| out.join(DATA_FILE));
            let r = pipeline::run_mitigate(&exp, &data, &out)?;
            println!("{}", r.image_path.display());
            if let Some(f) = r.report.retained_fraction {
                println!("retained fraction {f:.4}");
            }
        }
        Command::Predict(c) => {
            let (exp, out) = load(&c)?;
            let r = pipeline::run_predict(&exp, &out)?;
            println!("{}", r.report_path.display());
            println!("max travel-time residual {:.3e}", r.summary.max_travel_residual);
        }
        Command::Pipeline(c) => {
            let (exp, out) = load(&c)?;
            let r = pipeline::run_pipeline(&exp, &out)?;
            println!("{}", r.simulate.data_path.display());
            println!("{}", r.reconstruct.image_path.display());
            if let Some(m) = &r.mitigate {
                println!("{}", m.image_path.display());
            }
            if let Some(p) = &r.predict {
                println!("{}", p.report_path.display());
            }
        }
    }
    Ok(())
}

/// 2: configuration, 3: violated precondition, 4: I/O.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<XtalkError>() {
        Some(XtalkError::Config { .. } | XtalkError::Invalid(_) | XtalkError::OutOfBounds(_)) => 2,
        Some(XtalkError::Geometry(_) | XtalkError::EmptyAperture | XtalkError::PlaneIntersectsRoi) => 3,
        Some(XtalkError::Io { .. } | XtalkError::Format { .. }) => 4,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
