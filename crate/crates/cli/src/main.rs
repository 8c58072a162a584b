use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sarmover_cli::bench::{run_bench, slope_summary, write_csv, Algorithm, BenchConfig};
use sarmover_cli::commands::{
    cmd_detect, cmd_image, cmd_roads, cmd_simulate, DetectArgs, ImageArgs, ImageMode, PatternKind, RoadsArgs,
};
use sarmover_cli::export::DEFAULT_DYNAMIC_RANGE_DB;
use sarmover_core::{Error, Result};

/// Circular SAR simulation, imaging and road-based moving target detection.
#[derive(Parser)]
#[command(name = "sarmover", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SARMOVER_THREADS")]
    threads: Option<usize>,

    /// Antenna pattern used for simulation and imaging.
    #[arg(long, global = true, value_enum, default_value_t = PatternKind::Isotropic)]
    pattern: PatternKind,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the range profile of a scene file (TOML).
    Simulate {
        scene: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Form a static image and write it as a 16-bit dB PGM.
    Image {
        profile: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ImageMode::Static)]
        mode: ImageMode,
        #[command(flatten)]
        common: ImageOpts,
        /// Subdomain size of the MLDD base level.
        #[arg(long, default_value_t = 4)]
        nc: usize,
    },
    /// Run road-based detection and cleaning; writes a JSON report and an
    /// annotated image.
    Detect {
        profile: PathBuf,
        /// Report path (JSON).
        #[arg(short, long)]
        out: PathBuf,
        /// Annotated image (default: the report path with `.pgm`).
        #[arg(long)]
        image: Option<PathBuf>,
        /// Pipeline configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the roads of `--scene` instead of extracting them.
        #[arg(long, requires = "scene")]
        known_roads: bool,
        #[command(flatten)]
        common: ImageOpts,
    },
    /// Extract roads from the static image; writes JSON road lines.
    Roads {
        profile: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the edge map as a PGM.
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long)]
        nc: Option<usize>,
        /// Scene file supplying the imaging grid.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Time the algorithms over a list of sizes; writes CSV and prints
    /// log-log slopes.
    Bench {
        /// Comma-separated powers of two.
        #[arg(long, value_delimiter = ',', default_values_t = [32usize, 64, 128])]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', value_enum, default_values_t = [Algorithm::RoadBased, Algorithm::Static2d])]
        algorithms: Vec<Algorithm>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 4)]
        nc: usize,
        /// CSV output (default: stdout).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ImageOpts {
    /// Displayed dynamic range in dB.
    #[arg(long, default_value_t = DEFAULT_DYNAMIC_RANGE_DB)]
    dynamic_range: f64,
    /// Scene file supplying the imaging grid (and roads with `--known-roads`).
    #[arg(long)]
    scene: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { scene, out } => {
            cmd_simulate(&scene, &out, cli.pattern)?;
        }
        Command::Image { profile, out, mode, common, nc } => {
            cmd_image(&ImageArgs {
                profile: &profile,
                out: &out,
                mode,
                dynamic_range_db: common.dynamic_range,
                nc,
                pattern: cli.pattern,
                scene: common.scene.as_deref(),
            })?;
        }
        Command::Detect { profile, out, image, config, known_roads, common } => {
            let report = cmd_detect(&DetectArgs {
                profile: &profile,
                report: &out,
                image: image.as_deref(),
                config: config.as_deref(),
                scene: common.scene.as_deref(),
                known_roads,
                pattern: cli.pattern,
                dynamic_range_db: common.dynamic_range,
            })?;
            let mut out = std::io::stdout().lock();
            writeln!(
                out,
                "{} detections, {} movers cleaned, {} roads{}",
                report.detections.len(),
                report.cleaned.len(),
                report.roads.len(),
                if report.fallback { " (4-D fallback)" } else { "" }
            )?;
            for d in &report.detections {
                writeln!(
                    out,
                    "  ({:.1}, {:.1}) m  v = ({:.3}, {:.3}) m/pulse  {:.1} dB",
                    d.position[0],
                    d.position[1],
                    d.velocity[0],
                    d.velocity[1],
                    d.amplitude_db()
                )?;
            }
        }
        Command::Roads { profile, out, config, edges, nc, scene } => {
            let lines = cmd_roads(&RoadsArgs {
                profile: &profile,
                out: &out,
                config: config.as_deref(),
                scene: scene.as_deref(),
                edges: edges.as_deref(),
                nc,
                pattern: cli.pattern,
            })?;
            let mut out = std::io::stdout().lock();
            for l in &lines {
                writeln!(out, "rho {:.2} m  alpha {:.2} deg  width {:.1} m", l.rho, l.alpha.to_degrees(), l.width)?;
            }
        }
        Command::Bench { n, algorithms, repeats, nc, out } => {
            let cfg = BenchConfig { sizes: n, algorithms, repeats, nc };
            let records = run_bench(&cfg, |r| log::info!("{} N={} {:.4} s", r.algorithm, r.n, r.seconds))?;
            match out {
                Some(p) => write_csv(std::fs::File::create(p)?, &records)?,
                None => write_csv(std::io::stdout().lock(), &records)?,
            }
            eprint!("{}", slope_summary(&records));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
