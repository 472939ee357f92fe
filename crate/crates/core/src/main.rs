//! Command-line front end. Every configuration key can come from a JSON
//! config file (`--config`) and be overridden by the flag of the same name.
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! non-convergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use geophoto_core::config::PipelineConfig;
use geophoto_core::error::{Error, Result};
use geophoto_core::ingest::ingest_dir;
use geophoto_core::pipeline::{run_pipeline_with, ExportFilter, Sections};
use geophoto_core::synth::{generate, GroundTruth, SynthSpec};

#[derive(Parser)]
#[command(
    name = "geophoto",
    version,
    about = "Tourism analytics over geotagged photo collections"
)]
struct Cli {
    /// JSON config file; flags below override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory of <location>_<label>.csv input files.
    #[arg(long, global = true, value_name = "DIR")]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// City registry CSV (bundled ten-city registry when omitted).
    #[arg(long, global = true, value_name = "FILE")]
    registry: Option<PathBuf>,
    /// Extra location alias CSV.
    #[arg(long, global = true, value_name = "FILE")]
    aliases: Option<PathBuf>,
    /// Analysis window, start..end (dates or RFC 3339 instants).
    #[arg(long, global = true, value_name = "RANGE")]
    window: Option<String>,
    /// Minimum photos in a city before it can be a home.
    #[arg(long, global = true, value_name = "N")]
    min_photos: Option<u64>,
    /// Minimum days between first and last photo (exclusive threshold).
    #[arg(long, global = true, value_name = "DAYS")]
    min_span_days: Option<f64>,
    /// Grid cell edge in meters.
    #[arg(long, global = true, value_name = "METERS")]
    cell_size: Option<f64>,
    /// Hotspots requested per city.
    #[arg(long, global = true, value_name = "N")]
    hotspots: Option<usize>,
    /// Corpus generation seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Ingest worker threads.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Region set: cities, topN+rest, or id,id,...+rest.
    #[arg(long, global = true, value_name = "SPEC")]
    regions: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, deduplicate, and window-filter the input; print the counts.
    Ingest,
    /// Infer home cities and write homes.csv.
    Homes,
    /// Flow analyses: per-capita volumes, OD matrix, null-model ratios,
    /// breakdowns, distance decay.
    Flows,
    /// Per-city spatial analyses: density grids, distribution fits, quantile
    /// areas, hotspots.
    Spatial,
    /// Generate a synthetic corpus plus its ground-truth manifest.
    Synth {
        /// Corpus recipe JSON; a bundled ten-city demo recipe when omitted.
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
        /// Scale factor on the demo recipe's user counts.
        #[arg(long, default_value_t = 1.0, value_name = "F")]
        scale: f64,
    },
    /// Full pipeline: ingest through spatial plus every export.
    Run,
    /// Full pipeline with exports restricted to the given formats.
    Export {
        /// Comma list of csv, json, geojson.
        #[arg(long, default_value = "csv,json,geojson", value_name = "LIST")]
        formats: String,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &cli.input {
        cfg.input = Some(v.clone());
    }
    if let Some(v) = &cli.out {
        cfg.out = Some(v.clone());
    }
    if let Some(v) = &cli.registry {
        cfg.registry = Some(v.clone());
    }
    if let Some(v) = &cli.aliases {
        cfg.aliases = Some(v.clone());
    }
    if let Some(v) = &cli.window {
        cfg.window = v.clone();
    }
    if let Some(v) = cli.min_photos {
        cfg.min_photos = v;
    }
    if let Some(v) = cli.min_span_days {
        cfg.min_span_days = v;
    }
    if let Some(v) = cli.cell_size {
        cfg.cell_size = v;
    }
    if let Some(v) = cli.hotspots {
        cfg.hotspots = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.workers {
        cfg.workers = v;
    }
    if let Some(v) = &cli.regions {
        cfg.regions = v.clone();
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn synth_command(cfg: &PipelineConfig, spec_path: Option<&PathBuf>, scale: f64) -> Result<GroundTruth> {
    let spec = match spec_path {
        Some(path) => {
            if scale != 1.0 {
                return Err(Error::config("--scale applies only to the demo recipe"));
            }
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut spec: SynthSpec = serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            spec.seed = cfg.seed;
            spec
        }
        None => {
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::config(format!("scale must be positive, got {scale}")));
            }
            SynthSpec::demo_scaled(cfg.seed, scale)
        }
    };
    let registry = cfg.registry()?;
    let out = cfg.out_dir()?;
    generate(&spec, &registry, out)
}

fn real_main(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Ingest => {
            cfg.validate()?;
            let (_, stats) = ingest_dir(cfg.input_dir()?, &cfg.window()?, cfg.workers)?;
            print_json(&stats);
        }
        Command::Homes => {
            let report = run_pipeline_with(&cfg, Sections::homes_only(), &ExportFilter::all())?;
            print_json(&report);
        }
        Command::Flows => {
            let report = run_pipeline_with(&cfg, Sections::flows_only(), &ExportFilter::all())?;
            print_json(&report);
        }
        Command::Spatial => {
            let report = run_pipeline_with(&cfg, Sections::spatial_only(), &ExportFilter::all())?;
            print_json(&report);
        }
        Command::Synth { spec, scale } => {
            let truth = synth_command(&cfg, spec.as_ref(), *scale)?;
            print_json(&serde_json::json!({
                "out": cfg.out_dir()?,
                "files": truth.files.len(),
                "records_written": truth.records_written,
                "clean_records": truth.clean_records,
                "homed_users": truth.homes.len(),
                "unhomed_users": truth.unhomed_users.len(),
            }));
        }
        Command::Run => {
            let report = run_pipeline_with(&cfg, Sections::all(), &ExportFilter::all())?;
            print_json(&report);
        }
        Command::Export { formats } => {
            let filter = ExportFilter::parse(formats)?;
            let report = run_pipeline_with(&cfg, Sections::all(), &filter)?;
            print_json(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
