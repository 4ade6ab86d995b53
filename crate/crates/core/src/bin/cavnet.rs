//! Command-line front end: physics reports, layout dumps, Monte Carlo
//! campaigns, requirement-boundary searches and the alpha calibration sweep.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cavnet_core::config::{ConfigError, ExperimentConfig};
use cavnet_core::harness::{
    boundary_search, calibrate_alpha, collect_records, prepare_point, run_campaign, HarnessError,
};
use cavnet_core::manifest::{ManifestError, RunManifest};
use cavnet_core::report::{
    layout_json, physics_report, write_alpha_csv, write_boundary_csv, write_record_dump,
    write_results_csv, ReportError,
};

#[derive(Parser)]
#[command(
    name = "cavnet",
    version,
    about = "Surface-code logical error simulation on cavity photonic networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Load the configuration embedded in a run manifest (JSON).
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Shots per point override.
    #[arg(long)]
    shots: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Network structure: 4 | d | n.
    #[arg(long)]
    structure: Option<String>,
    /// Decoder: uniform | weighted.
    #[arg(long)]
    decoder: Option<String>,
    /// Weighted-decoder reweighting factor.
    #[arg(long)]
    alpha: Option<f64>,
    /// Synthetic mode: total photon loss per measurement path.
    #[arg(long)]
    synthetic_loss: Option<f64>,
    /// Synthetic mode: flat gate infidelity.
    #[arg(long)]
    synthetic_infidelity: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolved operating point and noise budget.
    Physics {
        #[command(flatten)]
        opts: Overrides,
        /// Code distance (defaults to the first configured one).
        #[arg(long)]
        d: Option<usize>,
    },
    /// Dump the lattice, cavity assignment and schedule as JSON.
    Layout {
        #[command(flatten)]
        opts: Overrides,
        #[arg(long)]
        d: Option<usize>,
    },
    /// Run the Monte Carlo campaign over the configured distances.
    Simulate {
        #[command(flatten)]
        opts: Overrides,
        /// Also write per-shot records (binary) per distance.
        #[arg(long)]
        dump_records: bool,
    },
    /// Bisect the requirement boundary over g for each kappa_in.
    Boundary {
        #[command(flatten)]
        opts: Overrides,
    },
    /// Sweep the weighted decoder's alpha and report the best value.
    CalibrateAlpha {
        #[command(flatten)]
        opts: Overrides,
        /// Comma-separated alphas to try.
        #[arg(long, default_value = "2,5,10,20")]
        alphas: String,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn resolve_config(opts: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = if let Some(path) = &opts.manifest {
        RunManifest::read(path)?.config
    } else if let Some(path) = &opts.config {
        ExperimentConfig::from_file(path)?
    } else {
        return Err(CliError::Usage("--config (or --manifest) is required".into()));
    };
    if let Some(seed) = opts.seed {
        cfg.run.seed = seed;
    }
    if let Some(shots) = opts.shots {
        cfg.run.shots = shots;
    }
    if let Some(out) = &opts.out {
        cfg.run.out = out.display().to_string();
    }
    if let Some(threads) = opts.threads {
        cfg.run.threads = threads;
    }
    if let Some(s) = &opts.structure {
        cfg.structure.kind = s.parse().map_err(CliError::Usage)?;
    }
    if let Some(dec) = &opts.decoder {
        cfg.decoder.kind = dec.parse().map_err(CliError::Usage)?;
    }
    if let Some(alpha) = opts.alpha {
        cfg.decoder.alpha = alpha;
    }
    if opts.synthetic_loss.is_some() || opts.synthetic_infidelity.is_some() {
        cfg.synthetic = Some(cavnet_core::config::SyntheticSection {
            loss: opts.synthetic_loss.unwrap_or(0.0),
            infidelity: opts.synthetic_infidelity.unwrap_or(0.0),
        });
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Physics { opts, d } => {
            let cfg = resolve_config(&opts)?;
            let d = d.unwrap_or(cfg.code.distances[0]);
            let point = prepare_point(&cfg, d)?;
            let report = physics_report(&cfg, &point);
            print!("{report}");
            if let Some(out) = &opts.out {
                std::fs::create_dir_all(out).ok();
                std::fs::write(out.join("physics.txt"), &report).map_err(|source| {
                    ReportError::Io { path: out.display().to_string(), source }
                })?;
            }
            Ok(())
        }
        Command::Layout { opts, d } => {
            let cfg = resolve_config(&opts)?;
            let d = d.unwrap_or(cfg.code.distances[0]);
            let point = prepare_point(&cfg, d)?;
            let json = layout_json(&point.layout, &point.structure);
            println!("{json}");
            if let Some(out) = &opts.out {
                std::fs::create_dir_all(out).ok();
                std::fs::write(out.join(format!("layout_d{d}.json")), json + "\n").map_err(
                    |source| ReportError::Io { path: out.display().to_string(), source },
                )?;
            }
            Ok(())
        }
        Command::Simulate { opts, dump_records } => {
            let cfg = resolve_config(&opts)?;
            let out = PathBuf::from(&cfg.run.out);
            let rows = run_campaign(&cfg)?;
            for row in &rows {
                println!(
                    "d={} shots={} failures={} p_L={} per_cycle={} [{}, {}]",
                    row.d,
                    row.shots,
                    row.failures,
                    row.p_logical,
                    row.per_cycle,
                    row.per_cycle_lo,
                    row.per_cycle_hi
                );
            }
            write_results_csv(out.join("results.csv"), &rows)?;
            RunManifest::build(&cfg)?.write(out.join("manifest.json"))?;
            if dump_records {
                for &d in &cfg.code.distances {
                    let (records, corrections, _) = collect_records(&cfg, d)?;
                    let point = prepare_point(&cfg, d)?;
                    write_record_dump(
                        out.join(format!("records_d{d}.bin")),
                        &records,
                        &corrections,
                        &point.layout,
                    )?;
                }
            }
            println!("wrote {}", out.join("results.csv").display());
            Ok(())
        }
        Command::Boundary { opts } => {
            let cfg = resolve_config(&opts)?;
            let out = PathBuf::from(&cfg.run.out);
            let rows = boundary_search(&cfg)?;
            for row in &rows {
                println!(
                    "kappa_in={} g*={} C_in={} resolved={}",
                    row.kappa_in, row.g_star, row.c_in, row.resolved
                );
            }
            write_boundary_csv(out.join("boundary.csv"), &rows)?;
            RunManifest::build(&cfg)?.write(out.join("manifest.json"))?;
            Ok(())
        }
        Command::CalibrateAlpha { opts, alphas } => {
            let cfg = resolve_config(&opts)?;
            let out = PathBuf::from(&cfg.run.out);
            let alphas: Vec<f64> = alphas
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::Usage(format!("bad alpha '{s}': {e}")))
                })
                .collect::<Result<_, _>>()?;
            if alphas.is_empty() || alphas.iter().any(|&a| a <= 1.0) {
                return Err(CliError::Usage("alphas must be a non-empty list exceeding 1".into()));
            }
            let rows = calibrate_alpha(&cfg, &alphas)?;
            for row in &rows {
                println!(
                    "alpha={} failures={}/{} per_cycle={}",
                    row.alpha, row.failures, row.shots, row.per_cycle
                );
            }
            let best = rows
                .iter()
                .min_by(|a, b| a.per_cycle.total_cmp(&b.per_cycle))
                .expect("non-empty sweep");
            println!("best alpha = {}", best.alpha);
            write_alpha_csv(out.join("alpha.csv"), &rows)?;
            Ok(())
        }
    }
}
