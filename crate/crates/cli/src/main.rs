//! `doa` — gridless DOA estimation from fourth-order cumulants.
//!
//! Subcommands:
//! * `simulate` — draw one snapshot realization and dump it as CSV;
//! * `estimate` — run one method on a snapshot CSV and print the DOAs;
//! * `bench`    — Monte Carlo sweep over SNR × snapshots, writing rows and
//!   summary CSVs;
//! * `verify`   — run the built-in oracle battery.
//!
//! All subcommands read the same flat key/value config file (see
//! `doa_core::config`); `--set key=value` overrides individual entries.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use doa_core::bench::{
    read_snapshots_csv, sweep_and_report, write_snapshots_csv, EstimateOutcome, Method,
};
use doa_core::config::ConfigMap;
use doa_core::signal::{gen_snapshots, NoiseConfig, SourceConfig};

#[derive(Parser)]
#[command(name = "doa", version, about = "Gridless DOA estimation from fourth-order cumulants")]
struct Cli {
    /// Experiment config file (flat `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set trials=20`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one snapshot realization and write it as CSV.
    Simulate {
        /// Output path for the snapshot CSV.
        #[arg(long)]
        out: PathBuf,
        /// SNR in dB (default: first point of the configured sweep).
        #[arg(long)]
        snr_db: Option<f64>,
        /// Snapshot count (default: first point of the configured sweep).
        #[arg(long)]
        snapshots: Option<usize>,
        /// Monte Carlo cell index used for seed derivation.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Estimate DOAs from a snapshot CSV.
    Estimate {
        /// Input snapshot CSV (as written by `simulate`).
        #[arg(long)]
        input: PathBuf,
        /// Estimation method (et-focanm, foc-anm-fixed, foc-music).
        #[arg(long)]
        method: Option<String>,
        /// Number of sources; defaults to the configured source count.
        #[arg(long)]
        sources: Option<usize>,
    },
    /// Run the Monte Carlo sweep and write rows/summary CSVs.
    Bench {
        /// Rows CSV path (default from config `output.rows`).
        #[arg(long)]
        rows: Option<PathBuf>,
        /// Summary CSV path (default from config `output.summary`).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run the built-in oracle/property battery.
    Verify,
}

fn load_config(cli: &Cli) -> anyhow::Result<ConfigMap> {
    let mut map = match &cli.config {
        Some(path) => ConfigMap::from_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ConfigMap::default(),
    };
    map.apply_overrides(&cli.overrides)?;
    Ok(map)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let map = load_config(&cli)?;

    match &cli.command {
        Command::Simulate {
            out,
            snr_db,
            snapshots,
            trial,
        } => {
            let cfg = map.experiment()?;
            let snr = snr_db.unwrap_or(cfg.snr_grid_db[0]);
            let j = snapshots.unwrap_or(cfg.j_grid[0]);
            let seed = cfg.trial_seed(snr, j, *trial);
            let src = SourceConfig::new(cfg.thetas_deg.clone(), cfg.sigma_s2)?;
            let noise = NoiseConfig::new(
                cfg.ar_coeffs.clone(),
                cfg.sigma_s2 * 10f64.powf(-snr / 10.0),
            )?;
            let y = gen_snapshots(&cfg.geometry, &src, &noise, j, seed)?;
            let file = std::fs::File::create(out)
                .with_context(|| format!("creating {}", out.display()))?;
            write_snapshots_csv(
                std::io::BufWriter::new(file),
                &y,
                &[
                    ("snr_db", format!("{snr}")),
                    ("snapshots", format!("{j}")),
                    ("trial", format!("{trial}")),
                    ("seed", format!("{seed}")),
                    (
                        "thetas_true_deg",
                        cfg.thetas_deg
                            .iter()
                            .map(|t| t.to_string())
                            .collect::<Vec<_>>()
                            .join(","),
                    ),
                ],
            )?;
            println!(
                "wrote {} ({} antennas x {} snapshots, SNR {snr} dB)",
                out.display(),
                y.data.nrows(),
                j
            );
        }
        Command::Estimate {
            input,
            method,
            sources,
        } => {
            let cfg = map.experiment()?;
            let text = std::fs::read_to_string(input)
                .with_context(|| format!("reading {}", input.display()))?;
            let y = read_snapshots_csv(&text)?;
            let method: Method = match method {
                Some(m) => m.parse()?,
                None => Method::EtFocanm,
            };
            let mut opts = cfg.estimate_options_for(method);
            if let Some(p) = sources {
                opts.p_known = Some(*p);
            }
            let EstimateOutcome {
                estimates,
                status,
                solver_iterations,
            } = doa_core::bench::estimate_doas(&y, &opts)?;
            let angles: Vec<String> = estimates
                .thetas_deg
                .iter()
                .map(|t| format!("{t:.4}"))
                .collect();
            println!("method={method} status={status}");
            if let Some(iters) = solver_iterations {
                println!("solver_iterations={iters}");
            }
            println!("doa_estimates_deg={}", angles.join(","));
        }
        Command::Bench { rows, summary } => {
            let cfg = map.experiment()?;
            let paths = map.output_paths();
            let rows_path = rows.clone().unwrap_or_else(|| PathBuf::from(&paths.rows));
            let summary_path = summary
                .clone()
                .unwrap_or_else(|| PathBuf::from(&paths.summary));
            let (rows, summary) = sweep_and_report(&cfg, &rows_path, &summary_path)?;
            println!(
                "wrote {} trial rows to {} and {} summary rows to {}",
                rows.len(),
                rows_path.display(),
                summary.len(),
                summary_path.display()
            );
            for s in &summary {
                println!(
                    "{} snr={:+.1} j={} rmse={:.4} deg (failures {}/{})",
                    s.method, s.snr_db, s.j, s.rmse_deg, s.failures, s.trials
                );
            }
        }
        Command::Verify => {
            let results = doa_core::selfcheck::run_all();
            let mut failed = 0;
            for r in &results {
                println!(
                    "{} {} - {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                if !r.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                bail!("{failed} of {} checks failed", results.len());
            }
            println!("all {} checks passed", results.len());
        }
    }
    Ok(())
}
