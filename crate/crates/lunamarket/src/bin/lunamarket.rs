//! Batch front end over the simulator library.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration or
//! usage error. `LUNAMARKET_SEED` overrides the scenario seed unless
//! `--seed` is given.

use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lunamarket::ledger;
use lunamarket::selenography::{SelenographicCoord, Tiling, LUNAR_RADIUS_M};
use lunamarket::sim::{self, Mode};

#[derive(Parser)]
#[command(name = "lunamarket", about = "coopetitive mapping-market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write events, metrics, ledger and coverage.
    Run(RunArgs),
    /// Run a mode=both scenario in both modes and write the comparison.
    Compare(CompareArgs),
    /// Verify a JSON-Lines ledger export.
    Verify {
        /// Path to a ledger.jsonl file.
        #[arg(long)]
        log: PathBuf,
    },
    /// Inspect the Goldberg tiling.
    Grid {
        #[command(subcommand)]
        command: GridCommand,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed (and LUNAMARKET_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum GridCommand {
    /// Print cell, pentagon and hexagon counts for a frequency.
    Info {
        #[arg(long)]
        frequency: u32,
    },
    /// Locate the cell containing a selenographic coordinate.
    Locate {
        #[arg(long)]
        lat: f64,
        #[arg(long)]
        lon: f64,
        #[arg(long)]
        frequency: u32,
    },
}

fn effective_seed(cli_seed: Option<u64>, scenario_seed: u64) -> u64 {
    if let Some(s) = cli_seed {
        return s;
    }
    match std::env::var("LUNAMARKET_SEED") {
        Ok(v) => match v.parse() {
            Ok(s) => s,
            Err(_) => {
                eprintln!("warning: ignoring unparseable LUNAMARKET_SEED={v:?}");
                scenario_seed
            }
        },
        Err(_) => scenario_seed,
    }
}

fn config_err(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => {
            let mut cfg = match sim::load_scenario(&args.scenario) {
                Ok(c) => c,
                Err(e) => return config_err(e),
            };
            cfg.seed = effective_seed(args.seed, cfg.seed);
            if cfg.mode == Mode::Both {
                return config_err("scenario mode is `both`; use the compare subcommand");
            }
            let out = match sim::run_scenario(&cfg) {
                Ok(o) => o,
                Err(e) => return config_err(e),
            };
            if let Err(e) = out.write_to_dir(&args.out) {
                return config_err(e);
            }
            println!(
                "run complete: seed {}, {} events, {} blocks, {} contracts settled",
                cfg.seed,
                out.events().len(),
                out.world.ledger.blocks().len(),
                out.metrics.settled_contracts,
            );
            println!("outputs in {}", args.out.display());
            ExitCode::SUCCESS
        }
        Command::Compare(args) => {
            let mut cfg = match sim::load_scenario(&args.scenario) {
                Ok(c) => c,
                Err(e) => return config_err(e),
            };
            cfg.seed = effective_seed(args.seed, cfg.seed);
            let out = match sim::compare_baseline(&cfg) {
                Ok(o) => o,
                Err(e) => return config_err(e),
            };
            let write = (|| -> std::io::Result<()> {
                std::fs::create_dir_all(&args.out)?;
                out.coordinated
                    .write_to_dir(&args.out.join("coordinated"))?;
                out.baseline.write_to_dir(&args.out.join("baseline"))?;
                let report = serde_json::to_string_pretty(&out.report)?;
                std::fs::write(args.out.join("comparison.json"), report + "\n")?;
                Ok(())
            })();
            if let Err(e) = write {
                return config_err(e);
            }
            let r = &out.report;
            println!(
                "coordinated: {:.1} m, coverage at {:?} ms",
                r.coordinated.total_distance_m, r.coordinated.time_to_full_coverage_ms
            );
            println!(
                "baseline:    {:.1} m, coverage at {:?} ms",
                r.baseline.total_distance_m, r.baseline.time_to_full_coverage_ms
            );
            println!(
                "saved by coordination: {:.1} m, {:?} ms",
                r.distance_saved_m, r.coverage_time_saved_ms
            );
            println!("outputs in {}", args.out.display());
            ExitCode::SUCCESS
        }
        Command::Verify { log } => {
            let file = match std::fs::File::open(&log) {
                Ok(f) => f,
                Err(e) => return config_err(format!("{}: {e}", log.display())),
            };
            match ledger::verify_jsonl(BufReader::new(file)) {
                Ok(true) => {
                    println!("ok: chain verifies");
                    ExitCode::SUCCESS
                }
                Ok(false) => {
                    eprintln!("FAIL: chain does not verify");
                    ExitCode::from(1)
                }
                Err(e) => config_err(format!("unreadable ledger export: {e}")),
            }
        }
        Command::Grid { command } => match command {
            GridCommand::Info { frequency } => match Tiling::build(frequency, LUNAR_RADIUS_M) {
                Ok(t) => {
                    println!(
                        "gp({frequency},0): {} cells = {} pentagons + {} hexagons; euler characteristic {}",
                        t.cell_count(),
                        t.pentagon_count(),
                        t.hexagon_count(),
                        t.euler_characteristic()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => config_err(e),
            },
            GridCommand::Locate {
                lat,
                lon,
                frequency,
            } => {
                if !(-90.0..=90.0).contains(&lat) {
                    return config_err("latitude must be within [-90, 90]");
                }
                if !(-180.0..=180.0).contains(&lon) {
                    return config_err("longitude must be within (-180, 180]");
                }
                match Tiling::build(frequency, LUNAR_RADIUS_M) {
                    Ok(t) => {
                        let cell = t.locate_cell(SelenographicCoord::new(lat, lon));
                        let center = t.cell_center(cell).expect("located cell is valid");
                        println!(
                            "{cell} (center lat {:.6}, lon {:.6})",
                            center.lat_deg, center.lon_deg
                        );
                        ExitCode::SUCCESS
                    }
                    Err(e) => config_err(e),
                }
            }
        },
    }
}
