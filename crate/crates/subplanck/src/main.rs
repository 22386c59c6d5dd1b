use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use subplanck::error::{Result, SubplanckError};
use subplanck::grid::State;
use subplanck::io::write_wigner;
use subplanck::scenario::{
    exit_code, load_scenario, load_state_file, report_state_file, run_classical, run_scenario,
    Scenario,
};
use subplanck::wigner::{wigner_of_psi, wigner_of_rho};

/// Phase-space interference structure toolkit.
#[derive(Parser)]
#[command(name = "subplanck", version)]
struct Cli {
    /// Worker thread count; the SUBPLANCK_THREADS variable is the
    /// fallback, and the default uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory that receives all emitted files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured state and write it as a binary grid file.
    State {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Wigner transform of a stored state file.
    Wigner { state_file: PathBuf },
    /// Evolve the configured state, writing snapshots and reports.
    Evolve {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<f64>>,
    },
    /// Evolve a classical ensemble matched to the configured packet.
    Classical {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<f64>>,
    },
    /// Overlap decay scan of the configured state.
    Scan {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Structure and coherence report for stored state files.
    Report { state_files: Vec<PathBuf> },
    /// Full scenario run: state, evolution, scan, reports, manifest.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<f64>>,
    },
}

struct Overrides {
    seed: Option<u64>,
    dt: Option<f64>,
    snapshots: Option<Vec<f64>>,
}

fn apply_overrides(config: &mut Scenario, ov: Overrides) -> Result<()> {
    if let Some(seed) = ov.seed {
        config.seed = seed;
    }
    if ov.dt.is_some() || ov.snapshots.is_some() {
        let dynamics = config.dynamics.as_mut().ok_or_else(|| {
            SubplanckError::InvalidInput(
                "--dt and --snapshots need a dynamics section in the config".into(),
            )
        })?;
        if let Some(dt) = ov.dt {
            dynamics.dt = dt;
        }
        if let Some(times) = ov.snapshots {
            dynamics.snapshots = times;
        }
    }
    Ok(())
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SUBPLANCK_THREADS") {
        Ok(raw) => {
            let parsed = raw.parse::<usize>().map_err(|_| {
                SubplanckError::InvalidInput(format!(
                    "SUBPLANCK_THREADS = {raw:?} is not a thread count"
                ))
            })?;
            Ok(Some(parsed))
        }
        Err(_) => Ok(None),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(threads) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| SubplanckError::InvalidInput(format!("thread pool: {e}")))?;
    }
    let out_dir = cli.out_dir;
    match cli.command {
        Command::State { config, seed } => {
            let mut config = load_scenario(&config)?;
            apply_overrides(
                &mut config,
                Overrides {
                    seed,
                    dt: None,
                    snapshots: None,
                },
            )?;
            config.dynamics = None;
            config.scan = None;
            let manifest = run_scenario(&config, &out_dir)?;
            println!("wrote {}", out_dir.join(&manifest.artifacts[0].path).display());
        }
        Command::Wigner { state_file } => {
            let state = load_state_file(&state_file)?;
            let w = match &state {
                State::Pure(psi) => wigner_of_psi(psi),
                State::Mixed(rho) => wigner_of_rho(rho),
            };
            std::fs::create_dir_all(&out_dir)?;
            let path = out_dir.join("wigner.wiggrid");
            write_wigner(&path, &w)?;
            println!("wrote {}", path.display());
        }
        Command::Evolve {
            config,
            seed,
            dt,
            snapshots,
        } => {
            let mut config = load_scenario(&config)?;
            apply_overrides(&mut config, Overrides { seed, dt, snapshots })?;
            if config.dynamics.is_none() {
                return Err(SubplanckError::InvalidInput(
                    "evolve needs a dynamics section in the config".into(),
                ));
            }
            config.scan = None;
            let manifest = run_scenario(&config, &out_dir)?;
            println!(
                "wrote {} artifacts to {}",
                manifest.artifacts.len(),
                out_dir.display()
            );
        }
        Command::Classical {
            config,
            seed,
            dt,
            snapshots,
        } => {
            let mut config = load_scenario(&config)?;
            apply_overrides(&mut config, Overrides { seed, dt, snapshots })?;
            let manifest = run_classical(&config, &out_dir)?;
            println!(
                "wrote {} artifacts to {}",
                manifest.artifacts.len(),
                out_dir.display()
            );
        }
        Command::Scan { config, seed } => {
            let mut config = load_scenario(&config)?;
            apply_overrides(
                &mut config,
                Overrides {
                    seed,
                    dt: None,
                    snapshots: None,
                },
            )?;
            if config.scan.is_none() {
                return Err(SubplanckError::InvalidInput(
                    "scan needs a scan section in the config".into(),
                ));
            }
            config.dynamics = None;
            let manifest = run_scenario(&config, &out_dir)?;
            println!(
                "wrote {} artifacts to {}",
                manifest.artifacts.len(),
                out_dir.display()
            );
        }
        Command::Report { state_files } => {
            if state_files.is_empty() {
                return Err(SubplanckError::InvalidInput(
                    "report needs at least one state file".into(),
                ));
            }
            std::fs::create_dir_all(&out_dir)?;
            for file in &state_files {
                let report = report_state_file(file)?;
                let text = serde_json::to_string_pretty(&report)
                    .map_err(|e| SubplanckError::InvalidInput(format!("serializing report: {e}")))?;
                let stem = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "state".into());
                let path = out_dir.join(format!("{stem}_report.json"));
                std::fs::write(&path, format!("{text}\n"))?;
                println!("{text}");
            }
        }
        Command::Run {
            config,
            seed,
            dt,
            snapshots,
        } => {
            let mut config = load_scenario(&config)?;
            apply_overrides(&mut config, Overrides { seed, dt, snapshots })?;
            let manifest = run_scenario(&config, &out_dir)?;
            println!(
                "wrote {} artifacts to {}",
                manifest.artifacts.len(),
                out_dir.join("manifest.json").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
