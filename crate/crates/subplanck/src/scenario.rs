//! JSON scenario configs, deterministic runs, and output manifests.
//!
//! A [`Scenario`] names a grid, one state source, and optionally an
//! evolution, an overlap scan, and report flags. [`run_scenario`] builds
//! the state, runs whatever is configured, writes every artifact into an
//! output directory, and finishes with a manifest listing each file with
//! its SHA-256. A fixed config and seed reproduce the run byte for byte.
//!
//! Config parsing is strict: unknown keys are rejected with the line and
//! column of the offending entry, and the tagged `state` union admits
//! exactly one source.

use std::f64::consts::{E, TAU};
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoherence::{analyze_decay, decay_scan, orthogonality_shift};
use crate::dynamics::{
    evolve_classical_span, evolve_quantum, lyapunov_over_seeds, timescales,
    transverse_structure_scale, ClassicalEnsemble, DrivenPendulumParams, TimescaleReport,
};
use crate::error::{Result, SubplanckError};
use crate::grid::{GridSpec, PhaseSpaceDirection, State, WaveFunction};
use crate::io::{
    file_sha256, read_density, read_wavefunction, write_decay_csv, write_density,
    write_wavefunction, write_wigner,
};
use crate::states::{
    make_cat, make_compass, make_gaussian, make_sparse, random_sparse_spec, CompassSpec,
    GaussianPacket,
};
use crate::wigner::{
    checkerboard_tile_area, coherence_scale, structure_report, wigner_of_psi, wigner_of_rho,
    DynamicsContext, ScanPoint, StructureReport,
};

/// Seed points inside the chaotic sea of the benchmark pendulum, used to
/// average the Lyapunov rate for timescale reports.
pub const SEA_SEEDS: [(f64, f64); 6] = [
    (0.0, 0.0),
    (0.5, 0.0),
    (-0.7, 0.3),
    (1.2, -0.4),
    (2.0, 0.8),
    (-1.5, -0.6),
];

/// One reproducible run: grid, state source, and optional evolution,
/// scan, and report sections.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub grid: GridConfig,
    pub state: StateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub seed: u64,
}

/// Centered grid parameters; positions span [-extent/2, extent/2).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub extent: f64,
    pub hbar: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec> {
        GridSpec::centered(self.n, self.extent, self.hbar)
    }
}

/// The single state source of a scenario. The external tagging makes a
/// config with two sources unrepresentable.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateConfig {
    Gaussian(GaussianConfig),
    Cat(CatConfig),
    Compass(CompassConfig),
    Sparse(SparseConfig),
    FromFile(FromFileConfig),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianConfig {
    pub x0: f64,
    pub p0: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatConfig {
    pub x0: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompassConfig {
    pub x_separation: f64,
    pub p_separation: f64,
    pub xi: f64,
}

/// Equal-weight packets placed by rejection sampling inside the box
/// |x| <= x_half, |p| <= p_half, keeping the stated normalized distance
/// between centers. Placement draws from the scenario seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseConfig {
    pub count: usize,
    pub xi: f64,
    pub x_half: f64,
    pub p_half: f64,
    pub min_separation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FromFileConfig {
    pub path: PathBuf,
}

/// Pendulum parameters plus integration controls. `t_final` defaults to
/// the last snapshot time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub mass: f64,
    pub kappa: f64,
    pub drive_amplitude: f64,
    pub harmonic_coeff: f64,
    pub dt: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// Particle count for the `classical` companion run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical_ensemble: Option<usize>,
}

impl DynamicsConfig {
    pub fn params(&self) -> Result<DrivenPendulumParams> {
        DrivenPendulumParams::new(self.mass, self.kappa, self.drive_amplitude, self.harmonic_coeff)
    }

    pub fn end_time(&self) -> Result<f64> {
        self.t_final
            .or_else(|| self.snapshots.last().copied())
            .ok_or_else(|| {
                SubplanckError::InvalidInput(
                    "dynamics needs t_final or at least one snapshot time".into(),
                )
            })
    }
}

/// Overlap scan along a fixed phase-space direction. The optional
/// threshold adds a crossing at that level to the scan summary, next to
/// the 1/e crossing that is always reported.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub direction: DirectionConfig,
    pub max: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionConfig {
    pub ux: f64,
    pub up: f64,
}

/// Which optional outputs a run emits.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// Structure summary of the initial state and every snapshot.
    pub structure: bool,
    /// Lyapunov-based saturation and recurrence times; needs dynamics.
    pub timescales: bool,
    /// 1/e coherence scales along x and p for pure states.
    pub coherence: bool,
    /// Wigner grid of the run's end state, with tile-area measurement.
    pub wigner: bool,
}

/// Parses a scenario from JSON text, rejecting unknown keys.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    serde_json::from_str(text)
        .map_err(|e| SubplanckError::InvalidInput(format!("scenario config: {e}")))
}

/// Reads and parses a scenario config file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            SubplanckError::InvalidInput(format!("config file {} does not exist", path.display()))
        } else {
            SubplanckError::Io(e)
        }
    })?;
    parse_scenario(&text)
}

/// Loads a stored state, dispatching on the magic bytes.
pub fn load_state_file(path: &Path) -> Result<State> {
    let mut magic = [0u8; 8];
    let mut file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            SubplanckError::InvalidInput(format!("state file {} does not exist", path.display()))
        } else {
            SubplanckError::Io(e)
        }
    })?;
    let got = file.read(&mut magic)?;
    drop(file);
    match &magic[..got] {
        b"PSIGRID1" => Ok(State::Pure(read_wavefunction(path)?)),
        b"RHOGRID1" => Ok(State::Mixed(read_density(path)?)),
        other => Err(SubplanckError::Format {
            offset: 0,
            detail: format!(
                "magic {:?} names no known state format",
                String::from_utf8_lossy(other)
            ),
        }),
    }
}

/// Builds the configured state on `grid`. Sparse placement is seeded from
/// the scenario seed, so the same config reproduces the same centers.
pub fn build_state(config: &Scenario, grid: &GridSpec) -> Result<State> {
    match &config.state {
        StateConfig::Gaussian(g) => Ok(State::Pure(make_gaussian(
            &GaussianPacket::new(g.x0, g.p0, g.xi),
            grid,
        )?)),
        StateConfig::Cat(c) => Ok(State::Pure(make_cat(c.x0, c.xi, grid)?)),
        StateConfig::Compass(c) => Ok(State::Pure(make_compass(
            &CompassSpec::new(c.x_separation, c.p_separation, c.xi),
            grid,
        )?)),
        StateConfig::Sparse(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let spec = random_sparse_spec(
                s.count,
                s.xi,
                s.x_half,
                s.p_half,
                s.min_separation,
                grid.hbar(),
                &mut rng,
            )?;
            Ok(State::Pure(make_sparse(&spec, grid)?))
        }
        StateConfig::FromFile(f) => load_state_file(&f.path),
    }
}

/// Structure summary plus the decoherence quantities of one state.
#[derive(Debug, Clone, Serialize)]
pub struct StateReport {
    pub structure: StructureReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence_scale_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence_scale_p: Option<f64>,
    pub predicted_orthogonality_shift: f64,
}

fn scale_or_none(psi: &WaveFunction, direction: &PhaseSpaceDirection) -> Result<Option<f64>> {
    match coherence_scale(psi, direction, 1.0 / E) {
        Ok(scan) => Ok(Some(scan.crossing)),
        Err(SubplanckError::SaturationFailure(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Reports on a state in memory; `coherence` adds the 1/e scans, which
/// only apply to pure states.
pub fn state_report(
    state: &State,
    ctx: Option<&DynamicsContext>,
    coherence: bool,
) -> Result<StateReport> {
    let structure = structure_report(state, ctx)?;
    let (cx, cp) = match (coherence, state) {
        (true, State::Pure(psi)) => (
            scale_or_none(psi, &PhaseSpaceDirection::along_x())?,
            scale_or_none(psi, &PhaseSpaceDirection::along_p())?,
        ),
        _ => (None, None),
    };
    Ok(StateReport {
        structure,
        coherence_scale_x: cx,
        coherence_scale_p: cp,
        predicted_orthogonality_shift: orthogonality_shift(state)?,
    })
}

/// Loads a stored state file and reports on it, coherence scans included.
pub fn report_state_file(path: &Path) -> Result<StateReport> {
    state_report(&load_state_file(path)?, None, true)
}

/// Lyapunov estimate and the timescales derived from it.
#[derive(Debug, Clone, Serialize)]
pub struct TimescaleSection {
    pub lyapunov: f64,
    pub lyapunov_std_error: f64,
    pub report: TimescaleReport,
}

/// Landmarks of the decay scan: where |z| crosses 1/e, the first local
/// minimum, the strongest revival beyond it, and the mean magnitude over
/// the trailing half of the curve.
#[derive(Debug, Clone, Serialize)]
pub struct ScanSummary {
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossing_one_over_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_minimum: Option<(f64, f64)>,
    pub revival_peak: f64,
    pub tail_mean_abs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_crossing: Option<f64>,
}

fn crossing_at(points: &[ScanPoint], level: f64) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for pt in points {
        let v = pt.overlap().norm();
        if let Some((s0, v0)) = prev {
            if v0 > level && v <= level {
                let f = (v0 - level) / (v0 - v);
                return Some(s0 + f * (pt.magnitude - s0));
            }
        }
        prev = Some((pt.magnitude, v));
    }
    None
}

fn summarize_scan(points: &[ScanPoint], threshold: Option<f64>) -> ScanSummary {
    let analysis = analyze_decay(points);
    let s_max = points.last().map_or(0.0, |pt| pt.magnitude);
    let tail: Vec<f64> = points
        .iter()
        .filter(|pt| pt.magnitude > s_max / 2.0)
        .map(|pt| pt.overlap().norm())
        .collect();
    let tail_mean_abs = if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    ScanSummary {
        samples: points.len(),
        crossing_one_over_e: analysis.crossing,
        first_minimum: analysis.first_minimum,
        revival_peak: analysis.revival_peak,
        tail_mean_abs,
        threshold_crossing: threshold.and_then(|t| crossing_at(points, t)),
    }
}

/// Wigner artifact summary: extrema and, where the state carries a
/// checkerboard, its measured central tile area.
#[derive(Debug, Clone, Serialize)]
pub struct WignerSection {
    pub path: String,
    pub max_abs: f64,
    pub min_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_tile_area: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_tile_area: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SnapshotReport {
    pub time: f64,
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<StateReport>,
}

/// The aggregated JSON report of one run. Every number serializes as
/// shortest round-trip decimal, so reloading reproduces it exactly.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<StateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timescales: Option<TimescaleSection>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<SnapshotReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wigner: Option<WignerSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub kind: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SnapshotEntry {
    pub time: f64,
    pub path: String,
}

/// Every file a run emitted, with checksums, written last as
/// `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<SnapshotEntry>,
    pub artifacts: Vec<ArtifactEntry>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| SubplanckError::InvalidInput(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

struct ArtifactLog<'a> {
    out_dir: &'a Path,
    entries: Vec<ArtifactEntry>,
}

impl<'a> ArtifactLog<'a> {
    fn new(out_dir: &'a Path) -> Self {
        Self {
            out_dir,
            entries: Vec::new(),
        }
    }

    fn record(&mut self, name: &str, kind: &str) -> Result<()> {
        let sha256 = file_sha256(&self.out_dir.join(name))?;
        self.entries.push(ArtifactEntry {
            path: name.to_string(),
            kind: kind.to_string(),
            sha256,
        });
        Ok(())
    }
}

fn state_artifact(state: &State, out_dir: &Path, name_base: &str) -> Result<String> {
    match state {
        State::Pure(psi) => {
            let name = format!("{name_base}.psigrid");
            write_wavefunction(&out_dir.join(&name), psi)?;
            Ok(name)
        }
        State::Mixed(rho) => {
            let name = format!("{name_base}.rhogrid");
            write_density(&out_dir.join(&name), rho)?;
            Ok(name)
        }
    }
}

fn expected_tile_area(config: &Scenario, hbar: f64) -> Option<f64> {
    match &config.state {
        StateConfig::Compass(c) => {
            Some((TAU * hbar).powi(2) / (c.x_separation * c.p_separation))
        }
        _ => None,
    }
}

/// Runs a scenario end to end: builds the state, evolves and scans as
/// configured, writes all artifacts plus `report.json` into `out_dir`,
/// and finishes with `manifest.json`. The scan and the Wigner output act
/// on the evolved final state when dynamics are configured, otherwise on
/// the constructed state. Identical config and seed give identical bytes.
pub fn run_scenario(config: &Scenario, out_dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir)?;
    let grid = config.grid.build()?;
    let state = build_state(config, &grid)?;
    let mut log = ArtifactLog::new(out_dir);

    let state_name = state_artifact(&state, out_dir, "state")?;
    log.record(&state_name, "state")?;

    let ctx = match (&config.report, &config.dynamics) {
        (ReportConfig { timescales: true, .. }, Some(dyn_cfg)) => {
            let params = dyn_cfg.params()?;
            let est = lyapunov_over_seeds(&params, &SEA_SEEDS, 400.0, 1.0, 1.0 / 128.0)?;
            let (_, var_p) = state.momentum_moments();
            Some((params, est, var_p.sqrt()))
        }
        _ => None,
    };
    let dyn_ctx = ctx.as_ref().map(|(params, est, delta_p0)| DynamicsContext {
        lyapunov: est.exponent,
        delta_p0: *delta_p0,
        chi: params.shape_factor().unwrap_or(1.0),
    });

    let initial = if config.report.structure {
        Some(state_report(&state, dyn_ctx.as_ref(), config.report.coherence)?)
    } else {
        None
    };

    let timescale_section = match &ctx {
        Some((params, est, delta_p0)) => {
            let (_, var_x) = state.position_moments();
            let (_, var_p) = state.momentum_moments();
            let action = var_x.sqrt() * var_p.sqrt();
            Some(TimescaleSection {
                lyapunov: est.exponent,
                lyapunov_std_error: est.std_error,
                report: timescales(est.exponent, *delta_p0, params, action, grid.hbar())?,
            })
        }
        None => None,
    };

    let mut snapshot_entries = Vec::new();
    let mut snapshot_reports = Vec::new();
    let end_state = match &config.dynamics {
        Some(dyn_cfg) => {
            let psi = match &state {
                State::Pure(psi) => psi,
                State::Mixed(_) => {
                    return Err(SubplanckError::InvalidInput(
                        "dynamics needs a pure state source".into(),
                    ))
                }
            };
            let params = dyn_cfg.params()?;
            let trajectory = evolve_quantum(
                psi,
                &params,
                dyn_cfg.dt,
                dyn_cfg.end_time()?,
                &dyn_cfg.snapshots,
            )?;
            for snap in &trajectory.snapshots {
                let name = format!("snapshot_t{}.psigrid", snap.time);
                write_wavefunction(&out_dir.join(&name), &snap.state)?;
                log.record(&name, "snapshot")?;
                snapshot_entries.push(SnapshotEntry {
                    time: snap.time,
                    path: name.clone(),
                });
                let report = if config.report.structure {
                    Some(state_report(
                        &State::Pure(snap.state.clone()),
                        dyn_ctx.as_ref(),
                        config.report.coherence,
                    )?)
                } else {
                    None
                };
                snapshot_reports.push(SnapshotReport {
                    time: snap.time,
                    path: name,
                    report,
                });
            }
            let final_name = "final.psigrid";
            write_wavefunction(&out_dir.join(final_name), &trajectory.final_state)?;
            log.record(final_name, "final")?;
            State::Pure(trajectory.final_state)
        }
        None => state,
    };

    let wigner_section = if config.report.wigner {
        let w = match &end_state {
            State::Pure(psi) => wigner_of_psi(psi),
            State::Mixed(rho) => wigner_of_rho(rho),
        };
        let name = "wigner.wiggrid";
        write_wigner(&out_dir.join(name), &w)?;
        log.record(name, "wigner")?;
        Some(WignerSection {
            path: name.to_string(),
            max_abs: w.max_abs(),
            min_value: w.min_value(),
            measured_tile_area: checkerboard_tile_area(&w).ok(),
            expected_tile_area: expected_tile_area(config, grid.hbar()),
        })
    } else {
        None
    };

    let scan_summary = match &config.scan {
        Some(scan_cfg) => {
            let direction =
                PhaseSpaceDirection::new(scan_cfg.direction.ux, scan_cfg.direction.up)?;
            let points = decay_scan(&end_state, &direction, scan_cfg.max, scan_cfg.steps)?;
            let name = "decay.csv";
            write_decay_csv(&out_dir.join(name), &points)?;
            log.record(name, "decay")?;
            Some(summarize_scan(&points, scan_cfg.threshold))
        }
        None => None,
    };

    let report = ScenarioReport {
        scenario: config.name.clone(),
        seed: config.seed,
        initial,
        timescales: timescale_section,
        snapshots: snapshot_reports,
        wigner: wigner_section,
        scan: scan_summary,
    };
    write_json(&out_dir.join("report.json"), &report)?;
    log.record("report.json", "report")?;

    let manifest = Manifest {
        scenario: config.name.clone(),
        seed: config.seed,
        snapshots: snapshot_entries,
        artifacts: log.entries,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassicalSnapshotReport {
    pub time: f64,
    pub path: String,
    pub transverse_scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassicalReport {
    pub scenario: String,
    pub seed: u64,
    pub count: usize,
    pub snapshots: Vec<ClassicalSnapshotReport>,
}

fn write_ensemble_csv(path: &Path, ens: &ClassicalEnsemble) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,p")?;
    for (x, p) in ens.positions().iter().zip(ens.momenta()) {
        writeln!(w, "{x},{p}")?;
    }
    w.flush()?;
    Ok(())
}

/// Classical companion of a quantum run: evolves a Gaussian particle
/// patch matched to the configured packet through the same snapshot
/// times, writing one x,p CSV per time plus a filamentation report and a
/// manifest. The state source must be a single Gaussian.
pub fn run_classical(config: &Scenario, out_dir: &Path) -> Result<Manifest> {
    let dyn_cfg = config.dynamics.as_ref().ok_or_else(|| {
        SubplanckError::InvalidInput("classical run needs a dynamics section".into())
    })?;
    let packet = match &config.state {
        StateConfig::Gaussian(g) => *g,
        _ => {
            return Err(SubplanckError::InvalidInput(
                "classical run needs a gaussian state source".into(),
            ))
        }
    };
    std::fs::create_dir_all(out_dir)?;
    let grid = config.grid.build()?;
    let params = dyn_cfg.params()?;
    let count = dyn_cfg.classical_ensemble.unwrap_or(400);
    let shape = GaussianPacket::new(packet.x0, packet.p0, packet.xi);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ens = ClassicalEnsemble::gaussian_patch(
        (packet.x0, packet.p0),
        (shape.sigma_x(), shape.sigma_p(grid.hbar())),
        count,
        &mut rng,
    )?;

    let mut times = dyn_cfg.snapshots.clone();
    if times.is_empty() {
        times.push(dyn_cfg.end_time()?);
    }
    let mut log = ArtifactLog::new(out_dir);
    let mut reports = Vec::new();
    let mut t_now = 0.0;
    for &t in &times {
        if t < t_now {
            return Err(SubplanckError::InvalidInput(format!(
                "snapshot times must be non-decreasing, got {t} after {t_now}"
            )));
        }
        if t > t_now {
            ens = evolve_classical_span(&ens, &params, t_now, t, dyn_cfg.dt)?;
            t_now = t;
        }
        let name = format!("classical_t{t}.csv");
        write_ensemble_csv(&out_dir.join(&name), &ens)?;
        log.record(&name, "ensemble")?;
        reports.push(ClassicalSnapshotReport {
            time: t,
            path: name,
            transverse_scale: transverse_structure_scale(&ens, 8)?,
        });
    }

    let report = ClassicalReport {
        scenario: config.name.clone(),
        seed: config.seed,
        count,
        snapshots: reports,
    };
    write_json(&out_dir.join("classical_report.json"), &report)?;
    log.record("classical_report.json", "report")?;

    let manifest = Manifest {
        scenario: config.name.clone(),
        seed: config.seed,
        snapshots: Vec::new(),
        artifacts: log.entries,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Process exit code for an error: numeric blowups are distinguished from
/// config and file-content problems, which in turn differ from plain I/O
/// failures.
pub fn exit_code(err: &SubplanckError) -> u8 {
    match err {
        SubplanckError::Blowup { .. } => 3,
        SubplanckError::Io(_) => 1,
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_scenario() -> Scenario {
        parse_scenario(
            r#"{
                "name": "probe",
                "grid": {"n": 256, "extent": 16.0, "hbar": 0.16},
                "state": {"gaussian": {"x0": 0.5, "p0": -0.2, "xi": 0.4}},
                "report": {"structure": true, "coherence": true}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn config_parsing_is_strict() {
        let err = parse_scenario(r#"{"name": "x"}"#).unwrap_err();
        assert!(err.to_string().contains("missing field"), "{err}");

        let err = parse_scenario(
            r#"{
                "name": "x",
                "grid": {"n": 256, "extent": 16.0, "hbar": 0.16, "frobnicate": 1},
                "state": {"gaussian": {"x0": 0, "p0": 0, "xi": 0.4}}
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");

        let err = parse_scenario(
            r#"{
                "name": "x",
                "grid": {"n": 256, "extent": 16.0, "hbar": 0.16},
                "state": {"gaussian": {"x0": 0, "p0": 0, "xi": 0.4, "spin": 1}}
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");

        let err = parse_scenario(
            r#"{
                "name": "x",
                "grid": {"n": 256, "extent": 16.0, "hbar": 0.16},
                "state": {"hologram": {}}
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown variant"), "{err}");

        let line_hint = parse_scenario("{\n  \"name\": 3\n}").unwrap_err().to_string();
        assert!(line_hint.contains("line 2"), "{line_hint}");
    }

    #[test]
    fn exactly_one_state_source_is_representable() {
        let err = parse_scenario(
            r#"{
                "name": "x",
                "grid": {"n": 256, "extent": 16.0, "hbar": 0.16},
                "state": {
                    "gaussian": {"x0": 0, "p0": 0, "xi": 0.4},
                    "cat": {"x0": 2.0, "xi": 0.4}
                }
            }"#,
        )
        .unwrap_err();
        assert!(
            err.to_string().contains("expected value") || err.to_string().contains("one of"),
            "{err}"
        );
    }

    #[test]
    fn run_emits_manifest_with_valid_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = run_scenario(&gaussian_scenario(), dir.path()).unwrap();

        assert!(manifest.artifacts.iter().any(|a| a.path == "state.psigrid"));
        assert!(manifest.artifacts.iter().any(|a| a.path == "report.json"));
        for artifact in &manifest.artifacts {
            let on_disk = file_sha256(&dir.path().join(&artifact.path)).unwrap();
            assert_eq!(on_disk, artifact.sha256, "stale checksum for {}", artifact.path);
        }

        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        let structure = &report["initial"]["structure"];
        assert!(structure["action"].as_f64().unwrap() > 0.0);
        assert!(report["initial"]["coherence_scale_x"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn reruns_reproduce_identical_checksums() {
        let mut config = gaussian_scenario();
        config.scan = Some(ScanConfig {
            direction: DirectionConfig { ux: 0.0, up: 1.0 },
            max: 1.5,
            steps: 24,
            threshold: Some(0.5),
        });
        config.seed = 7;

        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let first = run_scenario(&config, dir_a.path()).unwrap();
        let second = run_scenario(&config, dir_b.path()).unwrap();
        let sums = |m: &Manifest| -> Vec<(String, String)> {
            m.artifacts
                .iter()
                .map(|a| (a.path.clone(), a.sha256.clone()))
                .collect()
        };
        assert_eq!(sums(&first), sums(&second));
    }

    #[test]
    fn sparse_builds_depend_only_on_seed() {
        let config = parse_scenario(
            r#"{
                "name": "sparse",
                "grid": {"n": 512, "extent": 24.0, "hbar": 0.16},
                "state": {"sparse": {"count": 6, "xi": 0.4, "x_half": 8.0, "p_half": 4.0, "min_separation": 6.0}},
                "seed": 11
            }"#,
        )
        .unwrap();
        let grid = config.grid.build().unwrap();
        let a = build_state(&config, &grid).unwrap();
        let b = build_state(&config, &grid).unwrap();
        match (&a, &b) {
            (State::Pure(pa), State::Pure(pb)) => {
                assert_eq!(pa.amp(), pb.amp());
            }
            _ => panic!("sparse config built a mixed state"),
        }

        let mut other = config.clone();
        other.seed = 12;
        let c = build_state(&other, &grid).unwrap();
        match (&a, &c) {
            (State::Pure(pa), State::Pure(pc)) => assert_ne!(pa.amp(), pc.amp()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn from_file_round_trips_through_a_run() {
        let dir = tempfile::tempdir().unwrap();
        let first = run_scenario(&gaussian_scenario(), dir.path()).unwrap();
        let state_path = dir.path().join(&first.artifacts[0].path);

        let follow_up = Scenario {
            name: "reload".into(),
            grid: GridConfig {
                n: 256,
                extent: 16.0,
                hbar: 0.16,
            },
            state: StateConfig::FromFile(FromFileConfig {
                path: state_path.clone(),
            }),
            dynamics: None,
            scan: None,
            report: ReportConfig {
                structure: true,
                ..Default::default()
            },
            seed: 0,
        };
        let dir2 = tempfile::tempdir().unwrap();
        let manifest = run_scenario(&follow_up, dir2.path()).unwrap();
        assert_eq!(manifest.artifacts[0].sha256, first.artifacts[0].sha256);

        let missing = Scenario {
            state: StateConfig::FromFile(FromFileConfig {
                path: dir.path().join("nope.psigrid"),
            }),
            ..follow_up
        };
        match run_scenario(&missing, dir2.path()) {
            Err(SubplanckError::InvalidInput(msg)) => {
                assert!(msg.contains("does not exist"), "{msg}");
            }
            other => panic!("missing file gave {other:?}"),
        }
    }

    #[test]
    fn mixed_state_cannot_be_evolved() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::centered(128, 16.0, 0.16).unwrap();
        let psi = make_gaussian(&GaussianPacket::new(0.0, 0.0, 0.4), &grid).unwrap();
        let rho = crate::grid::build_density(&[(1.0, &psi)]).unwrap();
        let rho_path = dir.path().join("mix.rhogrid");
        write_density(&rho_path, &rho).unwrap();

        let config = Scenario {
            name: "mixed".into(),
            grid: GridConfig {
                n: 128,
                extent: 16.0,
                hbar: 0.16,
            },
            state: StateConfig::FromFile(FromFileConfig { path: rho_path }),
            dynamics: Some(DynamicsConfig {
                mass: 1.0,
                kappa: 0.36,
                drive_amplitude: 3.0,
                harmonic_coeff: 0.01,
                dt: 0.0078125,
                snapshots: vec![1.0],
                t_final: None,
                classical_ensemble: None,
            }),
            scan: None,
            report: ReportConfig::default(),
            seed: 0,
        };
        match run_scenario(&config, dir.path()) {
            Err(SubplanckError::InvalidInput(msg)) => {
                assert!(msg.contains("pure state"), "{msg}");
            }
            other => panic!("mixed evolution gave {other:?}"),
        }
    }

    #[test]
    fn classical_run_writes_ensembles_and_scales() {
        let mut config = gaussian_scenario();
        config.dynamics = Some(DynamicsConfig {
            mass: 1.0,
            kappa: 0.36,
            drive_amplitude: 3.0,
            harmonic_coeff: 0.01,
            dt: 0.0078125,
            snapshots: vec![1.0, 2.0],
            t_final: None,
            classical_ensemble: Some(128),
        });
        let dir = tempfile::tempdir().unwrap();
        let manifest = run_classical(&config, dir.path()).unwrap();
        assert!(manifest
            .artifacts
            .iter()
            .any(|a| a.path == "classical_t1.csv"));
        assert!(manifest
            .artifacts
            .iter()
            .any(|a| a.path == "classical_t2.csv"));

        let text = std::fs::read_to_string(dir.path().join("classical_t1.csv")).unwrap();
        assert!(text.starts_with("x,p\n"));
        assert_eq!(text.lines().count(), 129);

        let report: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("classical_report.json")).unwrap(),
        )
        .unwrap();
        let scales = report["snapshots"].as_array().unwrap();
        assert_eq!(scales.len(), 2);
        for entry in scales {
            assert!(entry["transverse_scale"].as_f64().unwrap() > 0.0);
        }
    }

    #[test]
    fn exit_codes_separate_failure_classes() {
        let blowup = SubplanckError::Blowup {
            step: 3,
            time: 1.5,
            detail: "x".into(),
        };
        assert_eq!(exit_code(&blowup), 3);
        assert_eq!(
            exit_code(&SubplanckError::InvalidInput("x".into())),
            2
        );
        assert_eq!(
            exit_code(&SubplanckError::Format {
                offset: 0,
                detail: "x".into()
            }),
            2
        );
        let io = SubplanckError::Io(std::io::Error::new(std::io::ErrorKind::Other, "x"));
        assert_eq!(exit_code(&io), 1);
    }
}
