//! Driven-pendulum dynamics, quantum and classical.
//!
//! The Hamiltonian is H = p^2/2m - kappa cos(x - l sin t) + a_h x^2/2: a
//! pendulum whose pivot oscillates, weakly confined by a harmonic term so
//! the chaotic diffusion stays on the grid. Quantum states advance by
//! Strang splitting with the potential evaluated at the midpoint time;
//! classical ensembles advance by the matching kick-drift-kick leapfrog.
//! A tangent-map integrator supplies Lyapunov exponents, and the
//! logarithmic timescale helpers convert them into the times at which
//! interference structure saturates or recurs.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SubplanckError};
use crate::grid::{plan_fft, FftPair, WaveFunction};
use num_complex::Complex64 as C64;

/// Exponents below this rate are reported as non-chaotic.
const CHAOTIC_RATE_FLOOR: f64 = 0.05;

/// Parameters of the driven, weakly confined pendulum.
///
/// `harmonic_coeff` is the curvature of the confining quadratic term,
/// written a_h to keep it apart from the sub-Planck action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrivenPendulumParams {
    pub mass: f64,
    pub kappa: f64,
    pub drive_amplitude: f64,
    pub harmonic_coeff: f64,
}

impl DrivenPendulumParams {
    pub fn new(mass: f64, kappa: f64, drive_amplitude: f64, harmonic_coeff: f64) -> Result<Self> {
        let all_finite = mass.is_finite()
            && kappa.is_finite()
            && drive_amplitude.is_finite()
            && harmonic_coeff.is_finite();
        if !all_finite || mass <= 0.0 || kappa < 0.0 {
            return Err(SubplanckError::InvalidInput(format!(
                "pendulum parameters must be finite with mass > 0 and kappa >= 0, \
                 got m = {mass}, kappa = {kappa}"
            )));
        }
        Ok(Self {
            mass,
            kappa,
            drive_amplitude,
            harmonic_coeff,
        })
    }

    /// The benchmark chaotic parameter set (m = 1, kappa = 0.36, l = 3,
    /// a_h = 0.01), which has a wide chaotic sea with Lyapunov exponent
    /// near 0.2 when hbar = 0.16.
    pub fn chaotic_benchmark() -> Self {
        Self {
            mass: 1.0,
            kappa: 0.36,
            drive_amplitude: 3.0,
            harmonic_coeff: 0.01,
        }
    }

    pub fn potential(&self, x: f64, t: f64) -> f64 {
        -self.kappa * (x - self.drive_amplitude * t.sin()).cos()
            + 0.5 * self.harmonic_coeff * x * x
    }

    pub fn force(&self, x: f64, t: f64) -> f64 {
        -self.kappa * (x - self.drive_amplitude * t.sin()).sin() - self.harmonic_coeff * x
    }

    /// Second spatial derivative of the potential, the restoring-rate
    /// field entering the tangent map.
    pub fn curvature(&self, x: f64, t: f64) -> f64 {
        self.kappa * (x - self.drive_amplitude * t.sin()).cos() + self.harmonic_coeff
    }

    /// sqrt(V'/V''') of the anharmonic part of the potential, the factor
    /// that converts a momentum spread into the scale at which the
    /// nonlinearity bends interference fringes. The cosine well gives
    /// exactly 1; with no cosine term there is no anharmonicity and no
    /// shape factor.
    pub fn shape_factor(&self) -> Option<f64> {
        if self.kappa > 0.0 {
            Some(1.0)
        } else {
            None
        }
    }
}

/// ln(ratio)/rate when that is a positive time, `None` when the ratio has
/// already fallen to one or below (the scale in question is reached from
/// the start) or the rate is not positive.
pub(crate) fn log_timescale(rate: f64, ratio: f64) -> Option<f64> {
    if rate > 0.0 && ratio > 1.0 {
        Some(ratio.ln() / rate)
    } else {
        None
    }
}

/// Saturation and recurrence times of interference structure under
/// chaotic stretching.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimescaleReport {
    /// Shape factor of the anharmonic potential part; `None` for a purely
    /// harmonic system, which never bends fringes.
    pub chi: Option<f64>,
    /// Time for the finest interference scale to shrink to hbar-size,
    /// ln(delta_p0 chi / hbar) / rate. `None` when undefined or when the
    /// initial spread is already at or below hbar.
    pub t_hbar: Option<f64>,
    /// Time for structure to saturate at the sub-Planck floor hbar^2/A,
    /// ln(A / hbar) / rate. `None` when A <= hbar from the start.
    pub t_recurrence: Option<f64>,
}

/// Combines a Lyapunov rate, an initial momentum spread, and an occupied
/// action into the timescales on which sub-Planck structure develops.
pub fn timescales(
    lyapunov: f64,
    delta_p0: f64,
    params: &DrivenPendulumParams,
    action: f64,
    hbar: f64,
) -> Result<TimescaleReport> {
    if !(lyapunov > 0.0 && delta_p0 > 0.0 && action > 0.0 && hbar > 0.0) {
        return Err(SubplanckError::InvalidInput(format!(
            "timescales need positive rate, spreads, action and hbar, got \
             rate = {lyapunov}, delta_p0 = {delta_p0}, A = {action}, hbar = {hbar}"
        )));
    }
    let chi = params.shape_factor();
    Ok(TimescaleReport {
        chi,
        t_hbar: chi.and_then(|c| log_timescale(lyapunov, delta_p0 * c / hbar)),
        t_recurrence: log_timescale(lyapunov, action / hbar),
    })
}

/// A labeled intermediate state of a quantum evolution.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub state: WaveFunction,
}

/// Result of [`evolve_quantum`]: the requested snapshots plus the final
/// state.
#[derive(Debug, Clone)]
pub struct QuantumTrajectory {
    pub snapshots: Vec<Snapshot>,
    pub final_state: WaveFunction,
    pub final_time: f64,
    pub steps: usize,
}

fn step_count(span: f64, dt: f64) -> Result<usize> {
    if dt == 0.0 || !dt.is_finite() || span == 0.0 {
        return Err(SubplanckError::InvalidInput(
            "evolution needs a nonzero finite dt and a nonzero time span".into(),
        ));
    }
    if span.signum() != dt.signum() {
        return Err(SubplanckError::InvalidInput(format!(
            "dt = {dt} does not advance toward the final time (span {span})"
        )));
    }
    let steps = (span / dt).round();
    if (steps * dt - span).abs() > 1e-9 * span.abs().max(1.0) || steps < 1.0 {
        return Err(SubplanckError::InvalidInput(format!(
            "dt = {dt} does not divide the time span {span}"
        )));
    }
    Ok(steps as usize)
}

fn snapshot_steps(
    times: &[f64],
    t_start: f64,
    dt: f64,
    steps: usize,
) -> Result<Vec<(usize, f64)>> {
    let mut indexed = Vec::with_capacity(times.len());
    for &t in times {
        let k = ((t - t_start) / dt).round();
        if (t_start + k * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(SubplanckError::InvalidInput(format!(
                "snapshot time {t} is not a whole number of steps from {t_start}"
            )));
        }
        if k < 0.0 || k as usize > steps {
            return Err(SubplanckError::InvalidInput(format!(
                "snapshot time {t} lies outside the evolution span"
            )));
        }
        indexed.push((k as usize, t));
    }
    indexed.sort_by_key(|&(k, _)| k);
    indexed.dedup_by_key(|&mut (k, _)| k);
    Ok(indexed)
}

struct StepContext {
    fft: FftPair,
    half_kinetic: Vec<C64>,
    inv_n: f64,
}

fn kinetic_phases(psi: &WaveFunction, params: &DrivenPendulumParams, dt: f64) -> StepContext {
    let grid = psi.grid();
    let n = grid.n();
    let fft = plan_fft(n);
    let hbar = grid.hbar();
    let half_kinetic: Vec<C64> = (0..n)
        .map(|k| {
            let p = grid.p_fft(k);
            C64::from_polar(1.0, -p * p * dt / (4.0 * params.mass * hbar))
        })
        .collect();
    StepContext {
        fft,
        half_kinetic,
        inv_n: 1.0 / n as f64,
    }
}

fn half_kinetic_step(amp: &mut [C64], ctx: &StepContext) {
    ctx.fft.fwd.process(amp);
    for (a, k) in amp.iter_mut().zip(&ctx.half_kinetic) {
        *a *= k * ctx.inv_n;
    }
    ctx.fft.inv.process(amp);
}

fn check_health(
    amp: &[C64],
    grid_dx: f64,
    n: usize,
    step: usize,
    time: f64,
) -> Result<()> {
    let margin = (n / 32).max(2);
    let mut norm_sq = 0.0;
    let mut edge = 0.0;
    for (i, a) in amp.iter().enumerate() {
        let w = a.norm_sqr();
        if !w.is_finite() {
            return Err(SubplanckError::Blowup {
                step,
                time,
                detail: format!("non-finite amplitude at grid index {i}"),
            });
        }
        norm_sq += w;
        if i < margin || i >= n - margin {
            edge += w;
        }
    }
    norm_sq *= grid_dx;
    edge *= grid_dx;
    if (norm_sq - 1.0).abs() > 1e-6 {
        return Err(SubplanckError::Blowup {
            step,
            time,
            detail: format!("norm drifted to {norm_sq:.9}"),
        });
    }
    if edge > 1e-6 {
        return Err(SubplanckError::Blowup {
            step,
            time,
            detail: format!("probability {edge:.3e} reached the grid edge"),
        });
    }
    Ok(())
}

/// Evolves a normalized state from `t_start` to `t_final` in steps of
/// `dt` (negative dt runs the clock backward). Snapshot times must land
/// on whole steps. Fails with a blowup error if the norm drifts, any
/// amplitude turns non-finite, or probability reaches the grid edge.
pub fn evolve_quantum_span(
    psi0: &WaveFunction,
    params: &DrivenPendulumParams,
    t_start: f64,
    t_final: f64,
    dt: f64,
    snapshot_times: &[f64],
) -> Result<QuantumTrajectory> {
    let steps = step_count(t_final - t_start, dt)?;
    let snaps = snapshot_steps(snapshot_times, t_start, dt, steps)?;
    let grid = *psi0.grid();
    let hbar = grid.hbar();
    let ctx = kinetic_phases(psi0, params, dt);
    let mut amp = psi0.amp().to_vec();
    let mut snapshots = Vec::with_capacity(snaps.len());
    let mut next_snap = snaps.iter().peekable();

    let capture = |step: usize,
                   amp: &[C64],
                   snapshots: &mut Vec<Snapshot>,
                   next: &mut std::iter::Peekable<std::slice::Iter<(usize, f64)>>| {
        while next.peek().is_some_and(|&&(k, _)| k == step) {
            let (_, t) = *next.next().unwrap();
            snapshots.push(Snapshot {
                time: t,
                state: WaveFunction::new(grid, amp.to_vec()).expect("finite amplitudes"),
            });
        }
    };

    capture(0, &amp, &mut snapshots, &mut next_snap);
    for step in 0..steps {
        let t_mid = t_start + (step as f64 + 0.5) * dt;
        half_kinetic_step(&mut amp, &ctx);
        for (i, a) in amp.iter_mut().enumerate() {
            let v = params.potential(grid.x(i), t_mid);
            *a *= C64::from_polar(1.0, -v * dt / hbar);
        }
        half_kinetic_step(&mut amp, &ctx);
        let done = step + 1;
        if done % 64 == 0 || done == steps {
            check_health(&amp, grid.dx(), grid.n(), done, t_start + done as f64 * dt)?;
        }
        capture(done, &amp, &mut snapshots, &mut next_snap);
    }
    let final_state = WaveFunction::new(grid, amp)?;
    Ok(QuantumTrajectory {
        snapshots,
        final_state,
        final_time: t_final,
        steps,
    })
}

/// [`evolve_quantum_span`] starting at t = 0, the reference drive phase.
pub fn evolve_quantum(
    psi0: &WaveFunction,
    params: &DrivenPendulumParams,
    dt: f64,
    t_final: f64,
    snapshot_times: &[f64],
) -> Result<QuantumTrajectory> {
    evolve_quantum_span(psi0, params, 0.0, t_final, dt, snapshot_times)
}

/// A cloud of classical phase-space points evolving under the same
/// Hamiltonian as the quantum states.
#[derive(Debug, Clone)]
pub struct ClassicalEnsemble {
    x: Vec<f64>,
    p: Vec<f64>,
}

impl ClassicalEnsemble {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(SubplanckError::InvalidInput(
                "ensemble needs at least one particle".into(),
            ));
        }
        if points.iter().any(|(x, p)| !(x.is_finite() && p.is_finite())) {
            return Err(SubplanckError::InvalidInput(
                "ensemble coordinates must be finite".into(),
            ));
        }
        let (x, p) = points.into_iter().unzip();
        Ok(Self { x, p })
    }

    /// Samples `count` particles from an uncorrelated Gaussian patch.
    pub fn gaussian_patch(
        center: (f64, f64),
        sigma: (f64, f64),
        count: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(sigma.0 > 0.0 && sigma.1 > 0.0) {
            return Err(SubplanckError::InvalidInput(
                "patch spreads must be positive".into(),
            ));
        }
        let nx = Normal::new(center.0, sigma.0)
            .map_err(|e| SubplanckError::InvalidInput(e.to_string()))?;
        let np = Normal::new(center.1, sigma.1)
            .map_err(|e| SubplanckError::InvalidInput(e.to_string()))?;
        let points = (0..count)
            .map(|_| (nx.sample(rng), np.sample(rng)))
            .collect();
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.x
    }

    pub fn momenta(&self) -> &[f64] {
        &self.p
    }

    pub fn mean(&self) -> (f64, f64) {
        let n = self.len() as f64;
        (
            self.x.iter().sum::<f64>() / n,
            self.p.iter().sum::<f64>() / n,
        )
    }

    pub fn energy(&self, params: &DrivenPendulumParams, t: f64) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.p)
            .map(|(&x, &p)| p * p / (2.0 * params.mass) + params.potential(x, t))
            .collect()
    }
}

fn leapfrog_particle(
    mut x: f64,
    mut p: f64,
    params: &DrivenPendulumParams,
    t_start: f64,
    dt: f64,
    steps: usize,
) -> std::result::Result<(f64, f64), usize> {
    let m = params.mass;
    for step in 0..steps {
        let t = t_start + step as f64 * dt;
        let p_half = p + 0.5 * dt * params.force(x, t);
        x += dt * p_half / m;
        p = p_half + 0.5 * dt * params.force(x, t + dt);
        if !(x.is_finite() && p.is_finite()) {
            return Err(step + 1);
        }
    }
    Ok((x, p))
}

/// Kick-drift-kick leapfrog for every particle from `t_start` to
/// `t_final`. Symplectic for the frozen-time force and second-order
/// accurate for the driven one.
pub fn evolve_classical_span(
    ens: &ClassicalEnsemble,
    params: &DrivenPendulumParams,
    t_start: f64,
    t_final: f64,
    dt: f64,
) -> Result<ClassicalEnsemble> {
    let steps = step_count(t_final - t_start, dt)?;
    let moved: Vec<std::result::Result<(f64, f64), usize>> = ens
        .x
        .par_iter()
        .zip(ens.p.par_iter())
        .map(|(&x, &p)| leapfrog_particle(x, p, params, t_start, dt, steps))
        .collect();
    let mut x = Vec::with_capacity(ens.len());
    let mut p = Vec::with_capacity(ens.len());
    let mut first_bad: Option<usize> = None;
    for r in moved {
        match r {
            Ok((xi, pi)) => {
                x.push(xi);
                p.push(pi);
            }
            Err(step) => first_bad = Some(first_bad.map_or(step, |s| s.min(step))),
        }
    }
    if let Some(step) = first_bad {
        return Err(SubplanckError::Blowup {
            step,
            time: t_start + step as f64 * dt,
            detail: "classical trajectory left the finite range".into(),
        });
    }
    Ok(ClassicalEnsemble { x, p })
}

/// [`evolve_classical_span`] starting at t = 0.
pub fn evolve_classical(
    ens: &ClassicalEnsemble,
    params: &DrivenPendulumParams,
    dt: f64,
    t_final: f64,
) -> Result<ClassicalEnsemble> {
    evolve_classical_span(ens, params, 0.0, t_final, dt)
}

/// One leapfrog step together with its exact tangent map, a product of
/// unit-determinant shears.
pub(crate) fn tangent_step(
    params: &DrivenPendulumParams,
    x: f64,
    p: f64,
    t: f64,
    dt: f64,
) -> ((f64, f64), [[f64; 2]; 2]) {
    let m = params.mass;
    let c0 = params.curvature(x, t);
    let p_half = p + 0.5 * dt * params.force(x, t);
    let x1 = x + dt * p_half / m;
    let c1 = params.curvature(x1, t + dt);
    let p1 = p_half + 0.5 * dt * params.force(x1, t + dt);

    // (kick c1) * (drift) * (kick c0), each shear has determinant 1
    let a = 1.0 - 0.5 * dt * dt * c0 / m;
    let b = dt / m;
    let c = -0.5 * dt * (c0 + c1) + 0.25 * dt * dt * dt * c0 * c1 / m;
    let d = 1.0 - 0.5 * dt * dt * c1 / m;
    ((x1, p1), [[a, b], [c, d]])
}

/// Lyapunov rate of one trajectory, with a flag marking whether it
/// clears the chaos floor.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeedRate {
    pub seed: (f64, f64),
    pub exponent: f64,
    pub chaotic: bool,
}

/// Average of [`lyapunov`] rates over several seed points with their
/// run-to-run standard error.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovEstimate {
    pub exponent: f64,
    pub std_error: f64,
    pub rates: Vec<SeedRate>,
}

/// Tangent-map Lyapunov exponent along the trajectory of `seed`. The
/// tangent vector is renormalized every `renorm_interval` to keep its
/// growth in range; the exponent is the mean log growth per unit time.
pub fn lyapunov(
    params: &DrivenPendulumParams,
    seed: (f64, f64),
    t_total: f64,
    renorm_interval: f64,
    dt: f64,
) -> Result<SeedRate> {
    if !(t_total > 0.0 && renorm_interval > 0.0 && dt > 0.0) {
        return Err(SubplanckError::InvalidInput(
            "lyapunov needs positive t_total, renorm_interval and dt".into(),
        ));
    }
    if t_total < 10.0 * renorm_interval {
        return Err(SubplanckError::InvalidInput(
            "t_total must cover many renormalization intervals".into(),
        ));
    }
    let steps_per_interval = step_count(renorm_interval, dt)?;
    let intervals = (t_total / renorm_interval).floor() as usize;
    let (mut x, mut p) = seed;
    let (mut vx, mut vp) = (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);
    let mut log_sum = 0.0;
    let mut t = 0.0;
    for _ in 0..intervals {
        for _ in 0..steps_per_interval {
            let ((x1, p1), j) = tangent_step(params, x, p, t, dt);
            let (wx, wp) = (j[0][0] * vx + j[0][1] * vp, j[1][0] * vx + j[1][1] * vp);
            x = x1;
            p = p1;
            vx = wx;
            vp = wp;
            t += dt;
            if !(x.is_finite() && p.is_finite() && vx.is_finite()) {
                return Err(SubplanckError::Blowup {
                    step: (t / dt) as usize,
                    time: t,
                    detail: "tangent trajectory left the finite range".into(),
                });
            }
        }
        let scale = vx.hypot(vp);
        log_sum += scale.ln();
        vx /= scale;
        vp /= scale;
    }
    let exponent = log_sum / (intervals as f64 * renorm_interval);
    Ok(SeedRate {
        seed,
        exponent,
        chaotic: exponent > CHAOTIC_RATE_FLOOR,
    })
}

/// Runs [`lyapunov`] at each seed and aggregates mean and standard error.
pub fn lyapunov_over_seeds(
    params: &DrivenPendulumParams,
    seeds: &[(f64, f64)],
    t_total: f64,
    renorm_interval: f64,
    dt: f64,
) -> Result<LyapunovEstimate> {
    if seeds.is_empty() {
        return Err(SubplanckError::InvalidInput(
            "need at least one seed point".into(),
        ));
    }
    let rates: Vec<SeedRate> = seeds
        .par_iter()
        .map(|&s| lyapunov(params, s, t_total, renorm_interval, dt))
        .collect::<Result<_>>()?;
    let k = rates.len() as f64;
    let mean = rates.iter().map(|r| r.exponent).sum::<f64>() / k;
    let std_error = if rates.len() > 1 {
        let sample_var = rates
            .iter()
            .map(|r| (r.exponent - mean).powi(2))
            .sum::<f64>()
            / (k - 1.0);
        (sample_var / k).sqrt()
    } else {
        0.0
    };
    Ok(LyapunovEstimate {
        exponent: mean,
        std_error,
        rates,
    })
}

/// Smallest transverse structure scale of a filamented ensemble: for each
/// particle, the component of the offset to its nearest neighbor
/// perpendicular to the local filament direction (principal axis of the
/// `neighbors` nearest points); the 10th percentile over particles is
/// reported.
pub fn transverse_structure_scale(ens: &ClassicalEnsemble, neighbors: usize) -> Result<f64> {
    let n = ens.len();
    if neighbors < 2 || n < neighbors + 1 {
        return Err(SubplanckError::InvalidInput(format!(
            "need at least {} particles for {neighbors} neighbors",
            neighbors + 1
        )));
    }
    let scales: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (xi, pi) = (ens.x[i], ens.p[i]);
            let mut nearest: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let dx = ens.x[j] - xi;
                    let dp = ens.p[j] - pi;
                    (dx * dx + dp * dp, j)
                })
                .collect();
            nearest.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            nearest.truncate(neighbors);
            let (mut sxx, mut sxp, mut spp) = (0.0, 0.0, 0.0);
            for &(_, j) in &nearest {
                let dx = ens.x[j] - xi;
                let dp = ens.p[j] - pi;
                sxx += dx * dx;
                sxp += dx * dp;
                spp += dp * dp;
            }
            // principal axis of the 2x2 scatter matrix
            let half_trace = 0.5 * (sxx + spp);
            let det = sxx * spp - sxp * sxp;
            let lead = half_trace + (half_trace * half_trace - det).max(0.0).sqrt();
            let (ex, ep) = if sxp.abs() > 1e-300 {
                let norm = (lead - spp).hypot(sxp);
                ((lead - spp) / norm, sxp / norm)
            } else if sxx >= spp {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            };
            let (_, j0) = nearest[0];
            let dx = ens.x[j0] - xi;
            let dp = ens.p[j0] - pi;
            let along = dx * ex + dp * ep;
            (dx - along * ex).hypot(dp - along * ep)
        })
        .collect();
    let mut scales = scales;
    scales.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(scales[n / 10])
}
