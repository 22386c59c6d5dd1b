//! Wigner distribution and phase-space structure measurements.
//!
//! W(x, p) = (2 pi hbar)^-1 integral dy exp(i p y / hbar)
//! psi(x - y/2) psi*(x + y/2), sampled on the grid's position axis and its
//! conjugate momentum axis. Chords are evaluated on a band-limited doubled
//! grid so half-integer offsets carry no phase bias. The same machinery
//! serves density matrices.
//!
//! The overlap identity |<psi|phi>|^2 = 2 pi hbar * integral W_psi W_phi
//! connects distributions back to amplitudes and is the backbone of the
//! suppression-factor cross-checks in the decoherence module.

use ndarray::{Array2, Axis};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::log_timescale;
use crate::error::{Result, SubplanckError};
use crate::grid::{
    displace, inner, plan_fft, refine_doubled, refine_doubled_2d, DensityMatrix, GridSpec,
    PhaseSpaceDirection, State, WaveFunction,
};

const TAU: f64 = std::f64::consts::TAU;

/// Real-valued Wigner samples; `values[[i, j]]` is W at position `x(i)`,
/// momentum `p(j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    n_x: usize,
    n_p: usize,
    x_min: f64,
    dx: f64,
    p_min: f64,
    dp: f64,
    hbar: f64,
    values: Array2<f64>,
}

impl WignerGrid {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        n_x: usize,
        n_p: usize,
        x_min: f64,
        dx: f64,
        p_min: f64,
        dp: f64,
        hbar: f64,
        values: Array2<f64>,
    ) -> Result<Self> {
        if values.dim() != (n_x, n_p) {
            return Err(SubplanckError::InvalidInput(format!(
                "wigner values shape {:?} does not match ({n_x}, {n_p})",
                values.dim()
            )));
        }
        if !(dx > 0.0 && dp > 0.0 && hbar > 0.0) {
            return Err(SubplanckError::InvalidInput(
                "wigner grid spacings and hbar must be positive".into(),
            ));
        }
        Ok(Self {
            n_x,
            n_p,
            x_min,
            dx,
            p_min,
            dp,
            hbar,
            values,
        })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn dp(&self) -> f64 {
        self.dp
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// integral W dx dp.
    pub fn total_mass(&self) -> f64 {
        self.values.sum() * self.dx * self.dp
    }

    /// 2 pi hbar * integral W^2 dx dp; equals Tr rho^2 for a faithful
    /// transform.
    pub fn purity(&self) -> f64 {
        TAU * self.hbar * self.values.iter().map(|v| v * v).sum::<f64>() * self.dx * self.dp
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Marginal over momentum: |psi(x)|^2 for pure states.
    pub fn position_marginal(&self) -> Vec<f64> {
        self.values
            .axis_iter(Axis(0))
            .map(|row| row.sum() * self.dp)
            .collect()
    }

    /// Marginal over position.
    pub fn momentum_marginal(&self) -> Vec<f64> {
        self.values
            .axis_iter(Axis(1))
            .map(|col| col.sum() * self.dx)
            .collect()
    }

    fn same_geometry(&self, other: &Self) -> bool {
        self.n_x == other.n_x
            && self.n_p == other.n_p
            && self.x_min == other.x_min
            && self.dx == other.dx
            && self.p_min == other.p_min
            && self.dp == other.dp
            && self.hbar == other.hbar
    }
}

/// Shared chord-transform core. `chord(i, m)` must return
/// a(x_i - y/2) b*(x_i + y/2) evaluated on the doubled grid, where
/// m is the signed chord index (y = m * dx).
fn wigner_rows_from_chords(
    grid: &GridSpec,
    chord: impl Fn(usize, i64) -> C64 + Sync,
) -> (Array2<f64>, f64) {
    let n = grid.n();
    let fft = plan_fft(n);
    let scale = grid.dx() / (TAU * grid.hbar());
    let results: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map_init(
            || {
                (
                    vec![C64::new(0.0, 0.0); n],
                    vec![C64::new(0.0, 0.0); fft.inv.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), i| {
                // chord index in FFT frequency layout, sign flip recenters
                // the conjugate axis on the monotone momentum grid
                for (m, slot) in buf.iter_mut().enumerate() {
                    let m_signed = if m < n / 2 {
                        m as i64
                    } else {
                        m as i64 - n as i64
                    };
                    let c = chord(i, m_signed);
                    *slot = if m % 2 == 0 { c } else { -c };
                }
                fft.inv.process_with_scratch(buf, scratch);
                let mut row = Vec::with_capacity(n);
                let mut imag: f64 = 0.0;
                for v in buf.iter() {
                    row.push(v.re * scale);
                    imag = imag.max(v.im.abs() * scale);
                }
                (row, imag)
            },
        )
        .collect();
    let mut values = Array2::zeros((n, n));
    let mut imag_residual: f64 = 0.0;
    for (i, (row, imag)) in results.into_iter().enumerate() {
        imag_residual = imag_residual.max(imag);
        for (j, v) in row.into_iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    (values, imag_residual)
}

fn wigner_grid_from(grid: &GridSpec, values: Array2<f64>) -> WignerGrid {
    WignerGrid {
        n_x: grid.n(),
        n_p: grid.n(),
        x_min: grid.x_min(),
        dx: grid.dx(),
        p_min: grid.p_min(),
        dp: grid.dp(),
        hbar: grid.hbar(),
        values,
    }
}

pub(crate) fn wigner_of_psi_with_residual(psi: &WaveFunction) -> (WignerGrid, f64) {
    let grid = psi.grid();
    let n = grid.n() as i64;
    let fine = refine_doubled(grid, psi.amp());
    let two_n = 2 * n;
    let (values, residual) = wigner_rows_from_chords(grid, |i, m| {
        let lo = (2 * i as i64 - m).rem_euclid(two_n) as usize;
        let hi = (2 * i as i64 + m).rem_euclid(two_n) as usize;
        fine[lo] * fine[hi].conj()
    });
    (wigner_grid_from(grid, values), residual)
}

/// Wigner distribution of a pure state. The imaginary part of the chord
/// transform is checked to be negligible and discarded.
///
/// The transform represents chords up to half the grid extent, so the
/// state's support diameter must stay below that in both position and
/// momentum; wider states alias their longest chords, which shows up in
/// the imaginary residual.
pub fn wigner_of_psi(psi: &WaveFunction) -> WignerGrid {
    let (w, residual) = wigner_of_psi_with_residual(psi);
    debug_assert!(residual < 1e-10, "wigner imaginary residual {residual:.3e}");
    w
}

/// Wigner distribution of a density matrix; reduces to [`wigner_of_psi`]
/// for pure projectors.
pub fn wigner_of_rho(rho: &DensityMatrix) -> WignerGrid {
    let grid = rho.grid();
    let n = grid.n() as i64;
    let fine = refine_doubled_2d(grid, rho.matrix());
    let two_n = 2 * n;
    let (values, residual) = wigner_rows_from_chords(grid, |i, m| {
        let lo = (2 * i as i64 - m).rem_euclid(two_n) as usize;
        let hi = (2 * i as i64 + m).rem_euclid(two_n) as usize;
        fine[[lo, hi]]
    });
    debug_assert!(residual < 1e-9, "wigner imaginary residual {residual:.3e}");
    wigner_grid_from(grid, values)
}

/// Overlap functional 2 pi hbar * sum W_a W_b dx dp. Equals |<a|b>|^2 for
/// pure states and Tr(rho_a rho_b) in general.
pub fn moyal_overlap(a: &WignerGrid, b: &WignerGrid) -> Result<f64> {
    if !a.same_geometry(b) {
        return Err(SubplanckError::GridMismatch(
            "wigner grids differ in geometry".into(),
        ));
    }
    let dot: f64 = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(u, v)| u * v)
        .sum();
    Ok(TAU * a.hbar * dot * a.dx * a.dp)
}

/// Interference-scale summary of a state.
///
/// `position_spread` (L) and `momentum_spread` (P) are standard deviations;
/// `action` A = L*P is the occupied phase-space area, `state_count`
/// A/(2 pi hbar) the number of independent states it holds, and
/// `sub_planck_action` hbar^2/A the area of the smallest interference
/// features. A superposition spanning A is first pushed toward
/// distinguishability by displacements of order `min_position_scale`
/// hbar/P or `min_momentum_scale` hbar/L; a checkerboard built from
/// separations L and P repeats on cells of `tile_area` (2 pi hbar)^2/A.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureReport {
    pub position_spread: f64,
    pub momentum_spread: f64,
    pub action: f64,
    pub sub_planck_action: f64,
    pub state_count: f64,
    pub min_position_scale: f64,
    pub min_momentum_scale: f64,
    pub tile_area: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_hbar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_recurrence: Option<f64>,
}

/// Inputs that extend a [`StructureReport`] with decoherence and recurrence
/// timescales.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsContext {
    /// Lyapunov exponent of the underlying classical flow.
    pub lyapunov: f64,
    /// Momentum spread of the initial packet.
    pub delta_p0: f64,
    /// Potential shape factor sqrt(V'/V'''); 1 for a cosine well.
    #[serde(default = "default_chi")]
    pub chi: f64,
}

fn default_chi() -> f64 {
    1.0
}

/// Computes the structure summary of a pure or mixed state. Fails if the
/// measured action falls below the uncertainty floor hbar/2, which signals
/// a non-physical input.
pub fn structure_report(state: &State, dynamics: Option<&DynamicsContext>) -> Result<StructureReport> {
    let hbar = state.grid().hbar();
    let (_, var_x) = state.position_moments();
    let (_, var_p) = state.momentum_moments();
    let l = var_x.sqrt();
    let p = var_p.sqrt();
    if !(l.is_finite() && p.is_finite()) || l < 1e-12 || p < 1e-12 {
        return Err(SubplanckError::InvalidState(format!(
            "degenerate spreads L = {l:.3e}, P = {p:.3e}"
        )));
    }
    let action = l * p;
    if action < hbar / 2.0 - 1e-9 {
        return Err(SubplanckError::InvalidState(format!(
            "action {action:.6e} below the uncertainty floor hbar/2 = {:.6e}",
            hbar / 2.0
        )));
    }
    let (t_hbar, t_recurrence) = match dynamics {
        Some(ctx) => (
            log_timescale(ctx.lyapunov, ctx.delta_p0 * ctx.chi / hbar),
            log_timescale(ctx.lyapunov, action / hbar),
        ),
        None => (None, None),
    };
    Ok(StructureReport {
        position_spread: l,
        momentum_spread: p,
        action,
        sub_planck_action: hbar * hbar / action,
        state_count: action / (TAU * hbar),
        min_position_scale: hbar / p,
        min_momentum_scale: hbar / l,
        tile_area: (TAU * hbar).powi(2) / action,
        t_hbar,
        t_recurrence,
    })
}

/// One sample of an overlap-decay scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub delta_x: f64,
    pub delta_p: f64,
    pub magnitude: f64,
    pub overlap_re: f64,
    pub overlap_im: f64,
}

impl ScanPoint {
    pub fn overlap(&self) -> C64 {
        C64::new(self.overlap_re, self.overlap_im)
    }
}

/// Decay curve of |<psi|D(delta)|psi>| along a ray, together with the
/// displacement magnitude at which it first crosses `threshold`.
#[derive(Debug, Clone)]
pub struct CoherenceScan {
    pub points: Vec<ScanPoint>,
    pub crossing: f64,
}

fn overlap_at(psi: &WaveFunction, direction: &PhaseSpaceDirection, s: f64) -> C64 {
    let d = direction.at(s);
    let shifted = displace(psi, &d);
    inner(psi, &shifted).expect("same grid")
}

/// Scans |<psi|D(s u)|psi>| outward along direction `u` until it falls to
/// `threshold`, then bisects the bracket down to min(dx, dp)/4. The scan is
/// limited to half the grid span; if the overlap never reaches the
/// threshold there, the state has no structure at the requested level and
/// an error reports the smallest overlap seen.
pub fn coherence_scale(
    psi: &WaveFunction,
    direction: &PhaseSpaceDirection,
    threshold: f64,
) -> Result<CoherenceScan> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SubplanckError::InvalidInput(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let grid = psi.grid();
    let resolution = grid.dx().min(grid.dp()) / 4.0;
    let step = grid.dx().min(grid.dp()) / 2.0;
    let s_max_x = if direction.ux().abs() > 0.0 {
        grid.extent() / 2.0 / direction.ux().abs()
    } else {
        f64::INFINITY
    };
    let s_max_p = if direction.up().abs() > 0.0 {
        grid.p_span() / 2.0 / direction.up().abs()
    } else {
        f64::INFINITY
    };
    let s_max = s_max_x.min(s_max_p);

    let mut points = Vec::new();
    let mut record = |s: f64, z: C64| {
        let d = direction.at(s);
        points.push(ScanPoint {
            delta_x: d.delta_x,
            delta_p: d.delta_p,
            magnitude: s,
            overlap_re: z.re,
            overlap_im: z.im,
        });
    };

    let mut s_prev = 0.0;
    let z0 = overlap_at(psi, direction, 0.0);
    record(0.0, z0);
    let mut crossed = None;
    let mut smallest = z0.norm();
    let mut s = step;
    while s <= s_max {
        let z = overlap_at(psi, direction, s);
        record(s, z);
        smallest = smallest.min(z.norm());
        if z.norm() <= threshold {
            crossed = Some((s_prev, s));
            break;
        }
        s_prev = s;
        s += step;
    }
    let (mut lo, mut hi) = crossed.ok_or_else(|| {
        SubplanckError::SaturationFailure(format!(
            "overlap stayed above {threshold} out to displacement {s_max:.4} (smallest {smallest:.4e})"
        ))
    })?;
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        let z = overlap_at(psi, direction, mid);
        if z.norm() <= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CoherenceScan {
        points,
        crossing: 0.5 * (lo + hi),
    })
}

/// Axis selector for one-dimensional Wigner slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    /// Slice along position at a fixed momentum.
    X,
    /// Slice along momentum at a fixed position.
    P,
}

fn nearest_index(min: f64, step: f64, count: usize, value: f64) -> usize {
    let raw = ((value - min) / step).round();
    raw.clamp(0.0, (count - 1) as f64) as usize
}

fn slice_of(w: &WignerGrid, axis: SliceAxis, at: f64) -> (Vec<f64>, f64, f64) {
    match axis {
        SliceAxis::X => {
            let j = nearest_index(w.p_min, w.dp, w.n_p, at);
            (
                w.values.index_axis(Axis(1), j).to_vec(),
                w.x_min,
                w.dx,
            )
        }
        SliceAxis::P => {
            let i = nearest_index(w.x_min, w.dx, w.n_x, at);
            (
                w.values.index_axis(Axis(0), i).to_vec(),
                w.p_min,
                w.dp,
            )
        }
    }
}

/// Fastest ripple (angular frequency) of a Wigner slice, or `None` when
/// the slice carries no spectral peak clear of its envelope.
///
/// A cat's interference ridge sliced along p at x = 0 oscillates at
/// separation/hbar; the compass checkerboard sliced along x at p = 0
/// oscillates at p_separation/hbar. A genuine ripple produces an isolated
/// spectral line, while mere packet placement modulates the spectrum with
/// beats that never dominate the band between half and three quarters of
/// their own frequency, so the returned peak must stand a factor of three
/// above that band (which stays clear of the line's own width).
pub fn ripple_frequency(w: &WignerGrid, axis: SliceAxis, at: f64) -> Option<f64> {
    let (slice, _, step) = slice_of(w, axis, at);
    let n = slice.len();
    let fft = plan_fft(n);
    let mut buf: Vec<C64> = slice.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft.fwd.process(&mut buf);
    let mags: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm()).collect();
    let floor = 1e-3 * mags.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut best: Option<usize> = None;
    for k in 2..n / 2 - 1 {
        if !(mags[k] >= mags[k - 1] && mags[k] >= mags[k + 1] && mags[k] > floor) {
            continue;
        }
        let lo = (k / 2).max(1);
        let hi = (3 * k / 4).max(lo + 1);
        let shoulder = mags[lo..hi].iter().fold(0.0f64, |m, &v| m.max(v));
        if mags[k] >= 3.0 * shoulder {
            best = Some(k);
        }
    }
    best.map(|k| TAU * k as f64 / (n as f64 * step))
}

fn zero_crossings(slice: &[f64], min: f64, step: f64, window: (f64, f64)) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..slice.len() - 1 {
        let x0 = min + i as f64 * step;
        if x0 < window.0 || x0 + step > window.1 {
            continue;
        }
        let (a, b) = (slice[i], slice[i + 1]);
        if a == 0.0 {
            out.push(x0);
        } else if a * b < 0.0 {
            out.push(x0 + step * a / (a - b));
        }
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Measures the fundamental cell of checkerboard interference around the
/// phase-space origin by zero-crossing spacing.
///
/// The slice along x is taken a quarter p-period away from the origin so
/// the pattern changes sign there (on the axes it only touches zero), and
/// vice versa. Because the slice snaps to the nearest grid line, it cuts
/// the oscillation at some fixed level rather than exactly through its
/// nodes; consecutive crossing spacings then alternate, but every other
/// crossing is still exactly one period apart, so the median of those
/// double spacings recovers the period at any cut level. The cell area is
/// the product of the two periods. Fails when no oscillation is detected
/// along either axis.
pub fn checkerboard_tile_area(w: &WignerGrid) -> Result<f64> {
    let freq_x = ripple_frequency(w, SliceAxis::X, 0.0).ok_or_else(|| {
        SubplanckError::InvalidState("no checkerboard oscillation along x".into())
    })?;
    let freq_p = ripple_frequency(w, SliceAxis::P, 0.0).ok_or_else(|| {
        SubplanckError::InvalidState("no checkerboard oscillation along p".into())
    })?;
    let period_x = TAU / freq_x;
    let period_p = TAU / freq_p;

    let measure = |axis: SliceAxis, offset: f64, period: f64| -> Result<f64> {
        let (slice, min, step) = slice_of(w, axis, offset);
        let window = (-1.3 * period, 1.3 * period);
        let crossings = zero_crossings(&slice, min, step, window);
        if crossings.len() < 4 {
            return Err(SubplanckError::InvalidState(format!(
                "only {} zero crossings in the central window",
                crossings.len()
            )));
        }
        let mut periods: Vec<f64> = crossings.windows(3).map(|w| w[2] - w[0]).collect();
        Ok(median(&mut periods))
    };

    let full_x = measure(SliceAxis::X, 0.25 * period_p, period_x)?;
    let full_p = measure(SliceAxis::P, 0.25 * period_x, period_p)?;
    Ok(full_x * full_p)
}
