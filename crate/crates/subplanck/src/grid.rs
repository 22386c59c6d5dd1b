//! Periodic position grid and the states that live on it.
//!
//! Positions are x_i = x_min + i*dx for i in 0..n with n a power of two.
//! The conjugate momentum grid has spacing dp = 2*pi*hbar/(n*dx) and spans
//! [-pi*hbar/dx, pi*hbar/dx). Transforms between the two representations
//! are unitary: sum |psi|^2 dx = sum |psi_tilde|^2 dp to rounding.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SubplanckError};

/// Uniform periodic position grid with an associated value of hbar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    n: usize,
    x_min: f64,
    dx: f64,
    hbar: f64,
}

impl GridSpec {
    /// Validates and builds a grid. `n` must be a power of two, at least 16;
    /// `dx` and `hbar` must be positive and finite.
    pub fn new(n: usize, x_min: f64, dx: f64, hbar: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(SubplanckError::InvalidInput(format!(
                "grid size must be a power of two >= 16, got {n}"
            )));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(SubplanckError::InvalidInput(format!(
                "grid spacing must be positive and finite, got {dx}"
            )));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(SubplanckError::InvalidInput(format!(
                "hbar must be positive and finite, got {hbar}"
            )));
        }
        if !x_min.is_finite() {
            return Err(SubplanckError::InvalidInput(format!(
                "x_min must be finite, got {x_min}"
            )));
        }
        Ok(Self { n, x_min, dx, hbar })
    }

    /// Grid centered on x = 0 with total extent `extent`.
    pub fn centered(n: usize, extent: f64, hbar: f64) -> Result<Self> {
        let dx = extent / n as f64;
        Self::new(n, -extent / 2.0, dx, hbar)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Position of sample `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    /// Momentum spacing 2*pi*hbar/(n*dx).
    pub fn dp(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.hbar / (self.n as f64 * self.dx)
    }

    /// Lowest momentum sample, -pi*hbar/dx.
    pub fn p_min(&self) -> f64 {
        -(self.n as f64 / 2.0) * self.dp()
    }

    /// Momentum of sample `j` in monotonically increasing order.
    pub fn p(&self, j: usize) -> f64 {
        self.p_min() + j as f64 * self.dp()
    }

    /// Total position extent n*dx.
    pub fn extent(&self) -> f64 {
        self.n as f64 * self.dx
    }

    /// Total momentum span n*dp = 2*pi*hbar/dx.
    pub fn p_span(&self) -> f64 {
        self.n as f64 * self.dp()
    }

    /// Momentum associated with raw FFT bin `k` (negative frequencies in the
    /// upper half).
    pub(crate) fn p_fft(&self, k: usize) -> f64 {
        let k = if k < self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        };
        k as f64 * self.dp()
    }

    fn require_same(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self != other {
            return Err(SubplanckError::GridMismatch(format!(
                "{what}: {self:?} vs {other:?}"
            )));
        }
        Ok(())
    }
}

/// Phase-space displacement (delta_x, delta_p).
///
/// Applied to a wavefunction it acts as the symmetric-ordered shift
/// psi'(x) = exp(i*delta_p*(x - delta_x/2)/hbar) * psi(x - delta_x),
/// which moves the state by delta_x in position and delta_p in momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub delta_x: f64,
    pub delta_p: f64,
}

impl Displacement {
    pub fn new(delta_x: f64, delta_p: f64) -> Self {
        Self { delta_x, delta_p }
    }

    /// Euclidean magnitude of the raw components.
    pub fn magnitude(&self) -> f64 {
        self.delta_x.hypot(self.delta_p)
    }

    pub fn negate(&self) -> Self {
        Self::new(-self.delta_x, -self.delta_p)
    }

    /// True when the shift exceeds half the grid extent in either coordinate,
    /// so applying it wraps support around the periodic boundary.
    pub fn wraps(&self, grid: &GridSpec) -> bool {
        self.delta_x.abs() >= grid.extent() / 2.0 || self.delta_p.abs() >= grid.p_span() / 2.0
    }
}

/// Normalized direction in the (x, p) plane used for scans along a ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceDirection {
    ux: f64,
    up: f64,
}

impl PhaseSpaceDirection {
    pub fn new(ux: f64, up: f64) -> Result<Self> {
        let norm = ux.hypot(up);
        if !norm.is_finite() || norm == 0.0 {
            return Err(SubplanckError::InvalidInput(
                "direction must have a nonzero finite magnitude".into(),
            ));
        }
        Ok(Self {
            ux: ux / norm,
            up: up / norm,
        })
    }

    pub fn along_x() -> Self {
        Self { ux: 1.0, up: 0.0 }
    }

    pub fn along_p() -> Self {
        Self { ux: 0.0, up: 1.0 }
    }

    pub fn ux(&self) -> f64 {
        self.ux
    }

    pub fn up(&self) -> f64 {
        self.up
    }

    /// Displacement at signed magnitude `s` along this direction.
    pub fn at(&self, s: f64) -> Displacement {
        Displacement::new(s * self.ux, s * self.up)
    }
}

/// Complex amplitudes on a [`GridSpec`], normalized so sum |psi|^2 dx = 1
/// when produced by the state constructors.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: GridSpec,
    amp: Vec<C64>,
}

impl WaveFunction {
    /// Wraps raw amplitudes. Fails if the length does not match the grid or
    /// any entry is non-finite.
    pub fn new(grid: GridSpec, amp: Vec<C64>) -> Result<Self> {
        if amp.len() != grid.n() {
            return Err(SubplanckError::InvalidInput(format!(
                "amplitude length {} does not match grid size {}",
                amp.len(),
                grid.n()
            )));
        }
        if amp.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(SubplanckError::InvalidState(
                "non-finite amplitude".into(),
            ));
        }
        Ok(Self { grid, amp })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn amp(&self) -> &[C64] {
        &self.amp
    }

    pub fn norm_sq(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Rescales to unit norm. Fails on a numerically zero state.
    pub fn normalized(mut self) -> Result<Self> {
        let norm = self.norm();
        if !(norm.is_finite() && norm > 1e-300) {
            return Err(SubplanckError::InvalidState(format!(
                "cannot normalize state with norm {norm}"
            )));
        }
        for a in &mut self.amp {
            *a /= norm;
        }
        Ok(self)
    }

    /// Mean and variance of position.
    pub fn position_moments(&self) -> (f64, f64) {
        let dx = self.grid.dx();
        let mut mass = 0.0;
        let mut mean = 0.0;
        for (i, a) in self.amp.iter().enumerate() {
            let w = a.norm_sqr() * dx;
            mass += w;
            mean += w * self.grid.x(i);
        }
        mean /= mass;
        let mut var = 0.0;
        for (i, a) in self.amp.iter().enumerate() {
            let d = self.grid.x(i) - mean;
            var += a.norm_sqr() * dx * d * d;
        }
        (mean, var / mass)
    }

    /// Mean and variance of momentum, computed in the momentum
    /// representation.
    pub fn momentum_moments(&self) -> (f64, f64) {
        let tilde = to_momentum(self);
        let dp = self.grid.dp();
        let mut mass = 0.0;
        let mut mean = 0.0;
        for (j, a) in tilde.iter().enumerate() {
            let w = a.norm_sqr() * dp;
            mass += w;
            mean += w * self.grid.p(j);
        }
        mean /= mass;
        let mut var = 0.0;
        for (j, a) in tilde.iter().enumerate() {
            let d = self.grid.p(j) - mean;
            var += a.norm_sqr() * dp * d * d;
        }
        (mean, var / mass)
    }
}

/// L2 inner product <a|b> = sum conj(a_i) b_i dx. Both states must share the
/// same grid.
pub fn inner(a: &WaveFunction, b: &WaveFunction) -> Result<C64> {
    a.grid.require_same(&b.grid, "inner product operands")?;
    let mut acc = C64::new(0.0, 0.0);
    for (x, y) in a.amp.iter().zip(&b.amp) {
        acc += x.conj() * y;
    }
    Ok(acc * a.grid.dx())
}

pub(crate) struct FftPair {
    pub fwd: Arc<dyn Fft<f64>>,
    pub inv: Arc<dyn Fft<f64>>,
}

pub(crate) fn plan_fft(n: usize) -> FftPair {
    let mut planner = FftPlanner::new();
    FftPair {
        fwd: planner.plan_fft_forward(n),
        inv: planner.plan_fft_inverse(n),
    }
}

/// Momentum-representation amplitudes ordered by increasing momentum
/// (`grid.p(j)` for sample j). Unitary: sum |out|^2 dp = sum |psi|^2 dx.
pub fn to_momentum(psi: &WaveFunction) -> Vec<C64> {
    let grid = &psi.grid;
    let n = grid.n();
    let fft = plan_fft(n);
    let mut buf: Vec<C64> = psi
        .amp
        .iter()
        .enumerate()
        .map(|(i, a)| if i % 2 == 0 { *a } else { -*a })
        .collect();
    fft.fwd.process(&mut buf);
    let scale = grid.dx() / (2.0 * std::f64::consts::PI * grid.hbar()).sqrt();
    let x_min = grid.x_min();
    (0..n)
        .map(|j| {
            let phase = -grid.p(j) * x_min / grid.hbar();
            buf[j] * C64::from_polar(scale, phase)
        })
        .collect()
}

/// Inverse of [`to_momentum`].
pub fn from_momentum(grid: &GridSpec, tilde: &[C64]) -> Result<WaveFunction> {
    if tilde.len() != grid.n() {
        return Err(SubplanckError::InvalidInput(format!(
            "momentum amplitude length {} does not match grid size {}",
            tilde.len(),
            grid.n()
        )));
    }
    let n = grid.n();
    let fft = plan_fft(n);
    let x_min = grid.x_min();
    let mut buf: Vec<C64> = (0..n)
        .map(|j| {
            let phase = grid.p(j) * x_min / grid.hbar();
            tilde[j] * C64::from_polar(1.0, phase)
        })
        .collect();
    fft.inv.process(&mut buf);
    let scale = grid.dp() / (2.0 * std::f64::consts::PI * grid.hbar()).sqrt();
    let amp = buf
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            a * sign * scale
        })
        .collect();
    WaveFunction::new(*grid, amp)
}

/// Applies a diagonal-in-momentum multiplier to raw amplitudes in place.
/// `f` receives the momentum of each FFT bin.
pub(crate) fn apply_momentum_multiplier(
    grid: &GridSpec,
    amp: &mut [C64],
    fft: &FftPair,
    f: impl Fn(f64) -> C64,
) {
    fft.fwd.process(amp);
    let n = grid.n() as f64;
    for (k, a) in amp.iter_mut().enumerate() {
        *a *= f(grid.p_fft(k)) / n;
    }
    fft.inv.process(amp);
}

pub(crate) fn displace_amp(grid: &GridSpec, amp: &mut [C64], d: &Displacement, fft: &FftPair) {
    let hbar = grid.hbar();
    if d.delta_x != 0.0 {
        apply_momentum_multiplier(grid, amp, fft, |p| {
            C64::from_polar(1.0, -p * d.delta_x / hbar)
        });
    }
    if d.delta_p != 0.0 {
        for (i, a) in amp.iter_mut().enumerate() {
            let phase = d.delta_p * (grid.x(i) - d.delta_x / 2.0) / hbar;
            *a *= C64::from_polar(1.0, phase);
        }
    }
}

/// Displaced state psi'(x) = exp(i*delta_p*(x - delta_x/2)/hbar) * psi(x - delta_x).
/// The position shift is carried out spectrally, so off-lattice shifts are
/// exact for band-limited states. Norm is preserved to rounding.
pub fn displace(psi: &WaveFunction, d: &Displacement) -> WaveFunction {
    displace_checked(psi, d).0
}

/// Like [`displace`], and also reports whether the shift exceeded half the
/// grid span in either coordinate, in which case support has wrapped around
/// the periodic boundary.
pub fn displace_checked(psi: &WaveFunction, d: &Displacement) -> (WaveFunction, bool) {
    let mut amp = psi.amp.clone();
    let fft = plan_fft(psi.grid.n());
    displace_amp(&psi.grid, &mut amp, d, &fft);
    (
        WaveFunction {
            grid: psi.grid,
            amp,
        },
        d.wraps(&psi.grid),
    )
}

/// Density matrix rho(x, x') on a grid; entry [i, j] is rho(x_i, x_j).
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    grid: GridSpec,
    rho: Array2<C64>,
}

impl DensityMatrix {
    pub fn new(grid: GridSpec, rho: Array2<C64>) -> Result<Self> {
        if rho.nrows() != grid.n() || rho.ncols() != grid.n() {
            return Err(SubplanckError::InvalidInput(format!(
                "density matrix shape {:?} does not match grid size {}",
                rho.dim(),
                grid.n()
            )));
        }
        Ok(Self { grid, rho })
    }

    pub fn from_pure(psi: &WaveFunction) -> Self {
        let n = psi.grid.n();
        let rho = Array2::from_shape_fn((n, n), |(i, j)| psi.amp[i] * psi.amp[j].conj());
        Self {
            grid: psi.grid,
            rho,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.rho
    }

    /// Tr rho = sum rho_ii dx.
    pub fn trace(&self) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.grid.n() {
            acc += self.rho[[i, i]];
        }
        acc * self.grid.dx()
    }

    /// Tr rho^2 = sum |rho_ij|^2 dx^2 for Hermitian rho; 1 for pure states.
    pub fn purity(&self) -> f64 {
        let dx = self.grid.dx();
        self.rho.iter().map(|r| r.norm_sqr()).sum::<f64>() * dx * dx
    }

    /// Largest |rho_ij - conj(rho_ji)|.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.grid.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.rho[[i, j]] - self.rho[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// Position probability density rho(x_i, x_i).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.grid.n()).map(|i| self.rho[[i, i]].re).collect()
    }

    /// Checks Hermiticity (within 1e-10), unit trace (within 1e-8), and
    /// nonnegative diagonal (within -1e-10).
    pub fn validate(&self) -> Result<()> {
        let defect = self.hermiticity_defect();
        if defect > 1e-10 {
            return Err(SubplanckError::InvalidState(format!(
                "density matrix Hermiticity defect {defect:.3e}"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-10 {
            return Err(SubplanckError::InvalidState(format!(
                "density matrix trace {tr} is not 1"
            )));
        }
        if self.diagonal().iter().any(|&d| d < -1e-10) {
            return Err(SubplanckError::InvalidState(
                "density matrix has a negative diagonal entry".into(),
            ));
        }
        Ok(())
    }

    /// Momentum-representation matrix U rho U^dagger, with both indices
    /// ordered by increasing momentum.
    pub fn momentum_rep(&self) -> Array2<C64> {
        let n = self.grid.n();
        let mut out = Array2::from_elem((n, n), C64::new(0.0, 0.0));
        // columns: transform the first index like a ket
        for j in 0..n {
            let col = WaveFunction {
                grid: self.grid,
                amp: self.rho.column(j).to_vec(),
            };
            let tilde = to_momentum(&col);
            for i in 0..n {
                out[[i, j]] = tilde[i];
            }
        }
        // rows: transform the second index like a bra
        for i in 0..n {
            let row = WaveFunction {
                grid: self.grid,
                amp: out.row(i).iter().map(|a| a.conj()).collect(),
            };
            let tilde = to_momentum(&row);
            for j in 0..n {
                out[[i, j]] = tilde[j].conj();
            }
        }
        out
    }

    /// Mean and variance of position from the diagonal.
    pub fn position_moments(&self) -> (f64, f64) {
        moments_from_density(&self.diagonal(), |i| self.grid.x(i), self.grid.dx())
    }

    /// Mean and variance of momentum from the momentum-representation
    /// diagonal.
    pub fn momentum_moments(&self) -> (f64, f64) {
        let tilde = self.momentum_rep();
        let diag: Vec<f64> = (0..self.grid.n()).map(|j| tilde[[j, j]].re).collect();
        moments_from_density(&diag, |j| self.grid.p(j), self.grid.dp())
    }
}

fn moments_from_density(density: &[f64], coord: impl Fn(usize) -> f64, step: f64) -> (f64, f64) {
    let mut mass = 0.0;
    let mut mean = 0.0;
    for (i, &w) in density.iter().enumerate() {
        mass += w * step;
        mean += w * step * coord(i);
    }
    mean /= mass;
    let mut var = 0.0;
    for (i, &w) in density.iter().enumerate() {
        let d = coord(i) - mean;
        var += w * step * d * d;
    }
    (mean, var / mass)
}

/// Statistical mixture rho = sum_k w_k |psi_k><psi_k|. Weights must be
/// nonnegative and sum to 1 within 1e-10; components must be normalized and
/// share a grid.
pub fn build_density(components: &[(f64, &WaveFunction)]) -> Result<DensityMatrix> {
    if components.is_empty() {
        return Err(SubplanckError::InvalidInput(
            "mixture needs at least one component".into(),
        ));
    }
    let grid = components[0].1.grid;
    let mut total = 0.0;
    for (w, psi) in components {
        if !(w.is_finite() && *w >= 0.0) {
            return Err(SubplanckError::InvalidInput(format!(
                "mixture weight {w} is not a nonnegative finite number"
            )));
        }
        total += w;
        psi.grid.require_same(&grid, "mixture components")?;
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(SubplanckError::InvalidState(format!(
                "mixture component has norm {norm}, expected 1"
            )));
        }
    }
    if (total - 1.0).abs() > 1e-10 {
        return Err(SubplanckError::InvalidInput(format!(
            "mixture weights sum to {total}, expected 1"
        )));
    }
    let n = grid.n();
    let mut rho = Array2::from_elem((n, n), C64::new(0.0, 0.0));
    for (w, psi) in components {
        for i in 0..n {
            let wi = psi.amp[i] * *w;
            for j in 0..n {
                rho[[i, j]] += wi * psi.amp[j].conj();
            }
        }
    }
    Ok(DensityMatrix { grid, rho })
}

/// Applies displacement `left` to the ket index and `right` to the bra
/// index: D_left rho D_right^dagger. With `left == right` this is the
/// displaced mixed state.
pub fn displace_density(rho: &DensityMatrix, left: &Displacement, right: &Displacement) -> DensityMatrix {
    let grid = rho.grid;
    let n = grid.n();
    let fft = plan_fft(n);
    let mut out = rho.rho.clone();
    // ket index: displace each column
    for j in 0..n {
        let mut col: Vec<C64> = out.column(j).to_vec();
        displace_amp(&grid, &mut col, left, &fft);
        for i in 0..n {
            out[[i, j]] = col[i];
        }
    }
    // bra index: conjugate rows transform with the same displacement
    for i in 0..n {
        let mut row: Vec<C64> = out.row(i).iter().map(|a| a.conj()).collect();
        displace_amp(&grid, &mut row, right, &fft);
        for j in 0..n {
            out[[i, j]] = row[j].conj();
        }
    }
    DensityMatrix { grid, rho: out }
}

/// Pure state or mixture, for operations that accept either.
#[derive(Debug, Clone)]
pub enum State {
    Pure(WaveFunction),
    Mixed(DensityMatrix),
}

impl State {
    pub fn grid(&self) -> &GridSpec {
        match self {
            State::Pure(psi) => psi.grid(),
            State::Mixed(rho) => rho.grid(),
        }
    }

    pub fn position_moments(&self) -> (f64, f64) {
        match self {
            State::Pure(psi) => psi.position_moments(),
            State::Mixed(rho) => rho.position_moments(),
        }
    }

    pub fn momentum_moments(&self) -> (f64, f64) {
        match self {
            State::Pure(psi) => psi.momentum_moments(),
            State::Mixed(rho) => rho.momentum_moments(),
        }
    }

    pub fn purity(&self) -> f64 {
        match self {
            State::Pure(_) => 1.0,
            State::Mixed(rho) => rho.purity(),
        }
    }
}

/// Band-limited refinement of `amp` onto a grid with twice the sample count
/// and half the spacing, by zero-padding the centered spectrum. Original
/// samples are preserved at even indices.
pub(crate) fn refine_doubled(grid: &GridSpec, amp: &[C64]) -> Vec<C64> {
    let n = grid.n();
    let fft_n = plan_fft(n);
    let fft_2n = plan_fft(2 * n);
    let mut spec: Vec<C64> = amp.to_vec();
    fft_n.fwd.process(&mut spec);
    let mut padded = vec![C64::new(0.0, 0.0); 2 * n];
    // low positive frequencies keep their bins; negative frequencies move to
    // the top of the doubled array
    for k in 0..n / 2 {
        padded[k] = spec[k];
    }
    for k in n / 2..n {
        padded[k + n] = spec[k];
    }
    fft_2n.inv.process(&mut padded);
    let scale = 1.0 / n as f64;
    padded.iter_mut().for_each(|a| *a *= scale);
    padded
}

/// Two-dimensional version of [`refine_doubled`] for density matrices.
pub(crate) fn refine_doubled_2d(grid: &GridSpec, rho: &Array2<C64>) -> Array2<C64> {
    let n = grid.n();
    let mut half = Array2::from_elem((2 * n, n), C64::new(0.0, 0.0));
    for j in 0..n {
        let col = refine_doubled(grid, &rho.column(j).to_vec());
        for i in 0..2 * n {
            half[[i, j]] = col[i];
        }
    }
    let mut full = Array2::from_elem((2 * n, 2 * n), C64::new(0.0, 0.0));
    for i in 0..2 * n {
        let row = refine_doubled(grid, &half.row(i).to_vec());
        for j in 0..2 * n {
            full[[i, j]] = row[j];
        }
    }
    full
}
