//! Conditional displacement model of decoherence. A two-state system kicks
//! its environment along a branch-dependent phase-space shift, and the
//! coherence that survives between the branches is the overlap of the two
//! conditional environment states.

use crate::error::{Result, SubplanckError};
use crate::grid::{
    displace, displace_density, inner, DensityMatrix, Displacement, PhaseSpaceDirection, State,
    WaveFunction,
};
use crate::states::{CompassSpec, SparseSpec};
use crate::wigner::ScanPoint;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

/// Superposition amplitudes of the two system branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStateSystem {
    alpha: C64,
    beta: C64,
}

impl TwoStateSystem {
    pub fn new(alpha: C64, beta: C64) -> Result<Self> {
        let total = alpha.norm_sqr() + beta.norm_sqr();
        if !total.is_finite() || (total - 1.0).abs() > 1e-10 {
            return Err(SubplanckError::InvalidInput(format!(
                "branch amplitudes carry total weight {total}, expected 1"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Equal-weight superposition with real amplitudes.
    pub fn balanced() -> Self {
        let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self { alpha: a, beta: a }
    }

    pub fn alpha(&self) -> C64 {
        self.alpha
    }

    pub fn beta(&self) -> C64 {
        self.beta
    }
}

/// Phase-space kicks the environment receives, one per system branch. All
/// observable decoherence depends on the two only through their difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalShifts {
    pub plus: Displacement,
    pub minus: Displacement,
}

impl ConditionalShifts {
    pub fn new(plus: Displacement, minus: Displacement) -> Self {
        Self { plus, minus }
    }

    /// Net shift split evenly between the branches.
    pub fn symmetric(net: Displacement) -> Self {
        let half = Displacement::new(net.delta_x / 2.0, net.delta_p / 2.0);
        Self {
            plus: half,
            minus: half.negate(),
        }
    }

    /// Shifts generated by a branch-dependent drift of strength `g` acting
    /// for `time`; the branches drag the environment to positions g t and
    /// -g t.
    pub fn from_coupling(g: f64, time: f64) -> Self {
        let plus = Displacement::new(g * time, 0.0);
        Self {
            minus: plus.negate(),
            plus,
        }
    }

    /// Difference between the branch shifts. No decoherence occurs when it
    /// vanishes.
    pub fn net(&self) -> Displacement {
        Displacement::new(
            self.plus.delta_x - self.minus.delta_x,
            self.plus.delta_p - self.minus.delta_p,
        )
    }
}

/// The two conditional environment states, each branch displacing the
/// shared initial state by its own shift.
pub fn conditional_evolve(
    env: &WaveFunction,
    shifts: &ConditionalShifts,
) -> (WaveFunction, WaveFunction) {
    (displace(env, &shifts.plus), displace(env, &shifts.minus))
}

/// Overlap z of the two conditional environment states. Its magnitude is
/// the factor multiplying the off-diagonal terms of the reduced system
/// state, so |z| = 1 means full coherence and z = 0 perfect decoherence.
pub fn suppression_factor(eps_plus: &WaveFunction, eps_minus: &WaveFunction) -> Result<C64> {
    inner(eps_plus, eps_minus)
}

/// The same overlap for a purely momentum net shift, computed from the
/// position distribution alone as sum |env(x)|^2 exp(-i delta_p x / hbar) dx.
/// The exponent sign follows the displacement phase convention, making this
/// equal to [`suppression_factor`] of the conditionally evolved pair to
/// rounding. Shifts with a position component need the general route.
pub fn fourier_suppression(env: &WaveFunction, delta_p: f64) -> C64 {
    let grid = env.grid();
    let hbar = grid.hbar();
    let mut acc = C64::new(0.0, 0.0);
    for (i, a) in env.amp().iter().enumerate() {
        acc += a.norm_sqr() * C64::from_polar(1.0, -delta_p * grid.x(i) / hbar);
    }
    acc * grid.dx()
}

/// Second-order estimate of |z|^2 together with a validity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftExpansion {
    pub value: f64,
    pub within_window: bool,
}

/// Leading-order coherence loss for a small momentum shift,
/// 1 - delta_p^2 Var(x) / hbar^2, using mixture-averaged moments for mixed
/// environments. The expansion is meaningful while delta_p times the
/// position spread stays below 0.3 hbar; outside that window the value is
/// still returned with `within_window` cleared.
pub fn small_shift_prediction(env: &State, delta_p: f64) -> ShiftExpansion {
    let hbar = env.grid().hbar();
    let (_, var) = env.position_moments();
    ShiftExpansion {
        value: 1.0 - delta_p * delta_p * var / (hbar * hbar),
        within_window: delta_p.abs() * var.sqrt() / hbar < 0.3,
    }
}

/// Momentum shift at which a generic environment has decohered the system,
/// hbar over the position spread.
pub fn orthogonality_shift(env: &State) -> Result<f64> {
    let (_, var) = env.position_moments();
    if !(var > 0.0 && var.is_finite()) {
        return Err(SubplanckError::InvalidState(format!(
            "position variance {var} must be positive"
        )));
    }
    Ok(env.grid().hbar() / var.sqrt())
}

/// Overlap for a mixed environment, Tr(D_minus rho D_plus^dagger). Reduces
/// to [`suppression_factor`] when rho projects onto a pure state.
pub fn mixed_suppression(rho: &DensityMatrix, shifts: &ConditionalShifts) -> C64 {
    displace_density(rho, &shifts.minus, &shifts.plus).trace()
}

/// Reduced 2x2 system state in the branch basis once the environment is
/// traced out: diagonal weights are untouched and the coherences are
/// multiplied by z.
pub fn reduced_density(sys: &TwoStateSystem, z: C64) -> Result<[[C64; 2]; 2]> {
    let mag = z.norm();
    if !(mag <= 1.0 + 1e-9) {
        return Err(SubplanckError::InvalidInput(format!(
            "overlap magnitude {mag} exceeds 1"
        )));
    }
    let (a, b) = (sys.alpha, sys.beta);
    Ok([
        [C64::new(a.norm_sqr(), 0.0), z * a * b.conj()],
        [z.conj() * a.conj() * b, C64::new(b.norm_sqr(), 0.0)],
    ])
}

/// Squared-overlap estimate for a four-packet compass environment shifted
/// by `d`, valid for shifts small against the packet widths:
/// (cos(delta_x P / 2 hbar) + cos(delta_p L / 2 hbar))^2 / 4.
pub fn compass_overlap_prediction(c: &CompassSpec, d: &Displacement, hbar: f64) -> f64 {
    let a = (d.delta_x * c.p_separation / (2.0 * hbar)).cos();
    let b = (d.delta_p * c.x_separation / (2.0 * hbar)).cos();
    (a + b) * (a + b) / 4.0
}

/// Overlap magnitude estimate for a sparse environment. Each packet picks
/// up only the phase of its own center, so the overlap is a weighted
/// phasor sum |sum_k w_k exp(i (delta_p x_k - delta_x p_k) / hbar)| whose
/// relative sign matches the displacement phase convention. Weights are
/// the packet probabilities, so the spec should be normalized.
pub fn sparse_overlap_prediction(spec: &SparseSpec, d: &Displacement, hbar: f64) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for (pk, w) in spec.packets.iter().zip(spec.weights()) {
        let phase = (d.delta_p * pk.x - d.delta_x * pk.p) / hbar;
        acc += w * C64::from_polar(1.0, phase);
    }
    acc.norm()
}

/// Overlap sampled along a displacement ray at `steps + 1` evenly spaced
/// magnitudes from 0 to `max_magnitude`, splitting each net shift evenly
/// between the branches. Samples are computed in parallel and the result
/// is deterministic.
pub fn decay_scan(
    env: &State,
    direction: &PhaseSpaceDirection,
    max_magnitude: f64,
    steps: usize,
) -> Result<Vec<ScanPoint>> {
    if steps < 16 {
        return Err(SubplanckError::InvalidInput(format!(
            "decay scan needs at least 16 steps, got {steps}"
        )));
    }
    if !(max_magnitude > 0.0 && max_magnitude.is_finite()) {
        return Err(SubplanckError::InvalidInput(format!(
            "decay scan extent {max_magnitude} must be positive and finite"
        )));
    }
    let points = (0..=steps)
        .into_par_iter()
        .map(|k| {
            let s = max_magnitude * k as f64 / steps as f64;
            let d = direction.at(s);
            let shifts = ConditionalShifts::symmetric(d);
            let z = match env {
                State::Pure(psi) => {
                    let (plus, minus) = conditional_evolve(psi, &shifts);
                    inner(&plus, &minus).expect("conditional states share the grid")
                }
                State::Mixed(rho) => mixed_suppression(rho, &shifts),
            };
            ScanPoint {
                delta_x: d.delta_x,
                delta_p: d.delta_p,
                magnitude: s,
                overlap_re: z.re,
                overlap_im: z.im,
            }
        })
        .collect();
    Ok(points)
}

/// Landmarks of a decay curve: where |z| first falls through 1/e, the
/// first local minimum of |z|, and the largest revival beyond it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayAnalysis {
    pub crossing: Option<f64>,
    pub first_minimum: Option<(f64, f64)>,
    pub revival_peak: f64,
}

/// Extracts the landmarks from a curve produced by [`decay_scan`]. The 1/e
/// crossing is linearly interpolated; a curve that only decreases has no
/// minimum and therefore no revival.
pub fn analyze_decay(points: &[ScanPoint]) -> DecayAnalysis {
    let threshold = (-1.0f64).exp();
    let mags: Vec<f64> = points.iter().map(|p| p.overlap().norm()).collect();
    let mut crossing = None;
    for i in 1..mags.len() {
        if mags[i - 1] > threshold && mags[i] <= threshold {
            let f = (mags[i - 1] - threshold) / (mags[i - 1] - mags[i]);
            crossing = Some(
                points[i - 1].magnitude + f * (points[i].magnitude - points[i - 1].magnitude),
            );
            break;
        }
    }
    let mut first_minimum = None;
    for i in 1..mags.len().saturating_sub(1) {
        if mags[i] <= mags[i - 1] && mags[i] < mags[i + 1] {
            first_minimum = Some((points[i].magnitude, mags[i]));
            break;
        }
    }
    let revival_peak = match first_minimum {
        Some((at, _)) => points
            .iter()
            .zip(&mags)
            .filter(|(p, _)| p.magnitude > at)
            .map(|(_, &m)| m)
            .fold(0.0, f64::max),
        None => 0.0,
    };
    DecayAnalysis {
        crossing,
        first_minimum,
        revival_peak,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_density, GridSpec};
    use crate::states::{make_cat, make_compass, make_gaussian, make_sparse, GaussianPacket};
    use crate::wigner::{moyal_overlap, wigner_of_psi};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    const HBAR: f64 = 0.16;

    fn grid_16(n: usize) -> GridSpec {
        GridSpec::new(n, -8.0, 16.0 / n as f64, HBAR).unwrap()
    }

    fn fit_slope(points: &[(f64, f64)]) -> f64 {
        let n = points.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &(x, y) in points {
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn equal_shifts_leave_full_coherence() {
        let grid = grid_16(512);
        let env = make_gaussian(&GaussianPacket::new(0.3, -0.2, 0.4), &grid).unwrap();
        let same = Displacement::new(0.12, -0.3);
        let shifts = ConditionalShifts::new(same, same);
        let (plus, minus) = conditional_evolve(&env, &shifts);
        let z = suppression_factor(&plus, &minus).unwrap();
        assert!((z - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(shifts.net(), Displacement::new(0.0, 0.0));

        let drift = ConditionalShifts::from_coupling(0.05, 2.0);
        assert!((drift.net().delta_x - 0.2).abs() < 1e-15);
        assert_eq!(drift.net().delta_p, 0.0);
        let sym = ConditionalShifts::symmetric(Displacement::new(0.3, -0.7));
        assert!((sym.net().delta_x - 0.3).abs() < 1e-15);
        assert!((sym.net().delta_p + 0.7).abs() < 1e-15);
    }

    #[test]
    fn gaussian_momentum_shift_matches_characteristic_function() {
        let grid = grid_16(512);
        let xi = 0.4;
        for (x0, p0) in [(0.0, 0.0), (0.5, 0.3)] {
            let env = make_gaussian(&GaussianPacket::new(x0, p0, xi), &grid).unwrap();
            for delta_p in [0.1, 0.25, 0.6] {
                let shifts = ConditionalShifts::symmetric(Displacement::new(0.0, delta_p));
                let (plus, minus) = conditional_evolve(&env, &shifts);
                let z = suppression_factor(&plus, &minus).unwrap();
                let expected = (-delta_p * delta_p * xi * xi / (4.0 * HBAR * HBAR)).exp();
                assert!(
                    (z.norm() - expected).abs() < 1e-6,
                    "delta_p = {delta_p}: |z| = {} vs {expected}",
                    z.norm()
                );
            }
        }
    }

    #[test]
    fn squared_overlap_matches_wigner_product_across_corpus() {
        let grid = grid_16(512);
        let wide = GridSpec::centered(1024, 24.0, HBAR).unwrap();
        let sparse = crate::states::SparseSpec::equal_weights(
            &[(-3.5, 0.8), (-1.0, -1.6), (1.2, 1.4), (3.3, -0.6)],
            0.4,
        );
        assert!(sparse.is_sparse(HBAR));
        let corpus = [
            make_gaussian(&GaussianPacket::new(0.3, -0.2, 0.4), &grid).unwrap(),
            make_cat(2.0, 0.4, &grid).unwrap(),
            make_compass(&crate::states::CompassSpec::new(4.0, 4.0, 0.4), &grid).unwrap(),
            make_sparse(&sparse, &wide).unwrap(),
        ];
        let shifts = ConditionalShifts::symmetric(Displacement::new(0.11, 0.23));
        for env in &corpus {
            let (plus, minus) = conditional_evolve(env, &shifts);
            let z = suppression_factor(&plus, &minus).unwrap();
            let product = moyal_overlap(&wigner_of_psi(&plus), &wigner_of_psi(&minus)).unwrap();
            assert!(
                (z.norm_sqr() - product).abs() < 1e-6,
                "|z|^2 = {} vs Wigner product {product}",
                z.norm_sqr()
            );
        }
    }

    #[test]
    fn compass_orthogonality_and_revival_shifts() {
        let grid = grid_16(512);
        let spec = crate::states::CompassSpec::new(8.0, 8.0, 0.4);
        let env = make_compass(&spec, &grid).unwrap();
        let first = TAU * HBAR / spec.p_separation;

        let d = Displacement::new(first, 0.0);
        let shifts = ConditionalShifts::symmetric(d);
        let (plus, minus) = conditional_evolve(&env, &shifts);
        let z = suppression_factor(&plus, &minus).unwrap();
        assert!(z.norm() < 0.05, "orthogonality |z| = {}", z.norm());
        let predicted = compass_overlap_prediction(&spec, &d, HBAR);
        assert!((z.norm_sqr() - predicted).abs() < 0.05);

        // one full period restores the packet phases; only the envelope
        // factor from the displacement within each packet remains
        let shifts = ConditionalShifts::symmetric(Displacement::new(2.0 * first, 0.0));
        let (plus, minus) = conditional_evolve(&env, &shifts);
        let z = suppression_factor(&plus, &minus).unwrap();
        assert!(z.norm() > 0.8, "revival |z| = {}", z.norm());
    }

    #[test]
    fn fourier_route_equals_displacement_route() {
        let grid = grid_16(512);
        let envs = [
            make_gaussian(&GaussianPacket::new(0.4, -0.1, 0.4), &grid).unwrap(),
            make_cat(1.5, 0.4, &grid).unwrap(),
        ];
        for env in &envs {
            assert!((fourier_suppression(env, 0.0) - C64::new(1.0, 0.0)).norm() < 1e-12);
            for delta_p in [0.1, 0.37, 1.1] {
                let shifts = ConditionalShifts::symmetric(Displacement::new(0.0, delta_p));
                let (plus, minus) = conditional_evolve(env, &shifts);
                let direct = suppression_factor(&plus, &minus).unwrap();
                let fourier = fourier_suppression(env, delta_p);
                assert!(
                    (direct - fourier).norm() < 1e-10,
                    "delta_p = {delta_p}: {direct} vs {fourier}"
                );
            }
        }
    }

    #[test]
    fn cat_overlap_oscillates_under_momentum_shifts() {
        let grid = grid_16(512);
        let (x0, xi) = (2.5, 0.4);
        let env = make_cat(x0, xi, &grid).unwrap();
        for delta_p in [0.05, 0.1, 0.2, TAU * HBAR / (2.0 * x0)] {
            let z = fourier_suppression(&env, delta_p);
            let expected = (delta_p * x0 / HBAR).cos().abs()
                * (-delta_p * delta_p * xi * xi / (4.0 * HBAR * HBAR)).exp();
            assert!(
                (z.norm() - expected).abs() < 1e-6,
                "delta_p = {delta_p}: |z| = {} vs {expected}",
                z.norm()
            );
        }
    }

    #[test]
    fn expansion_error_is_quartic_in_the_shift() {
        let grid = grid_16(512);
        let pure = State::Pure(make_gaussian(&GaussianPacket::new(0.0, 0.0, 0.4), &grid).unwrap());
        let halves = [
            make_gaussian(&GaussianPacket::new(-1.2, 0.3, 0.4), &grid).unwrap(),
            make_gaussian(&GaussianPacket::new(1.0, -0.5, 0.4), &grid).unwrap(),
        ];
        let mixed = State::Mixed(
            build_density(&[(0.5, &halves[0]), (0.5, &halves[1])]).unwrap(),
        );
        for env in [pure, mixed] {
            let mut samples = Vec::new();
            for k in 0..7 {
                let delta_p = 0.02 * 2f64.powf(k as f64 / 2.0);
                let shifts = ConditionalShifts::symmetric(Displacement::new(0.0, delta_p));
                let z = match &env {
                    State::Pure(psi) => {
                        let (plus, minus) = conditional_evolve(psi, &shifts);
                        suppression_factor(&plus, &minus).unwrap()
                    }
                    State::Mixed(rho) => mixed_suppression(rho, &shifts),
                };
                let predicted = small_shift_prediction(&env, delta_p);
                let residual = (z.norm_sqr() - predicted.value).abs();
                assert!(residual.is_finite() && residual > 0.0);
                samples.push((delta_p.ln(), residual.ln()));
            }
            let slope = fit_slope(&samples);
            assert!((slope - 4.0).abs() < 0.3, "residual slope {slope}");
        }
    }

    #[test]
    fn orthogonality_shift_reference_values() {
        let grid = grid_16(512);
        let vacuum = State::Pure(make_gaussian(&GaussianPacket::new(0.0, 0.0, 0.4), &grid).unwrap());
        let got = orthogonality_shift(&vacuum).unwrap();
        assert!((got - 0.565685).abs() < 1e-3, "vacuum shift {got}");

        let cat = State::Pure(make_cat(4.0, 0.4, &grid).unwrap());
        let got = orthogonality_shift(&cat).unwrap();
        assert!((got - 0.0399).abs() < 2e-4, "cat shift {got}");

        let mut spike = vec![C64::new(0.0, 0.0); 512];
        spike[256] = C64::new(1.0 / grid.dx().sqrt(), 0.0);
        let point = State::Pure(WaveFunction::new(grid, spike).unwrap());
        assert!(orthogonality_shift(&point).is_err());
    }

    #[test]
    fn small_shift_prediction_flags_its_window() {
        let grid = grid_16(512);
        let env = State::Pure(make_gaussian(&GaussianPacket::new(0.0, 0.0, 0.4), &grid).unwrap());
        let inside = small_shift_prediction(&env, 0.1);
        assert!(inside.within_window);
        assert!((inside.value - (1.0 - 0.01 * 0.08 / 0.0256)).abs() < 1e-6);
        let outside = small_shift_prediction(&env, 1.0);
        assert!(!outside.within_window);
        assert!(small_shift_prediction(&env, 0.0).value == 1.0);
    }

    #[test]
    fn decay_crossing_scales_inversely_with_separation() {
        let grid = GridSpec::centered(1024, 24.0, HBAR).unwrap();
        let mut samples = Vec::new();
        for l in [2.0f64, 4.0, 8.0, 16.0] {
            let env = State::Pure(make_cat(l / 2.0, 0.4, &grid).unwrap());
            let scan = decay_scan(&env, &PhaseSpaceDirection::along_p(), 6.0 * HBAR / l, 64)
                .unwrap();
            let crossing = analyze_decay(&scan).crossing.expect("crossing in range");
            samples.push((l.ln(), crossing.ln()));
        }
        let slope = fit_slope(&samples);
        assert!((slope + 1.0).abs() < 0.05, "crossing slope {slope}");
    }

    #[test]
    fn overlap_magnitude_ignores_shift_splitting() {
        let grid = grid_16(512);
        let env = make_cat(1.5, 0.4, &grid).unwrap();
        let net = Displacement::new(0.17, 0.29);
        let splits = [
            ConditionalShifts::symmetric(net),
            ConditionalShifts::new(net, Displacement::new(0.0, 0.0)),
            ConditionalShifts::new(
                Displacement::new(0.3 * net.delta_x, 0.3 * net.delta_p),
                Displacement::new(-0.7 * net.delta_x, -0.7 * net.delta_p),
            ),
        ];
        let mags: Vec<f64> = splits
            .iter()
            .map(|shifts| {
                let (plus, minus) = conditional_evolve(&env, shifts);
                suppression_factor(&plus, &minus).unwrap().norm()
            })
            .collect();
        for m in &mags[1..] {
            assert!((m - mags[0]).abs() < 1e-12, "{mags:?}");
        }
    }

    #[test]
    fn mixed_route_reduces_to_pure_and_handles_mixtures() {
        let grid = grid_16(512);
        let cat = make_cat(1.5, 0.4, &grid).unwrap();
        let shifts = ConditionalShifts::symmetric(Displacement::new(0.1, 0.2));
        let (plus, minus) = conditional_evolve(&cat, &shifts);
        let pure_z = suppression_factor(&plus, &minus).unwrap();
        let mixed_z = mixed_suppression(&DensityMatrix::from_pure(&cat), &shifts);
        assert!(
            (pure_z - mixed_z).norm() < 1e-9,
            "pure {pure_z} vs mixed {mixed_z}"
        );

        let (x0, xi) = (2.5, 0.4);
        let left = make_gaussian(&GaussianPacket::new(-x0, 0.0, xi), &grid).unwrap();
        let right = make_gaussian(&GaussianPacket::new(x0, 0.0, xi), &grid).unwrap();
        let mixture = build_density(&[(0.5, &left), (0.5, &right)]).unwrap();
        let pure_cat = make_cat(x0, xi, &grid).unwrap();
        for delta_p in [0.08, 0.15, 0.3] {
            let shifts = ConditionalShifts::symmetric(Displacement::new(0.0, delta_p));
            let z = mixed_suppression(&mixture, &shifts);
            let expected = (delta_p * x0 / HBAR).cos().abs()
                * (-delta_p * delta_p * xi * xi / (4.0 * HBAR * HBAR)).exp();
            assert!(
                (z.norm() - expected).abs() < 1e-6,
                "delta_p = {delta_p}: |z| = {} vs {expected}",
                z.norm()
            );
            let cat_z = fourier_suppression(&pure_cat, delta_p);
            assert!((z.norm() - cat_z.norm()).abs() < 1e-6);
        }
    }

    #[test]
    fn reduced_density_matrix_shapes_and_eigenvalues() {
        let sys = TwoStateSystem::balanced();
        let full = reduced_density(&sys, C64::new(1.0, 0.0)).unwrap();
        assert!((full[0][1].norm() - 0.5).abs() < 1e-12);

        let gone = reduced_density(&sys, C64::new(0.0, 0.0)).unwrap();
        assert_eq!(gone[0][1], C64::new(0.0, 0.0));
        assert!((gone[0][0].re - 0.5).abs() < 1e-12);

        let half = reduced_density(&sys, C64::from_polar(0.5, 0.7)).unwrap();
        let trace = half[0][0] + half[1][1];
        assert!((trace - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((half[0][1] - half[1][0].conj()).norm() < 1e-15);
        let half_tr = 0.5 * trace.re;
        let det = (half[0][0] * half[1][1] - half[0][1] * half[1][0]).re;
        let gap = (half_tr * half_tr - det).max(0.0).sqrt();
        let (top, bottom) = (half_tr + gap, half_tr - gap);
        assert!((top - 0.75).abs() < 1e-12, "eigenvalues {top}, {bottom}");
        assert!((bottom - 0.25).abs() < 1e-12);

        let lopsided = TwoStateSystem::new(C64::new(0.8, 0.0), C64::from_polar(0.6, 1.1)).unwrap();
        let m = reduced_density(&lopsided, C64::from_polar(0.9, -0.4)).unwrap();
        assert!((m[0][0].re - 0.64).abs() < 1e-12);
        assert!((m[0][1] - m[1][0].conj()).norm() < 1e-15);

        assert!(reduced_density(&sys, C64::new(1.0 + 2e-9, 0.0)).is_err());
        assert!(TwoStateSystem::new(C64::new(0.8, 0.0), C64::new(0.7, 0.0)).is_err());
    }

    #[test]
    fn decay_scan_landmarks_for_plain_and_compass_environments() {
        let grid = grid_16(512);
        let plain = State::Pure(make_gaussian(&GaussianPacket::new(0.0, 0.0, 0.4), &grid).unwrap());
        let scan = decay_scan(&plain, &PhaseSpaceDirection::along_p(), 2.0, 64).unwrap();
        let report = analyze_decay(&scan);
        let crossing = report.crossing.unwrap();
        assert!((crossing - 2.0 * HBAR / 0.4).abs() < 0.02, "crossing {crossing}");
        assert!(report.first_minimum.is_none());
        assert!(report.revival_peak < 0.1);

        let compass = State::Pure(
            make_compass(&crate::states::CompassSpec::new(8.0, 8.0, 0.4), &grid).unwrap(),
        );
        let scan = decay_scan(&compass, &PhaseSpaceDirection::along_x(), 0.35, 96).unwrap();
        let report = analyze_decay(&scan);
        let first = TAU * HBAR / 8.0;
        assert!(report.crossing.unwrap() < first);
        let (at, depth) = report.first_minimum.unwrap();
        assert!((at - first).abs() < 0.02, "minimum at {at} vs {first}");
        assert!(depth < 0.05);
        assert!(report.revival_peak > 0.8);

        assert!(decay_scan(&plain, &PhaseSpaceDirection::along_p(), 2.0, 15).is_err());
        assert!(decay_scan(&plain, &PhaseSpaceDirection::along_p(), 0.0, 64).is_err());

        let again = decay_scan(&compass, &PhaseSpaceDirection::along_x(), 0.35, 96).unwrap();
        assert_eq!(scan, again);
    }

    #[test]
    fn sparse_prediction_tracks_the_numeric_overlap() {
        let grid = GridSpec::centered(1024, 24.0, HBAR).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let spec =
            crate::states::random_sparse_spec(8, 0.4, 8.0, 4.0, 6.0, HBAR, &mut rng).unwrap();
        let env = make_sparse(&spec, &grid).unwrap();
        assert!((sparse_overlap_prediction(&spec, &Displacement::new(0.0, 0.0), HBAR) - 1.0).abs() < 1e-12);
        for d in [
            Displacement::new(0.02, 0.03),
            Displacement::new(-0.05, 0.01),
            Displacement::new(0.03, -0.06),
        ] {
            let shifts = ConditionalShifts::symmetric(d);
            let (plus, minus) = conditional_evolve(&env, &shifts);
            let numeric = suppression_factor(&plus, &minus).unwrap().norm();
            let predicted = sparse_overlap_prediction(&spec, &d, HBAR);
            assert!(
                (numeric - predicted).abs() < 0.05,
                "numeric {numeric} vs predicted {predicted}"
            );
        }

        let pair = crate::states::SparseSpec::equal_weights(&[(-2.5, 0.0), (2.5, 0.0)], 0.4);
        let d = Displacement::new(0.0, 0.11);
        let predicted = sparse_overlap_prediction(&pair, &d, HBAR);
        assert!((predicted - (0.11 * 2.5 / HBAR).cos().abs()).abs() < 1e-12);
    }

    #[test]
    fn compass_prediction_tracks_the_numeric_overlap() {
        let grid = grid_16(512);
        let spec = crate::states::CompassSpec::new(4.0, 4.0, 0.4);
        let env = make_compass(&spec, &grid).unwrap();
        assert_eq!(compass_overlap_prediction(&spec, &Displacement::new(0.0, 0.0), HBAR), 1.0);
        let zeroing = Displacement::new(
            std::f64::consts::PI * HBAR / spec.p_separation,
            std::f64::consts::PI * HBAR / spec.x_separation,
        );
        assert!(compass_overlap_prediction(&spec, &zeroing, HBAR) < 1e-12);
        for d in [Displacement::new(0.1, 0.08), Displacement::new(-0.06, 0.12)] {
            let shifts = ConditionalShifts::symmetric(d);
            let (plus, minus) = conditional_evolve(&env, &shifts);
            let numeric = suppression_factor(&plus, &minus).unwrap().norm_sqr();
            let predicted = compass_overlap_prediction(&spec, &d, HBAR);
            assert!(
                (numeric - predicted).abs() < 0.05,
                "numeric {numeric} vs predicted {predicted}"
            );
        }
    }
}
