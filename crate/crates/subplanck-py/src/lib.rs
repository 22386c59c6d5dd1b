//! Python bindings for the phase-space toolkit: state construction,
//! Wigner transforms, displacement overlap scans, pendulum evolution,
//! and whole scenario runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use subplanck::decoherence::{
    conditional_evolve, decay_scan, fourier_suppression, suppression_factor, ConditionalShifts,
};
use subplanck::dynamics::{evolve_quantum, lyapunov, DrivenPendulumParams};
use subplanck::grid::{
    displace as displace_state, inner, Displacement, GridSpec, PhaseSpaceDirection, State,
    WaveFunction,
};
use subplanck::scenario::{load_scenario, run_scenario};
use subplanck::states::{
    make_cat, make_compass, make_gaussian, make_sparse, random_sparse_spec, CompassSpec,
    GaussianPacket,
};
use subplanck::wigner::{checkerboard_tile_area, structure_report, wigner_of_psi, WignerGrid};
use subplanck::SubplanckError;

fn err(e: SubplanckError) -> PyErr {
    match e {
        SubplanckError::Io(inner) => PyIOError::new_err(inner.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Uniform position grid with its implied momentum grid.
#[pyclass(name = "Grid")]
#[derive(Clone)]
struct PyGrid {
    spec: GridSpec,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(n: usize, extent: f64, hbar: f64) -> PyResult<Self> {
        Ok(Self {
            spec: GridSpec::centered(n, extent, hbar).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.spec.n()
    }

    #[getter]
    fn extent(&self) -> f64 {
        self.spec.extent()
    }

    #[getter]
    fn hbar(&self) -> f64 {
        self.spec.hbar()
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.spec.dx()
    }

    #[getter]
    fn dp(&self) -> f64 {
        self.spec.dp()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(n={}, extent={}, hbar={})",
            self.spec.n(),
            self.spec.extent(),
            self.spec.hbar()
        )
    }
}

/// Normalized wave function on a [`Grid`].
#[pyclass(name = "Psi")]
#[derive(Clone)]
struct PyPsi {
    state: WaveFunction,
}

#[pymethods]
impl PyPsi {
    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid {
            spec: *self.state.grid(),
        }
    }

    fn norm(&self) -> f64 {
        self.state.norm()
    }

    /// (mean, variance) of position.
    fn position_moments(&self) -> (f64, f64) {
        self.state.position_moments()
    }

    /// (mean, variance) of momentum.
    fn momentum_moments(&self) -> (f64, f64) {
        self.state.momentum_moments()
    }

    /// Amplitudes as (re, im) pairs in grid order.
    fn amplitudes(&self) -> Vec<(f64, f64)> {
        self.state.amp().iter().map(|a| (a.re, a.im)).collect()
    }

    /// Structure summary (spreads, action, state count, smallest scales)
    /// as a JSON object string.
    fn structure_report(&self) -> PyResult<String> {
        let report =
            structure_report(&State::Pure(self.state.clone()), None).map_err(err)?;
        serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Psi(n={})", self.state.grid().n())
    }
}

/// Wigner distribution samples on the grid implied by the source state.
#[pyclass(name = "Wigner")]
struct PyWigner {
    w: WignerGrid,
}

#[pymethods]
impl PyWigner {
    fn max_abs(&self) -> f64 {
        self.w.max_abs()
    }

    fn min_value(&self) -> f64 {
        self.w.min_value()
    }

    fn total_mass(&self) -> f64 {
        self.w.total_mass()
    }

    fn purity(&self) -> f64 {
        self.w.purity()
    }

    /// Area of the central interference tile, if the distribution has a
    /// checkerboard around the origin.
    fn tile_area(&self) -> PyResult<f64> {
        checkerboard_tile_area(&self.w).map_err(err)
    }

    fn x_axis(&self) -> Vec<f64> {
        (0..self.w.n_x()).map(|i| self.w.x(i)).collect()
    }

    fn p_axis(&self) -> Vec<f64> {
        (0..self.w.n_p()).map(|j| self.w.p(j)).collect()
    }

    /// Values as rows over x, columns over p.
    fn values(&self) -> Vec<Vec<f64>> {
        (0..self.w.n_x())
            .map(|i| (0..self.w.n_p()).map(|j| self.w.values()[[i, j]]).collect())
            .collect()
    }
}

/// Minimum-uncertainty packet centered at (x0, p0) with width xi.
#[pyfunction]
fn gaussian(grid: &PyGrid, x0: f64, p0: f64, xi: f64) -> PyResult<PyPsi> {
    Ok(PyPsi {
        state: make_gaussian(&GaussianPacket::new(x0, p0, xi), &grid.spec).map_err(err)?,
    })
}

/// Even superposition of packets at +/-x0.
#[pyfunction]
fn cat(grid: &PyGrid, x0: f64, xi: f64) -> PyResult<PyPsi> {
    Ok(PyPsi {
        state: make_cat(x0, xi, &grid.spec).map_err(err)?,
    })
}

/// Four packets spanning x_separation along x and p_separation along p.
#[pyfunction]
fn compass(grid: &PyGrid, x_separation: f64, p_separation: f64, xi: f64) -> PyResult<PyPsi> {
    Ok(PyPsi {
        state: make_compass(&CompassSpec::new(x_separation, p_separation, xi), &grid.spec)
            .map_err(err)?,
    })
}

/// Equal-weight superposition of `count` packets at seeded random centers
/// in |x| <= x_half, |p| <= p_half, every pair at least `min_separation`
/// packet widths apart.
#[pyfunction]
fn sparse_random(
    grid: &PyGrid,
    count: usize,
    xi: f64,
    x_half: f64,
    p_half: f64,
    min_separation: f64,
    seed: u64,
) -> PyResult<PyPsi> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let spec = random_sparse_spec(
        count,
        xi,
        x_half,
        p_half,
        min_separation,
        grid.spec.hbar(),
        &mut rng,
    )
    .map_err(err)?;
    Ok(PyPsi {
        state: make_sparse(&spec, &grid.spec).map_err(err)?,
    })
}

/// Phase-space displacement by (delta_x, delta_p).
#[pyfunction]
fn displace(psi: &PyPsi, delta_x: f64, delta_p: f64) -> PyPsi {
    PyPsi {
        state: displace_state(&psi.state, &Displacement::new(delta_x, delta_p)),
    }
}

/// Inner product <a|b> as (re, im).
#[pyfunction]
fn overlap(a: &PyPsi, b: &PyPsi) -> PyResult<(f64, f64)> {
    let z = inner(&a.state, &b.state).map_err(err)?;
    Ok((z.re, z.im))
}

/// Wigner distribution of a pure state.
#[pyfunction]
fn wigner(psi: &PyPsi) -> PyWigner {
    PyWigner {
        w: wigner_of_psi(&psi.state),
    }
}

/// Overlap of the two branch states displaced by +/-(delta_x, delta_p)/2,
/// as (re, im).
#[pyfunction]
fn branch_overlap(psi: &PyPsi, delta_x: f64, delta_p: f64) -> PyResult<(f64, f64)> {
    let shifts = ConditionalShifts::symmetric(Displacement::new(delta_x, delta_p));
    let (plus, minus) = conditional_evolve(&psi.state, &shifts);
    let z = suppression_factor(&plus, &minus).map_err(err)?;
    Ok((z.re, z.im))
}

/// The same overlap for a pure momentum shift computed from the position
/// distribution, as (re, im).
#[pyfunction]
fn momentum_shift_overlap(psi: &PyPsi, delta_p: f64) -> (f64, f64) {
    let z = fourier_suppression(&psi.state, delta_p);
    (z.re, z.im)
}

/// |<psi|D(s u)|psi>| sampled at steps+1 magnitudes along direction
/// (ux, up); returns (magnitude, abs overlap) pairs.
#[pyfunction]
fn overlap_decay(
    psi: &PyPsi,
    ux: f64,
    up: f64,
    max_magnitude: f64,
    steps: usize,
) -> PyResult<Vec<(f64, f64)>> {
    let direction = PhaseSpaceDirection::new(ux, up).map_err(err)?;
    let points = decay_scan(
        &State::Pure(psi.state.clone()),
        &direction,
        max_magnitude,
        steps,
    )
    .map_err(err)?;
    Ok(points
        .iter()
        .map(|pt| (pt.magnitude, pt.overlap().norm()))
        .collect())
}

/// Evolves under the driven pendulum for t_final and returns the final
/// state.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn evolve(
    psi: &PyPsi,
    mass: f64,
    kappa: f64,
    drive_amplitude: f64,
    harmonic_coeff: f64,
    dt: f64,
    t_final: f64,
) -> PyResult<PyPsi> {
    let params =
        DrivenPendulumParams::new(mass, kappa, drive_amplitude, harmonic_coeff).map_err(err)?;
    let traj = evolve_quantum(&psi.state, &params, dt, t_final, &[]).map_err(err)?;
    Ok(PyPsi {
        state: traj.final_state,
    })
}

/// Tangent-map stretching rate along the classical trajectory from
/// (x, p), per unit time.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn stretching_rate(
    mass: f64,
    kappa: f64,
    drive_amplitude: f64,
    harmonic_coeff: f64,
    x: f64,
    p: f64,
    t_total: f64,
) -> PyResult<f64> {
    let params =
        DrivenPendulumParams::new(mass, kappa, drive_amplitude, harmonic_coeff).map_err(err)?;
    let rate = lyapunov(&params, (x, p), t_total, 1.0, 1.0 / 128.0).map_err(err)?;
    Ok(rate.exponent)
}

/// Runs a scenario config file into out_dir and returns the manifest as a
/// JSON object string.
#[pyfunction]
fn run_scenario_file(config_path: PathBuf, out_dir: PathBuf) -> PyResult<String> {
    let scenario = load_scenario(&config_path).map_err(err)?;
    let manifest = run_scenario(&scenario, &out_dir).map_err(err)?;
    serde_json::to_string(&manifest).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn subplanck_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyPsi>()?;
    m.add_class::<PyWigner>()?;
    m.add_function(wrap_pyfunction!(gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(cat, m)?)?;
    m.add_function(wrap_pyfunction!(compass, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_random, m)?)?;
    m.add_function(wrap_pyfunction!(displace, m)?)?;
    m.add_function(wrap_pyfunction!(overlap, m)?)?;
    m.add_function(wrap_pyfunction!(wigner, m)?)?;
    m.add_function(wrap_pyfunction!(branch_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(momentum_shift_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_decay, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(stretching_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario_file, m)?)?;
    Ok(())
}
