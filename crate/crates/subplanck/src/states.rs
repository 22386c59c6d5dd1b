//! Constructors for minimum-uncertainty packets and their superpositions.
//!
//! A packet of width parameter xi has position standard deviation
//! xi/sqrt(2) and momentum standard deviation hbar/(xi*sqrt(2)). The cat is
//! the even two-packet superposition at +/-x0; the compass adds a
//! momentum-separated pair, producing checkerboard interference around the
//! origin; sparse states scatter many packets with negligible pairwise
//! overlap.

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SubplanckError};
use crate::grid::{GridSpec, WaveFunction};

const PI: f64 = std::f64::consts::PI;

/// Minimum-uncertainty Gaussian centered at (x0, p0) with width parameter
/// xi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPacket {
    pub x0: f64,
    pub p0: f64,
    pub xi: f64,
}

impl GaussianPacket {
    pub fn new(x0: f64, p0: f64, xi: f64) -> Self {
        Self { x0, p0, xi }
    }

    /// Position standard deviation xi/sqrt(2).
    pub fn sigma_x(&self) -> f64 {
        self.xi / 2.0_f64.sqrt()
    }

    /// Momentum standard deviation hbar/(xi*sqrt(2)).
    pub fn sigma_p(&self, hbar: f64) -> f64 {
        hbar / (self.xi * 2.0_f64.sqrt())
    }

    /// Unnormalized-lattice amplitude (pi*xi^2)^(-1/4)
    /// exp(-(x-x0)^2/(2 xi^2)) exp(i p0 x / hbar).
    pub fn eval(&self, x: f64, hbar: f64) -> C64 {
        let mag = (PI * self.xi * self.xi).powf(-0.25)
            * (-(x - self.x0) * (x - self.x0) / (2.0 * self.xi * self.xi)).exp();
        mag * C64::from_polar(1.0, self.p0 * x / hbar)
    }
}

/// Four-packet compass: an east-west pair separated by `x_separation` in
/// position and a north-south pair separated by `p_separation` in momentum,
/// all of width xi and equal amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompassSpec {
    pub x_separation: f64,
    pub p_separation: f64,
    pub xi: f64,
}

impl CompassSpec {
    pub fn new(x_separation: f64, p_separation: f64, xi: f64) -> Self {
        Self {
            x_separation,
            p_separation,
            xi,
        }
    }

    pub fn packets(&self) -> [GaussianPacket; 4] {
        let l = self.x_separation;
        let p = self.p_separation;
        [
            GaussianPacket::new(0.0, p / 2.0, self.xi),
            GaussianPacket::new(0.0, -p / 2.0, self.xi),
            GaussianPacket::new(l / 2.0, 0.0, self.xi),
            GaussianPacket::new(-l / 2.0, 0.0, self.xi),
        ]
    }
}

/// One component of a sparse superposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsePacket {
    pub amplitude: C64,
    pub x: f64,
    pub p: f64,
}

/// Superposition of same-width packets at scattered phase-space centers.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpec {
    pub packets: Vec<SparsePacket>,
    pub xi: f64,
}

impl SparseSpec {
    /// Equal-weight spec with real positive amplitudes 1/sqrt(N).
    pub fn equal_weights(centers: &[(f64, f64)], xi: f64) -> Self {
        let w = 1.0 / (centers.len() as f64).sqrt();
        Self {
            packets: centers
                .iter()
                .map(|&(x, p)| SparsePacket {
                    amplitude: C64::new(w, 0.0),
                    x,
                    p,
                })
                .collect(),
            xi,
        }
    }

    /// Rescales amplitudes so sum |alpha_k|^2 = 1.
    pub fn normalized_weights(mut self) -> Result<Self> {
        let total: f64 = self.packets.iter().map(|p| p.amplitude.norm_sqr()).sum();
        if !(total.is_finite() && total > 1e-300) {
            return Err(SubplanckError::InvalidInput(
                "sparse amplitudes must have a nonzero finite weight sum".into(),
            ));
        }
        let s = total.sqrt();
        for p in &mut self.packets {
            p.amplitude /= s;
        }
        Ok(self)
    }

    /// Weights |alpha_k|^2.
    pub fn weights(&self) -> Vec<f64> {
        self.packets.iter().map(|p| p.amplitude.norm_sqr()).collect()
    }

    /// Smallest pairwise separation in packet-width units,
    /// sqrt((dx/xi)^2 + (dp*xi/hbar)^2).
    pub fn min_normalized_separation(&self, hbar: f64) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.packets.iter().enumerate() {
            for b in &self.packets[i + 1..] {
                let sx = (a.x - b.x) / self.xi;
                let sp = (a.p - b.p) * self.xi / hbar;
                best = best.min(sx.hypot(sp));
            }
        }
        best
    }

    /// True when every pairwise separation exceeds 5 packet widths, so all
    /// cross overlaps are below about exp(-25/4).
    pub fn is_sparse(&self, hbar: f64) -> bool {
        self.packets.len() < 2 || self.min_normalized_separation(hbar) > 5.0
    }
}

fn check_support(grid: &GridSpec, packet: &GaussianPacket, label: &str) -> Result<()> {
    if !(packet.xi.is_finite() && packet.xi > 0.0) {
        return Err(SubplanckError::InvalidInput(format!(
            "{label}: width parameter must be positive, got {}",
            packet.xi
        )));
    }
    let margin_x = 6.0 * packet.sigma_x();
    let x_max = grid.x_min() + grid.extent();
    if packet.x0 - margin_x < grid.x_min() || packet.x0 + margin_x > x_max {
        return Err(SubplanckError::SupportViolation(format!(
            "{label}: packet at x0 = {} with 6 sigma = {margin_x:.3} leaves grid [{}, {x_max})",
            packet.x0,
            grid.x_min()
        )));
    }
    let margin_p = 6.0 * packet.sigma_p(grid.hbar());
    let p_max = grid.p_min() + grid.p_span();
    if packet.p0 - margin_p < grid.p_min() || packet.p0 + margin_p > p_max {
        return Err(SubplanckError::SupportViolation(format!(
            "{label}: packet at p0 = {} with 6 sigma = {margin_p:.3} leaves momentum span [{}, {p_max})",
            packet.p0,
            grid.p_min()
        )));
    }
    Ok(())
}

/// Normalized minimum-uncertainty Gaussian on the grid. Fails if fewer than
/// 6 standard deviations separate the packet from a grid edge in either
/// position or momentum.
pub fn make_gaussian(packet: &GaussianPacket, grid: &GridSpec) -> Result<WaveFunction> {
    check_support(grid, packet, "gaussian")?;
    let amp = (0..grid.n())
        .map(|i| packet.eval(grid.x(i), grid.hbar()))
        .collect();
    WaveFunction::new(*grid, amp)?.normalized()
}

/// Superposition of packets with given amplitudes; normalization is
/// numerical, so overlapping packets are handled exactly.
pub fn make_sparse(spec: &SparseSpec, grid: &GridSpec) -> Result<WaveFunction> {
    if spec.packets.is_empty() {
        return Err(SubplanckError::InvalidInput(
            "sparse state needs at least one packet".into(),
        ));
    }
    let spec = spec.clone().normalized_weights()?;
    let mut amp = vec![C64::new(0.0, 0.0); grid.n()];
    for (k, p) in spec.packets.iter().enumerate() {
        let packet = GaussianPacket::new(p.x, p.p, spec.xi);
        check_support(grid, &packet, &format!("sparse packet {k}"))?;
        for (i, a) in amp.iter_mut().enumerate() {
            *a += p.amplitude * packet.eval(grid.x(i), grid.hbar());
        }
    }
    WaveFunction::new(*grid, amp)?.normalized()
}

/// Even two-packet cat at +/-x0 with zero mean momentum. Peaks closer than
/// about 2*x0 = 5*xi overlap appreciably; the state is still normalized
/// correctly, just no longer sparse.
pub fn make_cat(x0: f64, xi: f64, grid: &GridSpec) -> Result<WaveFunction> {
    make_sparse(
        &SparseSpec::equal_weights(&[(x0, 0.0), (-x0, 0.0)], xi),
        grid,
    )
}

/// True when the cat's packets are separated enough (2*x0 > 5*xi) for
/// cross terms to be negligible.
pub fn cat_is_sparse(x0: f64, xi: f64) -> bool {
    2.0 * x0.abs() > 5.0 * xi
}

/// Equal-amplitude four-packet compass state.
pub fn make_compass(spec: &CompassSpec, grid: &GridSpec) -> Result<WaveFunction> {
    if !(spec.x_separation > 0.0 && spec.p_separation > 0.0) {
        return Err(SubplanckError::InvalidInput(format!(
            "compass separations must be positive, got L = {}, P = {}",
            spec.x_separation, spec.p_separation
        )));
    }
    let centers: Vec<(f64, f64)> = spec
        .packets()
        .iter()
        .map(|g| (g.x0, g.p0))
        .collect();
    make_sparse(&SparseSpec::equal_weights(&centers, spec.xi), grid)
}

/// Draws `count` phase-space centers in the box |x| <= x_half, |p| <= p_half
/// by rejection so every pair is at least `min_separation` packet widths
/// apart, and returns the equal-weight spec. Deterministic for a given RNG
/// state.
pub fn random_sparse_spec(
    count: usize,
    xi: f64,
    x_half: f64,
    p_half: f64,
    min_separation: f64,
    hbar: f64,
    rng: &mut impl Rng,
) -> Result<SparseSpec> {
    if count == 0 {
        return Err(SubplanckError::InvalidInput(
            "sparse state needs at least one packet".into(),
        ));
    }
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(count);
    let max_attempts = 20_000 * count;
    let mut attempts = 0;
    while centers.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(SubplanckError::InvalidInput(format!(
                "could not place {count} packets at separation {min_separation} in |x| <= {x_half}, |p| <= {p_half}"
            )));
        }
        let x = rng.gen_range(-x_half..x_half);
        let p = rng.gen_range(-p_half..p_half);
        let ok = centers.iter().all(|&(cx, cp)| {
            let sx = (x - cx) / xi;
            let sp = (p - cp) * xi / hbar;
            sx.hypot(sp) >= min_separation
        });
        if ok {
            centers.push((x, p));
        }
    }
    Ok(SparseSpec::equal_weights(&centers, xi))
}

/// Closed-form Wigner distributions used as references for the numerical
/// transform.
#[derive(Debug, Clone, Copy)]
pub enum WignerOracle {
    /// Single packet: (pi*hbar)^(-1) exp(-(x-x0)^2/xi^2 - (p-p0)^2 xi^2/hbar^2).
    Gaussian(GaussianPacket),
    /// Even cat at +/-x0 in the well-separated limit: two packet terms of
    /// weight 1/2 plus a momentum-oscillating interference ridge at x = 0
    /// with angular frequency 2*x0/hbar.
    Cat { x0: f64, xi: f64 },
    /// Central interference term of the compass: the checkerboard
    /// envelope * (cos(p*L/hbar) + cos(x*P/hbar)) shared by the two pair
    /// ridges, without the 1/2 weight it carries inside the full state.
    CompassInterference {
        x_separation: f64,
        p_separation: f64,
        xi: f64,
    },
}

fn gaussian_wigner(x: f64, p: f64, x0: f64, p0: f64, xi: f64, hbar: f64) -> f64 {
    ((-(x - x0) * (x - x0) / (xi * xi)) - (p - p0) * (p - p0) * xi * xi / (hbar * hbar)).exp()
        / (PI * hbar)
}

impl WignerOracle {
    pub fn eval(&self, x: f64, p: f64, hbar: f64) -> f64 {
        match self {
            WignerOracle::Gaussian(g) => gaussian_wigner(x, p, g.x0, g.p0, g.xi, hbar),
            WignerOracle::Cat { x0, xi } => {
                let packets = 0.5 * gaussian_wigner(x, p, *x0, 0.0, *xi, hbar)
                    + 0.5 * gaussian_wigner(x, p, -*x0, 0.0, *xi, hbar);
                let ridge = gaussian_wigner(x, p, 0.0, 0.0, *xi, hbar)
                    * (2.0 * x0 * p / hbar).cos();
                packets + ridge
            }
            WignerOracle::CompassInterference {
                x_separation,
                p_separation,
                xi,
            } => {
                gaussian_wigner(x, p, 0.0, 0.0, *xi, hbar)
                    * ((p * x_separation / hbar).cos() + (x * p_separation / hbar).cos())
            }
        }
    }
}

/// The checkerboard factor cos(p*L/hbar) + cos(x*P/hbar) in factored form
/// 2 cos((P x + L p)/2hbar) cos((P x - L p)/2hbar). Its sign-change lines
/// are the two diagonal families; the fundamental periodic cell measures
/// 2*pi*hbar/P along x by 2*pi*hbar/L along p, area (2*pi*hbar)^2/(L*P).
pub fn compass_checkerboard_product(x: f64, p: f64, l: f64, pp: f64, hbar: f64) -> f64 {
    2.0 * ((pp * x + l * p) / (2.0 * hbar)).cos() * ((pp * x - l * p) / (2.0 * hbar)).cos()
}
