//! Periodic grid on the ring, its conjugate momentum grid, and the spinor
//! wavefunction sampled on it.
//!
//! Positions are `x_j = -l/2 + j·l/n`; wavenumbers are integer multiples of
//! `2π/l` in standard DFT order. Momentum amplitudes are normalized so that
//! `|c_m|²` is the probability of mode `m`, which makes the transform unitary
//! with respect to the position norm `Σ|ψ_j|²·dx`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::params::ParameterSet;

pub const GROUND: usize = 0;
pub const EXCITED: usize = 1;
pub const AUXILIARY: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("ring length {0} must be positive")]
    BadLength(f64),
    #[error("window [{a}, {b}) is empty or outside the ring")]
    BadWindow { a: f64, b: f64 },
    #[error("initial packet does not fit the momentum grid: |k0| + 4 dk = {needed:.4e} 1/m, k_max = {k_max:.4e} 1/m")]
    PacketOutsideGrid { needed: f64, k_max: f64 },
    #[error("initial packet leaks {weight:.3e} of its weight to the momentum grid edge")]
    PacketTail { weight: f64 },
}

/// Uniform periodic grid with FFT plans for its conjugate momentum grid.
#[derive(Clone)]
pub struct RingGrid {
    n: usize,
    length: f64,
    dx: f64,
    x: Vec<f64>,
    k: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for RingGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RingGrid")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl RingGrid {
    pub fn new(n: usize, length: f64) -> Result<Self, GridError> {
        if !n.is_power_of_two() || n < 2 {
            return Err(GridError::NotPowerOfTwo(n));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(GridError::BadLength(length));
        }
        let dx = length / n as f64;
        let x = (0..n).map(|j| -0.5 * length + j as f64 * dx).collect();
        let dk = 2.0 * PI / length;
        let k = (0..n)
            .map(|m| {
                let signed = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
                signed * dk
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        Ok(RingGrid {
            n,
            length,
            dx,
            x,
            k,
            fft,
            ifft,
        })
    }

    pub fn from_params(p: &ParameterSet) -> Result<Self, GridError> {
        Self::new(p.grid_points, p.ring_length)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Mode spacing 2π/l.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Magnitude of the Nyquist wavenumber.
    pub fn k_max(&self) -> f64 {
        PI * self.n as f64 / self.length
    }

    pub fn positions(&self) -> &[f64] {
        &self.x
    }

    /// Wavenumbers in DFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    /// Mode indices sorted by increasing wavenumber.
    pub fn ascending_modes(&self) -> impl Iterator<Item = usize> + '_ {
        (self.n / 2..self.n).chain(0..self.n / 2)
    }

    pub(crate) fn fft(&self) -> &Arc<dyn Fft<f64>> {
        &self.fft
    }

    pub(crate) fn ifft(&self) -> &Arc<dyn Fft<f64>> {
        &self.ifft
    }

    pub fn scratch(&self) -> Vec<Complex64> {
        let len = self
            .fft
            .get_inplace_scratch_len()
            .max(self.ifft.get_inplace_scratch_len());
        vec![Complex64::new(0.0, 0.0); len]
    }

    /// Position amplitudes → unitary momentum amplitudes, in place.
    pub fn forward_in_place(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        self.fft.process_with_scratch(data, scratch);
        let scale = (self.dx / self.n as f64).sqrt();
        for (m, c) in data.iter_mut().enumerate() {
            // e^{i k_m l/2} = (-1)^m accounts for the grid starting at -l/2.
            *c *= if m % 2 == 0 { scale } else { -scale };
        }
    }

    /// Inverse of [`RingGrid::forward_in_place`].
    pub fn inverse_in_place(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        let scale = 1.0 / (self.dx * self.n as f64).sqrt();
        for (m, c) in data.iter_mut().enumerate() {
            *c *= if m % 2 == 0 { scale } else { -scale };
        }
        self.ifft.process_with_scratch(data, scratch);
    }
}

/// Two- or three-level wavefunction on the grid, one amplitude array per level.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    levels: Vec<Vec<Complex64>>,
}

impl SpinorField {
    pub fn zeros(n_levels: usize, n: usize) -> Self {
        assert!((2..=3).contains(&n_levels), "spinor needs 2 or 3 levels");
        SpinorField {
            levels: vec![vec![Complex64::new(0.0, 0.0); n]; n_levels],
        }
    }

    pub fn from_levels(levels: Vec<Vec<Complex64>>) -> Self {
        assert!((2..=3).contains(&levels.len()), "spinor needs 2 or 3 levels");
        let n = levels[0].len();
        assert!(levels.iter().all(|l| l.len() == n), "levels differ in length");
        SpinorField { levels }
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn len(&self) -> usize {
        self.levels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels[0].is_empty()
    }

    pub fn level(&self, i: usize) -> &[Complex64] {
        &self.levels[i]
    }

    pub fn level_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.levels[i]
    }

    pub fn levels_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.levels
    }

    /// Σ_j |ψ_level(x_j)|² · weight (weight = dx in position space, 1 in momentum space).
    pub fn level_weight(&self, i: usize, weight: f64) -> f64 {
        self.levels[i].iter().map(|c| c.norm_sqr()).sum::<f64>() * weight
    }

    pub fn norm_sqr(&self, weight: f64) -> f64 {
        (0..self.n_levels()).map(|i| self.level_weight(i, weight)).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for level in &mut self.levels {
            for c in level.iter_mut() {
                *c *= factor;
            }
        }
    }

    /// Rescales to unit norm and returns the squared norm it had before.
    pub fn normalize(&mut self, weight: f64) -> f64 {
        let norm = self.norm_sqr(weight);
        if norm > 0.0 {
            self.scale(1.0 / norm.sqrt());
        }
        norm
    }
}

/// Unitary DFT of each level; the result holds momentum-mode amplitudes.
pub fn to_momentum(field: &SpinorField, grid: &RingGrid) -> SpinorField {
    let mut out = field.clone();
    let mut scratch = grid.scratch();
    for level in out.levels_mut() {
        grid.forward_in_place(level, &mut scratch);
    }
    out
}

/// Inverse of [`to_momentum`].
pub fn to_position(field: &SpinorField, grid: &RingGrid) -> SpinorField {
    let mut out = field.clone();
    let mut scratch = grid.scratch();
    for level in out.levels_mut() {
        grid.inverse_in_place(level, &mut scratch);
    }
    out
}

/// Analytic position spread of the initial packet,
/// sqrt((1/(2Δk))² + (ħΔk t₀/m)²).
pub fn initial_position_std(p: &ParameterSet) -> f64 {
    let dk = p.delta_v / p.hbar_over_m();
    let waist = 1.0 / (2.0 * dk);
    let spread = p.delta_v * p.t0;
    (waist * waist + spread * spread).sqrt()
}

/// Ground-state Gaussian packet with mean velocity `v0` and spread `delta_v`,
/// prepared so that it is centered at `x0` after free flight for `t0`.
pub fn gaussian_packet(
    grid: &RingGrid,
    n_levels: usize,
    hbar_over_m: f64,
    x0: f64,
    v0: f64,
    delta_v: f64,
    t0: f64,
) -> Result<SpinorField, GridError> {
    let k0 = v0 / hbar_over_m;
    let dk = delta_v / hbar_over_m;
    let needed = k0.abs() + 4.0 * dk;
    if needed >= grid.k_max() {
        return Err(GridError::PacketOutsideGrid {
            needed,
            k_max: grid.k_max(),
        });
    }
    let norm = (2.0 * PI).powf(-0.25) / dk.sqrt();
    let centre = x0 - hbar_over_m * t0 * k0;
    let mut amplitudes: Vec<Complex64> = grid
        .wavenumbers()
        .iter()
        .map(|&k| {
            let d = k - k0;
            let re = -d * d / (4.0 * dk * dk);
            let im = -d * centre - 0.5 * hbar_over_m * t0 * k * k;
            // sqrt(2π/l) turns the continuum amplitude into a mode amplitude.
            Complex64::from_polar(norm * re.exp() * (grid.dk()).sqrt(), im)
        })
        .collect();

    let edge = grid.len() / 20;
    let tail: f64 = grid
        .ascending_modes()
        .take(edge.max(1))
        .chain(grid.ascending_modes().skip(grid.len() - edge.max(1)))
        .map(|m| amplitudes[m].norm_sqr())
        .sum();
    if tail > 1e-8 {
        return Err(GridError::PacketTail { weight: tail });
    }

    let mut scratch = grid.scratch();
    grid.inverse_in_place(&mut amplitudes, &mut scratch);
    let mut levels = vec![amplitudes];
    for _ in 1..n_levels {
        levels.push(vec![Complex64::new(0.0, 0.0); grid.len()]);
    }
    let mut field = SpinorField::from_levels(levels);
    field.normalize(grid.dx());
    Ok(field)
}

/// Initial wave packet of a run, in level |1⟩.
pub fn build_initial_packet(p: &ParameterSet, grid: &RingGrid) -> Result<SpinorField, GridError> {
    gaussian_packet(
        grid,
        p.mode.levels(),
        p.hbar_over_m(),
        p.x0,
        p.v0,
        p.delta_v,
        p.t0,
    )
}

/// Σ over `levels` of |ψ(x_j)|², per grid point.
pub fn position_density(field: &SpinorField, levels: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    for &lvl in levels {
        for (o, c) in out.iter_mut().zip(field.level(lvl)) {
            *o += c.norm_sqr();
        }
    }
    out
}

/// Probability per momentum mode (DFT order), summed over `levels`.
pub fn momentum_weights(field: &SpinorField, grid: &RingGrid, levels: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); field.len()];
    let mut scratch = grid.scratch();
    for &lvl in levels {
        buf.copy_from_slice(field.level(lvl));
        grid.forward_in_place(&mut buf, &mut scratch);
        for (o, c) in out.iter_mut().zip(&buf) {
            *o += c.norm_sqr();
        }
    }
    out
}

/// dx·Σ density over grid points with a ≤ x_j < b.
pub fn windowed_probability(
    density: &[f64],
    grid: &RingGrid,
    a: f64,
    b: f64,
) -> Result<f64, GridError> {
    let half = 0.5 * grid.length();
    if !(a < b && a >= -half && b <= half) {
        return Err(GridError::BadWindow { a, b });
    }
    Ok(grid
        .positions()
        .iter()
        .zip(density)
        .filter(|(&x, _)| a <= x && x < b)
        .map(|(_, &d)| d)
        .sum::<f64>()
        * grid.dx())
}
