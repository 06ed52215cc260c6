//! Diode characterization by single-pass scattering of narrow packets.
//!
//! The trap and the quench are switched off, so the evolution is unitary and
//! a transmitted atom leaves the diode in |2⟩. Whatever leaves the diode
//! region is sorted by the sign of its momentum and removed, so nothing comes
//! round the ring again and slow resonant leakage can be followed for many
//! transit times.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use num_complex::Complex64;

use crate::grid::{gaussian_packet, GridError, RingGrid};
use crate::mcwf::SplitStepper;
use crate::params::{Mode, ParameterSet};
use crate::potentials::{assemble_potential, PotentialError};

/// Threshold of the working-range criterion.
pub const WORKING_THRESHOLD: f64 = 0.99;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiodeError {
    #[error("incident speed must be positive (got {0})")]
    BadSpeed(f64),
    #[error("packet at {v} m/s did not clear the diode region within {budget:.3e} s ({left:.3e} left inside)")]
    DidNotClear { v: f64, budget: f64, left: f64 },
    #[error("the ring leaves {have:.3e} m outside the diode region, {need:.3e} m are needed to absorb outgoing waves")]
    NoRoomToAbsorb { need: f64, have: f64 },
    #[error("empty velocity grid")]
    EmptyGrid,
    #[error("no velocity in the grid satisfies the working criterion")]
    NothingQualifies,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::LeftToRight => "left_to_right",
            Direction::RightToLeft => "right_to_left",
        })
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left_to_right" => Ok(Direction::LeftToRight),
            "right_to_left" => Ok(Direction::RightToLeft),
            _ => Err(format!("unknown direction `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringResult {
    /// Incident speed (m/s), always positive.
    pub v: f64,
    pub direction: Direction,
    pub transmission: f64,
    pub reflection: f64,
    pub loss: f64,
    /// Part of `transmission` that leaves in the upper level.
    pub transmission_excited: f64,
    /// Part of `reflection` that leaves in the ground level.
    pub reflection_ground: f64,
}

impl ScatteringResult {
    /// Signed velocity: positive for clockwise (left-to-right) incidence.
    pub fn signed_velocity(&self) -> f64 {
        match self.direction {
            Direction::LeftToRight => self.v,
            Direction::RightToLeft => -self.v,
        }
    }

    /// Fraction that does what a diode should: pass left-to-right while being
    /// pumped into |2⟩, bounce back right-to-left.
    pub fn score(&self) -> f64 {
        match self.direction {
            Direction::LeftToRight => self.transmission_excited,
            Direction::RightToLeft => self.reflection,
        }
    }

    pub fn qualifies(&self) -> bool {
        self.score() >= WORKING_THRESHOLD
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterSettings {
    /// Time step; `None` uses the run's dt.
    pub dt: Option<f64>,
    /// Characterization ring is this many times the run's ring.
    pub ring_factor: usize,
    /// Velocity spread is min(max_delta_v, delta_v_fraction·v).
    pub max_delta_v: f64,
    pub delta_v_fraction: f64,
    /// Weight left inside the region at which the packet counts as gone.
    pub clear_weight: f64,
    /// Give up after this many free transit times of the region.
    pub max_transits: f64,
}

impl Default for ScatterSettings {
    fn default() -> Self {
        ScatterSettings {
            dt: None,
            ring_factor: 1,
            max_delta_v: 0.005,
            delta_v_fraction: 0.05,
            clear_weight: 1e-5,
            max_transits: 20.0,
        }
    }
}

/// Span of the diode lasers (W₂, pump, W₁) out to 6σ.
pub fn diode_region(p: &ParameterSet) -> (f64, f64) {
    let centers = [p.x_w2, p.x_p, p.x_w1];
    let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min) - 6.0 * p.sigma;
    let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 6.0 * p.sigma;
    (lo, hi)
}

/// The run's parameters with trap and quench off on an enlarged ring.
pub fn characterization_params(p: &ParameterSet, settings: &ScatterSettings) -> ParameterSet {
    let mut q = p.clone();
    q.mode = Mode::TwoLevel;
    q.w_t_hat = 0.0;
    q.w_q_hat = 0.0;
    q.omega_q_hat = 0.0;
    q.v_rec = 0.0;
    q.ring_length = p.ring_length * settings.ring_factor as f64;
    q.grid_points = p.grid_points * settings.ring_factor;
    if let Some(dt) = settings.dt {
        q.dt = dt;
    }
    q
}

pub fn scatter(p: &ParameterSet, v: f64, direction: Direction) -> Result<ScatteringResult, DiodeError> {
    scatter_with(p, v, direction, &ScatterSettings::default())
}

pub fn scatter_with(
    p: &ParameterSet,
    v: f64,
    direction: Direction,
    settings: &ScatterSettings,
) -> Result<ScatteringResult, DiodeError> {
    if !(v > 0.0) {
        return Err(DiodeError::BadSpeed(v));
    }
    let q = characterization_params(p, settings);
    let grid = RingGrid::from_params(&q)?;
    let pot = assemble_potential(&q, &grid, Mode::TwoLevel)?;
    let hbar_over_m = q.hbar_over_m();
    let (lo, hi) = diode_region(&q);

    let delta_v = settings.max_delta_v.min(settings.delta_v_fraction * v);
    let waist = hbar_over_m / (2.0 * delta_v);
    let gap = 6.0 * waist + 2e-6;
    let (x0, v0) = match direction {
        Direction::LeftToRight => (lo - gap, v),
        Direction::RightToLeft => (hi + gap, -v),
    };
    let mut field = gaussian_packet(&grid, 2, hbar_over_m, x0, v0, delta_v, 0.0)?;

    // Outgoing weight is absorbed once the incident packet is inside.
    let t_enter = 2.0 * gap / v;
    let budget = settings.max_transits * (hi - lo) / v;
    let dt = pot.dt();
    let check_every = ((2e-6 / (v + 4.0 * delta_v)) / dt).ceil().max(1.0) as u64;
    let absorber = Absorber::new(&grid, lo, hi, gap)?;
    // Forward is the far side of the diode.
    let forward_side = match direction {
        Direction::LeftToRight => Side::Right,
        Direction::RightToLeft => Side::Left,
    };

    // split[level][0: forward, 1: backward], accumulated over absorptions.
    let mut split = [[0.0; 2]; 2];
    let mut history: Vec<[[f64; 2]; 2]> = Vec::new();
    let mut stepper = SplitStepper::new(&grid, &pot, hbar_over_m);
    let mut step: u64 = 0;
    let left = loop {
        stepper.step(&mut field);
        step += 1;
        let t = step as f64 * dt;
        if step % check_every != 0 || t < t_enter {
            continue;
        }
        for (l, level) in split.iter_mut().enumerate() {
            let (right, left) = absorber.apply(field.level_mut(l), grid.dx());
            let (f, b) = if forward_side == Side::Right { (right, left) } else { (left, right) };
            level[0] += f;
            level[1] += b;
        }
        history.push(split);
        let left = field.norm_sqr(grid.dx());
        if left < settings.clear_weight {
            break left;
        }
        if t + check_every as f64 * dt > budget {
            if left > 0.5 {
                return Err(DiodeError::DidNotClear { v, budget, left });
            }
            break left;
        }
    };

    // What is still inside leaks out through a long-lived resonance at a
    // fixed branching ratio; share it out as the last quarter of the
    // collections did.
    if let Some(early) = history.get(history.len() * 3 / 4) {
        let mut recent = [[0.0; 2]; 2];
        let mut total = 0.0;
        for l in 0..2 {
            for d in 0..2 {
                recent[l][d] = split[l][d] - early[l][d];
                total += recent[l][d];
            }
        }
        if total > 1e-12 {
            for l in 0..2 {
                for d in 0..2 {
                    split[l][d] += left * recent[l][d] / total;
                }
            }
        }
    }

    let forward = split[0][0] + split[1][0];
    let backward = split[0][1] + split[1][1];
    Ok(ScatteringResult {
        v,
        direction,
        transmission: forward,
        reflection: backward,
        transmission_excited: split[1][0],
        reflection_ground: split[0][1],
        loss: 1.0 - forward - backward,
    })
}

/// Working interval found in a sweep, with the underlying curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingRange {
    pub lo: f64,
    pub hi: f64,
    pub results: Vec<ScatteringResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

/// Smooth mask on the arc outside the diode region: transparent within
/// `buffer` of the region, then a cos² ramp down to zero.
struct Absorber {
    mask: Vec<f64>,
    side: Vec<Side>,
}

impl Absorber {
    const RAMP: f64 = 30e-6;

    fn new(grid: &RingGrid, lo: f64, hi: f64, buffer: f64) -> Result<Self, DiodeError> {
        let l = grid.length();
        let half_arc = 0.5 * (l - (hi - lo));
        let ramp = Self::RAMP.min(half_arc - buffer);
        if ramp < 0.25 * Self::RAMP {
            return Err(DiodeError::NoRoomToAbsorb {
                need: 2.0 * (buffer + 0.25 * Self::RAMP),
                have: 2.0 * half_arc,
            });
        }
        let (mut mask, mut side) = (Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()));
        for &x in grid.positions() {
            let past_hi = (x - hi).rem_euclid(l);
            let inside = lo <= x && x < hi;
            let (d, s) = if past_hi < half_arc {
                (past_hi, Side::Right)
            } else {
                (l - (hi - lo) - past_hi, Side::Left)
            };
            let m = if inside || d <= buffer {
                1.0
            } else if d < buffer + ramp {
                (0.5 * std::f64::consts::PI * (d - buffer) / ramp).cos().powi(2)
            } else {
                0.0
            };
            mask.push(m);
            side.push(s);
        }
        Ok(Absorber { mask, side })
    }

    /// Damps `psi` in place; returns the weight removed on the right and left.
    fn apply(&self, psi: &mut [Complex64], dx: f64) -> (f64, f64) {
        let (mut right, mut left) = (0.0, 0.0);
        for ((c, &m), &s) in psi.iter_mut().zip(&self.mask).zip(&self.side) {
            if m < 1.0 {
                let removed = c.norm_sqr() * (1.0 - m * m) * dx;
                match s {
                    Side::Right => right += removed,
                    Side::Left => left += removed,
                }
                *c *= m;
            }
        }
        (right, left)
    }
}

/// Working interval from a sweep: the contiguous run of qualifying signed
/// velocities that contains the slowest qualifying sample. Each edge is the
/// linear-interpolated threshold crossing towards the first failing
/// neighbour, or the outermost sample when the run reaches the sweep's end.
pub fn interval_from_results(results: &[ScatteringResult]) -> Result<(f64, f64), DiodeError> {
    if results.is_empty() {
        return Err(DiodeError::EmptyGrid);
    }
    let mut points: Vec<(f64, f64)> = results.iter().map(|r| (r.signed_velocity(), r.score())).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ok = |i: usize| points[i].1 >= WORKING_THRESHOLD;
    let seed = (0..points.len())
        .filter(|&i| ok(i))
        .min_by(|&a, &b| points[a].0.abs().total_cmp(&points[b].0.abs()))
        .ok_or(DiodeError::NothingQualifies)?;
    let mut s = seed;
    while s > 0 && ok(s - 1) {
        s -= 1;
    }
    let mut e = seed;
    while e + 1 < points.len() && ok(e + 1) {
        e += 1;
    }
    let edge = |inside: (f64, f64), outside: (f64, f64)| {
        let f = (inside.1 - WORKING_THRESHOLD) / (inside.1 - outside.1);
        inside.0 + f * (outside.0 - inside.0)
    };
    let lo = if s > 0 { edge(points[s], points[s - 1]) } else { points[s].0 };
    let hi = if e + 1 < points.len() { edge(points[e], points[e + 1]) } else { points[e].0 };
    Ok((lo, hi))
}

/// Scatters at every signed velocity of `v_grid` (positive: left-to-right,
/// negative: right-to-left; zero is skipped) and extracts the working range.
pub fn working_range(p: &ParameterSet, v_grid: &[f64]) -> Result<WorkingRange, DiodeError> {
    working_range_with(p, v_grid, &ScatterSettings::default())
}

pub fn working_range_with(
    p: &ParameterSet,
    v_grid: &[f64],
    settings: &ScatterSettings,
) -> Result<WorkingRange, DiodeError> {
    if v_grid.is_empty() {
        return Err(DiodeError::EmptyGrid);
    }
    let results = v_grid
        .par_iter()
        .filter(|&&v| v != 0.0)
        .map(|&v| {
            let dir = if v > 0.0 {
                Direction::LeftToRight
            } else {
                Direction::RightToLeft
            };
            scatter_with(p, v.abs(), dir, settings)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (lo, hi) = interval_from_results(&results)?;
    Ok(WorkingRange { lo, hi, results })
}
