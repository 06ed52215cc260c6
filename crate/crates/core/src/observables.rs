//! Trajectory observables and their ensemble averages.
//!
//! Every quantity here is linear in the trajectory's projector |ψ⟩⟨ψ|, so the
//! ensemble mean of per-trajectory values is the master-equation expectation
//! value. Errors follow the N vs N/2 convention: |mean over all − mean over the
//! first half|.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classical::sample_times;
use crate::grid::{momentum_weights, position_density, windowed_probability, GridError, RingGrid, SpinorField, GROUND};
use crate::mcwf::{run_trajectory, trajectory_rng, EngineError, JumpSample, OBSERVED_LEVELS};
use crate::params::ParameterSet;
use crate::potentials::assemble_potential;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("need at least 2 trajectories for the error estimate, have {0}")]
    TooFewTrajectories(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Ground-state probability inside [x_min, x_max).
pub fn trapping_probability_x(
    f: &SpinorField,
    grid: &RingGrid,
    x_min: f64,
    x_max: f64,
) -> Result<f64, GridError> {
    windowed_probability(&position_density(f, &[GROUND]), grid, x_min, x_max)
}

/// Ground-state probability of the modes with |ħk/m| < v_T (strict).
pub fn trapping_probability_v(f: &SpinorField, grid: &RingGrid, v_trap: f64, hbar_over_m: f64) -> f64 {
    momentum_weights(f, grid, &[GROUND])
        .iter()
        .zip(grid.wavenumbers())
        .filter(|(_, &k)| (hbar_over_m * k).abs() < v_trap)
        .map(|(w, _)| w)
        .sum()
}

/// p(x) per grid point (1/m) and p(v) per mode in ascending velocity (s/m),
/// both over levels 1 and 2.
pub fn density_pair(f: &SpinorField, grid: &RingGrid, hbar_over_m: f64) -> (Vec<f64>, Vec<f64>) {
    let px = position_density(f, &OBSERVED_LEVELS);
    let w = momentum_weights(f, grid, &OBSERVED_LEVELS);
    let dv = hbar_over_m * grid.dk();
    let pv = grid.ascending_modes().map(|m| w[m] / dv).collect();
    (px, pv)
}

/// Velocities of the modes in ascending order.
pub fn mode_velocities(grid: &RingGrid, hbar_over_m: f64) -> Vec<f64> {
    grid.ascending_modes()
        .map(|m| hbar_over_m * grid.wavenumbers()[m])
        .collect()
}

/// Per-level densities: `x[level][j]` in 1/m, `v[level][mode]` in s/m (ascending v).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDensities {
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl LevelDensities {
    pub fn of(f: &SpinorField, grid: &RingGrid, hbar_over_m: f64) -> Self {
        let dv = hbar_over_m * grid.dk();
        let levels = 0..f.n_levels();
        LevelDensities {
            x: levels.clone().map(|l| position_density(f, &[l])).collect(),
            v: levels
                .map(|l| {
                    let w = momentum_weights(f, grid, &[l]);
                    grid.ascending_modes().map(|m| w[m] / dv).collect()
                })
                .collect(),
        }
    }

    fn zeros_like(&self) -> Self {
        LevelDensities {
            x: self.x.iter().map(|a| vec![0.0; a.len()]).collect(),
            v: self.v.iter().map(|a| vec![0.0; a.len()]).collect(),
        }
    }

    fn add(&mut self, other: &Self) {
        for (a, b) in self.x.iter_mut().zip(&other.x).chain(self.v.iter_mut().zip(&other.v)) {
            for (s, o) in a.iter_mut().zip(b) {
                *s += o;
            }
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        let f = |arrs: &Vec<Vec<f64>>| arrs.iter().map(|a| a.iter().map(|v| v * factor).collect()).collect();
        LevelDensities {
            x: f(&self.x),
            v: f(&self.v),
        }
    }
}

/// Uniform bins over [lo, hi); values are densities (probability per unit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Binning {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins)
            .map(|b| self.lo + (b as f64 + 0.5) * self.width())
            .collect()
    }

    /// Histogram of (coordinate, probability) pairs, divided by the bin width.
    /// Probability outside the range is dropped.
    pub fn histogram(&self, items: impl Iterator<Item = (f64, f64)>) -> Vec<f64> {
        let mut out = vec![0.0; self.bins];
        let w = self.width();
        for (c, prob) in items {
            let b = ((c - self.lo) / w).floor();
            if b >= 0.0 && (b as usize) < self.bins {
                out[b as usize] += prob / w;
            }
        }
        out
    }
}

/// Observables recorded for one trajectory at every sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySamples {
    pub p_tx: Vec<f64>,
    pub p_tv: Vec<f64>,
    /// Level 1 + 2 weight, the integral of p(x).
    pub observed_weight: Vec<f64>,
    pub x_map: Vec<Vec<f64>>,
    pub v_map: Vec<Vec<f64>>,
    pub initial: LevelDensities,
    pub last: LevelDensities,
    pub jumps: Vec<JumpSample>,
}

/// Settings shared by all trajectories of an ensemble.
#[derive(Debug, Clone)]
pub struct ObservableSetup {
    pub times: Vec<f64>,
    pub x_bins: Binning,
    pub v_bins: Binning,
    pub v_trap: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub hbar_over_m: f64,
}

impl ObservableSetup {
    pub fn from_params(p: &ParameterSet) -> Self {
        let half = 0.5 * p.ring_length;
        let v_span = p.v0.abs() + 5.0 * p.delta_v + p.v_rec;
        ObservableSetup {
            times: sample_times(p.t_final, p.sample_interval),
            x_bins: Binning {
                lo: -half,
                hi: half,
                bins: p.density_bins,
            },
            v_bins: Binning {
                lo: -v_span,
                hi: v_span,
                bins: p.density_bins,
            },
            v_trap: p.trap_velocity(),
            x_min: p.x_min,
            x_max: p.x_max,
            hbar_over_m: p.hbar_over_m(),
        }
    }

    fn record(&self, grid: &RingGrid, f: &SpinorField, into: &mut TrajectorySamples) -> Result<(), GridError> {
        into.p_tx.push(trapping_probability_x(f, grid, self.x_min, self.x_max)?);
        into.p_tv.push(trapping_probability_v(f, grid, self.v_trap, self.hbar_over_m));
        let (px, pv) = density_pair(f, grid, self.hbar_over_m);
        into.observed_weight.push(px.iter().sum::<f64>() * grid.dx());
        let dx = grid.dx();
        into.x_map.push(
            self.x_bins
                .histogram(grid.positions().iter().zip(&px).map(|(&x, &d)| (x, d * dx))),
        );
        let dv = self.hbar_over_m * grid.dk();
        let vs = mode_velocities(grid, self.hbar_over_m);
        into.v_map
            .push(self.v_bins.histogram(vs.iter().zip(&pv).map(|(&v, &d)| (v, d * dv))));
        Ok(())
    }
}

/// Runs trajectory `index` of the ensemble and records its observables.
pub fn sample_trajectory(
    p: &ParameterSet,
    grid: &RingGrid,
    pot: &crate::potentials::PotentialTable,
    setup: &ObservableSetup,
    index: u64,
) -> Result<TrajectorySamples, EngineError> {
    let mut rng = trajectory_rng(p.rng_seed, index);
    let mut samples = TrajectorySamples {
        p_tx: Vec::with_capacity(setup.times.len()),
        p_tv: Vec::with_capacity(setup.times.len()),
        observed_weight: Vec::with_capacity(setup.times.len()),
        x_map: Vec::with_capacity(setup.times.len()),
        v_map: Vec::with_capacity(setup.times.len()),
        initial: LevelDensities { x: vec![], v: vec![] },
        last: LevelDensities { x: vec![], v: vec![] },
        jumps: vec![],
    };
    let mut failure: Option<GridError> = None;
    let record = run_trajectory(p, pot, grid, &mut rng, |t, f| {
        if failure.is_some() {
            return;
        }
        if t == 0.0 {
            samples.initial = LevelDensities::of(f, grid, setup.hbar_over_m);
        }
        if let Err(e) = setup.record(grid, f, &mut samples) {
            failure = Some(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    samples.last = LevelDensities::of(&record.final_field, grid, setup.hbar_over_m);
    samples.jumps = record.jumps;
    Ok(samples)
}

/// Running sums over trajectories, added strictly in trajectory-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAccumulator {
    pub times: Vec<f64>,
    count: usize,
    half: usize,
    sum_tx: Vec<f64>,
    sum_tv: Vec<f64>,
    sq_tx: Vec<f64>,
    sq_tv: Vec<f64>,
    half_tx: Vec<f64>,
    half_tv: Vec<f64>,
    sum_weight: Vec<f64>,
    sum_x_map: Vec<Vec<f64>>,
    sum_v_map: Vec<Vec<f64>>,
    initial: Option<LevelDensities>,
    last: Option<LevelDensities>,
}

/// Ensemble means and N vs N/2 errors per sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub n: usize,
    pub p_tx_mean: Vec<f64>,
    pub p_tx_err: Vec<f64>,
    pub p_tv_mean: Vec<f64>,
    pub p_tv_err: Vec<f64>,
    /// Standard errors of the mean, for diagnostics.
    pub p_tx_sem: Vec<f64>,
    pub p_tv_sem: Vec<f64>,
    pub observed_weight: Vec<f64>,
}

impl EnsembleAccumulator {
    /// `expected` is the final trajectory count; it fixes which trajectories
    /// form the first half.
    pub fn new(times: Vec<f64>, expected: usize) -> Self {
        let n = times.len();
        EnsembleAccumulator {
            times,
            count: 0,
            half: expected / 2,
            sum_tx: vec![0.0; n],
            sum_tv: vec![0.0; n],
            sq_tx: vec![0.0; n],
            sq_tv: vec![0.0; n],
            half_tx: vec![0.0; n],
            half_tv: vec![0.0; n],
            sum_weight: vec![0.0; n],
            sum_x_map: vec![],
            sum_v_map: vec![],
            initial: None,
            last: None,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds the time series of one trajectory (the next in index order).
    pub fn add_series(&mut self, p_tx: &[f64], p_tv: &[f64]) {
        assert_eq!(p_tx.len(), self.times.len());
        assert_eq!(p_tv.len(), self.times.len());
        let in_half = self.count < self.half;
        for i in 0..self.times.len() {
            self.sum_tx[i] += p_tx[i];
            self.sum_tv[i] += p_tv[i];
            self.sq_tx[i] += p_tx[i] * p_tx[i];
            self.sq_tv[i] += p_tv[i] * p_tv[i];
            if in_half {
                self.half_tx[i] += p_tx[i];
                self.half_tv[i] += p_tv[i];
            }
        }
        self.count += 1;
    }

    pub fn add(&mut self, s: &TrajectorySamples) {
        self.add_series(&s.p_tx, &s.p_tv);
        for (a, b) in self.sum_weight.iter_mut().zip(&s.observed_weight) {
            *a += b;
        }
        add_maps(&mut self.sum_x_map, &s.x_map);
        add_maps(&mut self.sum_v_map, &s.v_map);
        for (slot, d) in [(&mut self.initial, &s.initial), (&mut self.last, &s.last)] {
            slot.get_or_insert_with(|| d.zeros_like()).add(d);
        }
    }

    pub fn summary(&self) -> Result<EnsembleSummary, ObservableError> {
        let (tx_err, tv_err) = half_sample_error(self)?;
        let n = self.count as f64;
        let mean = |s: &[f64]| s.iter().map(|v| v / n).collect::<Vec<_>>();
        let sem = |s: &[f64], q: &[f64]| {
            s.iter()
                .zip(q)
                .map(|(s, q)| {
                    let m = s / n;
                    ((q / n - m * m).max(0.0) / (n - 1.0)).sqrt()
                })
                .collect::<Vec<_>>()
        };
        Ok(EnsembleSummary {
            times: self.times.clone(),
            n: self.count,
            p_tx_mean: mean(&self.sum_tx),
            p_tx_err: tx_err,
            p_tv_mean: mean(&self.sum_tv),
            p_tv_err: tv_err,
            p_tx_sem: sem(&self.sum_tx, &self.sq_tx),
            p_tv_sem: sem(&self.sum_tv, &self.sq_tv),
            observed_weight: mean(&self.sum_weight),
        })
    }

    /// Mean binned p(x) per sample time.
    pub fn x_map(&self) -> Vec<Vec<f64>> {
        scale_maps(&self.sum_x_map, 1.0 / self.count.max(1) as f64)
    }

    pub fn v_map(&self) -> Vec<Vec<f64>> {
        scale_maps(&self.sum_v_map, 1.0 / self.count.max(1) as f64)
    }

    pub fn initial_densities(&self) -> Option<LevelDensities> {
        self.initial.as_ref().map(|d| d.scaled(1.0 / self.count as f64))
    }

    pub fn final_densities(&self) -> Option<LevelDensities> {
        self.last.as_ref().map(|d| d.scaled(1.0 / self.count as f64))
    }
}

fn add_maps(sum: &mut Vec<Vec<f64>>, add: &[Vec<f64>]) {
    if sum.is_empty() {
        *sum = add.iter().map(|r| vec![0.0; r.len()]).collect();
    }
    for (a, b) in sum.iter_mut().zip(add) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}

fn scale_maps(m: &[Vec<f64>], f: f64) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.iter().map(|v| v * f).collect()).collect()
}

/// |mean over N − mean over the first ⌊N/2⌋| for P_{T,x} and P_{T,v}.
pub fn half_sample_error(acc: &EnsembleAccumulator) -> Result<(Vec<f64>, Vec<f64>), ObservableError> {
    if acc.count < 2 {
        return Err(ObservableError::TooFewTrajectories(acc.count));
    }
    let n = acc.count as f64;
    let h = acc.half.min(acc.count) as f64;
    let err = |all: &[f64], half: &[f64]| all.iter().zip(half).map(|(a, b)| (a / n - b / h).abs()).collect();
    Ok((err(&acc.sum_tx, &acc.half_tx), err(&acc.sum_tv, &acc.half_tv)))
}

/// Everything an ensemble run produces.
#[derive(Debug, Clone)]
pub struct QuantumEnsembleResult {
    pub setup: ObservableSetup,
    pub accumulator: EnsembleAccumulator,
    pub jump_logs: Vec<Vec<JumpSample>>,
    pub grid: RingGrid,
}

/// Runs `n_trajectories` trajectories on the current rayon pool. Trajectories
/// are computed in batches but always accumulated in index order, so results
/// do not depend on the number of workers.
pub fn run_quantum_ensemble(p: &ParameterSet) -> Result<QuantumEnsembleResult, EngineError> {
    run_quantum_ensemble_with(p, |_, _| {})
}

/// As [`run_quantum_ensemble`], calling `progress(index, samples)` after each
/// trajectory is accumulated.
pub fn run_quantum_ensemble_with<F>(p: &ParameterSet, mut progress: F) -> Result<QuantumEnsembleResult, EngineError>
where
    F: FnMut(usize, &TrajectorySamples),
{
    if !p.mode.is_quantum() {
        return Err(EngineError::NotQuantum(p.mode));
    }
    let grid = RingGrid::from_params(p)?;
    let pot = assemble_potential(p, &grid, p.mode)?;
    let setup = ObservableSetup::from_params(p);
    let mut acc = EnsembleAccumulator::new(setup.times.clone(), p.n_trajectories);
    let mut jump_logs = Vec::with_capacity(p.n_trajectories);
    let batch = rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < p.n_trajectories {
        let end = (start + batch).min(p.n_trajectories);
        let results: Vec<Result<TrajectorySamples, EngineError>> = (start..end)
            .into_par_iter()
            .map(|i| sample_trajectory(p, &grid, &pot, &setup, i as u64))
            .collect();
        for (offset, r) in results.into_iter().enumerate() {
            let mut s = r?;
            acc.add(&s);
            progress(start + offset, &s);
            jump_logs.push(std::mem::take(&mut s.jumps));
        }
        start = end;
    }
    Ok(QuantumEnsembleResult {
        setup,
        accumulator: acc,
        jump_logs,
        grid,
    })
}
