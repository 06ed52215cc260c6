//! Monte Carlo wave-function trajectories.
//!
//! Between jumps the spinor evolves under the non-Hermitian effective
//! Hamiltonian with a Strang split step (potential half step, exact kinetic
//! step in momentum space, potential half step). The squared norm is the
//! survival probability; a jump happens once it falls below a uniform
//! threshold drawn after the previous jump. At a jump the excited amplitude
//! is transferred to the ground state with a recoil phase `e^{i m v_rec u x/ħ}`,
//! `u` having density (3/8)(1+u²) on [−1, 1].

use num_complex::Complex64;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{build_initial_packet, GridError, RingGrid, SpinorField, AUXILIARY, EXCITED, GROUND};
use crate::params::{Mode, ParameterSet};
use crate::potentials::{PotentialError, PotentialTable, Propagators};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("numerical blow-up at t = {t:.6e} s: squared norm {survival}")]
    Blowup { t: f64, survival: f64 },
    #[error("reset at t = {t:.6e} s produced a zero wavefunction")]
    ZeroReset { t: f64 },
    #[error("mode {0} is not a quantum mode")]
    NotQuantum(Mode),
    #[error("field has {field} levels but the potential has {table}")]
    LevelMismatch { field: usize, table: usize },
    #[error("time step {dt} does not divide {what} = {value}")]
    Incommensurate { what: &'static str, value: f64, dt: f64 },
}

/// Per-trajectory random stream, independent of scheduling.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws the emission direction cosine u by rejection from (3/8)(1+u²).
pub fn sample_recoil<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random_range(-1.0..=1.0);
        let accept: f64 = rng.random();
        if accept < 0.5 * (1.0 + u * u) {
            return u;
        }
    }
}

/// Uniform draw on the open interval (0, 1).
pub fn draw_threshold<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

/// One Strang step of fixed size applied in place.
#[derive(Clone)]
pub struct SplitStepper {
    grid: RingGrid,
    table: PotentialTable,
    kinetic: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SplitStepper {
    pub fn new(grid: &RingGrid, table: &PotentialTable, hbar_over_m: f64) -> Self {
        let dt = table.dt();
        let inv_n = 1.0 / grid.len() as f64;
        let kinetic = grid
            .wavenumbers()
            .iter()
            .map(|&k| Complex64::from_polar(inv_n, -0.5 * hbar_over_m * k * k * dt))
            .collect();
        SplitStepper {
            grid: grid.clone(),
            table: table.clone(),
            kinetic,
            scratch: grid.scratch(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.table.dt()
    }

    pub fn table(&self) -> &PotentialTable {
        &self.table
    }

    /// Advances `field` by one step and returns its new squared norm.
    pub fn step(&mut self, field: &mut SpinorField) -> f64 {
        self.apply_potential(field);
        let fft = self.grid.fft().clone();
        let ifft = self.grid.ifft().clone();
        for level in field.levels_mut() {
            fft.process_with_scratch(level, &mut self.scratch);
            for (c, k) in level.iter_mut().zip(&self.kinetic) {
                *c *= k;
            }
            ifft.process_with_scratch(level, &mut self.scratch);
        }
        self.apply_potential(field) * self.grid.dx()
    }

    /// Applies the half-step propagator pointwise; returns Σ|ψ|² afterwards.
    fn apply_potential(&self, field: &mut SpinorField) -> f64 {
        let mut norm = 0.0;
        match (self.table.half_step(), field.levels_mut()) {
            (Propagators::Two(props), [a, b]) => {
                for ((p, x), y) in props.iter().zip(a.iter_mut()).zip(b.iter_mut()) {
                    let (u, v) = (*x, *y);
                    *x = p[0][0] * u + p[0][1] * v;
                    *y = p[1][0] * u + p[1][1] * v;
                    norm += x.norm_sqr() + y.norm_sqr();
                }
            }
            (Propagators::Three(props), [a, b, c]) => {
                for (((p, x), y), z) in props
                    .iter()
                    .zip(a.iter_mut())
                    .zip(b.iter_mut())
                    .zip(c.iter_mut())
                {
                    let (u, v, w) = (*x, *y, *z);
                    *x = p[0][0] * u + p[0][1] * v + p[0][2] * w;
                    *y = p[1][0] * u + p[1][1] * v + p[1][2] * w;
                    *z = p[2][0] * u + p[2][1] * v + p[2][2] * w;
                    norm += x.norm_sqr() + y.norm_sqr() + z.norm_sqr();
                }
            }
            _ => panic!("field and potential table disagree on the number of levels"),
        }
        norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpSample {
    pub t_jump: f64,
    pub u: f64,
}

/// State of one trajectory; `field` is not renormalized between jumps.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub field: SpinorField,
    pub t: f64,
    pub survival: f64,
    pub jump_threshold: f64,
    pub jump_log: Vec<JumpSample>,
}

impl TrajectoryState {
    pub fn new(field: SpinorField, jump_threshold: f64, dx: f64) -> Self {
        let survival = field.norm_sqr(dx);
        TrajectoryState {
            field,
            t: 0.0,
            survival,
            jump_threshold,
            jump_log: Vec::new(),
        }
    }

    pub fn normalized_field(&self) -> SpinorField {
        let mut f = self.field.clone();
        if self.survival > 0.0 {
            f.scale(1.0 / self.survival.sqrt());
        }
        f
    }
}

/// Advances the state by one step and updates its survival.
pub fn split_step(s: &mut TrajectoryState, stepper: &mut SplitStepper) {
    s.survival = stepper.step(&mut s.field);
    s.t += stepper.dt();
}

pub fn detect_jump(s: &TrajectoryState) -> bool {
    s.survival <= s.jump_threshold
}

/// Recoil handling shared by every reset of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoilSettings {
    /// m·v_rec/ħ (1/m).
    pub kick_wavenumber: f64,
    /// Round the kick to a multiple of the ring's mode spacing.
    pub commensurate: bool,
}

impl RecoilSettings {
    pub fn from_params(p: &ParameterSet) -> Self {
        RecoilSettings {
            kick_wavenumber: p.v_rec / p.hbar_over_m(),
            commensurate: p.commensurate_recoil,
        }
    }

    pub fn kick(&self, u: f64, grid: &RingGrid) -> f64 {
        let k = self.kick_wavenumber * u;
        if self.commensurate {
            (k / grid.dk()).round() * grid.dk()
        } else {
            k
        }
    }
}

/// Quantum jump: moves the decaying amplitude into |1⟩ with the recoil phase,
/// clears the other levels, renormalizes and draws the next threshold.
pub fn apply_reset<R: Rng + ?Sized>(
    s: &mut TrajectoryState,
    u: f64,
    pot: &PotentialTable,
    grid: &RingGrid,
    recoil: &RecoilSettings,
    rng: &mut R,
) -> Result<(), EngineError> {
    let kick = recoil.kick(u, grid);
    let levels = s.field.levels_mut();
    let zero = Complex64::new(0.0, 0.0);
    match levels.len() {
        2 => {
            let w_q = &pot.profiles().w_q;
            let (ground, rest) = levels.split_at_mut(1);
            for (((g, e), &x), &w) in ground[0]
                .iter_mut()
                .zip(rest[0].iter_mut())
                .zip(grid.positions())
                .zip(w_q)
            {
                // −i·sqrt(W_Q)·e^{iκux}
                let factor = Complex64::from_polar(w.max(0.0).sqrt(), kick * x - std::f64::consts::FRAC_PI_2);
                *g = factor * *e;
                *e = zero;
            }
        }
        3 => {
            let (ground, rest) = levels.split_at_mut(1);
            let (excited, aux) = rest.split_at_mut(1);
            for (((g, e), a), &x) in ground[0]
                .iter_mut()
                .zip(excited[0].iter_mut())
                .zip(aux[0].iter_mut())
                .zip(grid.positions())
            {
                *g = Complex64::from_polar(1.0, kick * x) * *a;
                *e = zero;
                *a = zero;
            }
        }
        _ => unreachable!("spinor has 2 or 3 levels"),
    }
    let norm = s.field.normalize(grid.dx());
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(EngineError::ZeroReset { t: s.t });
    }
    s.survival = 1.0;
    s.jump_log.push(JumpSample { t_jump: s.t, u });
    s.jump_threshold = draw_threshold(rng);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub jumps: Vec<JumpSample>,
    /// Final field, normalized.
    pub final_field: SpinorField,
    pub steps: u64,
}

fn steps_for(what: &'static str, value: f64, dt: f64) -> Result<u64, EngineError> {
    let ratio = value / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-6 * ratio.max(1.0) {
        return Err(EngineError::Incommensurate { what, value, dt });
    }
    Ok(n as u64)
}

/// Integrates one trajectory from the initial packet to `p.t_final`.
///
/// `observer(t, field)` sees a normalized copy of the field at `t = 0`,
/// every `p.sample_interval` thereafter, and at `t_final`.
pub fn run_trajectory<R, F>(
    p: &ParameterSet,
    pot: &PotentialTable,
    grid: &RingGrid,
    rng: &mut R,
    observer: F,
) -> Result<TrajectoryRecord, EngineError>
where
    R: Rng + ?Sized,
    F: FnMut(f64, &SpinorField),
{
    if !p.mode.is_quantum() {
        return Err(EngineError::NotQuantum(p.mode));
    }
    let field = build_initial_packet(p, grid)?;
    run_from_field(p, pot, grid, field, rng, observer)
}

/// Same as [`run_trajectory`] but starting from an arbitrary field.
pub fn run_from_field<R, F>(
    p: &ParameterSet,
    pot: &PotentialTable,
    grid: &RingGrid,
    field: SpinorField,
    rng: &mut R,
    mut observer: F,
) -> Result<TrajectoryRecord, EngineError>
where
    R: Rng + ?Sized,
    F: FnMut(f64, &SpinorField),
{
    if field.n_levels() != pot.n_levels() {
        return Err(EngineError::LevelMismatch {
            field: field.n_levels(),
            table: pot.n_levels(),
        });
    }
    let n_steps = steps_for("t_final", p.t_final, pot.dt())?;
    let every = steps_for("sample_interval", p.sample_interval, pot.dt())?.max(1);
    let recoil = RecoilSettings::from_params(p);
    let hbar_over_m = p.hbar_over_m();

    let mut stepper = SplitStepper::new(grid, pot, hbar_over_m);
    let mut refiners: Vec<SplitStepper> = (1..=p.jump_bisection_depth)
        .map(|j| SplitStepper::new(grid, &pot.with_dt(pot.dt() / f64::from(1u32 << j)), hbar_over_m))
        .collect();

    let threshold = draw_threshold(rng);
    let mut s = TrajectoryState::new(field, threshold, grid.dx());
    observer(0.0, &s.normalized_field());

    let mut saved: Option<(SpinorField, f64)> = None;
    for step in 1..=n_steps {
        if !refiners.is_empty() {
            saved = Some((s.field.clone(), s.survival));
        }
        split_step(&mut s, &mut stepper);
        s.t = step as f64 * pot.dt();
        if !(s.survival <= 1.0 + 1e-6) {
            return Err(EngineError::Blowup {
                t: s.t,
                survival: s.survival,
            });
        }
        if detect_jump(&s) {
            let u = sample_recoil(rng);
            if let Some((field, survival)) = saved.take() {
                s.field = field;
                s.survival = survival;
                s.t = (step - 1) as f64 * pot.dt();
                locate_jump(&mut s, &mut refiners);
                apply_reset(&mut s, u, pot, grid, &recoil, rng)?;
                realign(&mut s, &mut refiners, step as f64 * pot.dt());
                s.t = step as f64 * pot.dt();
            } else {
                apply_reset(&mut s, u, pot, grid, &recoil, rng)?;
            }
        }
        if step % every == 0 || step == n_steps {
            observer(s.t, &s.normalized_field());
        }
    }
    let final_field = s.normalized_field();
    Ok(TrajectoryRecord {
        jumps: s.jump_log,
        final_field,
        steps: n_steps,
    })
}

/// Bisects the step in which the threshold was crossed using the finer
/// steppers; leaves the state at the end of the finest crossing sub-step.
fn locate_jump(s: &mut TrajectoryState, refiners: &mut [SplitStepper]) {
    let last = refiners.len() - 1;
    for (j, stepper) in refiners.iter_mut().enumerate() {
        let before = (s.field.clone(), s.survival, s.t);
        split_step(s, stepper);
        if detect_jump(s) {
            if j == last {
                return;
            }
            (s.field, s.survival, s.t) = before;
        }
    }
    // Not crossed on the finest level: the crossing is in the final sub-interval.
    split_step(s, &mut refiners[last]);
}

/// Steps forward in binary fractions of dt until `target` is reached.
fn realign(s: &mut TrajectoryState, refiners: &mut [SplitStepper], target: f64) {
    for stepper in refiners.iter_mut() {
        if target - s.t >= stepper.dt() * (1.0 - 1e-9) {
            split_step(s, stepper);
        }
    }
}

/// Level indices whose density enters p(x) and p(v).
pub const OBSERVED_LEVELS: [usize; 2] = [GROUND, EXCITED];

/// Weight of the auxiliary level, zero for two-level fields.
pub fn auxiliary_weight(field: &SpinorField, dx: f64) -> f64 {
    if field.n_levels() == 3 {
        field.level_weight(AUXILIARY, dx)
    } else {
        0.0
    }
}
