//! Classical toy model: point diode and trap at `x_D` on the ring.
//!
//! Particles fly freely. Arriving anticlockwise (v < 0) at `x_D` they are
//! reflected; arriving clockwise they receive a recoil kick and are either
//! trapped (|v| < v_T) or lose the trap depth and keep going. Free flight is
//! solved exactly, so the only time discretization is the output grid.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::initial_position_std;
use crate::mcwf::{sample_recoil, trajectory_rng};
use crate::params::{ParameterSet, SubtractionRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassicalError {
    #[error("velocity must be positive (got {0})")]
    NonPositiveVelocity(f64),
    #[error("trap velocity must be positive (got {0})")]
    NonPositiveTrapVelocity(f64),
    #[error("round {j} has velocity {remaining} <= 0; the closed form does not apply")]
    Divergent { j: u32, remaining: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalParticle {
    pub x: f64,
    pub v: f64,
    pub trapped: bool,
    pub trap_time: Option<f64>,
    /// Clockwise arrivals at the diode, including the one that traps.
    pub crossings: u32,
}

impl ClassicalParticle {
    pub fn new(x: f64, v: f64) -> Self {
        ClassicalParticle {
            x,
            v,
            trapped: false,
            trap_time: None,
            crossings: 0,
        }
    }

    /// Completed rounds before trapping, the `n` of the closed form.
    pub fn escapes(&self) -> u32 {
        if self.trapped {
            self.crossings - 1
        } else {
            self.crossings
        }
    }
}

/// Outcome of one clockwise passage through the point diode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Passage {
    Trapped,
    Continue(f64),
}

/// Kick, then threshold test, then subtraction of the trap depth.
pub fn diode_crossing<R: Rng + ?Sized>(
    v: f64,
    v_trap: f64,
    v_rec: f64,
    rule: SubtractionRule,
    rng: &mut R,
) -> Passage {
    let v = if v_rec != 0.0 { v + sample_recoil(rng) * v_rec } else { v };
    if v.abs() < v_trap {
        return Passage::Trapped;
    }
    let speed = match rule {
        SubtractionRule::Energy => (v * v - v_trap * v_trap).sqrt(),
        SubtractionRule::Velocity => v.abs() - v_trap,
    };
    if speed == 0.0 {
        // Exactly at threshold after subtraction: the particle stops in the trap.
        return Passage::Trapped;
    }
    Passage::Continue(speed.copysign(v))
}

fn wrap(x: f64, l: f64) -> f64 {
    (x + 0.5 * l).rem_euclid(l) - 0.5 * l
}

/// Draws one particle from the marginals of the initial packet
/// (or from the joint distribution when `correlated_sampling` is set).
pub fn sample_initial<R: Rng + ?Sized>(p: &ParameterSet, rng: &mut R) -> ClassicalParticle {
    let l = p.ring_length;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let gx: f64 = std_normal.sample(rng);
    let gv: f64 = std_normal.sample(rng);
    let v = p.v0 + p.delta_v * gv;
    let x = if p.correlated_sampling {
        // Minimum-uncertainty packet at −t₀, then free flight for t₀.
        let waist = p.hbar_over_m() / (2.0 * p.delta_v);
        p.x0 - p.v0 * p.t0 + waist * gx + v * p.t0
    } else {
        let sd = initial_position_std(p);
        if sd.is_finite() && sd < 10.0 * l {
            p.x0 + sd * gx
        } else {
            // Spread far exceeds the ring: uniform.
            -0.5 * l + l * rng.random::<f64>()
        }
    };
    ClassicalParticle::new(wrap(x, l), v)
}

/// Event-driven evolution up to `t_final`. Once trapped, the state is frozen.
pub fn evolve_particle<R: Rng + ?Sized>(
    mut pt: ClassicalParticle,
    p: &ParameterSet,
    t_final: f64,
    rng: &mut R,
) -> ClassicalParticle {
    let l = p.ring_length;
    let v_trap = p.v_trap_classical;
    let mut t = 0.0;
    // Distance to the next arrival at the diode; after any event it is a full round.
    let mut distance = if pt.v > 0.0 {
        (p.x_d - pt.x).rem_euclid(l)
    } else {
        (pt.x - p.x_d).rem_euclid(l)
    };
    while !pt.trapped && pt.v != 0.0 {
        let arrival = t + distance / pt.v.abs();
        if arrival > t_final {
            pt.x = wrap(pt.x + pt.v * (t_final - t), l);
            break;
        }
        t = arrival;
        pt.x = p.x_d;
        distance = l;
        if pt.v < 0.0 {
            pt.v = -pt.v;
            continue;
        }
        pt.crossings += 1;
        match diode_crossing(pt.v, v_trap, p.v_rec, p.subtraction_rule, rng) {
            Passage::Trapped => {
                pt.trapped = true;
                pt.trap_time = Some(t);
            }
            // Kicked backwards just past the diode: it meets the diode from
            // the trap side at once and is reflected.
            Passage::Continue(v) => pt.v = v.abs(),
        }
    }
    pt
}

/// Smallest n ≥ 0 with v − n·v_T < v_T.
pub fn analytic_crossings(v: f64, v_trap: f64) -> Result<u32, ClassicalError> {
    if !(v > 0.0) {
        return Err(ClassicalError::NonPositiveVelocity(v));
    }
    if !(v_trap > 0.0) {
        return Err(ClassicalError::NonPositiveTrapVelocity(v_trap));
    }
    // Written as v ≥ (n+1)·v_T so exact multiples tie-break as the inequality says.
    let mut n = 0u32;
    while v >= (n + 1) as f64 * v_trap {
        n += 1;
    }
    Ok(n)
}

/// First-arrival time plus the n round times l/(v − j·v_T).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalTime {
    pub n: u32,
    pub t_first: f64,
    pub t_rounds: f64,
}

impl TotalTime {
    pub fn total(&self) -> f64 {
        self.t_first + self.t_rounds
    }
}

pub fn analytic_total_time(
    v: f64,
    x_start: f64,
    p: &ParameterSet,
) -> Result<TotalTime, ClassicalError> {
    let v_trap = p.v_trap_classical;
    let n = analytic_crossings(v, v_trap)?;
    let t_first = (p.x_d - x_start).rem_euclid(p.ring_length) / v;
    let mut t_rounds = 0.0;
    for j in 1..=n {
        let remaining = v - j as f64 * v_trap;
        if remaining <= 0.0 {
            return Err(ClassicalError::Divergent { j, remaining });
        }
        t_rounds += p.ring_length / remaining;
    }
    Ok(TotalTime {
        n,
        t_first,
        t_rounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalRecord {
    pub x_initial: f64,
    pub v_initial: f64,
    pub crossings: u32,
    pub trap_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalEnsembleResult {
    pub times: Vec<f64>,
    pub trapping_probability: Vec<f64>,
    pub records: Vec<ClassicalRecord>,
}

/// Output times 0, Δ, 2Δ, … up to and including `t_final`.
pub fn sample_times(t_final: f64, interval: f64) -> Vec<f64> {
    let count = (t_final / interval + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=count).map(|i| i as f64 * interval).collect();
    if times.last().is_some_and(|&t| t < t_final * (1.0 - 1e-12)) {
        times.push(t_final);
    }
    times
}

/// Evolves `n_trajectories` particles, particle i on random stream i.
pub fn run_classical_ensemble(p: &ParameterSet) -> ClassicalEnsembleResult {
    let records: Vec<ClassicalRecord> = (0..p.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(p.rng_seed, i as u64);
            let start = sample_initial(p, &mut rng);
            let end = evolve_particle(start, p, p.t_final, &mut rng);
            ClassicalRecord {
                x_initial: start.x,
                v_initial: start.v,
                crossings: end.crossings,
                trap_time: end.trap_time,
            }
        })
        .collect();

    let mut trap_times: Vec<f64> = records.iter().filter_map(|r| r.trap_time).collect();
    trap_times.sort_by(f64::total_cmp);
    let times = sample_times(p.t_final, p.sample_interval);
    let n = records.len().max(1) as f64;
    let trapping_probability = times
        .iter()
        .map(|&t| trap_times.partition_point(|&tt| tt <= t) as f64 / n)
        .collect();
    ClassicalEnsembleResult {
        times,
        trapping_probability,
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Mode;
    use proptest::prelude::*;

    fn toy() -> ParameterSet {
        let mut p = ParameterSet::defaults(Mode::Classical);
        p.v_rec = 0.0;
        p
    }

    #[test]
    fn crossing_count_formula() {
        assert_eq!(analytic_crossings(0.05, 0.018).unwrap(), 2);
        assert_eq!(analytic_crossings(0.009, 0.018).unwrap(), 0);
        assert_eq!(analytic_crossings(3.0 * 0.018, 0.018).unwrap(), 3);
        assert!(analytic_crossings(-0.01, 0.018).is_err());
    }

    #[test]
    fn total_time_of_the_worked_example() {
        let p = toy();
        let t = analytic_total_time(0.05, p.x0, &p).unwrap();
        assert_eq!(t.n, 2);
        assert!((t.t_first - 5.6e-3).abs() < 1e-12);
        // l/(v − v_T) + l/(v − 2v_T) = 400e-6·(1/0.032 + 1/0.014)
        let rounds = 400e-6 / 0.032 + 400e-6 / 0.014;
        assert!((t.t_rounds - rounds).abs() < 1e-12);
        assert!((t.total() - 46.7e-3).abs() < 0.1e-3);
        let slow = analytic_total_time(0.01, p.x0, &p).unwrap();
        assert_eq!(slow.n, 0);
        assert_eq!(slow.total(), slow.t_first);
        assert!(matches!(
            analytic_total_time(3.0 * 0.018, p.x0, &p),
            Err(ClassicalError::Divergent { j: 3, .. })
        ));
    }

    #[test]
    fn velocity_rule_trajectory_traps_after_two_rounds() {
        let mut p = toy();
        p.subtraction_rule = SubtractionRule::Velocity;
        let mut rng = trajectory_rng(0, 0);
        let end = evolve_particle(ClassicalParticle::new(p.x0, 0.05), &p, 1.0, &mut rng);
        assert!(end.trapped);
        assert_eq!(end.escapes(), 2);
        assert_eq!(end.crossings, 3);
        let t = analytic_total_time(0.05, p.x0, &p).unwrap().total();
        assert!((end.trap_time.unwrap() - t).abs() < 1e-12);
    }

    #[test]
    fn slow_particle_traps_at_first_arrival() {
        let p = toy();
        let mut rng = trajectory_rng(0, 0);
        let end = evolve_particle(ClassicalParticle::new(p.x0, 0.01), &p, 1.0, &mut rng);
        assert!(end.trapped);
        assert_eq!(end.crossings, 1);
        assert!((end.trap_time.unwrap() - 280e-6 / 0.01).abs() < 1e-12);
    }

    #[test]
    fn first_arrival_time() {
        let p = toy();
        let mut rng = trajectory_rng(0, 0);
        let before = evolve_particle(ClassicalParticle::new(p.x0, 0.05), &p, 5.59e-3, &mut rng);
        assert_eq!(before.crossings, 0);
        assert!((before.x - (p.x0 + 0.05 * 5.59e-3)).abs() < 1e-12);
        let after = evolve_particle(ClassicalParticle::new(p.x0, 0.05), &p, 5.61e-3, &mut rng);
        assert_eq!(after.crossings, 1);
    }

    #[test]
    fn energy_rule_removes_trap_depth_per_round() {
        let p = toy();
        let v_t = p.v_trap_classical;
        let mut v = 0.05;
        let mut rng = trajectory_rng(0, 0);
        for k in 1..=7 {
            match diode_crossing(v, v_t, 0.0, SubtractionRule::Energy, &mut rng) {
                Passage::Continue(next) => v = next,
                Passage::Trapped => panic!("trapped at round {k}"),
            }
            let expected = 0.05f64.powi(2) - k as f64 * v_t * v_t;
            assert!((v * v - expected).abs() < 1e-15);
        }
        assert_eq!(
            diode_crossing(v, v_t, 0.0, SubtractionRule::Energy, &mut rng),
            Passage::Trapped
        );
    }

    #[test]
    fn backward_particles_reflect_without_crossing() {
        let p = toy();
        let mut rng = trajectory_rng(0, 0);
        // From −200 μm moving left, the diode is 120 μm away through the seam.
        let end = evolve_particle(ClassicalParticle::new(p.x0, -0.01), &p, 13e-3, &mut rng);
        assert_eq!(end.crossings, 0);
        assert!(end.v > 0.0);
        assert!((end.x - (p.x_d + 0.01 * 1e-3)).abs() < 1e-12);
    }

    #[test]
    fn sampling_moments() {
        let p = ParameterSet::defaults(Mode::Classical);
        let mut rng = trajectory_rng(3, 0);
        let n = 1_000_000;
        let vs: Vec<f64> = (0..n).map(|_| sample_initial(&p, &mut rng).v).collect();
        let mean = vs.iter().sum::<f64>() / n as f64;
        let sd = (vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - 0.05).abs() < 3.0 * 0.04 / 1e3, "{mean}");
        assert!((sd - 0.04).abs() / 0.04 < 5e-3, "{sd}");
    }

    #[test]
    fn correlated_sampling_keeps_marginals() {
        let mut p = ParameterSet::defaults(Mode::Classical);
        p.correlated_sampling = true;
        p.x0 = 0.0;
        let mut rng = trajectory_rng(4, 0);
        let n = 200_000;
        let pts: Vec<_> = (0..n).map(|_| sample_initial(&p, &mut rng)).collect();
        let mean_x = pts.iter().map(|q| q.x).sum::<f64>() / n as f64;
        let sd_x = (pts.iter().map(|q| (q.x - mean_x).powi(2)).sum::<f64>() / n as f64).sqrt();
        let target = initial_position_std(&p);
        assert!(mean_x.abs() < 0.5e-6);
        assert!((sd_x - target).abs() / target < 0.01);
        // x and v are positively correlated through the free flight.
        let cov = pts.iter().map(|q| (q.x - mean_x) * (q.v - 0.05)).sum::<f64>() / n as f64;
        assert!(cov > 0.0);
    }

    #[test]
    fn vanishing_spread_gives_sharp_velocity() {
        let mut p = ParameterSet::defaults(Mode::Classical);
        p.delta_v = 1e-300;
        let mut rng = trajectory_rng(5, 0);
        for _ in 0..100 {
            let q = sample_initial(&p, &mut rng);
            assert_eq!(q.v, p.v0);
            assert!(q.x >= -200e-6 && q.x < 200e-6);
        }
    }

    #[test]
    fn ensemble_basics() {
        let mut p = ParameterSet::defaults(Mode::Classical);
        p.n_trajectories = 2000;
        let a = run_classical_ensemble(&p);
        assert_eq!(a.times.len(), 401);
        assert!(a.trapping_probability.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(a.trapping_probability[0], 0.0);
        assert_eq!(a, run_classical_ensemble(&p));

        p.t_final = 0.0;
        let z = run_classical_ensemble(&p);
        assert_eq!(z.trapping_probability, vec![0.0]);
    }

    #[test]
    fn sharp_ensemble_matches_crossing_formula() {
        let mut p = toy();
        p.subtraction_rule = SubtractionRule::Velocity;
        p.delta_v = 1e-300;
        p.n_trajectories = 200;
        p.t_final = 1.0;
        let n = analytic_crossings(p.v0, p.v_trap_classical).unwrap();
        let r = run_classical_ensemble(&p);
        assert!(r.records.iter().all(|q| q.crossings == n + 1 && q.trap_time.is_some()));
    }

    #[test]
    fn sample_time_grid() {
        assert_eq!(sample_times(0.0, 1e-3), vec![0.0]);
        let t = sample_times(0.4, 1e-3);
        assert_eq!(t.len(), 401);
        assert!((t[400] - 0.4).abs() < 1e-15);
        assert_eq!(sample_times(2.5e-3, 1e-3).last(), Some(&2.5e-3));
    }

    proptest! {
        #[test]
        fn recoil_kicks_average_out(seed in any::<u64>()) {
            let mut rng = trajectory_rng(seed, 0);
            let n = 20_000;
            let v_rec = 0.035;
            // Large v so no particle is trapped: measure the kick alone.
            let mean: f64 = (0..n)
                .map(|_| match diode_crossing(1.0, 1e-9, v_rec, SubtractionRule::Velocity, &mut rng) {
                    Passage::Continue(v) => v - 1.0 + 1e-9,
                    Passage::Trapped => unreachable!(),
                })
                .sum::<f64>() / n as f64;
            // σ_u = sqrt(2/5); allow 5 standard errors.
            prop_assert!(mean.abs() < 5.0 * v_rec * (0.4f64).sqrt() / (n as f64).sqrt());
        }

        #[test]
        fn trapped_state_is_final(v in 0.001f64..0.2, x in -200e-6f64..200e-6, t1 in 0.0f64..0.5) {
            let p = toy();
            let mut rng = trajectory_rng(1, 1);
            let a = evolve_particle(ClassicalParticle::new(x, v), &p, t1, &mut rng);
            let b = evolve_particle(ClassicalParticle::new(x, v), &p, t1 + 0.5, &mut rng);
            if a.trapped {
                prop_assert_eq!(a, b);
            }
            prop_assert!(b.crossings >= a.crossings);
        }
    }
}
