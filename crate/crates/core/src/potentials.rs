//! Gaussian laser profiles and the position-dependent coupling matrix.
//!
//! In rate units (1/s) the internal Hamiltonian is `(ħ/2)·M(x)` with
//!
//! ```text
//! three levels: [[W1+WT, ΩP, 0], [ΩP, W2, ΩQ], [0, ΩQ, -iγ3]]
//! two levels:   [[W1+WT, ΩP], [ΩP, W2 - iWQ]]
//! ```
//!
//! The −iγ₃ entry is the absorber of the effective Hamiltonian
//! `H − iħγ₃/2 |3⟩⟨3|`. Half-step propagators `exp(−i·(dt/2)·M/2)` are
//! precomputed per grid point: closed form for 2×2, scaling and squaring for 3×3.

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::RingGrid;
use crate::params::{Mode, ParameterSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("mode {0} has no quantum potential")]
    NotQuantum(Mode),
    #[error("three_level mode needs gamma3 > 0 (got {0})")]
    MissingDecay(f64),
}

/// exp(−(x−x₀)²/(2σ²)), without wrapping the argument onto the ring.
pub fn gaussian_profile(x: f64, x0: f64, sigma: f64) -> f64 {
    let d = (x - x0) / sigma;
    (-0.5 * d * d).exp()
}

/// Gaussian summed over its nearest periodic images, smooth across the seam.
pub fn ring_gaussian(x: f64, x0: f64, sigma: f64, length: f64) -> f64 {
    (-1..=1)
        .map(|image| gaussian_profile(x + image as f64 * length, x0, sigma))
        .sum()
}

/// Laser profiles sampled on the grid, all in 1/s.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserProfiles {
    pub omega_p: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub w_t: Vec<f64>,
    pub w_q: Vec<f64>,
    pub omega_q: Vec<f64>,
}

impl LaserProfiles {
    pub fn evaluate(p: &ParameterSet, grid: &RingGrid) -> Self {
        let l = grid.length();
        let sample = |amp: f64, x0: f64, sigma: f64| -> Vec<f64> {
            grid.positions()
                .iter()
                .map(|&x| amp * ring_gaussian(x, x0, sigma, l))
                .collect()
        };
        LaserProfiles {
            omega_p: sample(p.omega_p_hat, p.x_p, p.sigma),
            w1: sample(p.w1_hat, p.x_w1, p.sigma),
            w2: sample(p.w2_hat, p.x_w2, p.sigma),
            w_t: sample(p.w_t_hat, p.x_t, p.sigma_t),
            w_q: sample(p.w_q_hat, p.x_q, p.sigma_q),
            omega_q: sample(p.omega_q_hat, p.x_q, p.omega_q_width()),
        }
    }
}

pub type Mat2 = [[Complex64; 2]; 2];
pub type Mat3 = [[Complex64; 3]; 3];

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Propagators {
    Two(Vec<Mat2>),
    Three(Vec<Mat3>),
}

/// Rate matrices M(x_j) and their half-step propagators for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    dt: f64,
    profiles: LaserProfiles,
    gamma3: f64,
    rates: Propagators,
    half_step: Propagators,
}

impl PotentialTable {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_levels(&self) -> usize {
        match self.rates {
            Propagators::Two(_) => 2,
            Propagators::Three(_) => 3,
        }
    }

    pub fn profiles(&self) -> &LaserProfiles {
        &self.profiles
    }

    pub fn gamma3(&self) -> f64 {
        self.gamma3
    }

    /// M(x_j): the potential is (ħ/2)·M.
    pub fn rates(&self) -> &Propagators {
        &self.rates
    }

    /// exp(−i·(dt/2)·M(x_j)/2) for every grid point.
    pub fn half_step(&self) -> &Propagators {
        &self.half_step
    }

    /// Same potential, propagators rebuilt for another time step.
    pub fn with_dt(&self, dt: f64) -> Self {
        PotentialTable {
            dt,
            half_step: half_steps(&self.rates, dt),
            ..self.clone()
        }
    }
}

/// Builds M(x_j) for every grid point together with its half-step propagators.
pub fn assemble_potential(
    p: &ParameterSet,
    grid: &RingGrid,
    mode: Mode,
) -> Result<PotentialTable, PotentialError> {
    let profiles = LaserProfiles::evaluate(p, grid);
    let rates = match mode {
        Mode::Classical => return Err(PotentialError::NotQuantum(mode)),
        Mode::TwoLevel => Propagators::Two(
            (0..grid.len())
                .map(|j| {
                    [
                        [c(profiles.w1[j] + profiles.w_t[j]), c(profiles.omega_p[j])],
                        [
                            c(profiles.omega_p[j]),
                            Complex64::new(profiles.w2[j], -profiles.w_q[j]),
                        ],
                    ]
                })
                .collect(),
        ),
        Mode::ThreeLevel => {
            if !(p.gamma3 > 0.0) {
                return Err(PotentialError::MissingDecay(p.gamma3));
            }
            Propagators::Three(
                (0..grid.len())
                    .map(|j| {
                        let z = c(0.0);
                        [
                            [c(profiles.w1[j] + profiles.w_t[j]), c(profiles.omega_p[j]), z],
                            [c(profiles.omega_p[j]), c(profiles.w2[j]), c(profiles.omega_q[j])],
                            [z, c(profiles.omega_q[j]), Complex64::new(0.0, -p.gamma3)],
                        ]
                    })
                    .collect(),
            )
        }
    };
    let half_step = half_steps(&rates, p.dt);
    Ok(PotentialTable {
        dt: p.dt,
        profiles,
        gamma3: if mode == Mode::ThreeLevel { p.gamma3 } else { 0.0 },
        rates,
        half_step,
    })
}

fn half_steps(rates: &Propagators, dt: f64) -> Propagators {
    // −i·(dt/2)·(1/2)
    let factor = Complex64::new(0.0, -0.25 * dt);
    match rates {
        Propagators::Two(ms) => Propagators::Two(
            ms.iter()
                .map(|m| expm2(scale_mat(m, factor)))
                .collect(),
        ),
        Propagators::Three(ms) => Propagators::Three(
            ms.iter()
                .map(|m| expm_taylor(scale_mat(m, factor)))
                .collect(),
        ),
    }
}

fn scale_mat<const N: usize>(m: &[[Complex64; N]; N], f: Complex64) -> [[Complex64; N]; N] {
    let mut out = *m;
    for row in out.iter_mut() {
        for e in row.iter_mut() {
            *e *= f;
        }
    }
    out
}

/// Closed-form exponential of a 2×2 complex matrix.
///
/// With A = τI + B, tr B = 0: exp(A) = e^τ (cosh s · I + sinh(s)/s · B), s² = −det B.
pub fn expm2(a: Mat2) -> Mat2 {
    let tau = 0.5 * (a[0][0] + a[1][1]);
    let b00 = a[0][0] - tau;
    let s2 = b00 * b00 + a[0][1] * a[1][0];
    let s = s2.sqrt();
    let (ch, sh_over_s) = if s.norm() < 1e-4 {
        // Series keeps sinh(s)/s accurate near s = 0.
        let s4 = s2 * s2;
        (
            c(1.0) + s2 / 2.0 + s4 / 24.0 + s4 * s2 / 720.0,
            c(1.0) + s2 / 6.0 + s4 / 120.0 + s4 * s2 / 5040.0,
        )
    } else {
        (s.cosh(), s.sinh() / s)
    };
    let e = tau.exp();
    [
        [e * (ch + sh_over_s * b00), e * sh_over_s * a[0][1]],
        [e * sh_over_s * a[1][0], e * (ch - sh_over_s * b00)],
    ]
}

pub fn mat_mul<const N: usize>(
    a: &[[Complex64; N]; N],
    b: &[[Complex64; N]; N],
) -> [[Complex64; N]; N] {
    let mut out = [[c(0.0); N]; N];
    for i in 0..N {
        for j in 0..N {
            out[i][j] = (0..N).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm_taylor<const N: usize>(a: [[Complex64; N]; N]) -> [[Complex64; N]; N] {
    let norm: f64 = a
        .iter()
        .map(|row| row.iter().map(|e| e.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scaled = scale_mat(&a, c(0.5f64.powi(squarings as i32)));
    let mut result = [[c(0.0); N]; N];
    let mut term = [[c(0.0); N]; N];
    for i in 0..N {
        result[i][i] = c(1.0);
        term[i][i] = c(1.0);
    }
    // ||A|| ≤ 1/4: 18 terms put the truncation error far below 1e-16.
    for order in 1..=18 {
        term = scale_mat(&mat_mul(&term, &scaled), c(1.0 / order as f64));
        for i in 0..N {
            for j in 0..N {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mat_mul(&result, &result);
    }
    result
}

/// Largest singular value of a 2×2 or 3×3 matrix, via the power method on P†P.
pub fn spectral_norm<const N: usize>(p: &[[Complex64; N]; N]) -> f64 {
    let mut gram = [[c(0.0); N]; N];
    for i in 0..N {
        for j in 0..N {
            gram[i][j] = (0..N).map(|k| p[k][i].conj() * p[k][j]).sum();
        }
    }
    let mut v = [c(1.0); N];
    for (i, e) in v.iter_mut().enumerate() {
        *e += c(0.1 * i as f64);
    }
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mut w = [c(0.0); N];
        for i in 0..N {
            w[i] = (0..N).map(|k| gram[i][k] * v[k]).sum();
        }
        let n: f64 = w.iter().map(|e| e.norm_sqr()).sum::<f64>().sqrt();
        if n == 0.0 {
            return 0.0;
        }
        lambda = n;
        for (vi, wi) in v.iter_mut().zip(w.iter()) {
            *vi = wi / n;
        }
    }
    lambda.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff<const N: usize>(a: &[[Complex64; N]; N], b: &[[Complex64; N]; N]) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..N {
            for j in 0..N {
                m = m.max((a[i][j] - b[i][j]).norm());
            }
        }
        m
    }

    fn identity<const N: usize>() -> [[Complex64; N]; N] {
        let mut out = [[c(0.0); N]; N];
        for (i, row) in out.iter_mut().enumerate() {
            row[i] = c(1.0);
        }
        out
    }

    #[test]
    fn gaussian_values() {
        assert_eq!(gaussian_profile(3.0, 3.0, 0.5), 1.0);
        assert!((gaussian_profile(3.5, 3.0, 0.5) - (-0.5f64).exp()).abs() < 1e-15);
        assert!(gaussian_profile(6.0, 0.0, 1.0) < 1.6e-8);
        // e^{-18} ≈ 1.523e-8
        assert!(gaussian_profile(6.0, 0.0, 1.0) > 1.5e-8);
    }

    #[test]
    fn ring_gaussian_is_periodic() {
        let l = 400e-6;
        let a = ring_gaussian(-200e-6, 80e-6, 30e-6, l);
        let b = ring_gaussian(200e-6, 80e-6, 30e-6, l);
        assert!((a - b).abs() < 1e-15 * a.max(1e-300) + 1e-300);
        assert!(a > 3e-4);
    }

    #[test]
    fn closed_form_matches_series() {
        let samples = [
            [[c(0.3), Complex64::new(0.1, -0.2)], [c(-0.7), Complex64::new(0.0, 1.1)]],
            [[Complex64::new(0.0, -3.0), c(0.5)], [c(0.5), Complex64::new(-0.4, -0.1)]],
            [[c(1e-6), c(2e-7)], [c(2e-7), c(-1e-6)]],
            [[c(0.0), c(0.0)], [c(0.0), c(0.0)]],
        ];
        for a in samples {
            let exact = expm2(a);
            let series = expm_taylor(a);
            assert!(max_abs_diff(&exact, &series) < 1e-13, "{a:?}");
        }
    }

    #[test]
    fn far_from_lasers_is_identity() {
        // Wide ring so that a point more than 8σ from every laser exists.
        let mut p = ParameterSet::defaults(Mode::TwoLevel);
        p.ring_length = 1600e-6;
        p.grid_points = 8192;
        let g = RingGrid::from_params(&p).unwrap();
        let table = assemble_potential(&p, &g, Mode::TwoLevel).unwrap();
        let j = g.positions().iter().position(|&x| x >= -600e-6).unwrap();
        for (x0, s) in [(p.x_w2, p.sigma), (p.x_p, p.sigma), (p.x_w1, p.sigma), (p.x_t, p.sigma_t), (p.x_q, p.sigma_q)] {
            let d = (g.positions()[j] - x0).abs();
            assert!(d.min(g.length() - d) > 8.0 * s);
        }
        let Propagators::Two(props) = table.half_step() else { unreachable!() };
        assert!(max_abs_diff(&props[j], &identity()) < 1e-10);
    }

    #[test]
    fn trap_entry_at_trap_center() {
        let p = ParameterSet::defaults(Mode::TwoLevel);
        let g = RingGrid::from_params(&p).unwrap();
        let table = assemble_potential(&p, &g, Mode::TwoLevel).unwrap();
        let j = g.positions().iter().position(|&x| x >= p.x_t).unwrap();
        let x = g.positions()[j];
        assert!((x - p.x_t).abs() < g.dx());
        let Propagators::Two(rates) = table.rates() else { unreachable!() };
        let w1 = p.w1_hat * gaussian_profile(x, p.x_w1, p.sigma);
        let w_t = p.w_t_hat * ring_gaussian(x, p.x_t, p.sigma_t, p.ring_length);
        assert!((rates[j][0][0].re - (w1 + w_t)).abs() < 1e-6);
        assert!((rates[j][0][0].re - p.w_t_hat).abs() < 1e-3 * p.w_t_hat.abs());
        assert!(rates[j][1][1].im < 0.0);
    }

    #[test]
    fn quench_half_step_decay() {
        // Pure quench: only the (2,2) entry −iW_Q.
        let w_q = 1e5;
        let dt = 2e-7;
        let a = [[c(0.0), c(0.0)], [c(0.0), Complex64::new(0.0, -w_q)]];
        let prop = expm2(scale_mat(&a, Complex64::new(0.0, -0.25 * dt)));
        let decay = prop[1][1].norm_sqr();
        assert!((decay - (-w_q * dt / 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn propagators_never_amplify() {
        for mode in [Mode::TwoLevel, Mode::ThreeLevel] {
            let mut p = ParameterSet::recoil_defaults(mode);
            p.grid_points = 1024;
            let g = RingGrid::from_params(&p).unwrap();
            let table = assemble_potential(&p, &g, mode).unwrap();
            let worst = match table.half_step() {
                Propagators::Two(ps) => ps.iter().map(spectral_norm).fold(0.0, f64::max),
                Propagators::Three(ps) => ps.iter().map(spectral_norm).fold(0.0, f64::max),
            };
            assert!(worst <= 1.0 + 1e-12, "{mode}: {worst}");
        }
    }

    #[test]
    fn hermitian_propagators_are_unitary_and_reversible() {
        let mut p = ParameterSet::recoil_defaults(Mode::TwoLevel);
        p.grid_points = 1024;
        p.w_q_hat = 0.0;
        let g = RingGrid::from_params(&p).unwrap();
        let fwd = assemble_potential(&p, &g, Mode::TwoLevel).unwrap();
        let back = fwd.with_dt(-p.dt);
        let (Propagators::Two(f), Propagators::Two(b)) = (fwd.half_step(), back.half_step()) else {
            unreachable!()
        };
        for (pf, pb) in f.iter().zip(b) {
            let mut dagger = *pf;
            for i in 0..2 {
                for j in 0..2 {
                    dagger[i][j] = pf[j][i].conj();
                }
            }
            assert!(max_abs_diff(&mat_mul(&dagger, pf), &identity()) < 1e-12);
            assert!(max_abs_diff(&mat_mul(pf, pb), &identity()) < 1e-10);
        }
    }

    #[test]
    fn three_level_reduces_to_two_level_without_quench_coupling() {
        let mut p = ParameterSet::defaults(Mode::ThreeLevel);
        p.grid_points = 1024;
        p.omega_q_hat = 0.0;
        p.w_q_hat = 0.0;
        let g = RingGrid::from_params(&p).unwrap();
        let three = assemble_potential(&p, &g, Mode::ThreeLevel).unwrap();
        let two = assemble_potential(&p, &g, Mode::TwoLevel).unwrap();
        let (Propagators::Three(p3), Propagators::Two(p2)) = (three.half_step(), two.half_step())
        else {
            unreachable!()
        };
        for (a, b) in p3.iter().zip(p2) {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a[i][j] - b[i][j]).norm() < 1e-12);
                }
                assert_eq!(a[i][2], c(0.0));
            }
        }
    }

    #[test]
    fn classical_mode_has_no_table() {
        let p = ParameterSet::defaults(Mode::Classical);
        let g = RingGrid::new(64, p.ring_length).unwrap();
        assert_eq!(
            assemble_potential(&p, &g, Mode::Classical),
            Err(PotentialError::NotQuantum(Mode::Classical))
        );
        let mut p3 = ParameterSet::defaults(Mode::ThreeLevel);
        p3.gamma3 = 0.0;
        assert!(matches!(
            assemble_potential(&p3, &g, Mode::ThreeLevel),
            Err(PotentialError::MissingDecay(_))
        ));
    }
}
