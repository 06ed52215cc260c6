//! Run parameters: defaults, the flat `key = value` config format, validation
//! and the handful of derived quantities (trap velocity depth, quench peak).
//!
//! All values are SI. Unspecified keys fall back to the no-recoil reference
//! parameter set (ring of 400 μm, Neon atoms, Gaussian lasers). The only
//! mandatory key is `mode`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// CODATA 2018 reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// CODATA 2018 atomic mass constant (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Standard atomic weight of Neon (u).
pub const NEON_MASS_U: f64 = 20.1797;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub atomic_mass_unit: f64,
}

impl PhysicalConstants {
    pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
        hbar: HBAR,
        atomic_mass_unit: ATOMIC_MASS_UNIT,
    };
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("key `{key}` given more than once")]
    DuplicateKey { key: String },
    #[error("missing mandatory key `{key}`")]
    MissingKey { key: &'static str },
    #[error("key `{key}`: cannot parse `{value}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("key `{key}` = {value}: {reason}")]
    Invariant {
        key: &'static str,
        value: String,
        reason: String,
    },
}

fn invariant(key: &'static str, value: impl fmt::Display, reason: &str) -> ConfigError {
    ConfigError::Invariant {
        key,
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TwoLevel,
    ThreeLevel,
    Classical,
}

impl Mode {
    pub fn levels(self) -> usize {
        match self {
            Mode::ThreeLevel => 3,
            _ => 2,
        }
    }

    pub fn is_quantum(self) -> bool {
        !matches!(self, Mode::Classical)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::TwoLevel => "two_level",
            Mode::ThreeLevel => "three_level",
            Mode::Classical => "classical",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "two_level" => Ok(Mode::TwoLevel),
            "three_level" => Ok(Mode::ThreeLevel),
            "classical" => Ok(Mode::Classical),
            _ => Err("expected one of two_level, three_level, classical".into()),
        }
    }
}

/// How the classical model removes the trap depth at each diode crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtractionRule {
    /// v² → v² − v_T² (kinetic energy ½mv_T² removed).
    Energy,
    /// |v| → |v| − v_T, the rule behind the closed-form crossing count.
    Velocity,
}

impl fmt::Display for SubtractionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubtractionRule::Energy => "energy",
            SubtractionRule::Velocity => "velocity",
        })
    }
}

impl FromStr for SubtractionRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "energy" => Ok(SubtractionRule::Energy),
            "velocity" => Ok(SubtractionRule::Velocity),
            _ => Err("expected `energy` or `velocity`".into()),
        }
    }
}

/// Every physical and numerical parameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub mode: Mode,
    pub ring_length: f64,
    pub mass: f64,

    pub omega_p_hat: f64,
    pub w1_hat: f64,
    pub w2_hat: f64,
    pub w_t_hat: f64,
    pub w_q_hat: f64,
    pub x_w2: f64,
    pub x_p: f64,
    pub x_w1: f64,
    pub x_t: f64,
    pub x_q: f64,
    pub sigma: f64,
    pub sigma_t: f64,
    pub sigma_q: f64,

    pub v_rec: f64,
    pub gamma3: f64,
    pub omega_q_hat: f64,

    pub x0: f64,
    pub v0: f64,
    pub delta_v: f64,
    pub t0: f64,

    pub grid_points: usize,
    pub dt: f64,
    pub t_final: f64,
    pub n_trajectories: usize,
    pub rng_seed: u64,
    pub sample_interval: f64,
    pub density_bins: usize,
    pub jump_bisection_depth: u32,
    pub commensurate_recoil: bool,

    pub x_min: f64,
    pub x_max: f64,

    pub x_d: f64,
    pub v_trap_classical: f64,
    pub subtraction_rule: SubtractionRule,
    pub correlated_sampling: bool,
}

/// Keys accepted in a config file, in render order.
pub const KEYS: &[&str] = &[
    "mode",
    "ring_length",
    "mass",
    "omega_p_hat",
    "w1_hat",
    "w2_hat",
    "w_t_hat",
    "w_q_hat",
    "x_w2",
    "x_p",
    "x_w1",
    "x_t",
    "x_q",
    "sigma",
    "sigma_t",
    "sigma_q",
    "v_rec",
    "gamma3",
    "omega_q_hat",
    "x0",
    "v0",
    "delta_v",
    "t0",
    "grid_points",
    "dt",
    "t_final",
    "n_trajectories",
    "rng_seed",
    "sample_interval",
    "density_bins",
    "jump_bisection_depth",
    "commensurate_recoil",
    "x_min",
    "x_max",
    "x_d",
    "v_trap_classical",
    "subtraction_rule",
    "correlated_sampling",
];

impl ParameterSet {
    /// Reference parameters without recoil (v_rec = 0, N = 200).
    pub fn defaults(mode: Mode) -> Self {
        ParameterSet {
            mode,
            ring_length: 400e-6,
            mass: NEON_MASS_U * ATOMIC_MASS_UNIT,
            omega_p_hat: 4e4,
            w1_hat: 4e6,
            w2_hat: 4e6,
            w_t_hat: -1e5,
            w_q_hat: 1e5,
            x_w2: -90e-6,
            x_p: -40e-6,
            x_w1: 10e-6,
            x_t: 80e-6,
            x_q: 100e-6,
            sigma: 15e-6,
            sigma_t: 30e-6,
            sigma_q: quench_width_from_rabi_width(10e-6),
            v_rec: 0.0,
            gamma3: 1e7,
            omega_q_hat: 1e6,
            x0: -200e-6,
            v0: 0.05,
            delta_v: 0.04,
            t0: 1e-3,
            grid_points: 16384,
            dt: 5e-7,
            t_final: 0.4,
            n_trajectories: 200,
            rng_seed: 1,
            sample_interval: 1e-3,
            density_bins: 256,
            jump_bisection_depth: 0,
            commensurate_recoil: false,
            x_min: 10e-6,
            x_max: 200e-6,
            x_d: 80e-6,
            v_trap_classical: 0.018,
            subtraction_rule: SubtractionRule::Energy,
            correlated_sampling: false,
        }
    }

    /// Reference parameters with recoil v_rec = 3.5 cm/s (stronger diode, N = 190).
    pub fn recoil_defaults(mode: Mode) -> Self {
        ParameterSet {
            v_rec: 0.035,
            omega_p_hat: 1e5,
            w1_hat: 1e7,
            w2_hat: 1e7,
            n_trajectories: 190,
            ..Self::defaults(mode)
        }
    }

    /// Rabi width of the quench laser; W_Q = Ω_Q²/γ₃ is Gaussian with width σ_Q.
    pub fn omega_q_width(&self) -> f64 {
        self.sigma_q * std::f64::consts::SQRT_2
    }

    pub fn trap_velocity(&self) -> f64 {
        derive_trap_velocity(self)
    }

    /// ħ/m (m²/s).
    pub fn hbar_over_m(&self) -> f64 {
        HBAR / self.mass
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        macro_rules! num {
            ($t:ty) => {
                value.parse::<$t>().map_err(|e| ConfigError::InvalidValue {
                    key: key.to_string(),
                    value: value.to_string(),
                    reason: e.to_string(),
                })?
            };
        }
        macro_rules! parsed {
            ($t:ty) => {
                value
                    .parse::<$t>()
                    .map_err(|reason| ConfigError::InvalidValue {
                        key: key.to_string(),
                        value: value.to_string(),
                        reason,
                    })?
            };
        }
        match key {
            "mode" => self.mode = parsed!(Mode),
            "ring_length" => self.ring_length = num!(f64),
            "mass" => self.mass = num!(f64),
            "omega_p_hat" => self.omega_p_hat = num!(f64),
            "w1_hat" => self.w1_hat = num!(f64),
            "w2_hat" => self.w2_hat = num!(f64),
            "w_t_hat" => self.w_t_hat = num!(f64),
            "w_q_hat" => self.w_q_hat = num!(f64),
            "x_w2" => self.x_w2 = num!(f64),
            "x_p" => self.x_p = num!(f64),
            "x_w1" => self.x_w1 = num!(f64),
            "x_t" => self.x_t = num!(f64),
            "x_q" => self.x_q = num!(f64),
            "sigma" => self.sigma = num!(f64),
            "sigma_t" => self.sigma_t = num!(f64),
            "sigma_q" => self.sigma_q = num!(f64),
            "v_rec" => self.v_rec = num!(f64),
            "gamma3" => self.gamma3 = num!(f64),
            "omega_q_hat" => self.omega_q_hat = num!(f64),
            "x0" => self.x0 = num!(f64),
            "v0" => self.v0 = num!(f64),
            "delta_v" => self.delta_v = num!(f64),
            "t0" => self.t0 = num!(f64),
            "grid_points" => self.grid_points = num!(usize),
            "dt" => self.dt = num!(f64),
            "t_final" => self.t_final = num!(f64),
            "n_trajectories" => self.n_trajectories = num!(usize),
            "rng_seed" => self.rng_seed = num!(u64),
            "sample_interval" => self.sample_interval = num!(f64),
            "density_bins" => self.density_bins = num!(usize),
            "jump_bisection_depth" => self.jump_bisection_depth = num!(u32),
            "commensurate_recoil" => self.commensurate_recoil = num!(bool),
            "x_min" => self.x_min = num!(f64),
            "x_max" => self.x_max = num!(f64),
            "x_d" => self.x_d = num!(f64),
            "v_trap_classical" => self.v_trap_classical = num!(f64),
            "subtraction_rule" => self.subtraction_rule = parsed!(SubtractionRule),
            "correlated_sampling" => self.correlated_sampling = num!(bool),
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Value of `key` as it would be rendered in a config file.
    pub fn get(&self, key: &str) -> Option<String> {
        // `{:?}` on f64 is the shortest representation that round-trips.
        let v = match key {
            "mode" => self.mode.to_string(),
            "ring_length" => format!("{:?}", self.ring_length),
            "mass" => format!("{:?}", self.mass),
            "omega_p_hat" => format!("{:?}", self.omega_p_hat),
            "w1_hat" => format!("{:?}", self.w1_hat),
            "w2_hat" => format!("{:?}", self.w2_hat),
            "w_t_hat" => format!("{:?}", self.w_t_hat),
            "w_q_hat" => format!("{:?}", self.w_q_hat),
            "x_w2" => format!("{:?}", self.x_w2),
            "x_p" => format!("{:?}", self.x_p),
            "x_w1" => format!("{:?}", self.x_w1),
            "x_t" => format!("{:?}", self.x_t),
            "x_q" => format!("{:?}", self.x_q),
            "sigma" => format!("{:?}", self.sigma),
            "sigma_t" => format!("{:?}", self.sigma_t),
            "sigma_q" => format!("{:?}", self.sigma_q),
            "v_rec" => format!("{:?}", self.v_rec),
            "gamma3" => format!("{:?}", self.gamma3),
            "omega_q_hat" => format!("{:?}", self.omega_q_hat),
            "x0" => format!("{:?}", self.x0),
            "v0" => format!("{:?}", self.v0),
            "delta_v" => format!("{:?}", self.delta_v),
            "t0" => format!("{:?}", self.t0),
            "grid_points" => self.grid_points.to_string(),
            "dt" => format!("{:?}", self.dt),
            "t_final" => format!("{:?}", self.t_final),
            "n_trajectories" => self.n_trajectories.to_string(),
            "rng_seed" => self.rng_seed.to_string(),
            "sample_interval" => format!("{:?}", self.sample_interval),
            "density_bins" => self.density_bins.to_string(),
            "jump_bisection_depth" => self.jump_bisection_depth.to_string(),
            "commensurate_recoil" => self.commensurate_recoil.to_string(),
            "x_min" => format!("{:?}", self.x_min),
            "x_max" => format!("{:?}", self.x_max),
            "x_d" => format!("{:?}", self.x_d),
            "v_trap_classical" => format!("{:?}", self.v_trap_classical),
            "subtraction_rule" => self.subtraction_rule.to_string(),
            "correlated_sampling" => self.correlated_sampling.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Renders the full parameter set in the config-file format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).expect("every listed key renders"));
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("ring_length", self.ring_length),
            ("mass", self.mass),
            ("sigma", self.sigma),
            ("sigma_t", self.sigma_t),
            ("sigma_q", self.sigma_q),
            ("delta_v", self.delta_v),
            ("dt", self.dt),
            ("sample_interval", self.sample_interval),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invariant(key, value, "must be finite and positive"));
            }
        }
        let finite = [
            ("omega_p_hat", self.omega_p_hat),
            ("w1_hat", self.w1_hat),
            ("w2_hat", self.w2_hat),
            ("v_rec", self.v_rec),
            ("gamma3", self.gamma3),
            ("omega_q_hat", self.omega_q_hat),
            ("x0", self.x0),
            ("v0", self.v0),
            ("t0", self.t0),
            ("x_min", self.x_min),
            ("x_max", self.x_max),
            ("v_trap_classical", self.v_trap_classical),
        ];
        for (key, value) in finite {
            if !value.is_finite() {
                return Err(invariant(key, value, "must be finite"));
            }
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(invariant("t_final", self.t_final, "must be non-negative"));
        }
        if !(self.w_t_hat <= 0.0) {
            return Err(invariant(
                "w_t_hat",
                self.w_t_hat,
                "trap peak must be non-positive",
            ));
        }
        if !(self.w_q_hat >= 0.0 && self.w_q_hat.is_finite()) {
            return Err(invariant("w_q_hat", self.w_q_hat, "quench peak must be non-negative"));
        }
        if self.v_rec < 0.0 {
            return Err(invariant("v_rec", self.v_rec, "must be non-negative"));
        }
        if self.v_trap_classical < 0.0 {
            return Err(invariant("v_trap_classical", self.v_trap_classical, "must be non-negative"));
        }
        if !self.grid_points.is_power_of_two() || self.grid_points < 2 {
            return Err(invariant(
                "grid_points",
                self.grid_points,
                "must be a power of two",
            ));
        }
        if self.n_trajectories == 0 {
            return Err(invariant("n_trajectories", 0, "must be at least 1"));
        }
        if self.density_bins == 0 {
            return Err(invariant("density_bins", 0, "must be at least 1"));
        }
        let half = 0.5 * self.ring_length;
        let centers = [
            ("x_w2", self.x_w2),
            ("x_p", self.x_p),
            ("x_w1", self.x_w1),
            ("x_t", self.x_t),
            ("x_q", self.x_q),
            ("x_d", self.x_d),
        ];
        for (key, value) in centers {
            if !(value >= -half && value < half) {
                return Err(invariant(key, value, "center must lie in [-l/2, l/2)"));
            }
        }
        if !(self.x_min >= -half && self.x_min < self.x_max && self.x_max <= half) {
            return Err(invariant(
                "x_min",
                format!("[{}, {}]", self.x_min, self.x_max),
                "trap window must satisfy -l/2 <= x_min < x_max <= l/2",
            ));
        }
        if self.mode == Mode::ThreeLevel {
            if !(self.gamma3 > 0.0) {
                return Err(invariant("gamma3", self.gamma3, "three_level mode needs gamma3 > 0"));
            }
            let w_q = self.omega_q_hat * self.omega_q_hat / self.gamma3;
            let scale = self.w_q_hat.abs().max(w_q.abs()).max(f64::MIN_POSITIVE);
            if (w_q - self.w_q_hat).abs() > 1e-12 * scale {
                return Err(invariant(
                    "omega_q_hat",
                    self.omega_q_hat,
                    &format!(
                        "omega_q_hat^2/gamma3 = {w_q} must equal w_q_hat = {}",
                        self.w_q_hat
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Splits a config document into `(key, value)` pairs, rejecting duplicates.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: idx + 1,
            text: raw.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                line: idx + 1,
                text: raw.to_string(),
            });
        }
        if pairs.iter().any(|(k, _)| k == key) {
            return Err(ConfigError::DuplicateKey { key: key.into() });
        }
        pairs.push((key.to_string(), value.to_string()));
    }
    Ok(pairs)
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ParameterSet, ConfigError> {
    parse_config_with_overrides(text, &[])
}

/// Parses a config document and layers `key=value` overrides on top of it.
pub fn parse_config_with_overrides(
    text: &str,
    overrides: &[(String, String)],
) -> Result<ParameterSet, ConfigError> {
    let pairs = parse_pairs(text)?;
    let mode_value = overrides
        .iter()
        .rev()
        .chain(pairs.iter())
        .find(|(k, _)| k == "mode")
        .map(|(_, v)| v.clone())
        .ok_or(ConfigError::MissingKey { key: "mode" })?;
    let mode: Mode = mode_value
        .parse()
        .map_err(|reason| ConfigError::InvalidValue {
            key: "mode".into(),
            value: mode_value.clone(),
            reason,
        })?;
    let mut params = ParameterSet::defaults(mode);
    for (key, value) in pairs.iter().chain(overrides.iter()) {
        params.set(key, value)?;
    }
    params.validate()?;
    Ok(params)
}

/// Parses a `key=value` override string as given on the command line.
pub fn parse_override(text: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = text.split_once('=').ok_or_else(|| ConfigError::Syntax {
        line: 0,
        text: text.to_string(),
    })?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() || v.is_empty() {
        return Err(ConfigError::Syntax {
            line: 0,
            text: text.to_string(),
        });
    }
    Ok((k.to_string(), v.to_string()))
}

/// Velocity depth of the trap, v_T = sqrt(ħ|Ŵ_T|/m).
pub fn derive_trap_velocity(p: &ParameterSet) -> f64 {
    (HBAR * p.w_t_hat.abs() / p.mass).sqrt()
}

/// Peak of the effective quench rate W_Q = Ω_Q²/γ₃.
pub fn derive_quench_peak(omega_q_hat: f64, gamma3: f64) -> Result<f64, ConfigError> {
    if !(gamma3 > 0.0) {
        return Err(invariant("gamma3", gamma3, "decay rate must be positive"));
    }
    Ok(omega_q_hat * omega_q_hat / gamma3)
}

/// Squaring a Gaussian of width σ gives a Gaussian of width σ/√2.
pub fn quench_width_from_rabi_width(sigma: f64) -> f64 {
    sigma / std::f64::consts::SQRT_2
}
