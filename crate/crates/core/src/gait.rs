//! Desired joint trajectories for the prosthesis.
//!
//! Stance is driven by a state-based phase variable computed from forward hip
//! progression; swing is driven by time since lift-off. The ankle is held at a
//! constant desired angle of zero in both domains.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Coefficients of the canonical walking function
/// `exp(-decay*t) * (cos_amp*cos(freq*t) + sin_amp*sin(freq*t)) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwfParams {
    /// rad
    pub cos_amp: f64,
    /// rad/s
    pub freq: f64,
    /// rad
    pub sin_amp: f64,
    /// 1/s, must be non-negative
    pub decay: f64,
    /// rad
    pub offset: f64,
}

impl CwfParams {
    pub const fn new(cos_amp: f64, freq: f64, sin_amp: f64, decay: f64, offset: f64) -> Self {
        Self {
            cos_amp,
            freq,
            sin_amp,
            decay,
            offset,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let all = [self.cos_amp, self.freq, self.sin_amp, self.decay, self.offset];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("{name}: coefficients must be finite")));
        }
        if self.decay < 0.0 {
            return Err(Error::Config(format!("{name}: decay must be >= 0, got {}", self.decay)));
        }
        Ok(())
    }

    /// Value at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let (s, c) = (self.freq * t).sin_cos();
        (-self.decay * t).exp() * (self.cos_amp * c + self.sin_amp * s) + self.offset
    }

    /// Analytic time derivative at `t`.
    pub fn eval_dot(&self, t: f64) -> f64 {
        let (s, c) = (self.freq * t).sin_cos();
        let env = (-self.decay * t).exp();
        let osc = self.cos_amp * c + self.sin_amp * s;
        let dosc = self.freq * (self.sin_amp * c - self.cos_amp * s);
        env * (dosc - self.decay * osc)
    }
}

pub fn eval_cwf(t: f64, p: &CwfParams) -> f64 {
    p.eval(t)
}

pub fn eval_cwf_dot(t: f64, p: &CwfParams) -> f64 {
    p.eval_dot(t)
}

/// Everything that defines the PD demonstrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitConfig {
    pub knee_stance: CwfParams,
    pub knee_swing: CwfParams,
    /// Nominal forward hip speed, m/s.
    pub v_hip: f64,
    /// Hip position at the start of the first stance, m.
    pub hip_start: f64,
    /// Phase value that ends stance.
    pub rho_max: f64,
    /// Swing duration, s.
    pub t_max: f64,
    pub kp_knee: f64,
    pub kd_knee: f64,
    pub kp_ankle: f64,
    pub kd_ankle: f64,
    /// Torque clamp, N·m.
    pub tau_max: f64,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            knee_stance: CwfParams::new(-0.08, 10.5, 0.12, 2.0, 0.2),
            knee_swing: CwfParams::new(-0.42, 13.9, 0.03, 0.0, 0.57),
            v_hip: 1.0,
            hip_start: 0.0,
            rho_max: 0.6,
            t_max: 0.45,
            kp_knee: 25.0,
            kd_knee: 1.2,
            kp_ankle: 40.0,
            kd_ankle: 1.0,
            tau_max: 60.0,
        }
    }
}

impl GaitConfig {
    pub fn validate(&self) -> Result<()> {
        self.knee_stance.validate("knee_stance")?;
        self.knee_swing.validate("knee_swing")?;
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.v_hip > 0.0, "v_hip must be > 0")?;
        check(
            self.rho_max > 0.0 && self.rho_max <= 1.5,
            "rho_max must lie in (0, 1.5]",
        )?;
        check(self.t_max > 0.0, "t_max must be > 0")?;
        check(
            [self.kp_knee, self.kd_knee, self.kp_ankle, self.kd_ankle]
                .iter()
                .all(|g| *g >= 0.0),
            "gains must be >= 0",
        )?;
        check(self.tau_max > 0.0, "tau_max must be > 0")?;
        check(self.hip_start.is_finite(), "hip_start must be finite")
    }

    /// Nominal stance + swing duration at `v_hip`.
    pub fn step_period(&self) -> f64 {
        self.rho_max + self.t_max
    }
}

/// Normalized stance progress from forward hip position.
pub fn phase_variable(hip_pos: f64, cfg: &GaitConfig) -> f64 {
    (hip_pos - cfg.hip_start) / cfg.v_hip
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Stance,
    Swing,
}

impl Domain {
    /// Phase flag fed to controllers: 1 in stance, 0 in swing.
    pub fn flag(self) -> f64 {
        match self {
            Domain::Stance => 1.0,
            Domain::Swing => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub domain: Domain,
    pub t_in_domain: f64,
    pub hip_pos: f64,
    /// Hip position at the start of the current stance.
    pub hip_start: f64,
    /// Hip speed used on the last advance; scales the stance desired velocity.
    pub hip_speed: f64,
    pub step_index: u64,
}

impl PhaseState {
    /// Start of a stance phase at the configured hip origin.
    pub fn initial(cfg: &GaitConfig) -> Self {
        Self {
            domain: Domain::Stance,
            t_in_domain: 0.0,
            hip_pos: cfg.hip_start,
            hip_start: cfg.hip_start,
            hip_speed: cfg.v_hip,
            step_index: 0,
        }
    }

    pub fn rho(&self, cfg: &GaitConfig) -> f64 {
        (self.hip_pos - self.hip_start) / cfg.v_hip
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredState {
    pub theta_knee: f64,
    pub dtheta_knee: f64,
    pub theta_ankle: f64,
    pub dtheta_ankle: f64,
    pub domain: Domain,
}

impl DesiredState {
    pub fn flag(&self) -> f64 {
        self.domain.flag()
    }
}

pub fn desired_state(ph: &PhaseState, cfg: &GaitConfig) -> DesiredState {
    let (theta_knee, dtheta_knee) = match ph.domain {
        Domain::Stance => {
            let rho = ph.rho(cfg);
            let clamped = rho.clamp(0.0, cfg.rho_max);
            let theta = cfg.knee_stance.eval(clamped);
            // d/dt = d/drho * drho/dt, with drho/dt = hip_speed / v_hip
            let vel = if rho == clamped {
                cfg.knee_stance.eval_dot(clamped) * ph.hip_speed / cfg.v_hip
            } else {
                0.0
            };
            (theta, vel)
        }
        Domain::Swing => {
            let t = ph.t_in_domain;
            let clamped = t.clamp(0.0, cfg.t_max);
            let vel = if t == clamped {
                cfg.knee_swing.eval_dot(clamped)
            } else {
                0.0
            };
            (cfg.knee_swing.eval(clamped), vel)
        }
    };
    DesiredState {
        theta_knee,
        dtheta_knee,
        theta_ankle: 0.0,
        dtheta_ankle: 0.0,
        domain: ph.domain,
    }
}

/// Outcome of one phase advance. `impact` is set on every swing-to-stance edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTransition {
    pub state: PhaseState,
    pub impact: bool,
}

pub fn advance_phase(ph: &PhaseState, dt: f64, hip_speed: f64, cfg: &GaitConfig) -> PhaseTransition {
    debug_assert!(dt > 0.0);
    let mut next = *ph;
    next.hip_pos += hip_speed * dt;
    next.hip_speed = hip_speed;
    next.t_in_domain += dt;
    let mut impact = false;
    match next.domain {
        Domain::Stance => {
            if next.rho(cfg) >= cfg.rho_max {
                next.domain = Domain::Swing;
                next.t_in_domain = 0.0;
            }
        }
        Domain::Swing => {
            if next.t_in_domain >= cfg.t_max {
                next.domain = Domain::Stance;
                next.t_in_domain = 0.0;
                next.hip_start = next.hip_pos;
                next.step_index += 1;
                impact = true;
            }
        }
    }
    PhaseTransition { state: next, impact }
}
