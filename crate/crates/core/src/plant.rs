//! Per-joint second-order surrogate of the prosthesis knee and ankle, with an
//! impact map applied at foot strike and a slope-dependent torque bias.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointParams {
    /// kg·m²
    pub inertia: f64,
    /// N·m·s/rad
    pub damping: f64,
    /// Coefficient of the sin(θ) restoring term, N·m.
    pub gravity_gain: f64,
    pub angle_min: f64,
    pub angle_max: f64,
}

impl JointParams {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.inertia > 0.0) {
            return Err(Error::Config(format!("{name}: inertia must be > 0")));
        }
        if !(self.damping >= 0.0) {
            return Err(Error::Config(format!("{name}: damping must be >= 0")));
        }
        if !(self.angle_min < self.angle_max) {
            return Err(Error::Config(format!("{name}: angle_min must be below angle_max")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub theta_knee: f64,
    pub theta_ankle: f64,
    pub dtheta_knee: f64,
    pub dtheta_ankle: f64,
    pub t: f64,
}

impl PlantState {
    pub fn is_finite(&self) -> bool {
        [
            self.theta_knee,
            self.theta_ankle,
            self.dtheta_knee,
            self.dtheta_ankle,
            self.t,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Impact map and environment bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactParams {
    pub kappa_knee: f64,
    pub kappa_ankle: f64,
    /// Constant torque bias on the knee, N·m.
    pub slope_knee: f64,
    /// Constant torque bias on the ankle, N·m.
    pub slope_ankle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlopePreset {
    Flat,
    Uphill,
    Downhill,
}

impl SlopePreset {
    pub const ALL: [SlopePreset; 3] = [SlopePreset::Flat, SlopePreset::Uphill, SlopePreset::Downhill];

    pub fn angle_deg(self) -> f64 {
        match self {
            SlopePreset::Flat => 0.0,
            SlopePreset::Uphill => 2.5,
            SlopePreset::Downhill => -2.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SlopePreset::Flat => "flat",
            SlopePreset::Uphill => "uphill",
            SlopePreset::Downhill => "downhill",
        }
    }
}

impl std::str::FromStr for SlopePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(SlopePreset::Flat),
            "uphill" => Ok(SlopePreset::Uphill),
            "downhill" => Ok(SlopePreset::Downhill),
            other => Err(Error::Config(format!("unknown slope preset {other:?}"))),
        }
    }
}

impl std::fmt::Display for SlopePreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Complete plant description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    pub knee: JointParams,
    pub ankle: JointParams,
    pub kappa_knee: f64,
    pub kappa_ankle: f64,
    /// Bias torque per unit sin(slope angle), N·m.
    pub slope_gain_knee: f64,
    pub slope_gain_ankle: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            knee: JointParams {
                inertia: 0.05,
                damping: 0.3,
                gravity_gain: 2.0,
                angle_min: -0.2,
                angle_max: 1.8,
            },
            ankle: JointParams {
                inertia: 0.02,
                damping: 0.2,
                gravity_gain: 0.5,
                angle_min: -0.6,
                angle_max: 0.6,
            },
            kappa_knee: 0.6,
            kappa_ankle: 0.6,
            slope_gain_knee: 40.0,
            slope_gain_ankle: 30.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        self.knee.validate("knee")?;
        self.ankle.validate("ankle")?;
        for k in [self.kappa_knee, self.kappa_ankle] {
            if !(0.0..=1.0).contains(&k) {
                return Err(Error::Config(format!("kappa must lie in [0, 1], got {k}")));
            }
        }
        Ok(())
    }

    pub fn impact_params(&self, slope: SlopePreset) -> ImpactParams {
        let s = slope.angle_deg().to_radians().sin();
        ImpactParams {
            kappa_knee: self.kappa_knee,
            kappa_ankle: self.kappa_ankle,
            slope_knee: self.slope_gain_knee * s,
            slope_ankle: self.slope_gain_ankle * s,
        }
    }
}

/// Semi-implicit Euler for one joint: velocity first, then position, then
/// perfectly plastic hard stops.
fn step_joint(theta: f64, dtheta: f64, tau: f64, jp: &JointParams, dt: f64) -> (f64, f64) {
    let acc = (tau - jp.damping * dtheta - jp.gravity_gain * theta.sin()) / jp.inertia;
    let mut v = dtheta + dt * acc;
    let mut th = theta + dt * v;
    if th < jp.angle_min {
        th = jp.angle_min;
        v = 0.0;
    } else if th > jp.angle_max {
        th = jp.angle_max;
        v = 0.0;
    }
    (th, v)
}

pub fn step_continuous(
    s: &PlantState,
    tau_knee: f64,
    tau_ankle: f64,
    jp_knee: &JointParams,
    jp_ankle: &JointParams,
    ip: &ImpactParams,
    dt: f64,
) -> Result<PlantState> {
    if !tau_knee.is_finite() || !tau_ankle.is_finite() {
        return Err(Error::NonFiniteTorque { tick: 0, t: s.t });
    }
    let (theta_knee, dtheta_knee) = step_joint(s.theta_knee, s.dtheta_knee, tau_knee + ip.slope_knee, jp_knee, dt);
    let (theta_ankle, dtheta_ankle) =
        step_joint(s.theta_ankle, s.dtheta_ankle, tau_ankle + ip.slope_ankle, jp_ankle, dt);
    Ok(PlantState {
        theta_knee,
        theta_ankle,
        dtheta_knee,
        dtheta_ankle,
        t: s.t + dt,
    })
}

pub fn apply_impact(s: &PlantState, ip: &ImpactParams) -> PlantState {
    PlantState {
        dtheta_knee: s.dtheta_knee * ip.kappa_knee,
        dtheta_ankle: s.dtheta_ankle * ip.kappa_ankle,
        ..*s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoise {
    /// rad
    pub pos_std: f64,
    /// rad/s
    pub vel_std: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            pos_std: 0.002,
            vel_std: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub theta_knee: f64,
    pub theta_ankle: f64,
    pub dtheta_knee: f64,
    pub dtheta_ankle: f64,
}

fn noisy<R: Rng + ?Sized>(v: f64, std: f64, rng: &mut R) -> f64 {
    if std == 0.0 {
        return v;
    }
    let n: f64 = rng.sample(StandardNormal);
    v + std * n
}

/// Encoder readings with additive Gaussian noise. Always draws the same number
/// of variates per call so the stream position does not depend on the state.
pub fn sample_sensors<R: Rng + ?Sized>(s: &PlantState, noise: &SensorNoise, rng: &mut R) -> Measurement {
    Measurement {
        theta_knee: noisy(s.theta_knee, noise.pos_std, rng),
        theta_ankle: noisy(s.theta_ankle, noise.pos_std, rng),
        dtheta_knee: noisy(s.dtheta_knee, noise.vel_std, rng),
        dtheta_ankle: noisy(s.dtheta_ankle, noise.vel_std, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn free_joint(inertia: f64, damping: f64) -> JointParams {
        JointParams {
            inertia,
            damping,
            gravity_gain: 0.0,
            angle_min: -100.0,
            angle_max: 100.0,
        }
    }

    const NO_BIAS: ImpactParams = ImpactParams {
        kappa_knee: 1.0,
        kappa_ankle: 1.0,
        slope_knee: 0.0,
        slope_ankle: 0.0,
    };

    #[test]
    fn equilibrium_only_advances_time() {
        let jp = free_joint(1.0, 0.0);
        let s = PlantState {
            theta_knee: 0.3,
            theta_ankle: -0.1,
            ..Default::default()
        };
        let n = step_continuous(&s, 0.0, 0.0, &jp, &jp, &NO_BIAS, 0.001).unwrap();
        assert_eq!(n.theta_knee, s.theta_knee);
        assert_eq!(n.theta_ankle, s.theta_ankle);
        assert_eq!(n.dtheta_knee, 0.0);
        assert_eq!(n.t, 0.001);
    }

    #[test]
    fn pure_damping_decreases_velocity() {
        let jp = free_joint(0.5, 0.4);
        let mut s = PlantState {
            dtheta_knee: 2.0,
            dtheta_ankle: 1.0,
            ..Default::default()
        };
        for _ in 0..500 {
            let n = step_continuous(&s, 0.0, 0.0, &jp, &jp, &NO_BIAS, 0.001).unwrap();
            assert!(n.dtheta_knee < s.dtheta_knee && n.dtheta_knee > 0.0);
            let ke = |s: &PlantState| 0.5 * jp.inertia * (s.dtheta_knee.powi(2) + s.dtheta_ankle.powi(2));
            assert!(ke(&n) <= ke(&s));
            s = n;
        }
    }

    #[test]
    fn constant_torque_recursion() {
        // Oracle: v_k = k*dt, theta_k = dt^2 * k(k+1)/2 evaluated independently.
        let jp = free_joint(1.0, 0.0);
        let mut s = PlantState::default();
        for _ in 0..1000 {
            s = step_continuous(&s, 1.0, 0.0, &jp, &jp, &NO_BIAS, 0.001).unwrap();
        }
        assert!((s.dtheta_knee - 1.0).abs() < 1e-12);
        assert!((s.theta_knee - 0.5005).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_torque() {
        let jp = free_joint(1.0, 0.0);
        let s = PlantState::default();
        assert!(step_continuous(&s, f64::NAN, 0.0, &jp, &jp, &NO_BIAS, 0.001).is_err());
        assert!(step_continuous(&s, 0.0, f64::INFINITY, &jp, &jp, &NO_BIAS, 0.001).is_err());
    }

    #[test]
    fn hard_stop_clamps_and_zeroes_velocity() {
        let jp = JointParams {
            angle_max: 0.01,
            ..free_joint(1.0, 0.0)
        };
        let s = PlantState {
            dtheta_knee: 100.0,
            ..Default::default()
        };
        let n = step_continuous(&s, 0.0, 0.0, &jp, &jp, &NO_BIAS, 0.001).unwrap();
        assert_eq!(n.theta_knee, 0.01);
        assert_eq!(n.dtheta_knee, 0.0);
    }

    #[test]
    fn deterministic_bitwise() {
        let p = PlantParams::default();
        let ip = p.impact_params(SlopePreset::Uphill);
        let s = PlantState {
            theta_knee: 0.4,
            dtheta_knee: -1.3,
            theta_ankle: 0.05,
            dtheta_ankle: 0.2,
            t: 1.0,
        };
        let a = step_continuous(&s, 3.3, -0.7, &p.knee, &p.ankle, &ip, 0.001).unwrap();
        let b = step_continuous(&s, 3.3, -0.7, &p.knee, &p.ankle, &ip, 0.001).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impact_map() {
        let s = PlantState {
            theta_knee: 0.2,
            theta_ankle: 0.1,
            dtheta_knee: -2.0,
            dtheta_ankle: 0.5,
            t: 0.0,
        };
        let keep = apply_impact(&s, &NO_BIAS);
        assert_eq!(keep, s);
        let stop = apply_impact(
            &s,
            &ImpactParams {
                kappa_knee: 0.0,
                kappa_ankle: 0.0,
                ..NO_BIAS
            },
        );
        assert_eq!((stop.dtheta_knee, stop.dtheta_ankle), (0.0, 0.0));
        let part = apply_impact(
            &s,
            &ImpactParams {
                kappa_knee: 0.6,
                kappa_ankle: 0.6,
                ..NO_BIAS
            },
        );
        assert!((part.dtheta_knee + 1.2).abs() < 1e-15);
        assert!((part.dtheta_ankle - 0.3).abs() < 1e-15);
        assert_eq!((part.theta_knee, part.theta_ankle), (0.2, 0.1));
    }

    #[test]
    fn noiseless_sensors_are_exact() {
        let s = PlantState {
            theta_knee: 0.3,
            theta_ankle: -0.2,
            dtheta_knee: 1.5,
            dtheta_ankle: 0.1,
            t: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = sample_sensors(
            &s,
            &SensorNoise {
                pos_std: 0.0,
                vel_std: 0.0,
            },
            &mut rng,
        );
        assert_eq!(
            (m.theta_knee, m.theta_ankle, m.dtheta_knee, m.dtheta_ankle),
            (0.3, -0.2, 1.5, 0.1)
        );
    }

    #[test]
    fn sensors_deterministic_per_seed() {
        let s = PlantState::default();
        let noise = SensorNoise::default();
        let a = sample_sensors(&s, &noise, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_sensors(&s, &noise, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn sensor_noise_std() {
        let s = PlantState::default();
        let noise = SensorNoise {
            pos_std: 0.01,
            vel_std: 0.01,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_sensors(&s, &noise, &mut rng).theta_knee)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        assert!((std - 0.01).abs() / 0.01 < 0.05, "std={std}");
    }

    #[test]
    fn slope_bias_sign() {
        let p = PlantParams::default();
        assert_eq!(p.impact_params(SlopePreset::Flat).slope_knee, 0.0);
        assert!(p.impact_params(SlopePreset::Uphill).slope_knee > 0.0);
        assert!(p.impact_params(SlopePreset::Downhill).slope_knee < 0.0);
    }
}
