//! Controller interface, the PD demonstrator and the 200 Hz closed-loop runner.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gait::{advance_phase, desired_state, GaitConfig, PhaseState};
use crate::plant::{apply_impact, sample_sensors, step_continuous, PlantParams, PlantState, SensorNoise, SlopePreset};
use crate::{Error, Result, CONTROL_DT, CONTROL_RATE_HZ, SUBSTEPS};

/// Controller input vector: tracking errors (actual minus desired) and the
/// stance flag.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub e_pk: f64,
    pub e_pa: f64,
    pub de_pk: f64,
    pub de_pa: f64,
    pub s: f64,
}

impl ControlInput {
    pub const DIM: usize = 5;

    pub fn to_array(&self) -> [f64; 5] {
        [self.e_pk, self.e_pa, self.de_pk, self.de_pa, self.s]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            e_pk: v[0],
            e_pa: v[1],
            de_pk: v[2],
            de_pa: v[3],
            s: v[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlOutput {
    pub tau_pk: f64,
    pub tau_pa: f64,
}

impl ControlOutput {
    pub const DIM: usize = 2;

    pub fn clamped(self, tau_max: f64) -> Self {
        Self {
            tau_pk: self.tau_pk.clamp(-tau_max, tau_max),
            tau_pa: self.tau_pa.clamp(-tau_max, tau_max),
        }
    }
}

pub trait Controller {
    fn id(&self) -> String;

    /// Clears internal state before a new run.
    fn reset(&mut self) {}

    fn control(&mut self, input: &ControlInput) -> Result<ControlOutput>;
}

/// PD law with positive gains applied against the error, since errors are
/// actual minus desired: `tau = -(kp*e + kd*de)`, then clamped.
pub fn pd_control(input: &ControlInput, cfg: &GaitConfig) -> ControlOutput {
    ControlOutput {
        tau_pk: -(cfg.kp_knee * input.e_pk + cfg.kd_knee * input.de_pk),
        tau_pa: -(cfg.kp_ankle * input.e_pa + cfg.kd_ankle * input.de_pa),
    }
    .clamped(cfg.tau_max)
}

#[derive(Debug, Clone)]
pub struct PdController {
    pub gait: GaitConfig,
}

impl PdController {
    pub fn new(gait: GaitConfig) -> Self {
        Self { gait }
    }
}

impl Controller for PdController {
    fn id(&self) -> String {
        "pd".to_string()
    }

    fn control(&mut self, input: &ControlInput) -> Result<ControlOutput> {
        Ok(pd_control(input, &self.gait))
    }
}

/// Forward hip speed profile standing in for the human's progression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HipProfile {
    /// Multiplier on the nominal hip speed for this walk.
    pub speed_scale: f64,
    /// Relative amplitude of the sinusoidal speed variation.
    pub variation: f64,
    pub variation_hz: f64,
}

impl Default for HipProfile {
    fn default() -> Self {
        Self {
            speed_scale: 1.0,
            variation: 0.05,
            variation_hz: 0.13,
        }
    }
}

impl HipProfile {
    pub fn speed(&self, v_hip: f64, t: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * self.variation_hz;
        v_hip * self.speed_scale * (1.0 + self.variation * (w * t).sin())
    }
}

/// Everything the closed loop needs besides the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SimConfig {
    pub gait: GaitConfig,
    pub plant: PlantParams,
    pub noise: SensorNoise,
    pub hip: HipProfile,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.gait.validate()?;
        self.plant.validate()?;
        if !(self.noise.pos_std >= 0.0 && self.noise.vel_std >= 0.0) {
            return Err(Error::Config("sensor noise must be >= 0".into()));
        }
        if !(self.hip.speed_scale > 0.0 && self.hip.variation.abs() < 1.0) {
            return Err(Error::Config("hip speed_scale must be > 0 and |variation| < 1".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        crate::config::hash_serialized(self)
    }
}

/// One logged control tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub th_d_pk: f64,
    pub th_a_pk: f64,
    pub th_d_pa: f64,
    pub th_a_pa: f64,
    pub dth_d_pk: f64,
    pub dth_a_pk: f64,
    pub dth_d_pa: f64,
    pub dth_a_pa: f64,
    pub e_pk: f64,
    pub e_pa: f64,
    pub de_pk: f64,
    pub de_pa: f64,
    pub s: f64,
    pub tau_pk: f64,
    pub tau_pa: f64,
}

impl TickRecord {
    pub fn input(&self) -> ControlInput {
        ControlInput {
            e_pk: self.e_pk,
            e_pa: self.e_pa,
            de_pk: self.de_pk,
            de_pa: self.de_pa,
            s: self.s,
        }
    }

    pub fn output(&self) -> ControlOutput {
        ControlOutput {
            tau_pk: self.tau_pk,
            tau_pa: self.tau_pa,
        }
    }
}

pub const RUNLOG_COLUMNS: [&str; 16] = [
    "t", "th_d_pk", "th_a_pk", "th_d_pa", "th_a_pa", "dth_d_pk", "dth_a_pk", "dth_d_pa", "dth_a_pa", "e_pk", "e_pa",
    "de_pk", "de_pa", "s", "tau_pk", "tau_pa",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub controller: String,
    pub slope: SlopePreset,
    pub seed: u64,
    pub config_hash: String,
    pub duration: f64,
    pub ticks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub records: Vec<TickRecord>,
}

impl RunLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rmse_knee(&self) -> f64 {
        rmse_by(&self.records, |r| (r.th_a_pk, r.th_d_pk))
    }

    pub fn rmse_ankle(&self) -> f64 {
        rmse_by(&self.records, |r| (r.th_a_pa, r.th_d_pa))
    }

    /// Writes `path` (CSV) and `path.meta.toml` (metadata sidecar).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let meta = toml::to_string(&self.meta)?;
        let side = sidecar_path(path);
        fs::write(&side, meta).map_err(|e| Error::io(side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let header = rd.headers()?.clone();
        if header.iter().ne(RUNLOG_COLUMNS.iter().copied()) {
            return Err(Error::Format(format!("{}: unexpected run log header", path.display())));
        }
        let records = rd.deserialize().collect::<std::result::Result<Vec<TickRecord>, _>>()?;
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: RunMeta = toml::from_str(&text)?;
        Ok(Self { meta, records })
    }
}

/// `foo.csv` -> `foo.csv.meta.toml`
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.toml");
    s.into()
}

fn rmse_by(records: &[TickRecord], f: impl Fn(&TickRecord) -> (f64, f64)) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let ss: f64 = records
        .iter()
        .map(|r| {
            let (a, d) = f(r);
            (a - d) * (a - d)
        })
        .sum();
    (ss / records.len() as f64).sqrt()
}

pub fn rmse(actual: &[f64], desired: &[f64]) -> Result<f64> {
    if actual.len() != desired.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: desired.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::Shape("rmse of empty sequences".into()));
    }
    let ss: f64 = actual.iter().zip(desired).map(|(a, d)| (a - d) * (a - d)).sum();
    Ok((ss / actual.len() as f64).sqrt())
}

/// Joint angles may not pass a hard stop by more than this before the run is
/// declared divergent.
const STOP_MARGIN: f64 = 0.05;

pub fn tick_count(duration: f64) -> usize {
    (duration * CONTROL_RATE_HZ).round() as usize
}

/// Runs the 200 Hz loop: desired state, sensors, errors, controller, torque
/// clamp, five 1 ms plant substeps, then the phase advance and impact map.
pub fn run_closed_loop(
    controller: &mut dyn Controller,
    cfg: &SimConfig,
    slope: SlopePreset,
    duration: f64,
    seed: u64,
) -> Result<RunLog> {
    cfg.validate()?;
    if !(duration > 0.0) {
        return Err(Error::Config("duration must be > 0".into()));
    }
    let gait = &cfg.gait;
    let plant_p = &cfg.plant;
    let ip = plant_p.impact_params(slope);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = tick_count(duration);
    let sub_dt = CONTROL_DT / SUBSTEPS as f64;

    controller.reset();
    let mut phase = PhaseState::initial(gait);
    let start = desired_state(&phase, gait);
    let mut plant = PlantState {
        theta_knee: start.theta_knee,
        theta_ankle: start.theta_ankle,
        ..Default::default()
    };
    let mut records = Vec::with_capacity(n);

    for tick in 0..n {
        let t = tick as f64 * CONTROL_DT;
        let des = desired_state(&phase, gait);
        let m = sample_sensors(&plant, &cfg.noise, &mut rng);
        let input = ControlInput {
            e_pk: m.theta_knee - des.theta_knee,
            e_pa: m.theta_ankle - des.theta_ankle,
            de_pk: m.dtheta_knee - des.dtheta_knee,
            de_pa: m.dtheta_ankle - des.dtheta_ankle,
            s: des.flag(),
        };
        let raw = controller.control(&input)?;
        if !raw.tau_pk.is_finite() || !raw.tau_pa.is_finite() {
            return Err(Error::NonFiniteTorque { tick, t });
        }
        let tau = raw.clamped(gait.tau_max);
        records.push(TickRecord {
            t,
            th_d_pk: des.theta_knee,
            th_a_pk: m.theta_knee,
            th_d_pa: des.theta_ankle,
            th_a_pa: m.theta_ankle,
            dth_d_pk: des.dtheta_knee,
            dth_a_pk: m.dtheta_knee,
            dth_d_pa: des.dtheta_ankle,
            dth_a_pa: m.dtheta_ankle,
            e_pk: input.e_pk,
            e_pa: input.e_pa,
            de_pk: input.de_pk,
            de_pa: input.de_pa,
            s: input.s,
            tau_pk: tau.tau_pk,
            tau_pa: tau.tau_pa,
        });

        for _ in 0..SUBSTEPS {
            plant = step_continuous(
                &plant,
                tau.tau_pk,
                tau.tau_pa,
                &plant_p.knee,
                &plant_p.ankle,
                &ip,
                sub_dt,
            )
            .map_err(|_| Error::NonFiniteTorque { tick, t })?;
        }
        check_bounds(&plant, plant_p, tick, t)?;

        let tr = advance_phase(&phase, CONTROL_DT, cfg.hip.speed(gait.v_hip, t), gait);
        phase = tr.state;
        if tr.impact {
            plant = apply_impact(&plant, &ip);
        }
    }

    Ok(RunLog {
        meta: RunMeta {
            controller: controller.id(),
            slope,
            seed,
            config_hash: cfg.hash(),
            duration,
            ticks: n,
        },
        records,
    })
}

fn check_bounds(p: &PlantState, params: &PlantParams, tick: usize, t: f64) -> Result<()> {
    if !p.is_finite() {
        return Err(Error::Divergence {
            tick,
            t,
            reason: "plant state is not finite".into(),
        });
    }
    let out =
        |th: f64, jp: &crate::plant::JointParams| th < jp.angle_min - STOP_MARGIN || th > jp.angle_max + STOP_MARGIN;
    if out(p.theta_knee, &params.knee) || out(p.theta_ankle, &params.ankle) {
        return Err(Error::Divergence {
            tick,
            t,
            reason: "joint angle left its hard stops".into(),
        });
    }
    Ok(())
}
