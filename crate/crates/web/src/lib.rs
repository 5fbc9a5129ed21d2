//! Browser demo. Each operation returns JSON so the page can plot it directly.
//! The plain functions are usable natively; the `wasm_*` wrappers are exported
//! to JavaScript.

use gaitclone::control::{run_closed_loop, PdController, SimConfig};
use gaitclone::engine::{cost_report, engine_reset, engine_step, quantize_model, CostConfig};
use gaitclone::gait::{advance_phase, desired_state, GaitConfig, PhaseState};
use gaitclone::plant::SlopePreset;
use gaitclone::rnn::{DeltaThresholds, NetArch, NetworkParams};
use gaitclone::{Result, CONTROL_DT};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Longest simulated span any operation accepts, in seconds.
pub const MAX_DURATION: f64 = 30.0;

#[derive(Debug, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub knee: Vec<f64>,
    pub dknee: Vec<f64>,
    /// 1 in stance, 0 in swing.
    pub stance: Vec<f64>,
    pub steps: u64,
}

/// Desired knee trajectory from the phase machine at a constant hip speed.
pub fn gait_trajectory(v_hip: f64, rho_max: f64, t_max: f64, duration: f64) -> Result<Trajectory> {
    let cfg = GaitConfig {
        v_hip,
        rho_max,
        t_max,
        ..GaitConfig::default()
    };
    cfg.validate()?;
    let n = ticks(duration)?;
    let mut ph = PhaseState::initial(&cfg);
    let mut out = Trajectory {
        t: Vec::with_capacity(n),
        knee: Vec::with_capacity(n),
        dknee: Vec::with_capacity(n),
        stance: Vec::with_capacity(n),
        steps: 0,
    };
    for i in 0..n {
        let d = desired_state(&ph, &cfg);
        out.t.push(i as f64 * CONTROL_DT);
        out.knee.push(d.theta_knee);
        out.dknee.push(d.dtheta_knee);
        out.stance.push(d.flag());
        ph = advance_phase(&ph, CONTROL_DT, v_hip, &cfg).state;
    }
    out.steps = ph.step_index;
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Walk {
    pub t: Vec<f64>,
    pub knee_desired: Vec<f64>,
    pub knee_actual: Vec<f64>,
    pub dknee_actual: Vec<f64>,
    pub tau_knee: Vec<f64>,
    pub rmse_knee: f64,
    pub rmse_ankle: f64,
}

/// PD closed loop on the simulated prosthesis.
pub fn pd_walk(slope: &str, kp_knee: f64, kd_knee: f64, duration: f64, seed: u64) -> Result<Walk> {
    let slope: SlopePreset = slope.parse()?;
    let mut sim = SimConfig::default();
    sim.gait.kp_knee = kp_knee;
    sim.gait.kd_knee = kd_knee;
    ticks(duration)?;
    let log = run_closed_loop(&mut PdController::new(sim.gait.clone()), &sim, slope, duration, seed)?;
    let r = &log.records;
    Ok(Walk {
        t: r.iter().map(|x| x.t).collect(),
        knee_desired: r.iter().map(|x| x.th_d_pk).collect(),
        knee_actual: r.iter().map(|x| x.th_a_pk).collect(),
        dknee_actual: r.iter().map(|x| x.dth_a_pk).collect(),
        tau_knee: r.iter().map(|x| x.tau_pk).collect(),
        rmse_knee: log.rmse_knee(),
        rmse_ankle: log.rmse_ankle(),
    })
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub theta_h_raw: i16,
    pub sparsity_x: f64,
    pub sparsity_h: f64,
    pub speedup: f64,
    pub latency_us: f64,
}

pub const SWEEP_THETA_H: [i16; 7] = [0, 8, 16, 32, 64, 128, 256];

/// Runs an untrained fixed-point DeltaGRU on 10 s of PD walking inputs and
/// reports sparsity and op reduction for each hidden threshold.
pub fn sparsity_sweep(hidden: usize, theta_x_raw: i16, seed: u64) -> Result<Vec<SweepPoint>> {
    let arch = NetArch::controller(hidden);
    arch.validate()?;
    let sim = SimConfig::default();
    let log = run_closed_loop(
        &mut PdController::new(sim.gait.clone()),
        &sim,
        SlopePreset::Flat,
        10.0,
        seed,
    )?;
    let base = quantize_model(&NetworkParams::init(arch, seed), DeltaThresholds::default())?;
    let mut out = Vec::with_capacity(SWEEP_THETA_H.len());
    let mut y = [0.0; 2];
    for th in SWEEP_THETA_H {
        let q = base.clone().with_raw_thresholds(theta_x_raw, th)?;
        let mut st = engine_reset(&q);
        for r in &log.records {
            engine_step(&q, &mut st, &r.input().to_array(), &mut y)?;
        }
        let c = cost_report(&st, &q, &CostConfig::default());
        out.push(SweepPoint {
            theta_h_raw: th,
            sparsity_x: c.sparsity_x,
            sparsity_h: c.sparsity_h,
            speedup: c.speedup,
            latency_us: c.latency_us,
        });
    }
    Ok(out)
}

fn ticks(duration: f64) -> Result<usize> {
    if !(duration > 0.0 && duration <= MAX_DURATION) {
        return Err(gaitclone::Error::Config(format!(
            "duration must be in (0, {MAX_DURATION}] s"
        )));
    }
    Ok((duration / CONTROL_DT).round() as usize)
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn wasm_gait_trajectory(
    v_hip: f64,
    rho_max: f64,
    t_max: f64,
    duration: f64,
) -> std::result::Result<String, JsError> {
    to_js(gait_trajectory(v_hip, rho_max, t_max, duration))
}

#[wasm_bindgen]
pub fn wasm_pd_walk(
    slope: &str,
    kp_knee: f64,
    kd_knee: f64,
    duration: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(pd_walk(slope, kp_knee, kd_knee, duration, seed as u64))
}

#[wasm_bindgen]
pub fn wasm_sparsity_sweep(hidden: u32, theta_x_raw: i16, seed: u32) -> std::result::Result<String, JsError> {
    to_js(sparsity_sweep(hidden as usize, theta_x_raw, seed as u64))
}
