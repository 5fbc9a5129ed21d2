use serde::{Deserialize, Serialize};

use super::model::QuantModel;
use super::step::{DeltaStateFx, MAC_LANES};
use crate::rnn::NetArch;

/// Timing assumptions of the modeled accelerator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    /// Fixed cycles per step for control, nonlinearities and I/O.
    pub overhead_cycles: u64,
    pub clock_hz: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            overhead_cycles: 256,
            clock_hz: 125e6,
        }
    }
}

/// Two operations (multiply and add) per weight touched by a dense step.
pub fn dense_ops_per_step(arch: &NetArch) -> u64 {
    let m = arch.hidden;
    let gru: usize = (0..arch.n_layers).map(|l| 3 * m * (arch.layer_input_dim(l) + m)).sum();
    2 * (gru + arch.output_dim * m) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub mac_lanes: u64,
    pub steps: u64,
    pub dense_ops_per_step: u64,
    pub effective_ops: u64,
    pub effective_ops_per_step: f64,
    /// Dense over effective operations.
    pub speedup: f64,
    pub cycles: u64,
    pub cycles_per_step: f64,
    pub latency_us: f64,
    pub transmitted_x: u64,
    pub skipped_x: u64,
    pub transmitted_h: u64,
    pub skipped_h: u64,
    /// Fraction of input deltas skipped.
    pub sparsity_x: f64,
    /// Fraction of hidden deltas skipped.
    pub sparsity_h: f64,
}

pub fn cost_report(state: &DeltaStateFx, model: &QuantModel, cfg: &CostConfig) -> CostReport {
    let c = &state.counters;
    let steps = c.steps.max(1) as f64;
    let dense = dense_ops_per_step(&model.arch);
    let effective_ops = 2 * c.mac_ops;
    let cycles = c.compute_cycles + cfg.overhead_cycles * c.steps;
    let ratio = |skip: u64, tx: u64| {
        let n = skip + tx;
        if n == 0 {
            0.0
        } else {
            skip as f64 / n as f64
        }
    };
    CostReport {
        mac_lanes: MAC_LANES,
        steps: c.steps,
        dense_ops_per_step: dense,
        effective_ops,
        effective_ops_per_step: effective_ops as f64 / steps,
        speedup: if effective_ops == 0 {
            f64::INFINITY
        } else {
            (dense * c.steps) as f64 / effective_ops as f64
        },
        cycles,
        cycles_per_step: cycles as f64 / steps,
        latency_us: cycles as f64 / steps / cfg.clock_hz * 1e6,
        transmitted_x: c.transmitted_x,
        skipped_x: c.skipped_x,
        transmitted_h: c.transmitted_h,
        skipped_h: c.skipped_h,
        sparsity_x: ratio(c.skipped_x, c.transmitted_x),
        sparsity_h: ratio(c.skipped_h, c.transmitted_h),
    }
}
