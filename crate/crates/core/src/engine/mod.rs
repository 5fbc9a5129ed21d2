//! Fixed-point DeltaGRU inference with temporal-sparsity skipping and a
//! cycle cost model of an 8-lane accelerator datapath.
//!
//! Activations are Q8.8, weights int8 with a power-of-two scale per tensor,
//! and every sum is a 32-bit integer accumulator. A delta is transmitted when
//! it is non-zero and its raw magnitude reaches the threshold.

mod controller;
mod cost;
mod lut;
mod model;
mod qformat;
mod step;

pub use controller::RnnController;
pub use cost::{cost_report, dense_ops_per_step, CostConfig, CostReport};
pub use lut::{sigmoid_q, tanh_q};
pub use model::{quantize_model, QuantLayer, QuantModel, QuantTensor, MAX_HIDDEN_RAW, MAX_INPUT_RAW};
pub use qformat::{dequantize_act, quantize_act, round_shift, weight_frac_bits, QFormat};
pub use step::{engine_reset, engine_step, layer_cycles, Counters, DeltaStateFx, LayerStateFx, MAC_LANES};
