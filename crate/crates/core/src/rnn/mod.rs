//! Floating-point GRU and DeltaGRU with backpropagation through time.
//!
//! Both cells use the dual-bias formulation with the reset gate applied after
//! the recurrent product:
//!
//! ```text
//! r  = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z  = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 - z) ⊙ n + z ⊙ h
//! ```
//!
//! The delta variant replaces `x` and `h` in the matrix products with their
//! last transmitted values, keeping six running pre-activation sums per layer.

mod adam;
mod backward;
mod forward;
mod linalg;
mod loss;
mod params;
mod train;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use backward::{backward, deltagru_backward, gru_backward, Gradients};
pub use forward::{
    deltagru_forward, forward_batch, gru_forward, DeltaState, LayerDeltaState, LayerTrace, Mode, SequenceOutput, Trace,
};
pub use loss::l1_loss;
pub use params::{NetArch, NetworkParams, TensorRef};
pub use train::{
    evaluate, read_curve, train, train_with, write_curve, EpochRecord, Stage, StageSchedule, TrainOutcome,
    TrainSchedule,
};

use serde::{Deserialize, Serialize};

/// Delta thresholds on layer inputs and on recurrent hidden activations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaThresholds {
    pub theta_x: f64,
    pub theta_h: f64,
}

impl DeltaThresholds {
    pub const ZERO: DeltaThresholds = DeltaThresholds {
        theta_x: 0.0,
        theta_h: 0.0,
    };

    /// 2^2 / 2^8 and 2^7 / 2^8, i.e. raw 4 and 128 in Q8.8.
    pub const REFERENCE: DeltaThresholds = DeltaThresholds {
        theta_x: 4.0 / 256.0,
        theta_h: 128.0 / 256.0,
    };
}

impl Default for DeltaThresholds {
    fn default() -> Self {
        Self::REFERENCE
    }
}
