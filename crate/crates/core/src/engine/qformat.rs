use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Signed two's-complement fixed-point format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QFormat {
    pub total_bits: u8,
    pub frac_bits: u8,
}

impl QFormat {
    /// Activation format, Q8.8.
    pub const ACT: QFormat = QFormat {
        total_bits: 16,
        frac_bits: 8,
    };

    pub fn new(total_bits: u8, frac_bits: u8) -> Result<Self> {
        if !matches!(total_bits, 8 | 16) || frac_bits >= total_bits {
            return Err(Error::Format(format!("unsupported format Q{total_bits}/{frac_bits}")));
        }
        Ok(Self { total_bits, frac_bits })
    }

    pub fn min_raw(self) -> i32 {
        -(1 << (self.total_bits - 1))
    }

    pub fn max_raw(self) -> i32 {
        (1 << (self.total_bits - 1)) - 1
    }

    /// Value of one least significant bit.
    pub fn ulp(self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Round to nearest (ties to even), then saturate.
    pub fn quantize(self, x: f64) -> i32 {
        let v = (x * (self.frac_bits as f64).exp2()).round_ties_even();
        if v.is_nan() {
            return 0;
        }
        v.clamp(self.min_raw() as f64, self.max_raw() as f64) as i32
    }

    pub fn dequantize(self, raw: i32) -> f64 {
        raw as f64 * self.ulp()
    }
}

/// Q8.8 activation quantizer.
pub fn quantize_act(x: f64) -> i16 {
    QFormat::ACT.quantize(x) as i16
}

pub fn dequantize_act(raw: i16) -> f64 {
    raw as f64 / 256.0
}

/// Largest `f <= 7` such that `max_abs < 2^(7 - f)`.
pub fn weight_frac_bits(max_abs: f64) -> Option<u8> {
    if !max_abs.is_finite() {
        return None;
    }
    (0..=7u8).rev().find(|&f| max_abs < (7.0 - f as f64).exp2())
}

/// Arithmetic right shift rounding halves upward.
#[inline]
pub fn round_shift(v: i64, s: u32) -> i64 {
    if s == 0 {
        v
    } else {
        (v + (1i64 << (s - 1))) >> s
    }
}
