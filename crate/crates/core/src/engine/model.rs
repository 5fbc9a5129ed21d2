//! Quantized network and its binary format.
//!
//! Layout (little-endian): magic `EDRN`, `u32` version, `u32` layer count,
//! input, hidden and output dims, activation format as two `u8` (total and
//! fractional bits). Then per layer the six weight tensors `W_ir, W_iz, W_in,
//! W_hr, W_hz, W_hn`, each as `u8` frac bits, `u32` rows, `u32` cols and raw
//! `i8` data, followed by the input-side and hidden-side biases as `3M` raw
//! `i16` each. Then the FC tensor, `Q` raw `i16` FC biases, and the two
//! thresholds as raw `i16`.

use std::fs;
use std::path::Path;

use super::qformat::{quantize_act, weight_frac_bits, QFormat};
use crate::rnn::{DeltaThresholds, NetArch, NetworkParams};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"EDRN";
const VERSION: u32 = 1;

/// Largest raw magnitude of a layer's external input.
pub const MAX_INPUT_RAW: i64 = 32768;
/// Largest raw magnitude of a hidden activation (1.0 in Q8.8).
pub const MAX_HIDDEN_RAW: i64 = 256;

/// An int8 weight matrix with a power-of-two scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTensor {
    pub frac_bits: u8,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i8>,
}

impl QuantTensor {
    pub fn quantize(name: &str, rows: usize, cols: usize, w: &[f64]) -> Result<Self> {
        assert_eq!(w.len(), rows * cols);
        let max_abs = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let frac_bits = weight_frac_bits(max_abs).ok_or_else(|| Error::Unrepresentable {
            tensor: name.to_string(),
            max_abs,
        })?;
        let q = QFormat {
            total_bits: 8,
            frac_bits,
        };
        let data = w.iter().map(|&v| q.quantize(v) as i8).collect();
        Ok(Self {
            frac_bits,
            rows,
            cols,
            data,
        })
    }

    pub fn format(&self) -> QFormat {
        QFormat {
            total_bits: 8,
            frac_bits: self.frac_bits,
        }
    }

    pub fn dequantize(&self) -> Vec<f64> {
        let q = self.format();
        self.data.iter().map(|&r| q.dequantize(r as i32)).collect()
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> i32 {
        self.data[row * self.cols + col] as i32
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantLayer {
    /// `W_ir, W_iz, W_in`
    pub w_i: [QuantTensor; 3],
    /// `W_hr, W_hz, W_hn`
    pub w_h: [QuantTensor; 3],
    /// `b_ir, b_iz, b_in` in Q8.8
    pub b_i: Vec<i16>,
    /// `b_hr, b_hz, b_hn` in Q8.8
    pub b_h: Vec<i16>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantModel {
    pub arch: NetArch,
    pub act: QFormat,
    pub layers: Vec<QuantLayer>,
    pub fc_w: QuantTensor,
    pub fc_b: Vec<i16>,
    pub theta_x_raw: i16,
    pub theta_h_raw: i16,
}

/// Quantizes every tensor and checks that no accumulator can overflow.
pub fn quantize_model(params: &NetworkParams, thresholds: DeltaThresholds) -> Result<QuantModel> {
    if !params.is_finite() {
        return Err(Error::Config("cannot quantize non-finite parameters".into()));
    }
    if !(thresholds.theta_x >= 0.0 && thresholds.theta_h >= 0.0) {
        return Err(Error::Config("delta thresholds must be >= 0".into()));
    }
    let arch = params.arch;
    let m = arch.hidden;
    const GATES: [&str; 3] = ["r", "z", "n"];
    let mut layers = Vec::with_capacity(arch.n_layers);
    for l in 0..arch.n_layers {
        let k = arch.layer_input_dim(l);
        let t = params.layer(l);
        let gate = |g: usize, src: &str, w: &[f64], cols: usize| {
            QuantTensor::quantize(
                &format!("l{l}.w_{src}{}", GATES[g]),
                m,
                cols,
                &w[g * m * cols..(g + 1) * m * cols],
            )
        };
        layers.push(QuantLayer {
            w_i: [
                gate(0, "i", t.w_i, k)?,
                gate(1, "i", t.w_i, k)?,
                gate(2, "i", t.w_i, k)?,
            ],
            w_h: [
                gate(0, "h", t.w_h, m)?,
                gate(1, "h", t.w_h, m)?,
                gate(2, "h", t.w_h, m)?,
            ],
            b_i: t.b_i.iter().map(|&b| quantize_act(b)).collect(),
            b_h: t.b_h.iter().map(|&b| quantize_act(b)).collect(),
        });
    }
    let model = QuantModel {
        arch,
        act: QFormat::ACT,
        layers,
        fc_w: QuantTensor::quantize("fc.w", arch.output_dim, m, params.fc_w())?,
        fc_b: params.fc_b().iter().map(|&b| quantize_act(b)).collect(),
        theta_x_raw: quantize_act(thresholds.theta_x),
        theta_h_raw: quantize_act(thresholds.theta_h),
    };
    model.check_accumulator_bounds()?;
    Ok(model)
}

fn row_bound(w: &QuantTensor, bias: &[i16], max_in: i64) -> i64 {
    (0..w.rows)
        .map(|j| {
            let b = (bias[j] as i64).abs() << w.frac_bits;
            b + max_in * (0..w.cols).map(|c| w.at(j, c).abs() as i64).sum::<i64>()
        })
        .max()
        .unwrap_or(0)
}

impl QuantModel {
    pub fn thresholds(&self) -> DeltaThresholds {
        DeltaThresholds {
            theta_x: self.theta_x_raw as f64 / 256.0,
            theta_h: self.theta_h_raw as f64 / 256.0,
        }
    }

    /// Float parameters carrying exactly the quantized values.
    pub fn dequantize(&self) -> NetworkParams {
        let a = self.arch;
        let m = a.hidden;
        let mut p = NetworkParams::zeros(a);
        for (l, ql) in self.layers.iter().enumerate() {
            let k = a.layer_input_dim(l);
            let t = p.layer_mut(l);
            for g in 0..3 {
                t.w_i[g * m * k..(g + 1) * m * k].copy_from_slice(&ql.w_i[g].dequantize());
                t.w_h[g * m * m..(g + 1) * m * m].copy_from_slice(&ql.w_h[g].dequantize());
            }
            for (d, &b) in t.b_i.iter_mut().zip(&ql.b_i) {
                *d = b as f64 / 256.0;
            }
            for (d, &b) in t.b_h.iter_mut().zip(&ql.b_h) {
                *d = b as f64 / 256.0;
            }
        }
        let (w, b) = p.fc_mut();
        w.copy_from_slice(&self.fc_w.dequantize());
        for (d, &v) in b.iter_mut().zip(&self.fc_b) {
            *d = v as f64 / 256.0;
        }
        p
    }

    pub fn with_raw_thresholds(mut self, theta_x_raw: i16, theta_h_raw: i16) -> Result<Self> {
        if theta_x_raw < 0 || theta_h_raw < 0 {
            return Err(Error::Config("raw thresholds must be >= 0".into()));
        }
        self.theta_x_raw = theta_x_raw;
        self.theta_h_raw = theta_h_raw;
        Ok(self)
    }

    /// Worst-case accumulator magnitude per layer (the FC layer is last).
    ///
    /// Each accumulator always equals `(b << f) + Σ w·x̂` for the current
    /// memories `x̂`, so its magnitude is bounded by the bias plus the row's
    /// absolute weight sum times the largest possible memory value.
    pub fn accumulator_bounds(&self) -> Vec<i64> {
        let m = self.arch.hidden;
        let mut out: Vec<i64> = self
            .layers
            .iter()
            .enumerate()
            .map(|(l, ql)| {
                let max_in = if l == 0 { MAX_INPUT_RAW } else { MAX_HIDDEN_RAW };
                (0..3)
                    .flat_map(|g| {
                        [
                            row_bound(&ql.w_i[g], &ql.b_i[g * m..(g + 1) * m], max_in),
                            row_bound(&ql.w_h[g], &ql.b_h[g * m..(g + 1) * m], MAX_HIDDEN_RAW),
                        ]
                    })
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        out.push(row_bound(&self.fc_w, &self.fc_b, MAX_HIDDEN_RAW));
        out
    }

    pub fn check_accumulator_bounds(&self) -> Result<()> {
        for (layer, bound) in self.accumulator_bounds().into_iter().enumerate() {
            if bound > i32::MAX as i64 {
                return Err(Error::AccumulatorBound { layer, bound });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.arch;
        a.validate()?;
        let m = a.hidden;
        let shape = |t: &QuantTensor, r: usize, c: usize| {
            t.rows == r && t.cols == c && t.data.len() == r * c && t.frac_bits <= 7
        };
        if self.layers.len() != a.n_layers || self.act != QFormat::ACT {
            return Err(Error::Format("model does not match its architecture".into()));
        }
        for (l, ql) in self.layers.iter().enumerate() {
            let k = a.layer_input_dim(l);
            let ok = ql.w_i.iter().all(|t| shape(t, m, k))
                && ql.w_h.iter().all(|t| shape(t, m, m))
                && ql.b_i.len() == 3 * m
                && ql.b_h.len() == 3 * m;
            if !ok {
                return Err(Error::Format(format!("layer {l} has inconsistent shapes")));
            }
        }
        if !shape(&self.fc_w, a.output_dim, m) || self.fc_b.len() != a.output_dim {
            return Err(Error::Format("FC layer has inconsistent shapes".into()));
        }
        if self.theta_x_raw < 0 || self.theta_h_raw < 0 {
            return Err(Error::Format("negative threshold".into()));
        }
        self.check_accumulator_bounds()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let a = self.arch;
        for d in [a.n_layers, a.input_dim, a.hidden, a.output_dim] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&[self.act.total_bits, self.act.frac_bits]);
        let put_tensor = |out: &mut Vec<u8>, t: &QuantTensor| {
            out.push(t.frac_bits);
            out.extend_from_slice(&(t.rows as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols as u32).to_le_bytes());
            out.extend(t.data.iter().map(|&v| v as u8));
        };
        let put_i16s = |out: &mut Vec<u8>, v: &[i16]| {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        for ql in &self.layers {
            for t in ql.w_i.iter().chain(&ql.w_h) {
                put_tensor(&mut out, t);
            }
            put_i16s(&mut out, &ql.b_i);
            put_i16s(&mut out, &ql.b_h);
        }
        put_tensor(&mut out, &self.fc_w);
        put_i16s(&mut out, &self.fc_b);
        put_i16s(&mut out, &[self.theta_x_raw, self.theta_h_raw]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not an EDRN model file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported EDRN version {version}")));
        }
        let arch = NetArch {
            n_layers: r.u32()? as usize,
            input_dim: r.u32()? as usize,
            hidden: r.u32()? as usize,
            output_dim: r.u32()? as usize,
        };
        arch.validate()?;
        let fmt = r.take(2)?;
        let act = QFormat::new(fmt[0], fmt[1])?;
        let m = arch.hidden;
        let mut layers = Vec::with_capacity(arch.n_layers);
        for _ in 0..arch.n_layers {
            let mut ts = Vec::with_capacity(6);
            for _ in 0..6 {
                ts.push(r.tensor()?);
            }
            let w_h = [ts.pop().unwrap(), ts.pop().unwrap(), ts.pop().unwrap()];
            let w_i = [ts.pop().unwrap(), ts.pop().unwrap(), ts.pop().unwrap()];
            layers.push(QuantLayer {
                w_i: rev(w_i),
                w_h: rev(w_h),
                b_i: r.i16s(3 * m)?,
                b_h: r.i16s(3 * m)?,
            });
        }
        let fc_w = r.tensor()?;
        let fc_b = r.i16s(arch.output_dim)?;
        let th = r.i16s(2)?;
        if !r.0.is_empty() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        let model = QuantModel {
            arch,
            act,
            layers,
            fc_w,
            fc_b,
            theta_x_raw: th[0],
            theta_h_raw: th[1],
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn rev(a: [QuantTensor; 3]) -> [QuantTensor; 3] {
    let [x, y, z] = a;
    [z, y, x]
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i16s(&mut self, n: usize) -> Result<Vec<i16>> {
        Ok(self
            .take(2 * n)?
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]))
            .collect())
    }

    fn tensor(&mut self) -> Result<QuantTensor> {
        let frac_bits = self.take(1)?[0];
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("tensor too large".into()))?;
        let data = self.take(n)?.iter().map(|&b| b as i8).collect();
        Ok(QuantTensor {
            frac_bits,
            rows,
            cols,
            data,
        })
    }
}
