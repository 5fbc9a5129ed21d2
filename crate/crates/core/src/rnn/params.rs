//! Network shape and parameter storage.
//!
//! All parameters live in one flat vector in declared order. Per GRU layer:
//! `W_ir, W_iz, W_in` (each M×in), `W_hr, W_hz, W_hn` (each M×M),
//! `b_ir, b_iz, b_in`, `b_hr, b_hz, b_hn` (each M); then `W_fc` (Q×M) and
//! `b_fc` (Q). Matrices are row-major.
//!
//! Binary format (little-endian): magic `DGRU`, `u32` version, `u32` layer
//! count, input, hidden and output dims, `u64` parameter count, then every
//! parameter as `f64` in declared order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArch {
    pub n_layers: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
}

impl NetArch {
    /// Two GRU layers of `hidden` units, five inputs, two torques out.
    pub const fn controller(hidden: usize) -> Self {
        Self {
            n_layers: 2,
            input_dim: 5,
            hidden,
            output_dim: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.input_dim == 0 || self.hidden == 0 || self.output_dim == 0 {
            return Err(Error::Shape(format!("all dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.hidden
        }
    }

    fn layer_len(&self, layer: usize) -> usize {
        let m = self.hidden;
        3 * m * self.layer_input_dim(layer) + 3 * m * m + 6 * m
    }

    pub fn param_count(&self) -> usize {
        (0..self.n_layers).map(|l| self.layer_len(l)).sum::<usize>() + self.output_dim * self.hidden + self.output_dim
    }

    /// Weight count excluding biases.
    pub fn weight_count(&self) -> usize {
        (0..self.n_layers)
            .map(|l| 3 * self.hidden * (self.layer_input_dim(l) + self.hidden))
            .sum::<usize>()
            + self.output_dim * self.hidden
    }

    pub(crate) fn layer_offset(&self, layer: usize) -> usize {
        (0..layer).map(|l| self.layer_len(l)).sum()
    }

    pub(crate) fn fc_offset(&self) -> usize {
        self.layer_offset(self.n_layers)
    }
}

/// Borrowed view of one GRU layer's tensors.
#[derive(Debug, Clone, Copy)]
pub struct TensorRef<'a> {
    /// Stacked `[W_ir; W_iz; W_in]`, 3M×in.
    pub w_i: &'a [f64],
    /// Stacked `[W_hr; W_hz; W_hn]`, 3M×M.
    pub w_h: &'a [f64],
    pub b_i: &'a [f64],
    pub b_h: &'a [f64],
}

pub(crate) struct TensorMut<'a> {
    pub w_i: &'a mut [f64],
    pub w_h: &'a mut [f64],
    pub b_i: &'a mut [f64],
    pub b_h: &'a mut [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: NetArch,
    pub data: Vec<f64>,
}

const MAGIC: &[u8; 4] = b"DGRU";
const VERSION: u32 = 1;

impl NetworkParams {
    pub fn zeros(arch: NetArch) -> Self {
        Self {
            arch,
            data: vec![0.0; arch.param_count()],
        }
    }

    /// Uniform in ±1/sqrt(fan_in); biases and the output layer use the hidden
    /// size as fan-in.
    pub fn init(arch: NetArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(arch);
        let hid = 1.0 / (arch.hidden as f64).sqrt();
        for l in 0..arch.n_layers {
            let inp = 1.0 / (arch.layer_input_dim(l) as f64).sqrt();
            let t = p.layer_mut(l);
            t.w_i.iter_mut().for_each(|w| *w = rng.gen_range(-inp..inp));
            t.w_h.iter_mut().for_each(|w| *w = rng.gen_range(-hid..hid));
            t.b_i.iter_mut().for_each(|w| *w = rng.gen_range(-hid..hid));
            t.b_h.iter_mut().for_each(|w| *w = rng.gen_range(-hid..hid));
        }
        let off = arch.fc_offset();
        p.data[off..].iter_mut().for_each(|w| *w = rng.gen_range(-hid..hid));
        p
    }

    pub fn layer(&self, l: usize) -> TensorRef<'_> {
        let a = &self.arch;
        let (m, k) = (a.hidden, a.layer_input_dim(l));
        let s = &self.data[a.layer_offset(l)..a.layer_offset(l + 1)];
        let (w_i, s) = s.split_at(3 * m * k);
        let (w_h, s) = s.split_at(3 * m * m);
        let (b_i, b_h) = s.split_at(3 * m);
        TensorRef { w_i, w_h, b_i, b_h }
    }

    pub(crate) fn layer_mut(&mut self, l: usize) -> TensorMut<'_> {
        let a = self.arch;
        let (m, k) = (a.hidden, a.layer_input_dim(l));
        let s = &mut self.data[a.layer_offset(l)..a.layer_offset(l + 1)];
        let (w_i, s) = s.split_at_mut(3 * m * k);
        let (w_h, s) = s.split_at_mut(3 * m * m);
        let (b_i, b_h) = s.split_at_mut(3 * m);
        TensorMut { w_i, w_h, b_i, b_h }
    }

    pub fn fc_w(&self) -> &[f64] {
        let off = self.arch.fc_offset();
        &self.data[off..off + self.arch.output_dim * self.arch.hidden]
    }

    pub fn fc_b(&self) -> &[f64] {
        let off = self.arch.fc_offset() + self.arch.output_dim * self.arch.hidden;
        &self.data[off..]
    }

    pub(crate) fn fc_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let off = self.arch.fc_offset();
        let n = self.arch.output_dim * self.arch.hidden;
        self.data[off..].split_at_mut(n)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Named tensors in declared order, each as (name, rows, cols, values).
    pub fn named_tensors(&self) -> Vec<(String, usize, usize, &[f64])> {
        let m = self.arch.hidden;
        let mut out = Vec::new();
        for l in 0..self.arch.n_layers {
            let k = self.arch.layer_input_dim(l);
            let t = self.layer(l);
            for (g, name) in ["r", "z", "n"].iter().enumerate() {
                out.push((format!("l{l}.w_i{name}"), m, k, &t.w_i[g * m * k..(g + 1) * m * k]));
            }
            for (g, name) in ["r", "z", "n"].iter().enumerate() {
                out.push((format!("l{l}.w_h{name}"), m, m, &t.w_h[g * m * m..(g + 1) * m * m]));
            }
            for (g, name) in ["r", "z", "n"].iter().enumerate() {
                out.push((format!("l{l}.b_i{name}"), m, 1, &t.b_i[g * m..(g + 1) * m]));
            }
            for (g, name) in ["r", "z", "n"].iter().enumerate() {
                out.push((format!("l{l}.b_h{name}"), m, 1, &t.b_h[g * m..(g + 1) * m]));
            }
        }
        out.push(("fc.w".into(), self.arch.output_dim, m, self.fc_w()));
        out.push(("fc.b".into(), self.arch.output_dim, 1, self.fc_b()));
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for d in [
            self.arch.n_layers,
            self.arch.input_dim,
            self.arch.hidden,
            self.arch.output_dim,
        ] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.data.len() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut bytes, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a DGRU parameter file".into()));
        }
        let version = read_u32(&mut bytes)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported DGRU version {version}")));
        }
        let arch = NetArch {
            n_layers: read_u32(&mut bytes)? as usize,
            input_dim: read_u32(&mut bytes)? as usize,
            hidden: read_u32(&mut bytes)? as usize,
            output_dim: read_u32(&mut bytes)? as usize,
        };
        arch.validate()?;
        let mut n = [0u8; 8];
        read_exact(&mut bytes, &mut n)?;
        let n = u64::from_le_bytes(n) as usize;
        if n != arch.param_count() {
            return Err(Error::Format(format!(
                "parameter count {n} does not match architecture ({})",
                arch.param_count()
            )));
        }
        if bytes.len() != 8 * n {
            return Err(Error::Format("truncated or oversized tensor data".into()));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { arch, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(bytes: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    bytes
        .read_exact(buf)
        .map_err(|_| Error::Format("unexpected end of file".into()))
}

fn read_u32(bytes: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(bytes, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts_for_128_hidden() {
        let a = NetArch::controller(128);
        assert_eq!(a.weight_count(), 3 * 128 * 133 + 3 * 128 * 256 + 2 * 128);
        assert_eq!(a.param_count(), a.weight_count() + 2 * 6 * 128 + 2);
        // about 149k weights
        assert!((a.weight_count() as f64 - 149e3).abs() < 1e3);
    }

    #[test]
    fn views_partition_data() {
        let a = NetArch::controller(4);
        let p = NetworkParams::init(a, 3);
        let total: usize = p
            .named_tensors()
            .iter()
            .map(|(_, r, c, v)| {
                assert_eq!(r * c, v.len());
                v.len()
            })
            .sum();
        assert_eq!(total, a.param_count());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = NetArch::controller(8);
        assert_eq!(NetworkParams::init(a, 1), NetworkParams::init(a, 1));
        assert_ne!(NetworkParams::init(a, 1), NetworkParams::init(a, 2));
        let p = NetworkParams::init(a, 1);
        assert!(p.layer(0).w_i.iter().all(|w| w.abs() < 1.0 / 5f64.sqrt()));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(NetworkParams::from_bytes(b"NOPE").is_err());
        let mut b = NetworkParams::init(NetArch::controller(2), 0).to_bytes();
        b.pop();
        assert!(NetworkParams::from_bytes(&b).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn binary_round_trip(hidden in 1usize..6, seed in any::<u64>()) {
            let p = NetworkParams::init(NetArch::controller(hidden), seed);
            let back = NetworkParams::from_bytes(&p.to_bytes()).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
