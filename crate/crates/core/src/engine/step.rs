use serde::{Deserialize, Serialize};

use super::lut::{sigmoid_q, tanh_q};
use super::model::{QuantLayer, QuantModel};
use super::qformat::{quantize_act, round_shift};
use crate::{Error, Result};

/// Parallel multiply-accumulate units in the modeled datapath.
pub const MAC_LANES: u64 = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub steps: u64,
    pub transmitted_x: u64,
    pub skipped_x: u64,
    pub transmitted_h: u64,
    pub skipped_h: u64,
    /// Multiply-accumulates actually performed, FC layer included.
    pub mac_ops: u64,
    /// Datapath cycles excluding the fixed per-step overhead.
    pub compute_cycles: u64,
}

/// Memories and accumulators of one layer, all in raw fixed point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerStateFx {
    pub x_hat: Vec<i16>,
    pub h_hat: Vec<i16>,
    pub h: Vec<i16>,
    /// Input-side sums for `r, z, n`, each at `8 + frac_bits` of its tensor.
    pub acc_i: [Vec<i32>; 3],
    /// Hidden-side sums for `r, z, n`.
    pub acc_h: [Vec<i32>; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaStateFx {
    pub layers: Vec<LayerStateFx>,
    pub counters: Counters,
    /// Raw outputs of the last step.
    pub y: Vec<i16>,
    x_raw: Vec<i16>,
}

pub fn engine_reset(model: &QuantModel) -> DeltaStateFx {
    let a = model.arch;
    let m = a.hidden;
    let layers = model
        .layers
        .iter()
        .enumerate()
        .map(|(l, ql)| {
            let seed = |b: &[i16], g: usize, f: u8| -> Vec<i32> {
                b[g * m..(g + 1) * m].iter().map(|&v| (v as i32) << f).collect()
            };
            LayerStateFx {
                x_hat: vec![0; a.layer_input_dim(l)],
                h_hat: vec![0; m],
                h: vec![0; m],
                acc_i: [0, 1, 2].map(|g| seed(&ql.b_i, g, ql.w_i[g].frac_bits)),
                acc_h: [0, 1, 2].map(|g| seed(&ql.b_h, g, ql.w_h[g].frac_bits)),
            }
        })
        .collect();
    DeltaStateFx {
        layers,
        counters: Counters::default(),
        y: vec![0; a.output_dim],
        x_raw: vec![0; a.input_dim],
    }
}

/// Cycles spent on one layer's transmitted columns.
pub fn layer_cycles(hidden: usize, nnz: usize) -> u64 {
    ((3 * hidden * nnz) as u64).div_ceil(MAC_LANES)
}

/// One inference step. Writes dequantized outputs into `out`; does not
/// allocate.
pub fn engine_step(model: &QuantModel, state: &mut DeltaStateFx, x: &[f64], out: &mut [f64]) -> Result<()> {
    let a = model.arch;
    if x.len() != a.input_dim || out.len() != a.output_dim || state.layers.len() != a.n_layers {
        return Err(Error::Shape(
            "engine step input, output or state has the wrong size".into(),
        ));
    }
    for (r, &v) in state.x_raw.iter_mut().zip(x) {
        *r = quantize_act(v);
    }
    let m = a.hidden;
    let (tx, th) = (model.theta_x_raw as i32, model.theta_h_raw as i32);
    let c = &mut state.counters;
    for l in 0..a.n_layers {
        let (below, rest) = state.layers.split_at_mut(l);
        let input: &[i16] = match below.last() {
            None => &state.x_raw,
            Some(prev) => &prev.h,
        };
        let ls = &mut rest[0];
        let ql = &model.layers[l];
        let nx = encode_input(ql, ls, input, tx, m).ok_or(Error::AccumulatorOverflow { layer: l })?;
        let nh = encode_hidden(ql, ls, th, m).ok_or(Error::AccumulatorOverflow { layer: l })?;
        update_hidden(ql, ls, m);
        c.transmitted_x += nx as u64;
        c.skipped_x += (input.len() - nx) as u64;
        c.transmitted_h += nh as u64;
        c.skipped_h += (m - nh) as u64;
        c.mac_ops += (3 * m * (nx + nh)) as u64;
        c.compute_cycles += layer_cycles(m, nx + nh);
    }

    let top = &state.layers[a.n_layers - 1].h;
    let fw = &model.fc_w;
    for (q, o) in out.iter_mut().enumerate() {
        let mut acc = (model.fc_b[q] as i64) << fw.frac_bits;
        for (j, &h) in top.iter().enumerate() {
            acc += fw.at(q, j) as i64 * h as i64;
        }
        let raw = round_shift(acc, fw.frac_bits as u32).clamp(i16::MIN as i64, i16::MAX as i64) as i16;
        state.y[q] = raw;
        *o = raw as f64 / 256.0;
    }
    c.mac_ops += (a.output_dim * m) as u64;
    c.steps += 1;
    Ok(())
}

/// Delta-encodes the layer input and folds transmitted columns into the
/// input-side sums. Returns the transmitted count, or `None` on overflow.
fn encode_input(ql: &QuantLayer, ls: &mut LayerStateFx, input: &[i16], theta: i32, m: usize) -> Option<usize> {
    let mut n = 0;
    for (k, &u) in input.iter().enumerate() {
        let d = u as i32 - ls.x_hat[k] as i32;
        if d == 0 || d.abs() < theta {
            continue;
        }
        ls.x_hat[k] = u;
        n += 1;
        for g in 0..3 {
            let w = &ql.w_i[g];
            for (j, acc) in ls.acc_i[g].iter_mut().enumerate() {
                *acc = acc.checked_add(w.at(j, k) * d)?;
            }
        }
    }
    debug_assert!(ls.acc_i.iter().all(|a| a.len() == m));
    Some(n)
}

fn encode_hidden(ql: &QuantLayer, ls: &mut LayerStateFx, theta: i32, m: usize) -> Option<usize> {
    let mut n = 0;
    for k in 0..m {
        let d = ls.h[k] as i32 - ls.h_hat[k] as i32;
        if d == 0 || d.abs() < theta {
            continue;
        }
        ls.h_hat[k] = ls.h[k];
        n += 1;
        for g in 0..3 {
            let w = &ql.w_h[g];
            for (j, acc) in ls.acc_h[g].iter_mut().enumerate() {
                *acc = acc.checked_add(w.at(j, k) * d)?;
            }
        }
    }
    Some(n)
}

#[inline]
fn lut_arg(v: i64) -> i32 {
    v.clamp(-4096, 4096) as i32
}

fn update_hidden(ql: &QuantLayer, ls: &mut LayerStateFx, m: usize) {
    let fi = ql.w_i.each_ref().map(|t| t.frac_bits as u32);
    let fh = ql.w_h.each_ref().map(|t| t.frac_bits as u32);
    for j in 0..m {
        let pre = |g: usize| round_shift(ls.acc_i[g][j] as i64, fi[g]) + round_shift(ls.acc_h[g][j] as i64, fh[g]);
        let r = sigmoid_q(lut_arg(pre(0))) as i64;
        let z = sigmoid_q(lut_arg(pre(1))) as i64;
        let hn = round_shift(ls.acc_h[2][j] as i64, fh[2]);
        let pre_n = round_shift(ls.acc_i[2][j] as i64, fi[2]) + round_shift(r * hn, 8);
        let n = tanh_q(lut_arg(pre_n)) as i64;
        let h = ls.h[j] as i64;
        ls.h[j] = round_shift((256 - z) * n + z * h, 8) as i16;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::quantize_model;
    use crate::rnn::{DeltaThresholds, NetArch, NetworkParams};

    fn model(m: usize, seed: u64) -> QuantModel {
        quantize_model(
            &NetworkParams::init(NetArch::controller(m), seed),
            DeltaThresholds::default(),
        )
        .unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let q = model(6, 1);
        assert_eq!(engine_reset(&q), engine_reset(&q));
        let s = engine_reset(&q);
        assert!(s.layers.iter().all(|l| l.x_hat.iter().all(|v| *v == 0)));
        assert_eq!(s.counters, Counters::default());
    }

    #[test]
    fn zero_input_zero_bias_gives_fc_bias() {
        let mut p = NetworkParams::init(NetArch::controller(4), 3);
        let fc_b_val = [0.75, -1.5];
        for l in 0..2 {
            let t = p.layer_mut(l);
            t.b_i.fill(0.0);
            t.b_h.fill(0.0);
        }
        p.fc_mut().1.copy_from_slice(&fc_b_val);
        let q = quantize_model(&p, DeltaThresholds::default()).unwrap();
        let mut s = engine_reset(&q);
        let mut out = [0.0; 2];
        for _ in 0..3 {
            engine_step(&q, &mut s, &[0.0; 5], &mut out).unwrap();
            assert_eq!(out, fc_b_val);
        }
        assert_eq!(s.counters.transmitted_x, 0);
        assert_eq!(s.counters.transmitted_h, 0);
    }

    #[test]
    fn first_step_transmits_large_inputs() {
        let q = model(5, 2);
        let mut s = engine_reset(&q);
        let mut out = [0.0; 2];
        engine_step(&q, &mut s, &[0.5, 0.01, -0.02, 0.0, 1.0], &mut out).unwrap();
        // 0.01 rounds to raw 3 < 4; 0.0 never changes
        let l0 = &s.layers[0];
        assert_eq!(l0.x_hat, vec![128, 0, -5, 0, 256]);
    }

    #[test]
    fn constant_input_stops_input_traffic() {
        let q = model(8, 4);
        let mut s = engine_reset(&q);
        let x = [0.3, -0.2, 1.2, -0.7, 1.0];
        let mut out = [0.0; 2];
        engine_step(&q, &mut s, &x, &mut out).unwrap();
        let x_hat = s.layers[0].x_hat.clone();
        let acc = s.layers[0].acc_i.clone();
        for _ in 0..20 {
            let before = s.counters;
            engine_step(&q, &mut s, &x, &mut out).unwrap();
            let c = s.counters;
            assert_eq!(s.layers[0].acc_i, acc);
            assert_eq!(s.layers[0].x_hat, x_hat);
            let dx = c.transmitted_x - before.transmitted_x;
            let dh = c.transmitted_h - before.transmitted_h;
            // only layer 1 inputs (layer 0 outputs) can still move
            assert!(dx <= 8);
            assert_eq!(c.mac_ops - before.mac_ops, 3 * 8 * (dx + dh) + 2 * 8);
        }
    }

    #[test]
    fn cycle_formula() {
        assert_eq!(layer_cycles(128, 10), 480);
        assert_eq!(layer_cycles(128, 0), 0);
        assert_eq!(layer_cycles(3, 1), 2);
    }

    #[test]
    fn wrong_sizes_rejected() {
        let q = model(3, 0);
        let mut s = engine_reset(&q);
        assert!(engine_step(&q, &mut s, &[0.0; 4], &mut [0.0; 2]).is_err());
        assert!(engine_step(&q, &mut s, &[0.0; 5], &mut [0.0; 3]).is_err());
    }
}
