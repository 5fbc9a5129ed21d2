use super::forward::{Mode, Trace};
use super::linalg::{acc_atb, mul_ab};
use super::params::NetworkParams;
use crate::{Error, Result};

/// Parameter gradients in the same flat layout as [`NetworkParams`], plus the
/// gradient with respect to each layer's initial hidden state (`[b][m]`).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: NetworkParams,
    pub grad_h0: Vec<Vec<f64>>,
}

/// Dense-mode BPTT.
pub fn gru_backward(params: &NetworkParams, trace: &Trace, grad_y: &[f64]) -> Result<Gradients> {
    if trace.mode != Mode::Dense {
        return Err(Error::Shape("gru_backward needs a dense trace".into()));
    }
    backward(params, trace, grad_y)
}

/// Delta-mode BPTT with the transmit masks treated as constants.
pub fn deltagru_backward(params: &NetworkParams, trace: &Trace, grad_y: &[f64]) -> Result<Gradients> {
    if trace.mode == Mode::Dense {
        return Err(Error::Shape("deltagru_backward needs a delta trace".into()));
    }
    backward(params, trace, grad_y)
}

/// Reverse-mode gradients for either trace kind.
///
/// With the masks fixed, each pre-activation sum equals `b + W·x̂_t`, where
/// `x̂_t` is `x_t` on transmission and `x̂_{t-1}` otherwise. The gradient on
/// `x̂_t` therefore reaches `x_t` when transmitted and is carried back to
/// `x̂_{t-1}` when skipped. Dense traces are the all-transmitted case.
pub fn backward(params: &NetworkParams, trace: &Trace, grad_y: &[f64]) -> Result<Gradients> {
    let arch = trace.arch;
    if arch != params.arch {
        return Err(Error::Shape("trace architecture differs from parameters".into()));
    }
    let (bsz, t_len, m, q) = (trace.batch, trace.seq_len, arch.hidden, arch.output_dim);
    let rows = t_len * bsz;
    if grad_y.len() != rows * q {
        return Err(Error::LengthMismatch {
            left: grad_y.len(),
            right: rows * q,
        });
    }
    if trace.layers.len() != arch.n_layers || trace.layers.iter().any(|l| l.h.len() != rows * m) {
        return Err(Error::Shape("trace does not match its architecture".into()));
    }

    let mut grads = NetworkParams::zeros(arch);
    let top = &trace.layers[arch.n_layers - 1];
    {
        let (fc_w, fc_b) = grads.fc_mut();
        acc_atb(rows, q, m, grad_y, &top.h, fc_w);
        for row in grad_y.chunks_exact(q) {
            for (g, v) in fc_b.iter_mut().zip(row) {
                *g += v;
            }
        }
    }
    let mut d_out = vec![0.0; rows * m];
    mul_ab(rows, q, m, grad_y, params.fc_w(), 0.0, &mut d_out);

    let mut grad_h0 = vec![Vec::new(); arch.n_layers];
    for l in (0..arch.n_layers).rev() {
        let (d_in, gh0) = layer_backward(params, &mut grads, trace, l, &d_out, l > 0);
        grad_h0[l] = gh0;
        d_out = d_in;
    }
    Ok(Gradients { params: grads, grad_h0 })
}

/// Backpropagates through one layer given `d_out`, the gradient on its
/// outputs at every step. Returns the gradient on its inputs (empty unless
/// `want_input`) and on its initial hidden state.
fn layer_backward(
    params: &NetworkParams,
    grads: &mut NetworkParams,
    trace: &Trace,
    l: usize,
    d_out: &[f64],
    want_input: bool,
) -> (Vec<f64>, Vec<f64>) {
    let lt = &trace.layers[l];
    let (bsz, t_len, m, k) = (trace.batch, trace.seq_len, trace.arch.hidden, lt.in_dim);
    let g = 3 * m;
    let rows = t_len * bsz;
    let delta = matches!(trace.mode, Mode::Delta(_));
    let w = params.layer(l);

    let mut gi_all = vec![0.0; rows * g];
    let mut gh_all = vec![0.0; rows * g];
    let mut dh_next = vec![0.0; bsz * m];
    let mut hhat_carry = vec![0.0; bsz * m];
    let mut dh_hat = vec![0.0; bsz * m];

    for t in (0..t_len).rev() {
        let base = t * bsz * m;
        let gi = &mut gi_all[t * bsz * g..(t + 1) * bsz * g];
        let gh = &mut gh_all[t * bsz * g..(t + 1) * bsz * g];
        for b in 0..bsz {
            for j in 0..m {
                let i = base + b * m + j;
                let h_prev = if t == 0 { lt.h0[b * m + j] } else { lt.h[i - bsz * m] };
                let (r, z, n, hn) = (lt.r[i], lt.z[i], lt.n[i], lt.hn[i]);
                let dh = d_out[i] + dh_next[b * m + j];
                let dn = dh * (1.0 - z);
                let dz = dh * (h_prev - n);
                dh_next[b * m + j] = dh * z;
                let dan = dn * (1.0 - n * n);
                let dr = dan * hn;
                let dar = dr * r * (1.0 - r);
                let daz = dz * z * (1.0 - z);
                let o = b * g;
                gi[o + j] = dar;
                gi[o + m + j] = daz;
                gi[o + 2 * m + j] = dan;
                gh[o + j] = dar;
                gh[o + m + j] = daz;
                gh[o + 2 * m + j] = dan * r;
            }
        }
        mul_ab(bsz, g, m, gh, w.w_h, 0.0, &mut dh_hat);
        if delta {
            let mask = &lt.h_mask[base..base + bsz * m];
            for i in 0..bsz * m {
                let total = dh_hat[i] + hhat_carry[i];
                if mask[i] {
                    dh_next[i] += total;
                    hhat_carry[i] = 0.0;
                } else {
                    hhat_carry[i] = total;
                }
            }
        } else {
            for i in 0..bsz * m {
                dh_next[i] += dh_hat[i];
            }
        }
    }

    let gw = grads.layer_mut(l);
    acc_atb(rows, g, k, &gi_all, &lt.u_hat, gw.w_i);
    acc_atb(rows, g, m, &gh_all, &lt.h_hat, gw.w_h);
    for (gi, gh) in gi_all.chunks_exact(g).zip(gh_all.chunks_exact(g)) {
        for j in 0..g {
            gw.b_i[j] += gi[j];
            gw.b_h[j] += gh[j];
        }
    }

    if !want_input {
        return (Vec::new(), dh_next);
    }
    let mut d_in = vec![0.0; rows * k];
    mul_ab(rows, g, k, &gi_all, w.w_i, 0.0, &mut d_in);
    if delta {
        let mut carry = vec![0.0; bsz * k];
        for t in (0..t_len).rev() {
            let s = t * bsz * k..(t + 1) * bsz * k;
            let mask = &lt.u_mask[s.clone()];
            for (i, d) in d_in[s].iter_mut().enumerate() {
                let total = *d + carry[i];
                if mask[i] {
                    *d = total;
                    carry[i] = 0.0;
                } else {
                    *d = 0.0;
                    carry[i] = total;
                }
            }
        }
    }
    (d_in, dh_next)
}
