use super::linalg::{mul_abt, sigmoid};
use super::params::{NetArch, NetworkParams};
use super::DeltaThresholds;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Dense,
    Delta(DeltaThresholds),
}

/// Activations of one layer kept for BPTT. Every buffer is time-major
/// (`[t][b][unit]`). In dense mode `u_hat`/`h_hat` are the plain layer input
/// and previous hidden state and the masks are empty.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub in_dim: usize,
    pub u_hat: Vec<f64>,
    pub h_hat: Vec<f64>,
    pub u_mask: Vec<bool>,
    pub h_mask: Vec<bool>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    /// `W_hn ĥ + b_hn`
    pub hn: Vec<f64>,
    pub h: Vec<f64>,
    pub h0: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub arch: NetArch,
    pub mode: Mode,
    pub batch: usize,
    pub seq_len: usize,
    pub layers: Vec<LayerTrace>,
    /// Outputs, `[t][b][q]`.
    pub y: Vec<f64>,
}

/// Streaming state of one DeltaGRU layer for a single sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDeltaState {
    /// Last transmitted layer input.
    pub u_hat: Vec<f64>,
    /// Last transmitted hidden state.
    pub h_hat: Vec<f64>,
    pub h: Vec<f64>,
    /// Input-side pre-activation sums `[r; z; n]`, bias included.
    pub acc_i: Vec<f64>,
    /// Hidden-side pre-activation sums `[r; z; n]`, bias included.
    pub acc_h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaState {
    pub layers: Vec<LayerDeltaState>,
}

impl DeltaState {
    /// Nothing transmitted yet: memories at zero, sums at the biases.
    pub fn new(params: &NetworkParams) -> Self {
        let a = &params.arch;
        let layers = (0..a.n_layers)
            .map(|l| {
                let t = params.layer(l);
                LayerDeltaState {
                    u_hat: vec![0.0; a.layer_input_dim(l)],
                    h_hat: vec![0.0; a.hidden],
                    h: vec![0.0; a.hidden],
                    acc_i: t.b_i.to_vec(),
                    acc_h: t.b_h.to_vec(),
                }
            })
            .collect();
        Self { layers }
    }
}

/// Per-layer starting point for a batch, each buffer `[b][unit]`.
struct LayerStart {
    h: Vec<f64>,
    u_hat: Vec<f64>,
    h_hat: Vec<f64>,
    acc_i: Vec<f64>,
    acc_h: Vec<f64>,
}

impl LayerStart {
    fn fresh(params: &NetworkParams, l: usize, batch: usize) -> Self {
        let a = &params.arch;
        let t = params.layer(l);
        Self {
            h: vec![0.0; batch * a.hidden],
            u_hat: vec![0.0; batch * a.layer_input_dim(l)],
            h_hat: vec![0.0; batch * a.hidden],
            acc_i: t.b_i.repeat(batch),
            acc_h: t.b_h.repeat(batch),
        }
    }
}

/// Runs the network over a time-major batch `xs` (`[t][b][input]`).
pub fn forward_batch(params: &NetworkParams, mode: Mode, xs: &[f64], batch: usize) -> Result<Trace> {
    let starts = (0..params.arch.n_layers)
        .map(|l| LayerStart::fresh(params, l, batch))
        .collect();
    forward_from(params, mode, xs, batch, starts).map(|(t, _)| t)
}

fn forward_from(
    params: &NetworkParams,
    mode: Mode,
    xs: &[f64],
    batch: usize,
    starts: Vec<LayerStart>,
) -> Result<(Trace, Vec<LayerStart>)> {
    let arch = params.arch;
    arch.validate()?;
    let row = batch * arch.input_dim;
    if batch == 0 || xs.is_empty() || !xs.len().is_multiple_of(row) {
        return Err(Error::Shape(format!(
            "input of length {} is not a whole number of [{batch} x {}] steps",
            xs.len(),
            arch.input_dim
        )));
    }
    let seq_len = xs.len() / row;
    let mut layers: Vec<LayerTrace> = Vec::with_capacity(arch.n_layers);
    let mut ends = Vec::with_capacity(arch.n_layers);
    for (l, start) in starts.into_iter().enumerate() {
        let input = match layers.last() {
            None => xs,
            Some(prev) => prev.h.as_slice(),
        };
        let (tr, end) = layer_forward(params, l, mode, input, batch, seq_len, start);
        layers.push(tr);
        ends.push(end);
    }

    let (q, m) = (arch.output_dim, arch.hidden);
    let rows = seq_len * batch;
    let mut y = params.fc_b().repeat(rows);
    mul_abt(rows, m, q, &layers[arch.n_layers - 1].h, params.fc_w(), 1.0, &mut y);

    let trace = Trace {
        arch,
        mode,
        batch,
        seq_len,
        layers,
        y,
    };
    Ok((trace, ends))
}

fn layer_forward(
    params: &NetworkParams,
    l: usize,
    mode: Mode,
    input: &[f64],
    batch: usize,
    seq_len: usize,
    start: LayerStart,
) -> (LayerTrace, LayerStart) {
    let arch = &params.arch;
    let (m, k) = (arch.hidden, arch.layer_input_dim(l));
    let w = params.layer(l);
    let g = 3 * m;
    let sz_h = seq_len * batch * m;
    let sz_u = seq_len * batch * k;
    let delta = matches!(mode, Mode::Delta(_));

    let mut tr = LayerTrace {
        in_dim: k,
        u_hat: vec![0.0; sz_u],
        h_hat: vec![0.0; sz_h],
        u_mask: if delta { vec![false; sz_u] } else { Vec::new() },
        h_mask: if delta { vec![false; sz_h] } else { Vec::new() },
        r: vec![0.0; sz_h],
        z: vec![0.0; sz_h],
        n: vec![0.0; sz_h],
        hn: vec![0.0; sz_h],
        h: vec![0.0; sz_h],
        h0: start.h.clone(),
    };

    let LayerStart {
        mut h,
        mut u_hat,
        mut h_hat,
        mut acc_i,
        mut acc_h,
    } = start;
    let mut a_i = vec![0.0; batch * g];
    let mut a_h = vec![0.0; batch * g];
    let mut du = vec![0.0; batch * k];
    let mut dh = vec![0.0; batch * m];

    for t in 0..seq_len {
        let u_t = &input[t * batch * k..(t + 1) * batch * k];
        let (ai, ah): (&[f64], &[f64]) = match mode {
            Mode::Dense => {
                for b in 0..batch {
                    a_i[b * g..(b + 1) * g].copy_from_slice(w.b_i);
                    a_h[b * g..(b + 1) * g].copy_from_slice(w.b_h);
                }
                mul_abt(batch, k, g, u_t, w.w_i, 1.0, &mut a_i);
                mul_abt(batch, m, g, &h, w.w_h, 1.0, &mut a_h);
                tr.u_hat[t * batch * k..(t + 1) * batch * k].copy_from_slice(u_t);
                tr.h_hat[t * batch * m..(t + 1) * batch * m].copy_from_slice(&h);
                (&a_i, &a_h)
            }
            Mode::Delta(th) => {
                let mask_u = &mut tr.u_mask[t * batch * k..(t + 1) * batch * k];
                let any_u = encode_deltas(u_t, &mut u_hat, &mut du, mask_u, th.theta_x);
                let mask_h = &mut tr.h_mask[t * batch * m..(t + 1) * batch * m];
                let any_h = encode_deltas(&h, &mut h_hat, &mut dh, mask_h, th.theta_h);
                if any_u {
                    mul_abt(batch, k, g, &du, w.w_i, 1.0, &mut acc_i);
                }
                if any_h {
                    mul_abt(batch, m, g, &dh, w.w_h, 1.0, &mut acc_h);
                }
                tr.u_hat[t * batch * k..(t + 1) * batch * k].copy_from_slice(&u_hat);
                tr.h_hat[t * batch * m..(t + 1) * batch * m].copy_from_slice(&h_hat);
                (&acc_i, &acc_h)
            }
        };

        let base = t * batch * m;
        for b in 0..batch {
            let ai = &ai[b * g..(b + 1) * g];
            let ah = &ah[b * g..(b + 1) * g];
            for j in 0..m {
                let r = sigmoid(ai[j] + ah[j]);
                let z = sigmoid(ai[m + j] + ah[m + j]);
                let hn = ah[2 * m + j];
                let n = (ai[2 * m + j] + r * hn).tanh();
                let hp = h[b * m + j];
                let hnew = (1.0 - z) * n + z * hp;
                let i = base + b * m + j;
                tr.r[i] = r;
                tr.z[i] = z;
                tr.n[i] = n;
                tr.hn[i] = hn;
                tr.h[i] = hnew;
            }
        }
        h.copy_from_slice(&tr.h[base..base + batch * m]);
    }
    let end = LayerStart {
        h,
        u_hat,
        h_hat,
        acc_i,
        acc_h,
    };
    (tr, end)
}

/// Thresholded delta encoding. A change is transmitted when `|x - x̂| >= θ`;
/// the memory follows the input only on transmission. Returns whether any
/// delta is non-zero.
fn encode_deltas(x: &[f64], memory: &mut [f64], delta: &mut [f64], mask: &mut [bool], theta: f64) -> bool {
    let mut any = false;
    for i in 0..x.len() {
        let d = x[i] - memory[i];
        if d.abs() >= theta {
            mask[i] = true;
            delta[i] = d;
            memory[i] = x[i];
            any |= d != 0.0;
        } else {
            mask[i] = false;
            delta[i] = 0.0;
        }
    }
    any
}

#[derive(Debug, Clone)]
pub struct SequenceOutput {
    /// `[t][q]`
    pub y: Vec<f64>,
    /// Final hidden state per layer.
    pub h_final: Vec<Vec<f64>>,
    pub trace: Trace,
}

fn final_hidden(trace: &Trace) -> Vec<Vec<f64>> {
    let m = trace.arch.hidden;
    let off = (trace.seq_len - 1) * trace.batch * m;
    trace.layers.iter().map(|l| l.h[off..off + m].to_vec()).collect()
}

/// GRU over one sequence `x` (`[t][input]`), starting from `h0` (zeros if
/// `None`).
pub fn gru_forward(params: &NetworkParams, x: &[f64], h0: Option<&[Vec<f64>]>) -> Result<SequenceOutput> {
    let arch = params.arch;
    let mut starts: Vec<LayerStart> = (0..arch.n_layers).map(|l| LayerStart::fresh(params, l, 1)).collect();
    if let Some(h0) = h0 {
        if h0.len() != arch.n_layers || h0.iter().any(|h| h.len() != arch.hidden) {
            return Err(Error::Shape("initial hidden state does not match architecture".into()));
        }
        for (s, h) in starts.iter_mut().zip(h0) {
            s.h.copy_from_slice(h);
        }
    }
    let (trace, _) = forward_from(params, Mode::Dense, x, 1, starts)?;
    Ok(SequenceOutput {
        y: trace.y.clone(),
        h_final: final_hidden(&trace),
        trace,
    })
}

/// DeltaGRU over one sequence, continuing from `state`.
pub fn deltagru_forward(
    params: &NetworkParams,
    thresholds: DeltaThresholds,
    x: &[f64],
    state: &DeltaState,
) -> Result<(SequenceOutput, DeltaState)> {
    let arch = params.arch;
    if state.layers.len() != arch.n_layers {
        return Err(Error::Shape("delta state does not match architecture".into()));
    }
    let mut starts = Vec::with_capacity(arch.n_layers);
    for (l, s) in state.layers.iter().enumerate() {
        let (m, k) = (arch.hidden, arch.layer_input_dim(l));
        if s.u_hat.len() != k
            || s.h.len() != m
            || s.h_hat.len() != m
            || s.acc_i.len() != 3 * m
            || s.acc_h.len() != 3 * m
        {
            return Err(Error::Shape(format!("delta state layer {l} has wrong sizes")));
        }
        starts.push(LayerStart {
            h: s.h.clone(),
            u_hat: s.u_hat.clone(),
            h_hat: s.h_hat.clone(),
            acc_i: s.acc_i.clone(),
            acc_h: s.acc_h.clone(),
        });
    }
    let (trace, ends) = forward_from(params, Mode::Delta(thresholds), x, 1, starts)?;
    let next = DeltaState {
        layers: ends
            .into_iter()
            .map(|e| LayerDeltaState {
                u_hat: e.u_hat,
                h_hat: e.h_hat,
                h: e.h,
                acc_i: e.acc_i,
                acc_h: e.acc_h,
            })
            .collect(),
    };
    Ok((
        SequenceOutput {
            y: trace.y.clone(),
            h_final: final_hidden(&trace),
            trace,
        },
        next,
    ))
}
