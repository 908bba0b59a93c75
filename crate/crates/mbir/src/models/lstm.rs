//! Bidirectional LSTM over character embeddings, with hand-written
//! backpropagation through time.
//!
//! Gate layout inside the stacked weight matrices is `[input; forget; cell;
//! output]`, each block `hidden` rows. The forget-gate bias initializes to 1.

use rand::Rng;

use crate::optim::ParamTensor;

/// Weights for one direction: `wx` is `4H x D`, `wh` is `4H x H`, `b` is
/// `1 x 4H`.
#[derive(Debug, Clone)]
pub struct LstmDir {
    pub wx: ParamTensor,
    pub wh: ParamTensor,
    pub b: ParamTensor,
}

/// Forward and backward direction parameters.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub hidden: usize,
    pub input: usize,
    pub fwd: LstmDir,
    pub bwd: LstmDir,
}

impl BiLstm {
    pub fn new<R: Rng>(input: usize, hidden: usize, half_width: f64, rng: &mut R) -> Self {
        let dir = |prefix: &str, rng: &mut R| {
            let wx =
                ParamTensor::uniform(format!("{prefix}_wx"), 4 * hidden, input, half_width, rng);
            let wh =
                ParamTensor::uniform(format!("{prefix}_wh"), 4 * hidden, hidden, half_width, rng);
            let mut b = ParamTensor::zeros(format!("{prefix}_b"), 1, 4 * hidden);
            for h in 0..hidden {
                b.values[hidden + h] = 1.0; // forget gate
            }
            LstmDir { wx, wh, b }
        };
        let fwd = dir("lstm_fwd", rng);
        let bwd = dir("lstm_bwd", rng);
        BiLstm {
            hidden,
            input,
            fwd,
            bwd,
        }
    }
}

/// Per-step activations recorded during the forward pass.
#[derive(Debug, Default, Clone)]
pub struct Trace {
    pub i: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub o: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub tanh_c: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

/// Dense gradients for one direction, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct DirGrads {
    pub wx: Vec<f64>,
    pub wh: Vec<f64>,
    pub b: Vec<f64>,
}

impl DirGrads {
    pub fn zeros(dir: &LstmDir) -> Self {
        DirGrads {
            wx: vec![0.0; dir.wx.len()],
            wh: vec![0.0; dir.wh.len()],
            b: vec![0.0; dir.b.len()],
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Run one direction over `xs` (already ordered for this direction).
pub fn forward(dir: &LstmDir, hidden: usize, xs: &[&[f64]]) -> Trace {
    let mut tr = Trace::default();
    let mut h_prev = vec![0.0; hidden];
    let mut c_prev = vec![0.0; hidden];
    for &x in xs {
        let mut i_g = vec![0.0; hidden];
        let mut f_g = vec![0.0; hidden];
        let mut g_g = vec![0.0; hidden];
        let mut o_g = vec![0.0; hidden];
        for h in 0..hidden {
            for (gate, out) in [&mut i_g, &mut f_g, &mut g_g, &mut o_g]
                .into_iter()
                .enumerate()
            {
                let row = gate * hidden + h;
                let mut z = dir.b.values[row] as f64;
                let wx_row = dir.wx.row(row);
                for (k, &xk) in x.iter().enumerate() {
                    z += wx_row[k] as f64 * xk;
                }
                let wh_row = dir.wh.row(row);
                for (k, &hk) in h_prev.iter().enumerate() {
                    z += wh_row[k] as f64 * hk;
                }
                out[h] = if gate == 2 { z.tanh() } else { sigmoid(z) };
            }
        }
        let mut c_t = vec![0.0; hidden];
        let mut tanh_c = vec![0.0; hidden];
        let mut h_t = vec![0.0; hidden];
        for h in 0..hidden {
            c_t[h] = f_g[h] * c_prev[h] + i_g[h] * g_g[h];
            tanh_c[h] = c_t[h].tanh();
            h_t[h] = o_g[h] * tanh_c[h];
        }
        tr.i.push(i_g);
        tr.f.push(f_g);
        tr.g.push(g_g);
        tr.o.push(o_g);
        tr.c.push(c_t.clone());
        tr.tanh_c.push(tanh_c);
        tr.h.push(h_t.clone());
        h_prev = h_t;
        c_prev = c_t;
    }
    tr
}

/// Backpropagate through one direction. `dh_ext[t]` is the loss gradient of
/// the step-`t` hidden state; returns parameter gradients and per-step input
/// gradients (same order as `xs`).
pub fn backward(
    dir: &LstmDir,
    hidden: usize,
    xs: &[&[f64]],
    tr: &Trace,
    dh_ext: &[Vec<f64>],
) -> (DirGrads, Vec<Vec<f64>>) {
    let n = xs.len();
    let input = dir.wx.cols;
    let mut grads = DirGrads::zeros(dir);
    let mut dxs = vec![vec![0.0; input]; n];
    let mut dh_rec = vec![0.0; hidden];
    let mut dc_rec = vec![0.0; hidden];

    for t in (0..n).rev() {
        let mut dz = vec![0.0; 4 * hidden];
        let c_prev: &[f64] = if t == 0 { &[] } else { &tr.c[t - 1] };
        for h in 0..hidden {
            let dh = dh_ext[t][h] + dh_rec[h];
            let o = tr.o[t][h];
            let tc = tr.tanh_c[t][h];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_rec[h];
            let i_g = tr.i[t][h];
            let f_g = tr.f[t][h];
            let g_g = tr.g[t][h];
            let d_i = dc * g_g;
            let d_f = dc * if t == 0 { 0.0 } else { c_prev[h] };
            let d_g = dc * i_g;
            dz[h] = d_i * i_g * (1.0 - i_g);
            dz[hidden + h] = d_f * f_g * (1.0 - f_g);
            dz[2 * hidden + h] = d_g * (1.0 - g_g * g_g);
            dz[3 * hidden + h] = d_o * o * (1.0 - o);
            dc_rec[h] = dc * f_g;
        }
        let x = xs[t];
        let h_prev: &[f64] = if t == 0 { &[] } else { &tr.h[t - 1] };
        let mut dh_next = vec![0.0; hidden];
        for (row, &dz_r) in dz.iter().enumerate() {
            grads.b[row] += dz_r;
            let wx_base = row * input;
            for (k, &xk) in x.iter().enumerate() {
                grads.wx[wx_base + k] += dz_r * xk;
                dxs[t][k] += dz_r * dir.wx.values[wx_base + k] as f64;
            }
            let wh_base = row * hidden;
            for k in 0..hidden {
                if t > 0 {
                    grads.wh[wh_base + k] += dz_r * h_prev[k];
                }
                dh_next[k] += dz_r * dir.wh.values[wh_base + k] as f64;
            }
        }
        dh_rec = dh_next;
    }
    (grads, dxs)
}
