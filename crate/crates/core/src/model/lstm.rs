//! Single-direction LSTM with explicit forward traces and backpropagation
//! through time.
//!
//! Standard gate equations, with the four gate pre-activations stacked as
//! rows `[input, forget, cell, output]` of one `4H x n` matrix:
//!
//! ```text
//! a_t = W x_t + U h_{t-1} + b
//! i = sigmoid(a_i)   f = sigmoid(a_f)   g = tanh(a_g)   o = sigmoid(a_o)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! Only the final hidden state feeds the encoder output, so the backward
//! pass starts from a gradient at the last step and carries it through the
//! recurrence.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// Input weights, `4H x d`.
    pub w: Array2<f64>,
    /// Recurrent weights, `4H x H`.
    pub u: Array2<f64>,
    /// Bias, `4H`.
    pub b: Array1<f64>,
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

impl LstmParams {
    pub fn init(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut b = Array1::zeros(4 * hidden);
        // forget-gate bias starts at 1 so early training does not wipe the cell
        b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        LstmParams {
            w: xavier(4 * hidden, input_dim, rng),
            u: xavier(4 * hidden, hidden, rng),
            b,
        }
    }

    pub fn zeros_like(&self) -> Self {
        LstmParams {
            w: Array2::zeros(self.w.raw_dim()),
            u: Array2::zeros(self.u.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.ncols()
    }
}

/// Forward-pass activations kept for backpropagation.
pub struct LstmTrace {
    /// Post-activation gates, `4H x n` (rows i, f, g, o).
    pub gates: Array2<f64>,
    /// Cell states, `H x n`.
    pub c: Array2<f64>,
    /// `tanh(c_t)`, `H x n`.
    pub tanh_c: Array2<f64>,
    /// Hidden states, `H x n`.
    pub h: Array2<f64>,
}

impl LstmTrace {
    pub fn final_hidden(&self) -> Array1<f64> {
        self.h.column(self.h.ncols() - 1).to_owned()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Run the cell over input columns `x` (`d x n`, n >= 1).
pub fn lstm_forward(params: &LstmParams, x: &Array2<f64>) -> LstmTrace {
    let hidden = params.hidden();
    let n = x.ncols();
    let wx = params.w.dot(x); // 4H x n
    let mut gates = Array2::zeros((4 * hidden, n));
    let mut c = Array2::zeros((hidden, n));
    let mut tanh_c = Array2::zeros((hidden, n));
    let mut h = Array2::zeros((hidden, n));

    let mut h_prev: Array1<f64> = Array1::zeros(hidden);
    let mut c_prev: Array1<f64> = Array1::zeros(hidden);
    for t in 0..n {
        let mut a = wx.column(t).to_owned() + params.u.dot(&h_prev) + &params.b;
        for (row, v) in a.indexed_iter_mut() {
            *v = if (2 * hidden..3 * hidden).contains(&row) {
                v.tanh()
            } else {
                sigmoid(*v)
            };
        }
        let i = a.slice(s![0..hidden]);
        let f = a.slice(s![hidden..2 * hidden]);
        let g = a.slice(s![2 * hidden..3 * hidden]);
        let o = a.slice(s![3 * hidden..4 * hidden]);

        let c_t = &f.to_owned() * &c_prev + &i.to_owned() * &g.to_owned();
        let tc = c_t.mapv(f64::tanh);
        let h_t = &o.to_owned() * &tc;

        gates.column_mut(t).assign(&a);
        c.column_mut(t).assign(&c_t);
        tanh_c.column_mut(t).assign(&tc);
        h.column_mut(t).assign(&h_t);
        h_prev = h_t;
        c_prev = c_t;
    }
    LstmTrace {
        gates,
        c,
        tanh_c,
        h,
    }
}

/// Gradients produced by one backward pass.
pub struct LstmBackward {
    pub grads: LstmParams,
    /// Gradient with respect to the input columns, `d x n`.
    pub dx: Array2<f64>,
}

/// Backpropagate from a gradient on the final hidden state.
pub fn lstm_backward(
    params: &LstmParams,
    x: &Array2<f64>,
    trace: &LstmTrace,
    dh_final: &Array1<f64>,
) -> LstmBackward {
    let hidden = params.hidden();
    let n = x.ncols();
    let mut da_all = Array2::zeros((4 * hidden, n));
    let mut dh = dh_final.clone();
    let mut dc: Array1<f64> = Array1::zeros(hidden);

    for t in (0..n).rev() {
        let i = trace.gates.slice(s![0..hidden, t]);
        let f = trace.gates.slice(s![hidden..2 * hidden, t]);
        let g = trace.gates.slice(s![2 * hidden..3 * hidden, t]);
        let o = trace.gates.slice(s![3 * hidden..4 * hidden, t]);
        let tc = trace.tanh_c.column(t);

        let do_ = &dh * &tc;
        let da_o = &do_ * &o.to_owned() * &o.mapv(|v| 1.0 - v);
        dc = dc + &dh * &o.to_owned() * &tc.mapv(|v| 1.0 - v * v);

        let c_prev = if t > 0 {
            trace.c.column(t - 1).to_owned()
        } else {
            Array1::zeros(hidden)
        };
        let da_i = &dc * &g.to_owned() * &i.to_owned() * &i.mapv(|v| 1.0 - v);
        let da_g = &dc * &i.to_owned() * &g.mapv(|v| 1.0 - v * v);
        let da_f = &dc * &c_prev * &f.to_owned() * &f.mapv(|v| 1.0 - v);

        let mut da_col = da_all.column_mut(t);
        da_col.slice_mut(s![0..hidden]).assign(&da_i);
        da_col.slice_mut(s![hidden..2 * hidden]).assign(&da_f);
        da_col.slice_mut(s![2 * hidden..3 * hidden]).assign(&da_g);
        da_col.slice_mut(s![3 * hidden..4 * hidden]).assign(&da_o);

        dh = params.u.t().dot(&da_all.column(t));
        dc = &dc * &f.to_owned();
    }

    // h_prev matrix: columns [0, h_0, ..., h_{n-2}]
    let mut h_prev = Array2::zeros((hidden, n));
    if n > 1 {
        h_prev
            .slice_mut(s![.., 1..])
            .assign(&trace.h.slice(s![.., ..n - 1]));
    }
    let grads = LstmParams {
        w: da_all.dot(&x.t()),
        u: da_all.dot(&h_prev.t()),
        b: da_all.sum_axis(Axis(1)),
    };
    let dx = params.w.t().dot(&da_all);
    LstmBackward { grads, dx }
}
