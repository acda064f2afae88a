//! Single LSTM cell with batched forward and backpropagation through time.
//!
//! Gate blocks are laid out `[i | f | g | o]` along the `4H` axis; `i`, `f`, `o`
//! pass through the logistic function and `g` through `tanh`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::params::{slice1, slice1_mut, slice2, slice2_mut, uniform1, uniform2, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `(inputs, 4H)`.
    pub wx: Array2<f64>,
    /// `(H, 4H)`.
    pub wh: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmCell {
    pub fn init<R: Rng>(rng: &mut R, inputs: usize, hidden: usize) -> Self {
        LstmCell {
            wx: uniform2(rng, inputs, 4 * hidden, hidden),
            wh: uniform2(rng, hidden, 4 * hidden, hidden),
            b: uniform1(rng, 4 * hidden, hidden),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        LstmCell {
            wx: Array2::zeros((inputs, 4 * hidden)),
            wh: Array2::zeros((hidden, 4 * hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.wx.nrows()
    }

    fn check(&self) -> Result<()> {
        let h4 = 4 * self.hidden();
        if self.wx.ncols() != h4 || self.wh.ncols() != h4 || self.b.len() != h4 {
            return Err(Error::Shape(format!(
                "LSTM gate blocks inconsistent with hidden size {}",
                self.hidden()
            )));
        }
        Ok(())
    }
}

impl Params for LstmCell {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![slice2(&self.wx), slice2(&self.wh), slice1(&self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![slice2_mut(&mut self.wx), slice2_mut(&mut self.wh), slice1_mut(&mut self.b)]
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything one step needs for its backward pass, apart from its input.
struct StepCache {
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    /// Activated gates, `(B, 4H)`.
    gates: Array2<f64>,
    tanh_c: Array2<f64>,
}

/// Batched step; rows of `x`, `h_prev`, `c_prev` are independent samples.
fn step_batch(
    cell: &LstmCell,
    x: ArrayView2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
) -> (Array2<f64>, Array2<f64>, StepCache) {
    let hd = cell.hidden();
    let batch = x.nrows();
    let mut gates = Array2::zeros((batch, 4 * hd));
    gates_into(cell, x, h_prev.view(), &mut gates);
    let mut c = Array2::zeros((batch, hd));
    let mut h = Array2::zeros((batch, hd));
    let mut tanh_c = Array2::zeros((batch, hd));
    for r in 0..batch {
        let g = gates.row_mut(r).into_slice().expect("standard layout");
        let cp = c_prev.row(r);
        let cp = cp.as_slice().expect("standard layout");
        let (cr, hr, tr) = (
            c.row_mut(r).into_slice().unwrap(),
            h.row_mut(r).into_slice().unwrap(),
            tanh_c.row_mut(r).into_slice().unwrap(),
        );
        for j in 0..hd {
            let i = sigmoid(g[j]);
            let f = sigmoid(g[hd + j]);
            let gg = g[2 * hd + j].tanh();
            let o = sigmoid(g[3 * hd + j]);
            g[j] = i;
            g[hd + j] = f;
            g[2 * hd + j] = gg;
            g[3 * hd + j] = o;
            cr[j] = f * cp[j] + i * gg;
            tr[j] = cr[j].tanh();
            hr[j] = o * tr[j];
        }
    }
    let cache = StepCache {
        h_prev,
        c_prev,
        gates,
        tanh_c,
    };
    (h, c, cache)
}

/// `(h_t, c_t)` for a single sample.
pub fn lstm_cell_step(
    x_t: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    cell: &LstmCell,
) -> Result<(Vec<f64>, Vec<f64>)> {
    cell.check()?;
    let hd = cell.hidden();
    if x_t.len() != cell.inputs() || h_prev.len() != hd || c_prev.len() != hd {
        return Err(Error::Shape(format!(
            "LSTM step expects x[{}], h[{hd}], c[{hd}]; got x[{}], h[{}], c[{}]",
            cell.inputs(),
            x_t.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let row = |v: &[f64]| Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap();
    let (h, c, _) = step_batch(cell, row(x_t).view(), row(h_prev), row(c_prev));
    Ok((h.into_raw_vec_and_offset().0, c.into_raw_vec_and_offset().0))
}

/// Cached forward pass over a whole sequence, starting from zero state.
pub struct SequenceCache {
    steps: Vec<StepCache>,
}

/// `gates = x·Wx + h·Wh + b`, pre-activation.
fn gates_into(cell: &LstmCell, x: ArrayView2<f64>, h: ArrayView2<f64>, gates: &mut Array2<f64>) {
    gates.assign(&cell.b);
    ndarray::linalg::general_mat_mul(1.0, &x, &cell.wx, 1.0, gates);
    ndarray::linalg::general_mat_mul(1.0, &h, &cell.wh, 1.0, gates);
}

/// Final hidden state `(B, H)` after running `xs` in order from zero state,
/// without keeping anything for a backward pass.
pub fn sequence_final_state<'a>(cell: &LstmCell, xs: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> Array2<f64> {
    let mut xs = xs.into_iter().peekable();
    let batch = xs.peek().map_or(0, |x| x.nrows());
    let hd = cell.hidden();
    let mut h = Array2::<f64>::zeros((batch, hd));
    let mut c = Array2::<f64>::zeros((batch, hd));
    let mut gates = Array2::zeros((batch, 4 * hd));
    for x in xs {
        gates_into(cell, x, h.view(), &mut gates);
        for ((g, mut hr), mut cr) in gates.rows().into_iter().zip(h.rows_mut()).zip(c.rows_mut()) {
            let g = g.as_slice().unwrap();
            let hr = hr.as_slice_mut().unwrap();
            let cr = cr.as_slice_mut().unwrap();
            for j in 0..hd {
                cr[j] = sigmoid(g[hd + j]) * cr[j] + sigmoid(g[j]) * g[2 * hd + j].tanh();
                hr[j] = sigmoid(g[3 * hd + j]) * cr[j].tanh();
            }
        }
    }
    h
}

/// Runs the cell over `xs` in order and returns the final hidden state `(B, H)`.
pub fn sequence_forward<'a>(cell: &LstmCell, xs: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> (Array2<f64>, SequenceCache) {
    let mut xs = xs.into_iter().peekable();
    let batch = xs.peek().map_or(0, |x| x.nrows());
    let hd = cell.hidden();
    let mut h = Array2::zeros((batch, hd));
    let mut c = Array2::zeros((batch, hd));
    let mut steps = Vec::new();
    for x in xs {
        let (hn, cn, cache) = step_batch(cell, x, h, c);
        steps.push(cache);
        h = hn;
        c = cn;
    }
    (h, SequenceCache { steps })
}

/// Accumulates into `grads` the parameter gradient given `∂L/∂h_final`.
/// `xs` must yield the inputs given to the forward pass, in reverse order.
pub fn sequence_backward<'a>(
    cell: &LstmCell,
    cache: &SequenceCache,
    xs_reversed: impl IntoIterator<Item = ArrayView2<'a, f64>>,
    dh_final: ArrayView2<f64>,
    grads: &mut LstmCell,
) {
    let hd = cell.hidden();
    let batch = dh_final.nrows();
    let mut dh = dh_final.to_owned();
    let mut dc = Array2::<f64>::zeros((batch, hd));
    let mut da = Array2::<f64>::zeros((batch, 4 * hd));
    for (step, x) in cache.steps.iter().rev().zip(xs_reversed) {
        for r in 0..batch {
            let g = step.gates.row(r);
            let g = g.as_slice().unwrap();
            let tc = step.tanh_c.row(r);
            let tc = tc.as_slice().unwrap();
            let cp = step.c_prev.row(r);
            let cp = cp.as_slice().unwrap();
            let dhr = dh.row(r);
            let dhr = dhr.as_slice().unwrap();
            let dcr = dc.row_mut(r).into_slice().unwrap();
            let dar = da.row_mut(r).into_slice().unwrap();
            for j in 0..hd {
                let (i, f, gg, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                let dct = dcr[j] + dhr[j] * o * (1.0 - tc[j] * tc[j]);
                dar[j] = dct * gg * i * (1.0 - i);
                dar[hd + j] = dct * cp[j] * f * (1.0 - f);
                dar[2 * hd + j] = dct * i * (1.0 - gg * gg);
                dar[3 * hd + j] = dhr[j] * tc[j] * o * (1.0 - o);
                dcr[j] = dct * f;
            }
        }
        ndarray::linalg::general_mat_mul(1.0, &x.t(), &da, 1.0, &mut grads.wx);
        ndarray::linalg::general_mat_mul(1.0, &step.h_prev.t(), &da, 1.0, &mut grads.wh);
        grads.b += &da.sum_axis(Axis(0));
        ndarray::linalg::general_mat_mul(1.0, &da, &cell.wh.t(), 0.0, &mut dh);
    }
}
