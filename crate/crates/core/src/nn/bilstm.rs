//! Bidirectional LSTM over a window of `2k + 1` rows centred on the prediction
//! time. The forward cell reads rows `0..=k`, the backward cell reads rows
//! `2k` down to `k`; both final hidden states feed an affine head.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::lstm::{sequence_backward, sequence_final_state, sequence_forward, LstmCell, SequenceCache};
use super::params::{slice1, slice1_mut, slice2, slice2_mut, uniform1, uniform2, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BilstmWeights {
    pub forward: LstmCell,
    pub backward: LstmCell,
    /// `(2H, outputs)`; rows `0..H` read the forward state.
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
    /// Half-width of the input window.
    pub k: usize,
}

impl BilstmWeights {
    pub fn init<R: Rng>(rng: &mut R, inputs: usize, hidden: usize, outputs: usize, k: usize) -> Self {
        let forward = LstmCell::init(rng, inputs, hidden);
        let backward = LstmCell::init(rng, inputs, hidden);
        BilstmWeights {
            forward,
            backward,
            head_w: uniform2(rng, 2 * hidden, outputs, 2 * hidden),
            head_b: uniform1(rng, outputs, 2 * hidden),
            k,
        }
    }

    pub fn zeros(inputs: usize, hidden: usize, outputs: usize, k: usize) -> Self {
        BilstmWeights {
            forward: LstmCell::zeros(inputs, hidden),
            backward: LstmCell::zeros(inputs, hidden),
            head_w: Array2::zeros((2 * hidden, outputs)),
            head_b: Array1::zeros(outputs),
            k,
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn inputs(&self) -> usize {
        self.forward.inputs()
    }

    pub fn window_len(&self) -> usize {
        2 * self.k + 1
    }
}

impl Params for BilstmWeights {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.forward.tensors();
        t.extend(self.backward.tensors());
        t.push(slice2(&self.head_w));
        t.push(slice1(&self.head_b));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.forward.tensors_mut();
        t.extend(self.backward.tensors_mut());
        t.push(slice2_mut(&mut self.head_w));
        t.push(slice1_mut(&mut self.head_b));
        t
    }
}

pub struct BilstmCache {
    forward: SequenceCache,
    backward: SequenceCache,
    /// `[h_fwd | h_bwd]`, `(B, 2H)`.
    joined: Array2<f64>,
}

fn check_inputs(w: &BilstmWeights, xs: &[Array2<f64>]) -> Result<()> {
    if xs.len() != w.window_len() {
        return Err(Error::Shape(format!(
            "BiLSTM window must hold {} rows, got {}",
            w.window_len(),
            xs.len()
        )));
    }
    if let Some(x) = xs.iter().find(|x| x.ncols() != w.inputs()) {
        return Err(Error::Shape(format!(
            "BiLSTM expects {} features per row, got {}",
            w.inputs(),
            x.ncols()
        )));
    }
    Ok(())
}

/// `xs[p]` holds window position `p` for every sample in the batch, `(B, inputs)`.
pub fn forward_batch(w: &BilstmWeights, xs: &[Array2<f64>]) -> Result<(Array2<f64>, BilstmCache)> {
    check_inputs(w, xs)?;
    let k = w.k;
    let (h_f, forward) = sequence_forward(&w.forward, xs[..=k].iter().map(|x| x.view()));
    let (h_b, backward) = sequence_forward(&w.backward, xs[k..].iter().rev().map(|x| x.view()));
    let joined = concatenate![Axis(1), h_f, h_b];
    let mut out = joined.dot(&w.head_w);
    out += &w.head_b;
    Ok((
        out,
        BilstmCache {
            forward,
            backward,
            joined,
        },
    ))
}

/// Gradient of the weights given `d_out = ∂L/∂output`; `xs` is the batch given to [`forward_batch`].
pub fn backward_batch(w: &BilstmWeights, xs: &[Array2<f64>], cache: &BilstmCache, d_out: ArrayView2<f64>) -> BilstmWeights {
    let (hd, k) = (w.hidden(), w.k);
    let mut g = w.zeros_like();
    g.head_w = cache.joined.t().dot(&d_out);
    g.head_b = d_out.sum_axis(Axis(0));
    let d_joined = d_out.dot(&w.head_w.t());
    let fwd_inputs = xs[..=k].iter().rev().map(|x| x.view());
    sequence_backward(&w.forward, &cache.forward, fwd_inputs, d_joined.slice(s![.., ..hd]), &mut g.forward);
    let bwd_inputs = xs[k..].iter().map(|x| x.view());
    sequence_backward(&w.backward, &cache.backward, bwd_inputs, d_joined.slice(s![.., hd..]), &mut g.backward);
    g
}

/// Forward pass without a cache; same checks as [`forward_batch`].
pub fn predict_batch(w: &BilstmWeights, xs: &[Array2<f64>]) -> Result<Array2<f64>> {
    check_inputs(w, xs)?;
    let k = w.k;
    let h_f = sequence_final_state(&w.forward, xs[..=k].iter().map(|x| x.view()));
    let h_b = sequence_final_state(&w.backward, xs[k..].iter().rev().map(|x| x.view()));
    let mut out = concatenate![Axis(1), h_f, h_b].dot(&w.head_w);
    out += &w.head_b;
    Ok(out)
}

/// Single-window prediction; `window` is `(2k + 1, inputs)`.
pub fn bilstm_forward(window: ArrayView2<f64>, w: &BilstmWeights) -> Result<[f64; 2]> {
    if window.nrows() != w.window_len() {
        return Err(Error::Shape(format!(
            "BiLSTM window must hold {} rows, got {}",
            w.window_len(),
            window.nrows()
        )));
    }
    let xs: Vec<Array2<f64>> = window.outer_iter().map(|r| r.insert_axis(Axis(0)).to_owned()).collect();
    let (out, _) = forward_batch(w, &xs)?;
    if out.ncols() != 2 {
        return Err(Error::Shape(format!("BiLSTM head has {} outputs", out.ncols())));
    }
    Ok([out[[0, 0]], out[[0, 1]]])
}

/// Row indices of the window centred on `centre`, clamped to `0..len` so that
/// boundary rows repeat. `stride` dilates the window.
pub fn window_indices(centre: usize, len: usize, k: usize, stride: usize) -> impl Iterator<Item = usize> {
    let (c, last, k, stride) = (centre as isize, len as isize - 1, k as isize, stride as isize);
    (-k..=k).map(move |o| (c + o * stride).clamp(0, last) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_return_head_bias() {
        let mut w = BilstmWeights::zeros(18, 4, 2, 3);
        w.head_b[0] = 0.125;
        w.head_b[1] = -7.0;
        let window = Array2::from_elem((7, 18), 0.3);
        assert_eq!(bilstm_forward(window.view(), &w).unwrap(), [0.125, -7.0]);
    }

    #[test]
    fn wrong_window_length() {
        let w = BilstmWeights::zeros(18, 4, 2, 3);
        let window = Array2::zeros((6, 18));
        assert!(matches!(bilstm_forward(window.view(), &w), Err(Error::Shape(_))));
    }

    #[test]
    fn window_indices_clamp_at_edges() {
        assert_eq!(window_indices(0, 10, 2, 1).collect::<Vec<_>>(), [0, 0, 0, 1, 2]);
        assert_eq!(window_indices(9, 10, 2, 1).collect::<Vec<_>>(), [7, 8, 9, 9, 9]);
        assert_eq!(window_indices(5, 10, 2, 2).collect::<Vec<_>>(), [1, 3, 5, 7, 9]);
    }

    #[test]
    fn head_and_both_directions_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (inputs, hd, k, batch) = (6, 4, 2, 3);
        let w = BilstmWeights::init(&mut rng, inputs, hd, 2, k);
        let xs: Vec<Array2<f64>> = (0..2 * k + 1)
            .map(|_| Array2::from_shape_fn((batch, inputs), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let objective = |w: &BilstmWeights| {
            let (out, _) = forward_batch(w, &xs).unwrap();
            0.5 * out.iter().map(|v| v * v).sum::<f64>()
        };
        let (out, cache) = forward_batch(&w, &xs).unwrap();
        let grads = backward_batch(&w, &xs, &cache, out.view());
        assert_eq!(predict_batch(&w, &xs).unwrap(), out);
        let h = 1e-5;
        let mut probe = w.clone();
        for (t, g) in grads.tensors().iter().enumerate() {
            for n in 0..g.len() {
                let orig = probe.tensors()[t][n];
                probe.tensors_mut()[t][n] = orig + h;
                let up = objective(&probe);
                probe.tensors_mut()[t][n] = orig - h;
                let down = objective(&probe);
                probe.tensors_mut()[t][n] = orig;
                let numeric = (up - down) / (2.0 * h);
                let err = (numeric - g[n]).abs() / numeric.abs().max(g[n].abs()).max(1e-6);
                assert!(err < 1e-6, "tensor {t} entry {n}: {numeric} vs {}", g[n]);
            }
        }
    }
}
