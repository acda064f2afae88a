//! Fully connected network: affine layers with rectifier activations between
//! them and a linear output layer.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{slice1, slice1_mut, slice2, slice2_mut, uniform1, uniform2, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(inputs, outputs)`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcnnWeights {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

impl FcnnWeights {
    /// `sizes = [input, hidden…, output]`.
    pub fn init<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .map(|io| Dense {
                w: uniform2(rng, io[0], io[1], io[0]),
                b: uniform1(rng, io[1], io[0]),
            })
            .collect();
        FcnnWeights {
            layers,
            activation: Activation::Relu,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|io| Dense {
                w: Array2::zeros((io[0], io[1])),
                b: Array1::zeros(io[1]),
            })
            .collect();
        FcnnWeights {
            layers,
            activation: Activation::Relu,
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.nrows()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].w.nrows()
    }
}

impl Params for FcnnWeights {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [slice2(&l.w), slice1(&l.b)])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [slice2_mut(&mut l.w), slice1_mut(&mut l.b)])
            .collect()
    }
}

/// Intermediate activations kept for the backward pass.
pub struct FcnnCache {
    /// Input to every layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
}

pub fn forward_batch(w: &FcnnWeights, x: ArrayView2<f64>) -> Result<(Array2<f64>, FcnnCache)> {
    if x.ncols() != w.input_size() {
        return Err(Error::Shape(format!(
            "FCNN expects {} inputs, got {}",
            w.input_size(),
            x.ncols()
        )));
    }
    let mut inputs = Vec::with_capacity(w.layers.len());
    let mut a = x.to_owned();
    let last = w.layers.len() - 1;
    for (k, layer) in w.layers.iter().enumerate() {
        let mut z = a.dot(&layer.w);
        z += &layer.b;
        if k < last {
            z.mapv_inplace(|v| v.max(0.0));
        }
        inputs.push(a);
        a = z;
    }
    Ok((a, FcnnCache { inputs }))
}

/// Gradients of the weights given `d_out = ∂L/∂output`.
pub fn backward_batch(w: &FcnnWeights, cache: &FcnnCache, d_out: ArrayView2<f64>) -> FcnnWeights {
    let mut grads = Vec::with_capacity(w.layers.len());
    let mut delta = d_out.to_owned();
    for k in (0..w.layers.len()).rev() {
        let input = &cache.inputs[k];
        let dw = input.t().dot(&delta);
        let db = delta.sum_axis(Axis(0));
        if k > 0 {
            let mut d_in = delta.dot(&w.layers[k].w.t());
            // The stored input of layer k is the rectified output of layer k − 1.
            ndarray::Zip::from(&mut d_in)
                .and(input)
                .for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
            delta = d_in;
        }
        grads.push(Dense { w: dw, b: db });
    }
    grads.reverse();
    FcnnWeights {
        layers: grads,
        activation: w.activation,
    }
}

/// Single-sample prediction.
pub fn fcnn_forward(x: &[f64], w: &FcnnWeights) -> Result<[f64; 2]> {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
    let (out, _) = forward_batch(w, view)?;
    if out.ncols() != 2 {
        return Err(Error::Shape(format!("FCNN head has {} outputs", out.ncols())));
    }
    Ok([out[[0, 0]], out[[0, 1]]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_return_final_bias() {
        let mut w = FcnnWeights::zeros(&[18, 5, 5, 2]);
        w.layers[2].b[0] = 1.5;
        w.layers[2].b[1] = -0.25;
        w.layers[0].b.fill(3.0);
        assert_eq!(fcnn_forward(&[0.7; 18], &w).unwrap(), [1.5, -0.25]);
    }

    #[test]
    fn identity_on_a_subspace() {
        let mut w = FcnnWeights::zeros(&[18, 2]);
        w.layers[0].w[[3, 0]] = 1.0;
        w.layers[0].w[[7, 1]] = 1.0;
        let mut x = [0.0; 18];
        x[3] = -2.5;
        x[7] = 4.0;
        assert_eq!(fcnn_forward(&x, &w).unwrap(), [-2.5, 4.0]);
    }

    #[test]
    fn wrong_input_width() {
        let w = FcnnWeights::zeros(&[18, 4, 2]);
        assert!(matches!(fcnn_forward(&[0.0; 17], &w), Err(Error::Shape(_))));
    }

    #[test]
    fn squared_output_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = FcnnWeights::init(&[18, 7, 6, 2], &mut rng);
        let x = Array2::from_shape_fn((4, 18), |_| rng.random_range(-1.0..1.0));
        // Objective: half the sum of squared outputs.
        let objective = |w: &FcnnWeights| {
            let (out, _) = forward_batch(w, x.view()).unwrap();
            0.5 * out.iter().map(|v| v * v).sum::<f64>()
        };
        let (out, cache) = forward_batch(&w, x.view()).unwrap();
        let grads = backward_batch(&w, &cache, out.view());
        let h = 1e-5;
        let mut probe = w.clone();
        for (t, g) in grads.tensors().iter().enumerate() {
            for k in 0..g.len() {
                let orig = probe.tensors()[t][k];
                probe.tensors_mut()[t][k] = orig + h;
                let up = objective(&probe);
                probe.tensors_mut()[t][k] = orig - h;
                let down = objective(&probe);
                probe.tensors_mut()[t][k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let err = (numeric - g[k]).abs() / numeric.abs().max(g[k].abs()).max(1e-6);
                assert!(err < 1e-6, "tensor {t} entry {k}: {numeric} vs {}", g[k]);
            }
        }
    }
}
