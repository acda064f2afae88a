//! Adam with decoupled weight decay.

use super::params::Params;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState<P: Params> {
    pub m: P,
    pub v: P,
    /// Number of completed steps.
    pub step: u64,
}

impl<P: Params> AdamState<P> {
    pub fn new(params: &P) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One update. Parameters shrink by `1 − lr·weight_decay` before the moment step.
pub fn adam_step<P: Params>(params: &mut P, grads: &P, state: &mut AdamState<P>, lr: f64, weight_decay: f64) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let shrink = 1.0 - lr * weight_decay;
    let grads = grads.tensors();
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        for n in 0..p.len() {
            m[n] = BETA1 * m[n] + (1.0 - BETA1) * g[n];
            v[n] = BETA2 * v[n] + (1.0 - BETA2) * g[n] * g[n];
            let m_hat = m[n] / c1;
            let v_hat = v[n] / c2;
            p[n] = p[n] * shrink - lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct Vector(Vec<f64>);

    impl Params for Vector {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let mut p = Vector(vec![1.0, -2.0, 3.5]);
        let g = Vector(vec![0.0; 3]);
        let mut s = AdamState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut s, 1e-2, 0.0);
        }
        assert_eq!(p, Vector(vec![1.0, -2.0, 3.5]));
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = Vector(vec![1.0, 1.0, 1.0]);
        let g = Vector(vec![3.0, -0.02, 1e3]);
        let mut s = AdamState::new(&p);
        let lr = 1e-3;
        adam_step(&mut p, &g, &mut s, lr, 0.0);
        for (x, gn) in p.0.iter().zip(&g.0) {
            let expected = 1.0 - lr * gn.signum();
            assert!((x - expected).abs() < lr * 1e-6, "{x} vs {expected}");
        }
    }

    #[test]
    fn decay_alone_scales_geometrically() {
        let mut p = Vector(vec![2.0, -4.0]);
        let g = Vector(vec![0.0; 2]);
        let mut s = AdamState::new(&p);
        let (lr, wd) = (1e-2, 0.5);
        for _ in 0..3 {
            adam_step(&mut p, &g, &mut s, lr, wd);
        }
        let f = (1.0 - lr * wd).powi(3);
        assert!((p.0[0] - 2.0 * f).abs() < 1e-15);
        assert!((p.0[1] + 4.0 * f).abs() < 1e-15);
    }
}
