//! Composite loss `L = L_RMSE + λ·L_PBE`, evaluated in physical units.
//!
//! `L_RMSE` is the root mean squared current error over both target
//! components (A). `L_PBE` is the mean absolute power-balance residual
//! `|(1 − d)·v·î − v·î_out|` (W) using predicted currents and the simulated
//! voltage and duty.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub rmse_part: f64,
    pub pbe_part: f64,
    pub lambda: f64,
}

fn check_batch(name: &str, a: ArrayView2<f64>, rows: usize) -> Result<()> {
    if a.nrows() != rows || a.ncols() != 2 {
        return Err(Error::Shape(format!(
            "{name} must be ({rows}, 2), got {:?}",
            a.shape()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{name} contains non-finite values")));
    }
    Ok(())
}

/// `pred` and `target` hold `(i, i_out)` per row; `aux` holds `(v, d)`.
pub fn compute_loss(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    aux: ArrayView2<f64>,
    lambda: f64,
) -> Result<LossBreakdown> {
    Ok(loss_and_grad(pred, target, aux, lambda, false)?.0)
}

/// Loss and, when requested, `∂L/∂pred` in physical units.
pub fn loss_and_grad(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    aux: ArrayView2<f64>,
    lambda: f64,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<Array2<f64>>)> {
    let n = pred.nrows();
    if n == 0 {
        return Err(Error::Empty("loss batch".into()));
    }
    check_batch("prediction", pred, n)?;
    check_batch("target", target, n)?;
    check_batch("aux", aux, n)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let mut sq = 0.0;
    let mut pbe = 0.0;
    for r in 0..n {
        let (e0, e1) = (pred[[r, 0]] - target[[r, 0]], pred[[r, 1]] - target[[r, 1]]);
        sq += e0 * e0 + e1 * e1;
        let (v, d) = (aux[[r, 0]], aux[[r, 1]]);
        pbe += ((1.0 - d) * v * pred[[r, 0]] - v * pred[[r, 1]]).abs();
    }
    let rmse = (sq / (2 * n) as f64).sqrt();
    let pbe = pbe / n as f64;
    let total = rmse + lambda * pbe;
    let breakdown = LossBreakdown {
        total,
        rmse_part: rmse,
        pbe_part: pbe,
        lambda,
    };
    if !total.is_finite() {
        return Err(Error::Domain("loss is not finite".into()));
    }
    if !want_grad {
        return Ok((breakdown, None));
    }
    let mut grad = Array2::zeros((n, 2));
    // The square root has no derivative at zero error; the zero subgradient is used.
    let rmse_scale = if rmse > 0.0 { 1.0 / (2.0 * n as f64 * rmse) } else { 0.0 };
    for r in 0..n {
        let (v, d) = (aux[[r, 0]], aux[[r, 1]]);
        let residual = (1.0 - d) * v * pred[[r, 0]] - v * pred[[r, 1]];
        let s = if residual > 0.0 {
            1.0
        } else if residual < 0.0 {
            -1.0
        } else {
            0.0
        };
        let w = lambda * s / n as f64;
        grad[[r, 0]] = rmse_scale * (pred[[r, 0]] - target[[r, 0]]) + w * (1.0 - d) * v;
        grad[[r, 1]] = rmse_scale * (pred[[r, 1]] - target[[r, 1]]) - w * v;
    }
    Ok((breakdown, Some(grad)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hand_evaluated_single_sample() {
        let target = array![[4.0, 2.0]];
        let pred = array![[4.0, 1.5]];
        let aux = array![[200.0, 0.5]];
        for lambda in [0.0, 0.2, 1.0] {
            let l = compute_loss(pred.view(), target.view(), aux.view(), lambda).unwrap();
            assert!((l.rmse_part - 0.125f64.sqrt()).abs() < 1e-15);
            assert!((l.pbe_part - 100.0).abs() < 1e-12);
            assert!((l.total - (0.125f64.sqrt() + 100.0 * lambda)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_lambda_is_rmse() {
        let target = array![[4.0, 2.0], [1.0, 0.3]];
        let pred = array![[3.0, 2.5], [1.1, 0.2]];
        let aux = array![[200.0, 0.5], [150.0, 0.2]];
        let l = compute_loss(pred.view(), target.view(), aux.view(), 0.0).unwrap();
        assert_eq!(l.total, l.rmse_part);
    }

    #[test]
    fn consistent_truth_has_zero_loss() {
        let aux = array![[200.0, 0.5], [150.0, 0.2]];
        let target = array![[4.0, 2.0], [1.0, 0.8]];
        let l = compute_loss(target.view(), target.view(), aux.view(), 0.2).unwrap();
        assert_eq!((l.total, l.rmse_part, l.pbe_part), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_non_finite_and_misaligned() {
        let ok = array![[1.0, 1.0]];
        let bad = array![[f64::NAN, 1.0]];
        assert!(compute_loss(bad.view(), ok.view(), ok.view(), 0.1).is_err());
        let two = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(compute_loss(two.view(), ok.view(), ok.view(), 0.1).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let target = array![[4.0, 2.0], [1.0, 0.3], [2.5, 1.7]];
        let pred = array![[3.7, 2.4], [1.2, 0.15], [2.1, 1.9]];
        let aux = array![[200.0, 0.5], [150.0, 0.2], [120.0, 0.33]];
        let (_, g) = loss_and_grad(pred.view(), target.view(), aux.view(), 0.2, true).unwrap();
        let g = g.unwrap();
        let h = 1e-6;
        for r in 0..3 {
            for c in 0..2 {
                let mut p = pred.clone();
                p[[r, c]] += h;
                let up = compute_loss(p.view(), target.view(), aux.view(), 0.2).unwrap().total;
                p[[r, c]] -= 2.0 * h;
                let down = compute_loss(p.view(), target.view(), aux.view(), 0.2).unwrap().total;
                let numeric = (up - down) / (2.0 * h);
                assert!((numeric - g[[r, c]]).abs() / numeric.abs() < 1e-7);
            }
        }
    }
}
