//! Classical fixed-step fourth-order Runge–Kutta.

/// Advances `y` by one step of size `h` for the autonomous-in-form system `f(t, y)`.
pub fn rk4_step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], h: f64) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k1));
    let k3 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k2));
    let k4 = f(t + h, &axpy(y, h, &k3));
    let mut out = *y;
    for n in 0..N {
        out[n] += h / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
    }
    out
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], a: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for n in 0..N {
        out[n] += a * k[n];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_fourth_order() {
        let f = |_t: f64, y: &[f64; 1]| [-y[0]];
        let err = |steps: usize| {
            let h = 1.0 / steps as f64;
            let mut y = [1.0];
            for k in 0..steps {
                y = rk4_step(&f, k as f64 * h, &y, h);
            }
            (y[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(20) / err(40);
        assert!((ratio - 16.0).abs() < 1.0, "convergence ratio {ratio}");
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let f = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let mut y = [1.0, 0.0];
        let h = 1e-3;
        for k in 0..6283 {
            y = rk4_step(&f, k as f64 * h, &y, h);
        }
        assert!((y[0] * y[0] + y[1] * y[1] - 1.0).abs() < 1e-12);
    }
}
