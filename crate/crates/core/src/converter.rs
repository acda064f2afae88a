//! Boost converter physics: dc steady state, averaged large-signal dynamics
//! and the small-signal duty-to-current plant seen by the current controller.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Electrical constants of one converter instance, SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterParams {
    /// Inductance (H).
    pub l: f64,
    /// Output capacitance (F).
    pub c: f64,
    /// Load resistance (Ω).
    pub r: f64,
    /// Inductor series resistance (Ω).
    pub r_s: f64,
    /// Dc input voltage (V).
    pub v_g: f64,
    /// Switching frequency (Hz).
    pub f_s: f64,
    /// Cutoff of the current-measurement filter (Hz).
    pub f_c: f64,
}

impl ConverterParams {
    /// All constants must be positive; `r_s` may be zero (lossless model).
    pub fn validate(&self) -> Result<()> {
        ensure_positive("L", self.l)?;
        ensure_positive("C", self.c)?;
        ensure_positive("R", self.r)?;
        if !(self.r_s >= 0.0 && self.r_s.is_finite()) {
            return Err(Error::NonPositive {
                name: "R_s",
                value: self.r_s,
            });
        }
        ensure_positive("V_g", self.v_g)?;
        ensure_positive("f_s", self.f_s)?;
        ensure_positive("f_c", self.f_c)?;
        Ok(())
    }

    /// Same converter with the series resistance removed (lossless averaged model).
    pub fn lossless(mut self) -> Self {
        self.r_s = 0.0;
        self
    }

    /// Angular cutoff of the measurement filter (rad/s).
    pub fn filter_omega(&self) -> f64 {
        2.0 * PI * self.f_c
    }

    /// Inductor ripple for an arbitrary (possibly instantaneous) duty.
    pub fn current_ripple(&self, duty: f64) -> f64 {
        duty * self.v_g / (2.0 * self.f_s * self.l)
    }
}

/// Ideal dc operating point (series resistance ignored).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub duty: f64,
    pub ratio: f64,
    pub v: f64,
    pub i_l: f64,
    pub delta_i_l: f64,
    pub delta_v_c: f64,
}

pub fn dc_steady_state(params: &ConverterParams, v: f64) -> Result<SteadyState> {
    params.validate()?;
    ensure_positive("V", v)?;
    if v < params.v_g {
        return Err(Error::InvalidBoostRatio { v, v_g: params.v_g });
    }
    let duty = 1.0 - params.v_g / v;
    let d_prime = 1.0 - duty;
    Ok(SteadyState {
        duty,
        ratio: 1.0 / d_prime,
        v,
        i_l: v / (d_prime * params.r),
        delta_i_l: params.current_ripple(duty),
        delta_v_c: duty * v / (2.0 * params.f_s * params.r * params.c),
    })
}

/// Cycle-averaged inductor current and capacitor voltage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AveragedState {
    pub i: f64,
    pub v: f64,
}

/// Time derivatives `(di/dt, dv/dt)` of the averaged model at duty `d`.
///
/// With `r_s = 0` this is exactly the classical lossless averaged boost model.
pub fn averaged_dynamics(state: AveragedState, d: f64, params: &ConverterParams) -> (f64, f64) {
    let d_prime = 1.0 - d;
    let di = (params.v_g - params.r_s * state.i - d_prime * state.v) / params.l;
    let dv = (d_prime * state.i - state.v / params.r) / params.c;
    (di, dv)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPoint {
    pub omega: f64,
    pub gain: Complex64,
    pub magnitude_db: f64,
    pub phase_deg: f64,
}

impl FrequencyPoint {
    pub fn from_gain(omega: f64, gain: Complex64) -> Self {
        FrequencyPoint {
            omega,
            gain,
            magnitude_db: 20.0 * gain.norm().log10(),
            phase_deg: gain.arg().to_degrees(),
        }
    }
}

/// Duty-to-inductor-current transfer function linearized around `op`.
pub fn duty_to_current(params: &ConverterParams, op: &SteadyState, s: Complex64) -> Complex64 {
    let d_prime = 1.0 - op.duty;
    let load = s * params.c + 1.0 / params.r;
    let num = op.v * load + d_prime * op.i_l;
    let den = (s * params.l + params.r_s) * load + d_prime * d_prime;
    num / den
}

/// Unity-gain first-order measurement filter.
pub fn measurement_filter(params: &ConverterParams, s: Complex64) -> Complex64 {
    1.0 / (1.0 + s / params.filter_omega())
}

/// Plant seen by the PI controller: `G = G_id · G_f`.
pub fn plant_frequency_response(
    params: &ConverterParams,
    op: &SteadyState,
    omega: f64,
) -> FrequencyPoint {
    let s = Complex64::new(0.0, omega);
    FrequencyPoint::from_gain(
        omega,
        duty_to_current(params, op, s) * measurement_filter(params, s),
    )
}

/// Natural frequency of the power-stage poles and the filter pole (rad/s).
pub fn plant_pole_frequencies(params: &ConverterParams, op: &SteadyState) -> (f64, f64) {
    let d_prime = 1.0 - op.duty;
    let w0 = ((params.r_s / params.r + d_prime * d_prime) / (params.l * params.c)).sqrt();
    (w0, params.filter_omega())
}
